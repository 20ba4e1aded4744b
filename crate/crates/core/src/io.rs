//! Point cloud and mesh file I/O (ASCII xyz / ply / obj).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::cloud::{OrientedPoint, PointCloud};
use crate::mesh::TriangleMesh;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
    Obj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<CloudFormat> {
        match path.extension()?.to_str()? {
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            "ply" => Some(CloudFormat::Ply),
            "obj" => Some(CloudFormat::Obj),
            _ => None,
        }
    }
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()? {
            "ply" => Some(MeshFormat::Ply),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    Ok(BufReader::new(File::open(path)?))
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        reason: format!("invalid number {:?}", tok),
    })
}

fn renormalize(n: Vec3) -> Option<Vec3> {
    let len = n.norm();
    if len > 0.0 {
        Some(n / len)
    } else {
        None
    }
}

/// Load a point cloud; normals are populated iff present in the file.
pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let reader = open(path)?;
    let points = match format {
        CloudFormat::Xyz => read_xyz(reader)?,
        CloudFormat::Ply => read_ply(reader)?.0,
        CloudFormat::Obj => read_obj_points(reader)?,
    };
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud::new(points)
}

fn read_xyz(reader: impl BufRead) -> Result<Vec<OrientedPoint>> {
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        if toks.len() != 3 && toks.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected 3 or 6 fields, found {}", toks.len()),
            });
        }
        let p = Vec3::new(
            parse_f64(toks[0], lineno)?,
            parse_f64(toks[1], lineno)?,
            parse_f64(toks[2], lineno)?,
        );
        let normal = if toks.len() == 6 {
            renormalize(Vec3::new(
                parse_f64(toks[3], lineno)?,
                parse_f64(toks[4], lineno)?,
                parse_f64(toks[5], lineno)?,
            ))
        } else {
            None
        };
        points.push(OrientedPoint {
            position: p,
            normal,
            screening: 0.0,
        });
    }
    Ok(points)
}

struct PlyHeader {
    vertex_count: usize,
    face_count: usize,
    vertex_props: Vec<String>,
    header_lines: usize,
}

fn read_ply_header(lines: &[String]) -> Result<PlyHeader> {
    let mut vertex_count = 0;
    let mut face_count = 0;
    let mut vertex_props = Vec::new();
    let mut current_element = String::new();
    let mut end = None;

    if lines.first().map(|l| l.trim()) != Some("ply") {
        return Err(Error::Parse {
            line: 1,
            reason: "missing ply magic".into(),
        });
    }
    for (i, line) in lines.iter().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", kind, _] => {
                if *kind != "ascii" {
                    return Err(Error::Parse {
                        line: i + 1,
                        reason: format!("unsupported ply format {:?}", kind),
                    });
                }
            }
            ["element", name, count] => {
                current_element = name.to_string();
                let count: usize = count.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    reason: "bad element count".into(),
                })?;
                match current_element.as_str() {
                    "vertex" => vertex_count = count,
                    "face" => face_count = count,
                    _ => {}
                }
            }
            ["property", "list", ..] => {}
            ["property", _ty, name] if current_element == "vertex" => {
                vertex_props.push(name.to_string());
            }
            ["end_header"] => {
                end = Some(i + 1);
                break;
            }
            _ => {}
        }
    }
    let header_lines = end.ok_or(Error::Parse {
        line: lines.len(),
        reason: "missing end_header".into(),
    })?;
    Ok(PlyHeader {
        vertex_count,
        face_count,
        vertex_props,
        header_lines,
    })
}

fn read_ply(reader: impl BufRead) -> Result<(Vec<OrientedPoint>, Vec<[u32; 3]>)> {
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let header = read_ply_header(&lines)?;
    let props = &header.vertex_props;
    let idx = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::Parse {
                line: header.header_lines,
                reason: "ply vertex element lacks x/y/z".into(),
            })
        }
    };
    let normal_idx = match (idx("nx"), idx("ny"), idx("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(header.vertex_count);
    let body = &lines[header.header_lines..];
    if body.len() < header.vertex_count + header.face_count {
        return Err(Error::Parse {
            line: lines.len(),
            reason: "ply body shorter than declared element counts".into(),
        });
    }
    for (i, line) in body[..header.vertex_count].iter().enumerate() {
        let lineno = header.header_lines + i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < props.len() {
            return Err(Error::Parse {
                line: lineno,
                reason: "short vertex row".into(),
            });
        }
        let p = Vec3::new(
            parse_f64(toks[ix], lineno)?,
            parse_f64(toks[iy], lineno)?,
            parse_f64(toks[iz], lineno)?,
        );
        let normal = normal_idx.and_then(|(a, b, c)| {
            renormalize(Vec3::new(
                parse_f64(toks[a], lineno).ok()?,
                parse_f64(toks[b], lineno).ok()?,
                parse_f64(toks[c], lineno).ok()?,
            ))
        });
        points.push(OrientedPoint {
            position: p,
            normal,
            screening: 0.0,
        });
    }

    let mut faces = Vec::with_capacity(header.face_count);
    for (i, line) in body[header.vertex_count..header.vertex_count + header.face_count]
        .iter()
        .enumerate()
    {
        let lineno = header.header_lines + header.vertex_count + i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let n: usize = toks[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: "bad face vertex count".into(),
        })?;
        if n != 3 || toks.len() < 4 {
            return Err(Error::Parse {
                line: lineno,
                reason: "only triangle faces are supported".into(),
            });
        }
        let mut tri = [0u32; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            *slot = toks[1 + k].parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: "bad face index".into(),
            })?;
        }
        faces.push(tri);
    }
    Ok((points, faces))
}

fn read_obj_points(reader: impl BufRead) -> Result<Vec<OrientedPoint>> {
    let (points, _) = read_obj(reader)?;
    Ok(points)
}

fn read_obj(reader: impl BufRead) -> Result<(Vec<OrientedPoint>, Vec<[u32; 3]>)> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut normal_of_vertex: Vec<Option<usize>> = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first() {
            Some(&"v") => {
                if toks.len() < 4 {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "short v line".into(),
                    });
                }
                positions.push(Vec3::new(
                    parse_f64(toks[1], lineno)?,
                    parse_f64(toks[2], lineno)?,
                    parse_f64(toks[3], lineno)?,
                ));
                normal_of_vertex.push(None);
            }
            Some(&"vn") => {
                if toks.len() < 4 {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "short vn line".into(),
                    });
                }
                normals.push(Vec3::new(
                    parse_f64(toks[1], lineno)?,
                    parse_f64(toks[2], lineno)?,
                    parse_f64(toks[3], lineno)?,
                ));
            }
            Some(&"f") => {
                if toks.len() != 4 {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "only triangle faces are supported".into(),
                    });
                }
                let mut tri = [0u32; 3];
                for (k, slot) in tri.iter_mut().enumerate() {
                    let spec = toks[1 + k];
                    let mut parts = spec.split('/');
                    let vi: i64 = parts.next().unwrap().parse().map_err(|_| Error::Parse {
                        line: lineno,
                        reason: format!("bad face vertex {:?}", spec),
                    })?;
                    let vi = if vi < 0 {
                        positions.len() as i64 + vi
                    } else {
                        vi - 1
                    };
                    if vi < 0 || vi as usize >= positions.len() {
                        return Err(Error::Parse {
                            line: lineno,
                            reason: "face index out of range".into(),
                        });
                    }
                    *slot = vi as u32;
                    // v/vt/vn — third field is the normal index
                    let _vt = parts.next();
                    if let Some(ni) = parts.next().filter(|s| !s.is_empty()) {
                        let ni: i64 = ni.parse().map_err(|_| Error::Parse {
                            line: lineno,
                            reason: "bad normal index".into(),
                        })?;
                        let ni = if ni < 0 {
                            normals.len() as i64 + ni
                        } else {
                            ni - 1
                        };
                        if ni >= 0 && (ni as usize) < normals.len() {
                            normal_of_vertex[vi as usize] = Some(ni as usize);
                        }
                    }
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    let points = positions
        .iter()
        .zip(&normal_of_vertex)
        .map(|(p, ni)| OrientedPoint {
            position: *p,
            normal: ni.and_then(|k| renormalize(normals[k])),
            screening: 0.0,
        })
        .collect();
    Ok((points, faces))
}

/// Load a triangle mesh from a ply or obj file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let reader = open(path)?;
    let (points, faces) = match format {
        MeshFormat::Ply => read_ply(reader)?,
        MeshFormat::Obj => read_obj(reader)?,
    };
    let has_normals = !points.is_empty() && points.iter().all(|p| p.normal.is_some());
    let mut mesh = TriangleMesh::new(points.iter().map(|p| p.position).collect(), faces)?;
    if has_normals {
        mesh.vertex_normals = Some(points.iter().map(|p| p.normal.unwrap()).collect());
    }
    Ok(mesh)
}

fn fmt(v: f64) -> String {
    format!("{:.9}", v)
}

/// Write a triangle mesh as ASCII ply or obj.
pub fn write_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<()> {
    mesh.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MeshFormat::Obj => {
            for v in &mesh.vertices {
                writeln!(w, "v {} {} {}", fmt(v.x), fmt(v.y), fmt(v.z))?;
            }
            if let Some(normals) = &mesh.vertex_normals {
                for n in normals {
                    writeln!(w, "vn {} {} {}", fmt(n.x), fmt(n.y), fmt(n.z))?;
                }
            }
            for t in &mesh.triangles {
                if mesh.vertex_normals.is_some() {
                    writeln!(
                        w,
                        "f {a}//{a} {b}//{b} {c}//{c}",
                        a = t[0] + 1,
                        b = t[1] + 1,
                        c = t[2] + 1
                    )?;
                } else {
                    writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
                }
            }
        }
        MeshFormat::Ply => {
            writeln!(w, "ply")?;
            writeln!(w, "format ascii 1.0")?;
            writeln!(w, "element vertex {}", mesh.vertices.len())?;
            writeln!(w, "property double x")?;
            writeln!(w, "property double y")?;
            writeln!(w, "property double z")?;
            if mesh.vertex_normals.is_some() {
                writeln!(w, "property double nx")?;
                writeln!(w, "property double ny")?;
                writeln!(w, "property double nz")?;
            }
            writeln!(w, "element face {}", mesh.triangles.len())?;
            writeln!(w, "property list uchar uint vertex_indices")?;
            writeln!(w, "end_header")?;
            for (i, v) in mesh.vertices.iter().enumerate() {
                if let Some(normals) = &mesh.vertex_normals {
                    let n = normals[i];
                    writeln!(
                        w,
                        "{} {} {} {} {} {}",
                        fmt(v.x),
                        fmt(v.y),
                        fmt(v.z),
                        fmt(n.x),
                        fmt(n.y),
                        fmt(n.z)
                    )?;
                } else {
                    writeln!(w, "{} {} {}", fmt(v.x), fmt(v.y), fmt(v.z))?;
                }
            }
            for t in &mesh.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a point cloud as an xyz file (with normals when present on all points).
pub fn write_point_cloud_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let with_normals = cloud.has_normals();
    for p in cloud.points() {
        if with_normals {
            let n = p.normal.unwrap();
            writeln!(
                w,
                "{} {} {} {} {} {}",
                fmt(p.position.x),
                fmt(p.position.y),
                fmt(p.position.z),
                fmt(n.x),
                fmt(n.y),
                fmt(n.z)
            )?;
        } else {
            writeln!(
                w,
                "{} {} {}",
                fmt(p.position.x),
                fmt(p.position.y),
                fmt(p.position.z)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
