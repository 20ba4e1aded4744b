//! Zero level set extraction with marching cubes on the finest cells of
//! the integration domain.
//!
//! The 256-entry case table is generated once at startup from per-face
//! connection rules. Each face pairs its cut edges so that runs of inside
//! corners are cut off; because the pairing depends only on the face's
//! sign pattern, adjacent cells always agree on the shared face and the
//! output is watertight wherever the level set stays inside the domain.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::cloud::PointCloud;
use crate::mesh::TriangleMesh;
use crate::scaffold::DomainCells;
use crate::solver::ImplicitField;
use crate::spatial::PointGrid;
use crate::{Error, Result, Vec3};

/// Corner i of the unit cube sits at bits (x, y, z) = (i&1, i>>1&1, i>>2&1).
fn corner_offset(i: usize) -> [i32; 3] {
    [(i & 1) as i32, ((i >> 1) & 1) as i32, ((i >> 2) & 1) as i32]
}

/// The 12 cube edges as (corner, corner) pairs, sorted.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (0, 2),
    (0, 4),
    (1, 3),
    (1, 5),
    (2, 3),
    (2, 6),
    (3, 7),
    (4, 5),
    (4, 6),
    (5, 7),
    (6, 7),
];

/// Faces as corner cycles, counter-clockwise viewed from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // x = 0
    [1, 3, 7, 5], // x = 1
    [0, 1, 5, 4], // y = 0
    [2, 6, 7, 3], // y = 1
    [0, 2, 3, 1], // z = 0
    [4, 5, 7, 6], // z = 1
];

fn edge_index(a: usize, b: usize) -> usize {
    let key = if a < b { (a, b) } else { (b, a) };
    EDGES.iter().position(|&e| e == key).expect("cube edge")
}

/// Triangles (as edge-index triples) for each of the 256 sign cases.
fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(build_case))
}

/// Build one case: bit c of `case` set means corner c is inside (f < iso).
fn build_case(case: usize) -> Vec<[u8; 3]> {
    // Directed segments on faces: exit edge -> entry edge around each
    // maximal cyclic run of inside corners.
    let inside = |c: usize| case >> c & 1 == 1;
    let mut next = [usize::MAX; 12];
    for cyc in &FACES {
        let ins: Vec<bool> = cyc.iter().map(|&c| inside(c)).collect();
        if ins.iter().all(|&v| v) || ins.iter().all(|&v| !v) {
            continue;
        }
        for start in 0..4 {
            // start of a run: inside corner preceded by an outside corner
            if !ins[start] || ins[(start + 3) % 4] {
                continue;
            }
            let mut end = start;
            while ins[(end + 1) % 4] {
                end = (end + 1) % 4;
            }
            let exit = edge_index(cyc[end], cyc[(end + 1) % 4]);
            let entry = edge_index(cyc[(start + 3) % 4], cyc[start]);
            next[exit] = entry;
        }
    }
    // Collect cycles and fan-triangulate. Cycles are reversed so triangle
    // normals point from the inside (negative) region toward positive f.
    let mut triangles = Vec::new();
    let mut visited = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut cur = next[start];
        while cur != start {
            visited[cur] = true;
            cycle.push(cur);
            cur = next[cur];
        }
        cycle.reverse();
        for i in 1..cycle.len() - 1 {
            triangles.push([cycle[0] as u8, cycle[i] as u8, cycle[i + 1] as u8]);
        }
    }
    triangles
}

/// Extract the iso-surface of an arbitrary scalar function over the
/// finest cells of the domain (test hook; `extract_mesh` is the public
/// entry point for solved fields).
pub fn extract_mesh_with(
    f: impl Fn(Vec3) -> f64,
    domain: &DomainCells,
    iso: f64,
) -> Result<TriangleMesh> {
    if domain.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let cell = domain.cell_size();
    let table = case_table();

    let mut corner_cache: HashMap<[i32; 3], f64> = HashMap::new();
    let mut corner_value = |ijk: [i32; 3]| -> f64 {
        *corner_cache.entry(ijk).or_insert_with(|| {
            f(Vec3::new(
                ijk[0] as f64 * cell,
                ijk[1] as f64 * cell,
                ijk[2] as f64 * cell,
            ))
        })
    };

    // Welded vertices keyed by (lattice point, axis) of the crossed edge.
    let mut vertex_index: HashMap<([i32; 3], u8), u32> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for ijk in domain.cells() {
        let mut values = [0.0; 8];
        let mut corners = [[0i32; 3]; 8];
        let mut case = 0usize;
        for c in 0..8 {
            let o = corner_offset(c);
            let p = [ijk[0] + o[0], ijk[1] + o[1], ijk[2] + o[2]];
            corners[c] = p;
            values[c] = corner_value(p);
            if values[c] < iso {
                case |= 1 << c;
            }
        }
        if table[case].is_empty() {
            continue;
        }
        let mut edge_vertex = [u32::MAX; 12];
        for (e, &(a, b)) in EDGES.iter().enumerate() {
            let (fa, fb) = (values[a], values[b]);
            if (fa < iso) == (fb < iso) {
                continue;
            }
            // canonical global key: lower lattice endpoint plus edge axis
            let axis = (0..3).find(|&d| corners[a][d] != corners[b][d]).unwrap() as u8;
            let key = (corners[a], axis);
            let idx = *vertex_index.entry(key).or_insert_with(|| {
                debug_assert!(
                    (fa < iso) != (fb < iso),
                    "crossing edge must have opposite corner signs"
                );
                let t = (iso - fa) / (fb - fa);
                let pa = Vec3::new(
                    corners[a][0] as f64 * cell,
                    corners[a][1] as f64 * cell,
                    corners[a][2] as f64 * cell,
                );
                let pb = Vec3::new(
                    corners[b][0] as f64 * cell,
                    corners[b][1] as f64 * cell,
                    corners[b][2] as f64 * cell,
                );
                vertices.push(pa + t * (pb - pa));
                (vertices.len() - 1) as u32
            });
            edge_vertex[e] = idx;
        }
        for tri in &table[case] {
            let v = [
                edge_vertex[tri[0] as usize],
                edge_vertex[tri[1] as usize],
                edge_vertex[tri[2] as usize],
            ];
            debug_assert!(v.iter().all(|&i| i != u32::MAX));
            if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
                continue;
            }
            let area = 0.5
                * (vertices[v[1] as usize] - vertices[v[0] as usize])
                    .cross(&(vertices[v[2] as usize] - vertices[v[0] as usize]))
                    .norm();
            if area <= 1e-12 {
                continue;
            }
            triangles.push(v);
        }
    }
    if triangles.is_empty() {
        return Err(Error::NoCrossing);
    }
    // Drop unreferenced vertices (welded duplicates of collapsed triangles).
    let mut remap = vec![u32::MAX; vertices.len()];
    let mut packed = Vec::new();
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            if remap[*v as usize] == u32::MAX {
                remap[*v as usize] = packed.len() as u32;
                packed.push(vertices[*v as usize]);
            }
            *v = remap[*v as usize];
        }
    }
    TriangleMesh::new(packed, triangles)
}

/// Marching cubes over the domain at the given iso value.
pub fn extract_mesh(field: &ImplicitField, domain: &DomainCells, iso: f64) -> Result<TriangleMesh> {
    extract_mesh_with(|p| field.value(p), domain, iso)
}

/// Delete vertices farther than `tau` from every input point, along with
/// their incident triangles, reindexing compactly.
pub fn remove_floaters(mesh: &TriangleMesh, cloud: &PointCloud, tau: f64) -> Result<TriangleMesh> {
    assert!(tau > 0.0);
    let positions: Vec<Vec3> = cloud.points().iter().map(|p| p.position).collect();
    let grid = PointGrid::with_cell(positions, tau);
    let keep: Vec<bool> = mesh
        .vertices
        .iter()
        .map(|v| grid.nearest(*v).1 <= tau)
        .collect();
    if keep.iter().all(|&k| k) {
        return Ok(mesh.clone());
    }
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let mut normals = mesh.vertex_normals.as_ref().map(|_| Vec::new());
    for (i, v) in mesh.vertices.iter().enumerate() {
        if keep[i] {
            remap[i] = vertices.len() as u32;
            vertices.push(*v);
            if let (Some(out), Some(src)) = (normals.as_mut(), mesh.vertex_normals.as_ref()) {
                out.push(src[i]);
            }
        }
    }
    let triangles: Vec<[u32; 3]> = mesh
        .triangles
        .iter()
        .filter(|t| t.iter().all(|&v| keep[v as usize]))
        .map(|t| [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]])
        .collect();
    if triangles.is_empty() {
        return Err(Error::DegenerateMesh);
    }
    TriangleMesh::with_normals(vertices, triangles, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::OrientedPoint;
    use crate::scaffold::{build_hierarchy, rasterize_domain};
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    #[test]
    fn empty_and_full_cases_emit_nothing() {
        let table = case_table();
        assert!(table[0].is_empty());
        assert!(table[255].is_empty());
    }

    #[test]
    fn single_corner_cases_emit_one_triangle() {
        let table = case_table();
        for c in 0..8 {
            assert_eq!(table[1 << c].len(), 1, "corner {c}");
        }
    }

    #[test]
    fn all_cases_close_on_cube_boundary() {
        // Every case's triangle soup must have each cut edge used by a
        // consistent fan; interior edges of the patch appear twice with
        // opposite orientation.
        let table = case_table();
        for (case, tris) in table.iter().enumerate() {
            let mut counts: HashMap<(u8, u8), i32> = HashMap::new();
            for t in tris {
                for k in 0..3 {
                    let a = t[k];
                    let b = t[(k + 1) % 3];
                    *counts.entry((a.min(b), a.max(b))).or_insert(0) +=
                        if a < b { 1 } else { -1 };
                }
            }
            // net winding of every undirected edge is -1, 0 or 1; boundary
            // edges (on the cube surface) appear once, interior twice
            for (&(a, b), &net) in &counts {
                assert!(net.abs() <= 1, "case {case}: edge ({a},{b}) net {net}");
            }
        }
    }

    fn dense_domain(center: Vec3, half: f64, b: f64) -> DomainCells {
        // fill a box with points so every cell in it is part of the domain
        let mut pts = Vec::new();
        let n = (2.0 * half / b).ceil() as i32 + 1;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(OrientedPoint::new(
                        center
                            + Vec3::new(
                                -half + i as f64 * b,
                                -half + j as f64 * b,
                                -half + k as f64 * b,
                            ),
                    ));
                }
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let h = build_hierarchy(&cloud, b, 1, 1).unwrap();
        rasterize_domain(&h)
    }

    #[test]
    fn linear_field_gives_exact_plane() {
        let domain = dense_domain(Vec3::new(0.5, 0.5, 0.5), 0.2, 0.05);
        let mesh = extract_mesh_with(|p| p.z - 0.5, &domain, 0.0).unwrap();
        assert!(!mesh.triangles.is_empty());
        for v in &mesh.vertices {
            assert!((v.z - 0.5).abs() <= 1e-6, "vertex z {}", v.z);
        }
        // outward convention: f < 0 below the plane, normals point +z
        for t in 0..mesh.triangles.len() {
            let n = mesh.face_normal(&mesh.triangles[t]);
            assert!(n.z > 0.99, "face normal {n:?}");
        }
    }

    fn edge_use_counts(mesh: &TriangleMesh) -> HashMap<(u32, u32), (usize, i32)> {
        let mut counts: HashMap<(u32, u32), (usize, i32)> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let e = counts.entry((a.min(b), a.max(b))).or_insert((0, 0));
                e.0 += 1;
                e.1 += if a < b { 1 } else { -1 };
            }
        }
        counts
    }

    #[test]
    fn sphere_field_gives_watertight_sphere() {
        let center = Vec3::new(0.5, 0.5, 0.5);
        let r = 0.15;
        let domain = dense_domain(center, 0.22, 0.02);
        let mesh = extract_mesh_with(|p| (p - center).norm() - r, &domain, 0.0).unwrap();
        let diag = 0.02 * 3f64.sqrt();
        for v in &mesh.vertices {
            assert!(
                ((v - center).norm() - r).abs() <= 0.5 * diag,
                "radius error at {v:?}"
            );
        }
        assert_eq!(mesh.euler_characteristic(), 2);
        for (&edge, &(count, net)) in &edge_use_counts(&mesh) {
            assert_eq!(count, 2, "edge {edge:?} not shared by exactly 2 triangles");
            assert_eq!(net, 0, "edge {edge:?} orientations do not cancel");
        }
        // outward orientation: face normals point away from the center
        for t in 0..mesh.triangles.len() {
            let tri = mesh.triangles[t];
            let c = (mesh.vertices[tri[0] as usize]
                + mesh.vertices[tri[1] as usize]
                + mesh.vertices[tri[2] as usize])
                / 3.0;
            assert!(mesh.face_normal(&mesh.triangles[t]).dot(&(c - center)) > 0.0);
        }
    }

    #[test]
    fn random_smooth_fields_stay_consistent() {
        // watertightness of the generated table under arbitrary smooth
        // fields whose level set stays inside the dense domain
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let domain = dense_domain(Vec3::new(0.5, 0.5, 0.5), 0.25, 0.05);
        for trial in 0..10 {
            let c1 = Vec3::new(
                rng.random_range(0.45..0.55),
                rng.random_range(0.45..0.55),
                rng.random_range(0.45..0.55),
            );
            let c2 = Vec3::new(
                rng.random_range(0.4..0.6),
                rng.random_range(0.4..0.6),
                rng.random_range(0.4..0.6),
            );
            let f = |p: Vec3| {
                ((p - c1).norm() - 0.12).min((p - c2).norm() - 0.08)
            };
            let mesh = extract_mesh_with(f, &domain, 0.0).unwrap();
            for (&edge, &(count, _)) in &edge_use_counts(&mesh) {
                assert_eq!(count, 2, "trial {trial}: open edge {edge:?}");
            }
        }
    }

    #[test]
    fn positive_field_has_no_crossing() {
        let domain = dense_domain(Vec3::new(0.5, 0.5, 0.5), 0.1, 0.05);
        assert!(matches!(
            extract_mesh_with(|_| 1.0, &domain, 0.0),
            Err(Error::NoCrossing)
        ));
    }

    #[test]
    fn no_zero_area_triangles_survive() {
        // a field with exact zeros at lattice corners exercises t = 0 hits
        let domain = dense_domain(Vec3::new(0.5, 0.5, 0.5), 0.2, 0.05);
        let mesh = extract_mesh_with(|p| p.z - 0.5 + 1e-18, &domain, 0.0).unwrap();
        for t in 0..mesh.triangles.len() {
            assert!(mesh.triangle_area(&mesh.triangles[t]) > 1e-12);
        }
    }

    fn sphere_mesh() -> (TriangleMesh, PointCloud) {
        let center = Vec3::new(0.5, 0.5, 0.5);
        let domain = dense_domain(center, 0.2, 0.04);
        let mesh = extract_mesh_with(|p| (p - center).norm() - 0.12, &domain, 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<OrientedPoint> = (0..500)
            .map(|_| {
                let v = Vec3::new(
                    rng.random_range(-1.0f64..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                OrientedPoint::new(center + 0.12 * v)
            })
            .collect();
        (mesh, PointCloud::new(pts).unwrap())
    }

    #[test]
    fn floaters_within_tau_left_untouched() {
        let (mesh, cloud) = sphere_mesh();
        let out = remove_floaters(&mesh, &cloud, 0.12).unwrap();
        assert_eq!(out.vertices.len(), mesh.vertices.len());
        assert_eq!(out.triangles.len(), mesh.triangles.len());
    }

    #[test]
    fn distant_blob_is_removed_entirely() {
        let (mesh, cloud) = sphere_mesh();
        let tau = 0.05;
        // append a far tetrahedron blob at distance ~10 tau from the cloud
        let base = Vec3::new(2.0, 2.0, 2.0);
        let mut vertices = mesh.vertices.clone();
        let start = vertices.len() as u32;
        vertices.extend([
            base,
            base + Vec3::new(0.01, 0.0, 0.0),
            base + Vec3::new(0.0, 0.01, 0.0),
            base + Vec3::new(0.0, 0.0, 0.01),
        ]);
        let mut triangles = mesh.triangles.clone();
        triangles.extend([
            [start, start + 1, start + 2],
            [start, start + 1, start + 3],
            [start, start + 2, start + 3],
            [start + 1, start + 2, start + 3],
        ]);
        let spiked = TriangleMesh::new(vertices, triangles).unwrap();
        let out = remove_floaters(&spiked, &cloud, tau).unwrap();
        assert_eq!(out.vertices.len(), mesh.vertices.len());
        assert_eq!(out.triangles.len(), mesh.triangles.len());
        // idempotence
        let again = remove_floaters(&out, &cloud, tau).unwrap();
        assert_eq!(again.vertices.len(), out.vertices.len());
        assert_eq!(again.triangles.len(), out.triangles.len());
    }
}
