use std::path::Path;
use std::process::Command;

fn galvox() -> Command {
    Command::new(env!("CARGO_BIN_EXE_galvox"))
}

fn write_sphere_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut xyz = String::new();
    for _ in 0..800 {
        let dir_v = loop {
            let v = [
                rng.random_range(-1.0f64..1.0),
                rng.random_range(-1.0f64..1.0),
                rng.random_range(-1.0f64..1.0),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-3 && n <= 1.0 {
                break [v[0] / n, v[1] / n, v[2] / n];
            }
        };
        let p = [
            0.5 + 0.3 * dir_v[0],
            0.5 + 0.3 * dir_v[1],
            0.5 + 0.3 * dir_v[2],
        ];
        xyz.push_str(&format!(
            "{} {} {} {} {} {}\n",
            p[0], p[1], p[2], dir_v[0], dir_v[1], dir_v[2]
        ));
    }
    let cloud = dir.join("sphere.xyz");
    std::fs::write(&cloud, xyz).unwrap();
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "[input]\npath = {:?}\npadding = 0.2\n\n\
             [scaffold]\nb = 0.03\nscales = 4\n\n\
             [output]\nmesh = {:?}\nreport = {:?}\nsystem = {:?}\n",
            cloud.display().to_string(),
            dir.join("out.ply").display().to_string(),
            dir.join("report.txt").display().to_string(),
            dir.join("system.txt").display().to_string(),
        ),
    )
    .unwrap();
    (config, cloud)
}

#[test]
fn reconstruct_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = write_sphere_fixture(dir.path());

    let status = galvox()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let mesh_a = std::fs::read(dir.path().join("out.ply")).unwrap();
    let report_a = std::fs::read(dir.path().join("report.txt")).unwrap();

    let status = galvox()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let mesh_b = std::fs::read(dir.path().join("out.ply")).unwrap();
    let report_b = std::fs::read(dir.path().join("report.txt")).unwrap();

    assert_eq!(mesh_a, mesh_b, "mesh output must be byte-identical");
    assert_eq!(report_a, report_b, "report must be byte-identical");
}

#[test]
fn evaluate_and_dump_system_commands_work() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = write_sphere_fixture(dir.path());
    assert!(galvox()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());

    let mesh = dir.path().join("out.ply");
    let csv = dir.path().join("metrics.csv");
    let output = galvox()
        .args(["evaluate", "--pred"])
        .arg(&mesh)
        .arg("--gt")
        .arg(&mesh)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(csv.exists());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("chamfer_l1"));

    assert!(galvox()
        .args(["dump-system", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    let dump = std::fs::read_to_string(dir.path().join("system.txt")).unwrap();
    assert!(dump.contains("rhs "));
}

#[test]
fn missing_input_fails_with_stage_tag() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[input]\npath = \"/nope/cloud.xyz\"\n").unwrap();
    let output = galvox()
        .args(["reconstruct", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("load"), "stderr: {stderr}");
    assert!(stderr.contains("file not found"), "stderr: {stderr}");
}
