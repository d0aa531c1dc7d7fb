use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, cfg: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    std::fs::write(&path, cfg).unwrap();
    Command::new(env!("CARGO_BIN_EXE_weakkam"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn oracle_free_prints_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "mode = oracle-hbar\nV = free\nc = 1\n", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("hbar = 0.5"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing_model = run(dir.path(), "mode = audit\nmodel = missing_model.txt\n", &[]);
    assert_eq!(missing_model.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&missing_model.stderr).contains("missing_model.txt"));

    assert_eq!(run(dir.path(), "mode = discounted\nV = cosine\nepsilons = 0.1, 0.0, 0.05\n", &[]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "mode = cell\nnodse = 40\n", &[]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "mode = cell\nV = cosine\nc = 2\nnodes = 50\nmax_iters = 3\n", &[]).status.code(), Some(3));
    assert_eq!(run(dir.path(), "mode = audit\n", &["--threads", "0"]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_weakkam"))
        .args(["--config", dir.path().join("absent.cfg").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn separate_model_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pendulum.model"), "dim = 1\nc = 2\n[potential.V]\n0, -1, 0\n1, 1, 0\n").unwrap();
    let o = run(dir.path(), "mode = oracle-hbar\nmodel = pendulum.model\n", &[]);
    assert_eq!(o.status.code(), Some(0));
    let hbar: f64 = stdout(&o).lines().next().unwrap().trim_start_matches("hbar = ").parse().unwrap();
    assert!((hbar - 1.0637954228622045).abs() < 1e-10);
}

#[test]
fn cell_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(dir.path(), "mode = cell\nV = cosine\nc = 0\nnodes = 100\n", &["--output", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let field = std::fs::read_to_string(out.join("field.csv")).unwrap();
    assert!(field.starts_with("# hbar = 0\n"));
    assert!(field.contains("\ni0,y0,U\n"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "cell");
    assert_eq!(manifest["seed"], 0);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("cell.json")).unwrap()).unwrap();
    assert_eq!(summary["hbar"], 0.0);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "mode = calibrate\nV = cosine\nnodes = 100\nseeds = 3\nt_relax = 2\n";
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(dir.path(), cfg, &["--output", a.to_str().unwrap(), "--seed", "5"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), cfg, &["--output", b.to_str().unwrap(), "--seed", "5", "--threads", "1"]).status.code(), Some(0));
    for name in ["field.csv", "curve_000.csv", "curve_002.csv", "omega.csv", "calibrate.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn flow_and_discounted_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("start.csv"), "x0\n0.25\n").unwrap();
    let out = dir.path().join("flow");
    let o = run(dir.path(), "mode = flow\nV = cosine\ninitial = start.csv\nt_span = 1\nh = 0.01\n", &["--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,particle,x0,p0"));
    assert_eq!(traj.lines().count(), 102);

    let out = dir.path().join("disc");
    let o = run(dir.path(), "mode = discounted\nV = free\nc = 1\nn_particles = 2\n", &["--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next(), Some("epsilon,value,eps_times_value,grad_norm,el_residual,tail_lo,tail_hi"));
    assert_eq!(sweep.lines().count(), 4);
    let hbar: f64 = stdout(&o).trim_start_matches("hbar = ").trim().parse().unwrap();
    assert!((hbar - 0.5).abs() < 2e-3);
}

#[test]
fn distweak_and_audit_modes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "x0\n0.1\n0.6\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), "x0\n1.6\n-0.9\n").unwrap();
    let o = run(dir.path(), "mode = distweak\na = a.csv\nb = b.csv\n", &[]);
    assert_eq!(o.status.code(), Some(0));
    let d: f64 = stdout(&o).trim_start_matches("dist_weak = ").trim().parse().unwrap();
    assert!(d.abs() < 1e-12);

    let o = run(dir.path(), "mode = audit\nV = cosine\nn_probes = 500\n", &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("gamma = 0.5"));
    assert!(text.contains("violations = 0"));
}
