use std::process::Command;

fn flowlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowlab"))
}

#[test]
fn list_names_every_case() {
    let out = flowlab().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in flowlab::tables::case_ids() {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(id)), "case {id} missing");
    }
}

#[test]
fn simulate_writes_configured_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.txt");
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        format!(
            "task = \"simulate\"\n[field]\nbase = {{ type = \"morse_smale_sphere\" }}\n[simulate]\nstarts = [{{ chart = 0, u = 0.2, v = 0.1 }}]\nt_budget = 2.0\n[output]\ntrajectory = {:?}\n",
            traj
        ),
    )
    .unwrap();
    let out = flowlab().args(["simulate", "-c"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // report on stdout, summary on stderr
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["task"], "simulate");
    assert!(std::fs::read_to_string(&traj).unwrap().starts_with("# start 0"));
}

#[test]
fn render_and_ham_check_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("p.svg");
    let dot = dir.path().join("g.dot");
    let cfg = dir.path().join("h.toml");
    std::fs::write(
        &cfg,
        format!(
            "task = \"render\"\n[field]\nbase = {{ type = \"hamiltonian\", id = \"sphere_height\" }}\n[render]\nwidth = 200\nseeds_per_side = 3\n[output]\nsvg = {svg:?}\ndot = {dot:?}\n"
        ),
    )
    .unwrap();
    let out = flowlab().args(["render", "-c"]).arg(&cfg).arg("-r").arg(dir.path().join("r.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let out = flowlab().args(["ham-check", "-c"]).arg(&cfg).arg("-r").arg(dir.path().join("h.json")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("verdict: Hamiltonian"), "{summary}");
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn surgery_apply_appends_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let s = dir.path().join("s.toml");
    let out_cfg = dir.path().join("out.toml");
    std::fs::write(&cfg, "task = \"classify\"\n[field]\nbase = { type = \"linear_torus\", slope = 0.5 }\n").unwrap();
    std::fs::write(&s, "kind = { type = \"fake_saddle\", point = { chart = 0, u = 0.5, v = 0.5 }, radius = 0.1 }\n").unwrap();
    let out = flowlab().args(["surgery", "apply", "-c"]).arg(&cfg).arg("-s").arg(&s).arg("-o").arg(&out_cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = flowlab::config::RunConfig::load(&out_cfg).unwrap();
    assert_eq!(c.field.unwrap().surgery.len(), 1);

    // a second saddle on top of the first overlaps
    let out = flowlab().args(["surgery", "apply", "-c"]).arg(&out_cfg).arg("-s").arg(&s).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "task = \"classify\"\nsed = 3\n").unwrap();
    let out = flowlab().args(["classify", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = flowlab().arg("classify").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
