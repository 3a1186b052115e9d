use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_uncalmocap");

const SCENE: &str = "people = 3\nviews = 4\nframes = 40\nseed = 5\n";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("UNCALMOCAP_THREADS").output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(root: &Path) -> std::path::PathBuf {
    let cfg = root.join("scene.toml");
    std::fs::write(&cfg, SCENE).unwrap();
    let d = root.join("d");
    let o = run(&["synth", "--config", p(&cfg), "--out", p(&d)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    d
}

#[test]
fn synth_optimize_eval_render_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path());
    for f in ["poses2d.json", "cameras.json", "cameras_unknown.json", "bodymodel.json", "events.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let r = tmp.path().join("r");
    let o = run(&["optimize", "--in", p(&d), "--out", p(&r)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["eval", "--result", p(&r), "--gt", p(&d)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(r.join("metrics.json")).unwrap()).unwrap();
    for key in ["Pos.", "Ang.", "Reproj.", "PCP"] {
        assert!(metrics.get(key).is_some(), "{key}");
    }
    assert!(metrics["Pos."].as_f64().unwrap() < 50.0);
    let plots = tmp.path().join("plots");
    let o = run(&["render", "--result", p(&r), "--gt", p(&d), "--out", p(&plots)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut svgs: Vec<String> = std::fs::read_dir(&plots).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    svgs.sort();
    assert_eq!(svgs, ["frusta.svg", "trace.svg", "trajectories.svg"]);
}

#[test]
fn result_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path());
    let outs: Vec<Vec<u8>> = [("a", "1"), ("b", "4"), ("c", "4")]
        .iter()
        .map(|(name, threads)| {
            let r = tmp.path().join(name);
            let o = run(&["optimize", "--in", p(&d), "--out", p(&r), "--threads", threads, "--seed", "3"]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(r.join("result.json")).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[1], outs[2]);
}

#[test]
fn missing_poses_file_is_a_validation_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path());
    std::fs::remove_file(d.join("poses2d.json")).unwrap();
    let r = tmp.path().join("r");
    let o = run(&["optimize", "--in", p(&d), "--out", p(&r)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("poses2d.json"));
    assert!(!r.exists(), "no partial output");
}

#[test]
fn unknown_flags_and_bad_configs_exit_with_one() {
    assert_eq!(run(&["optimize", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[denoise]\ninclusion_threshold = 2.0\n").unwrap();
    let o = run(&["optimize", "--in", p(tmp.path()), "--out", p(&tmp.path().join("r")), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(&cfg, "[optimizer]\nw_data = 1.0\nnot_a_key = 3\n").unwrap();
    let o = run(&["optimize", "--in", p(tmp.path()), "--out", p(&tmp.path().join("r")), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_with_two_and_leaves_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path());
    // Valid JSON with no detections at all.
    std::fs::write(d.join("poses2d.json"), "[]").unwrap();
    let r = tmp.path().join("r");
    let o = run(&["optimize", "--in", p(&d), "--out", p(&r)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!r.exists());
    let leftovers = std::fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".uncalmocap"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn stage_commands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path());
    let i = tmp.path().join("init");
    assert!(run(&["init-cameras", "--in", p(&d), "--out", p(&i)]).status.success());
    assert!(i.join("cameras_init.json").exists() && i.join("init_report.json").exists());
    let f = tmp.path().join("filtered");
    assert!(run(&["denoise", "--in", p(&d), "--out", p(&f)]).status.success());
    assert!(f.join("poses2d_filtered.json").exists() && f.join("denoise_report.json").exists());
    let w = tmp.path().join("prior");
    let o = run(&["train-prior", "--out", p(&w)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let weights = w.join("prior.weights");
    assert_eq!(&std::fs::read(&weights).unwrap()[..8], b"MPRIOR01");
    let r = tmp.path().join("r");
    let o = run(&["optimize", "--in", p(&d), "--out", p(&r), "--prior", "linear", "--weights", p(&weights)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // The VAE prior needs a VAE archive.
    let o = run(&["optimize", "--in", p(&d), "--out", p(&tmp.path().join("r2")), "--prior", "vae"]);
    assert_eq!(o.status.code(), Some(1));
}
