use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
n_classes = 10
train_per_class = 6
test_per_class = 4
image_size = 16
input_size = 16
layer.0 = conv,k=3,c=4,s=1,p=1
layer.1 = pool,k=2,s=2
layer.2 = dense,out=6
epochs = 2
batch_size = 8
";

fn osrk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osrk")).args(args).current_dir(dir).env("OSRK_THREADS", "1").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = osrk(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.cfg"), CONFIG).unwrap();
    ok(dir.path(), &["--seed", "1", "--config", "t.cfg", "synth-data", "--out", "d"]);
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(osrk(d, &["--set", "epochs=abc", "train", "--data", "d", "--out", "x.osrk"]).status.code(), Some(2));
    assert_eq!(osrk(d, &["eval", "--model", "missing.osrk", "--data", "d", "--out", "r.csv"]).status.code(), Some(3));
    let diverge = ["--config", "t.cfg", "--set", "learning_rate=1e300", "train", "--data", "d", "--out", "y.osrk"];
    assert_eq!(osrk(d, &diverge).status.code(), Some(4));
}

#[test]
fn sweep_writes_one_row_per_known_count() {
    let dir = setup();
    ok(dir.path(), &["--seed", "1", "--config", "t.cfg", "sweep-openness", "--data", "d", "--out", "sw.csv"]);
    let text = read(dir.path(), "sw.csv");
    let ks: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["3", "4", "5", "6", "7"]);
}

#[test]
fn eval_with_minus_infinite_threshold_rejects_nothing() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--seed", "1", "--config", "t.cfg", "train", "--data", "d", "--out", "m.osrk"]);
    ok(d, &["--config", "t.cfg", "eval", "--model", "m.osrk", "--data", "d", "--out", "r.csv", "--threshold", "-inf", "--predictions", "p.csv"]);
    let report = read(d, "r.csv");
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |k: &str| row[header.iter().position(|h| *h == k).unwrap()];
    assert_eq!(col("fu"), "0");
    assert_eq!(col("tu"), "0");
    assert!(read(d, "p.csv").lines().skip(1).all(|l| !l.contains("UNKNOWN")));
    assert!(d.join("r.csv.manifest.json").exists());

    ok(d, &["--config", "t.cfg", "export-embeddings", "--model", "m.osrk", "--data", "d", "--out", "e.csv"]);
    let emb = read(d, "e.csv");
    let head = emb.lines().next().unwrap();
    assert_eq!(head, "sample_id,true_label,predicted,gating_distance,e_1,e_2,e_3,e_4,e_5,e_6");
    assert_eq!(emb.lines().count(), 41);
}

#[test]
fn dump_features_is_deterministic() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--seed", "1", "--config", "t.cfg", "train", "--data", "d", "--out", "m.osrk"]);
    let image = "d/test/class00/00000.osrt";
    for out in ["f1", "f2"] {
        ok(d, &["dump-features", "--model", "m.osrk", "--image", image, "--layer", "0", "--out-dir", out]);
    }
    for name in ["channel_000.png", "montage.png"] {
        assert_eq!(std::fs::read(d.join("f1").join(name)).unwrap(), std::fs::read(d.join("f2").join(name)).unwrap());
    }
    let dense = osrk(d, &["dump-features", "--model", "m.osrk", "--image", image, "--layer", "2", "--out-dir", "f3"]);
    assert!(!dense.status.success());
}

#[test]
fn limited_sample_azimuth_blocks_need_azimuths() {
    let dir = setup();
    let d = dir.path();
    let args = ["--seed", "1", "--config", "t.cfg", "limited-sample", "--data", "d", "--counts", "3", "--azimuth-blocks", "--out", "l.csv"];
    assert!(!osrk(d, &args).status.success());

    let text = read(d, "d/manifest.csv");
    let mut with_az = String::from("path,label,split,azimuth_deg\n");
    for (i, line) in text.lines().skip(1).enumerate() {
        with_az.push_str(&format!("{line},{}\n", (i * 37) % 360));
    }
    std::fs::write(d.join("d/manifest.csv"), with_az).unwrap();
    ok(d, &args);
    let rows = read(d, "l.csv");
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.lines().nth(1).unwrap().starts_with("3,"));
}
