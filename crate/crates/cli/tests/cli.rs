use deepkeygen::phantom::phantom_set;
use deepkeygen::RasterImage;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deepkeygen"));
    c.env_remove("DKG_SEED").env_remove("SOURCE_DATE_EPOCH");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_set(dir: &Path, res: usize, n: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, img) in phantom_set(res, n, seed).unwrap().iter().enumerate() {
        img.save(dir.join(format!("img_{i:02}.png"))).unwrap();
    }
}

/// Trains a tiny generator and returns the checkpoint path.
fn tiny_generator(root: &Path) -> std::path::PathBuf {
    write_set(&root.join("src"), 32, 3, 1);
    write_set(&root.join("dom"), 32, 3, 2);
    let ckpt = root.join("g.dkgn");
    let o = run(&[
        "train", "--source", s(&root.join("src")), "--domain", s(&root.join("dom")), "--out", s(&ckpt),
        "--resolution", "32", "--iterations", "2", "--residual-blocks", "1", "--seed", "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    ckpt
}

#[test]
fn genkey_encrypt_decrypt_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ckpt = tiny_generator(root);
    assert!(root.join("g.json").is_file());
    // A 48x48 grayscale seed image is resized to the generator's 32x32.
    RasterImage::filled(48, 48, 1, 90).unwrap().save(root.join("x.png")).unwrap();
    let key = root.join("k.dkey");
    assert_eq!(code(&run(&["genkey", "--ckpt", s(&ckpt), "--seed-image", s(&root.join("x.png")), "--out", s(&key)])), 0);

    let plain = root.join("p.png");
    phantom_set(32, 1, 9).unwrap()[0].save(&plain).unwrap();
    let cipher = root.join("c.png");
    let back = root.join("d.png");
    assert_eq!(code(&run(&["encrypt", "--key", s(&key), "--in", s(&plain), "--out", s(&cipher)])), 0);
    assert_eq!(code(&run(&["decrypt", "--key", s(&key), "--in", s(&cipher), "--out", s(&back)])), 0);
    assert_eq!(std::fs::read(&plain).unwrap(), std::fs::read(&back).unwrap());
    assert_ne!(std::fs::read(&plain).unwrap(), std::fs::read(&cipher).unwrap());

    let o = run(&["analyze-cipher", "--plain", s(&plain), "--cipher", s(&cipher)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["body"]["diff"]["npcr"].as_f64().unwrap() > 0.0);
}

#[test]
fn analyze_key_reports_entropy_and_four_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let key_path = dir.path().join("k.dkey");
    // 256x256 keeps the stream above the 1 Mbit some tests need.
    let mut rng = deepkeygen::SplitMix64::new(3);
    let bytes: Vec<u8> = (0..256 * 256 * 3).map(|_| rng.next_u64() as u8).collect();
    deepkeygen::ImageKey::new(256, 256, bytes).unwrap().save(&key_path).unwrap();
    let o = run(&["analyze-key", s(&key_path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let body = &v["body"];
    assert!(body["entropy"].as_f64().unwrap() > 7.99);
    let entries = body["randomness"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for e in entries {
        let p = e["result"]["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert_eq!(v["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    // Same inputs, same report.
    let again = run(&["analyze-key", s(&key_path)]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn compare_baselines_regenerates_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let o = run(&["compare-baselines", "--length", "196608", "--csv", s(&csv)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["body"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["generator"].as_str().unwrap()).collect();
    assert_eq!(names, ["chaotic", "lcg", "mt19937", "rc4"]);
    assert!(rows.iter().all(|r| r["entropy"].as_f64().unwrap() >= 7.98));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["attack-lab", "--scenario", "nope", "--out", "x"])), 1);
    let o = run(&["encrypt", "--key", "/nonexistent/k.dkey", "--in", "p.png", "--out", "c.png"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dkey");
    std::fs::write(&bad, b"DKEYgarbage").unwrap();
    assert_eq!(code(&run(&["analyze-key", s(&bad)])), 2);
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_set(&root.join("src"), 32, 2, 1);
    write_set(&root.join("dom"), 32, 2, 2);
    let o = run(&[
        "train", "--source", s(&root.join("src")), "--domain", s(&root.join("dom")), "--out", s(&root.join("g.dkgn")),
        "--resolution", "32", "--iterations", "3", "--residual-blocks", "1", "--lr", "1e300",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seed_env_overrides_plan_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = bin().args(["attack-lab", "--scenario", "one-time-pad", "--out", s(&a), "--plan-only"]).env("DKG_SEED", "77").output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&["attack-lab", "--scenario", "one-time-pad", "--out", s(&b), "--plan-only"])), 0);
    let pa: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("plan.json")).unwrap()).unwrap();
    let pb: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.join("plan.json")).unwrap()).unwrap();
    assert_eq!(pa["master_seed"], 77);
    assert_eq!(pb["master_seed"], 0);
}

#[test]
fn build_domain_writes_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("domain");
    let o = run(&["build-domain", "--phantoms", "3", "--resolution", "32", "--out", s(&out), "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("domain_00002.png").is_file());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("domain.json")).unwrap()).unwrap();
    assert_eq!(v["body"]["params"]["master_seed"], 5);
}

#[test]
fn train_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_set(&root.join("src"), 32, 2, 1);
    write_set(&root.join("dom"), 32, 2, 2);
    let cfg = serde_json::json!({
        "source_dir": "src", "domain_dir": "dom", "output_dir": "out",
        "master_seed": 3, "resolution": 32,
        "train": { "iterations": 1, "residual_blocks": 1 },
        "analysis": { "analyze_key": true }
    });
    std::fs::write(root.join("exp.json"), cfg.to_string()).unwrap();
    let o = run(&["train", "--config", s(&root.join("exp.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("out/generator.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["master_seed"], 3);
    assert!(rep["body"]["key_analysis"]["entropy"].as_f64().is_some());
    assert_eq!(rep["inputs"].as_array().unwrap().len(), 4);
}

#[test]
fn tiny_sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep", "--out", s(&out), "--resolution", "32", "--residual-blocks", "1",
        "--learning-rates", "0.0002", "--batch-sizes", "1,2", "--iterations", "1,2", "--val-fraction", "0.1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("learning_rate,batch_size,iterations,mean_entropy"));
}
