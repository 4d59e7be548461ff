use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quicfed::config::Config;

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "[experiment]\nseed = 5\n\
         [generator]\nn_clients = 3\nn_rounds = 8\nrate_min = 40\nrate_max = 60\n\
         [features]\nprofile = reduced\n\
         [training]\nepochs = 2\ncentral_batch_size = 128\n\
         [federation]\ntrain_capacity = 30\nval_capacity = 5\ntest_capacity = 10\n\
         [evaluation]\nwindow_start = 4\nwindow_end = 7\nimportance_repeats = 1\n\
         [io]\ncorpus = corpus.csv\nout_dir = out\n{extra}"
    );
    let path = dir.join("tiny.ini");
    std::fs::write(&path, text).unwrap();
    path
}

fn quicfed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quicfed")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = quicfed(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err_line(args: &[&str]) -> String {
    let out = quicfed(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    stderr.trim_end().to_string()
}

fn manifest_value(path: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap()
}

#[test]
fn generate_is_reproducible_and_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "generate"]);
    let manifest = dir.path().join("corpus.csv.manifest");
    let first = manifest_value(&manifest, "sha256");
    assert_eq!(manifest_value(&manifest, "clients"), "3");
    assert_eq!(manifest_value(&manifest, "rounds"), "8");
    let bytes = std::fs::read(dir.path().join("corpus.csv")).unwrap();
    ok(&["--config", cfg, "generate"]);
    assert_eq!(manifest_value(&manifest, "sha256"), first);
    assert_eq!(std::fs::read(dir.path().join("corpus.csv")).unwrap(), bytes);

    ok(&["--config", cfg, "--seed", "6", "generate"]);
    assert_ne!(manifest_value(&manifest, "sha256"), first);
}

#[test]
fn zero_rate_gives_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.ini");
    std::fs::write(&cfg, "[generator]\nrate_min = 0\nrate_max = 0\n[io]\ncorpus = c.csv\n").unwrap();
    ok(&["--config", cfg.to_str().unwrap(), "generate"]);
    assert_eq!(manifest_value(&dir.path().join("c.csv.manifest"), "flows"), "0");
    assert_eq!(manifest_value(&dir.path().join("c.csv.manifest"), "clients"), "14");
    assert_eq!(manifest_value(&dir.path().join("c.csv.manifest"), "rounds"), "112");
}

#[test]
fn run_writes_reports_and_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "generate"]);

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let summary = ok(&["--config", cfg, "--out", a.to_str().unwrap(), "run", "--scenario", "fed-buffered"]);
    assert!(summary.starts_with("scenario,aggregator,rounds,"));
    ok(&[
        "--config",
        cfg,
        "--out",
        b.to_str().unwrap(),
        "--workers",
        "3",
        "run",
        "--scenario",
        "fed-buffered",
        "--aggregator",
        "fedavg",
    ]);
    let ra = std::fs::read(a.join("fed-buffered_fedavg_rounds.csv")).unwrap();
    let rb = std::fs::read(b.join("fed-buffered_fedavg_rounds.csv")).unwrap();
    assert_eq!(ra, rb);
    // header plus (3 clients + aggregate) per round
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 8 * 4);
    for name in ["fed-buffered_fedavg_summary.csv", "fed-buffered_fedavg_final.ckpt"] {
        assert!(a.join(name).exists(), "{name}");
    }
}

#[test]
fn centralized_summary_has_split_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "generate"]);
    let out = ok(&["--config", cfg, "run", "--scenario", "centralized", "--aggregator", "fedyogi"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    for key in ["train_f1", "val_f1", "test_f1"] {
        let i = header.iter().position(|h| *h == key).unwrap();
        let v: f64 = row[i].parse().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert_eq!(row[1], "none");
    assert!(dir.path().join("out/centralized_none_final.ckpt").exists());
    assert!(dir.path().join("out/centralized_none_classes.csv").exists());

    let ranked = ok(&["--config", cfg, "importance"]);
    assert!(ranked.starts_with("rank,feature,mean_f1_drop\n"));
    let report = std::fs::read_to_string(dir.path().join("out/importance.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 64);
    ok(&["--config", cfg, "importance"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/importance.csv")).unwrap(), report);
}

#[test]
fn compare_checks_ranges_and_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "generate"]);
    ok(&["--config", cfg, "run", "--scenario", "fed-unbuffered"]);
    let report = dir.path().join("out/fed-unbuffered_fedavg_rounds.csv");
    let r = report.to_str().unwrap();

    let table = ok(&["--config", cfg, "compare", r, r]);
    assert!(table.contains("a,b,std_ratio\nfed-unbuffered_fedavg,fed-unbuffered_fedavg,1\n"), "{table}");
    assert!(dir.path().join("out/compare.csv").exists());

    let e = err_line(&["--config", cfg, "compare", r, r, "--window", "4:20"]);
    assert!(e.starts_with("error[config]:") && e.contains("incompatible round ranges"), "{e}");

    let e = err_line(&["--config", cfg, "compare", r]);
    assert!(e.starts_with("error[config]:"), "{e}");
}

#[test]
fn errors_are_single_categorized_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();

    let e = err_line(&["--config", cfg, "run"]);
    assert!(e.starts_with("error[config]:") && e.contains("generate"), "{e}");

    ok(&["--config", cfg, "generate"]);
    let e = err_line(&["--config", cfg, "run", "--aggregator", "fedfoo"]);
    assert!(e.starts_with("error[config]:"), "{e}");
    for name in ["fedavg", "fedprox", "fedadagrad", "fedyogi", "fedadam"] {
        assert!(e.contains(name), "{e}");
    }
    let e = err_line(&["--config", cfg, "run", "--scenario", "hybrid"]);
    assert!(e.contains("fed-buffered"), "{e}");

    let bad = dir.path().join("bad.ini");
    std::fs::write(&bad, "[training]\nfed_batch_size = lots\n").unwrap();
    let e = err_line(&["--config", bad.to_str().unwrap(), "generate"]);
    assert!(e.starts_with("error[config]:") && e.contains("training.fed_batch_size"), "{e}");
}

#[test]
fn importance_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let cfg_s = cfg.to_str().unwrap();
    ok(&["--config", cfg_s, "generate"]);
    ok(&["--config", cfg_s, "run", "--scenario", "centralized"]);
    let full = dir.path().join("full.ini");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("profile = reduced", "profile = full");
    std::fs::write(&full, text).unwrap();
    let e = err_line(&["--config", full.to_str().unwrap(), "importance"]);
    assert!(e.starts_with("error[shape]:") && e.contains("64") && e.contains("243"), "{e}");
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let full = Config::load(&root.join("default.ini")).unwrap();
    assert_eq!(full.capacities.train, 6400);
    assert_eq!(full.schema().len(), 243);
    let desk = Config::load(&root.join("desk.ini")).unwrap();
    assert_eq!(desk.capacities.train, 640);
    assert_eq!(desk.schema().len(), 64);
    assert_eq!(desk.generator, full.generator);
}
