mod common;

use common::{files, sgg_lab, write_tiny};
use sgg_fusion_core::fusion::FusionKind;
use sgg_fusion_core::metrics::MetricId;
use sgg_fusion_lab::cli;
use sgg_fusion_lab::config::LabConfig;
use sgg_fusion_lab::report::{self, AblationReport, DatasetInfo};

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_matches_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgg_lab(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let expected = include_str!("snapshots/help.txt");
    assert_eq!(stdout(&o), expected);
    for f in FusionKind::ALL {
        assert!(expected.contains(f.id()), "{f}");
    }
    for m in MetricId::ALL {
        assert!(expected.contains(&format!(" {m}")), "{m}");
    }
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny(dir.path());
    for out in ["a", "b"] {
        let o = sgg_lab(dir.path(), &["gen-data", "--config", "tiny.toml", "--seed", "5", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let names = files(&dir.path().join("a"));
    assert_eq!(names.len(), 4);
    for name in &names {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{} differs", name.display());
    }
    let manifest = sgg_fusion_lab::dataset::load_manifest(&dir.path().join("a")).unwrap();
    assert_eq!(manifest.seed, 5);
}

#[test]
fn bad_split_ratios_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[data]\nsplit = [0.5, 0.2, 0.2]\n").unwrap();
    let o = sgg_lab(dir.path(), &["gen-data", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("split"), "{err}");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[ablation]\nkz = [5]\n").unwrap();
    let o = sgg_lab(dir.path(), &["ablate", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kz"), "{}", stderr(&o));
}

#[test]
fn unknown_fusion_lists_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgg_lab(dir.path(), &["ablate", "--fusion", "sum,nope"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for f in FusionKind::ALL {
        assert!(err.contains(f.id()), "{err}");
    }
}

#[test]
fn fusion_alias_expands_to_all_kinds() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    // Parsing only: an invalid K stops the run before any work.
    let code = cli::run(["sgg-lab", "ablate", "--fusion", "all", "--k", "0", "--out", "/nonexistent"], &mut out, &mut err);
    assert_eq!(code, 1);
    assert!(String::from_utf8(err).unwrap().contains("ablation.ks"));
}

#[test]
fn pipeline_stays_inside_out() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny(dir.path());
    let run = |args: &[&str]| {
        let o = sgg_lab(dir.path(), args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["gen-data", "--config", "tiny.toml", "--out", "data"]);
    let o = run(&["ablate", "--config", "tiny.toml", "--data", "data", "--fusion", "sum,dist", "--k", "5", "--out", "abl"]);
    assert!(stdout(&o).contains("dist s0"));
    run(&["train", "--config", "tiny.toml", "--data", "data", "--fusion", "gate", "--out", "tr"]);
    run(&["evaluate", "--config", "tiny.toml", "--data", "data", "--checkpoint", "tr/checkpoint.bin", "--tde", "zeros", "--out", "ev"]);
    run(&["export-plot", "abl/report.json", "--out", "plot"]);

    let mut top: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    top.sort();
    assert_eq!(top, ["abl", "data", "ev", "plot", "tiny.toml", "tr"]);
    let abl: Vec<String> = files(&dir.path().join("abl")).iter().map(|p| p.display().to_string()).collect();
    assert_eq!(
        abl,
        [
            "arms/dist-seed0/checkpoint.bin",
            "arms/dist-seed0/history.tsv",
            "arms/sum-seed0/checkpoint.bin",
            "arms/sum-seed0/history.tsv",
            "report.json",
            "timings.json",
        ]
    );
    assert_eq!(files(&dir.path().join("tr")).len(), 3);

    let report = AblationReport::load(&dir.path().join("abl/report.json")).unwrap();
    let tsv = std::fs::read_to_string(dir.path().join("plot/plot.tsv")).unwrap();
    let rows = report::parse_tsv(&tsv).unwrap();
    assert_eq!(rows.len(), report.rows.len());
    assert_eq!(rows.len(), 2 * 5 * 2);
    for (row, back) in report.rows.iter().zip(&rows) {
        assert_eq!(row.score.map(f64::to_bits), back.score.map(f64::to_bits));
    }
}

#[test]
fn resume_continues_a_run() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny(dir.path());
    let run = |args: &[&str]| {
        let o = sgg_lab(dir.path(), args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    };
    run(&["gen-data", "--config", "tiny.toml", "--out", "data"]);
    run(&["train", "--config", "tiny.toml", "--data", "data", "--out", "full"]);
    run(&["train", "--config", "tiny.toml", "--data", "data", "--max-iter", "80", "--out", "half"]);
    run(&["train", "--config", "tiny.toml", "--data", "data", "--resume", "half/checkpoint.bin", "--out", "rest"]);
    for f in ["checkpoint.bin", "history.tsv"] {
        let full = std::fs::read(dir.path().join("full").join(f)).unwrap();
        let rest = std::fs::read(dir.path().join("rest").join(f)).unwrap();
        assert!(full == rest, "{f} differs after resuming");
    }
}

#[test]
fn evaluate_reads_stored_predictions() {
    use sgg_fusion_core::inference::Scoring;
    use sgg_fusion_lab::ablation;
    use sgg_fusion_lab::cli::{PredictionsFile, PREDICTIONS_FORMAT};

    let dir = tempfile::tempdir().unwrap();
    write_tiny(dir.path());
    let o = sgg_lab(dir.path(), &["gen-data", "--config", "tiny.toml", "--out", "data"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, splits) = sgg_fusion_lab::dataset::load(&dir.path().join("data")).unwrap();
    let cfg = common::tiny();
    let params = ablation::init_params(&cfg, FusionKind::Sum).unwrap();
    let sets = ablation::predict(&params, &splits.test, &Scoring::Biased).unwrap();
    let file = PredictionsFile { format: PREDICTIONS_FORMAT.into(), version: 1, scenes: sets };
    std::fs::write(dir.path().join("preds.json"), serde_json::to_vec(&file).unwrap()).unwrap();

    let o = sgg_lab(dir.path(), &["evaluate", "--config", "tiny.toml", "--data", "data", "--predictions", "preds.json", "--out", "ev"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let expected = ablation::evaluate(&params, &cfg, &splits, &Scoring::Biased).unwrap();
    let got: cli::Evaluation = serde_json::from_slice(&std::fs::read(dir.path().join("ev/evaluation.json")).unwrap()).unwrap();
    for row in &got.rows {
        assert_eq!(row.score, expected.get(row.metric, row.k));
    }

    // Dropping a scene is a format error naming the file's field.
    let mut file = file;
    file.scenes.pop();
    std::fs::write(dir.path().join("preds.json"), serde_json::to_vec(&file).unwrap()).unwrap();
    let o = sgg_lab(dir.path(), &["evaluate", "--config", "tiny.toml", "--data", "data", "--predictions", "preds.json", "--out", "ev"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenes"));
}

#[test]
fn corrupt_report_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = LabConfig::default();
    cfg.ablation.fusions = vec![];
    let empty = AblationReport::new(cfg, DatasetInfo { seed: 0, counts: vec![], ledger_triplets: 0 }, vec![], vec![], vec![]);
    empty.save(dir.path()).unwrap();
    let o = sgg_lab(dir.path(), &["export-plot", "report.json", "--out", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("p/plot.tsv")).unwrap(), format!("{}\n", report::TSV_HEADER));

    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    std::fs::write(dir.path().join("report.json"), text.replace("\"ledger_triplets\": 0", "\"ledger_triplets\": \"x\"")).unwrap();
    let o = sgg_lab(dir.path(), &["export-plot", "report.json", "--out", "q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset.ledger_triplets"), "{}", stderr(&o));
    assert!(!dir.path().join("q").exists());
}
