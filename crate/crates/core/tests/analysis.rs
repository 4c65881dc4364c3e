use std::fs;

use levelblend::analysis::{
    corner_data, emit_artifacts, evolution_accuracy, expressive_range, parse_grid_field, AccuracyConfig, BlendCounts,
    CornerData, ACCURACY_RUNS_HEADER,
};
use levelblend::corpus::Corpus;
use levelblend::evolve::Objective;
use levelblend::metrics::{BlendClass, SegmentMetrics};
use levelblend::models::{train, Model, ModelConfig, ModelKind};

fn tiny(kind: ModelKind) -> Model<f32> {
    let cfg = ModelConfig { kind, epochs: 3, channels: [8, 16], seed: 5, ..ModelConfig::new(kind) };
    train::<f32>(&cfg, &Corpus::bundled().grids()[..48]).unwrap().0.model
}

fn read_csv(path: &std::path::Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn single_sample_report() {
    let model = tiny(ModelKind::Gan);
    let r = expressive_range(&model, 1, 3).unwrap();
    assert_eq!((r.n, r.samples.len(), r.counts.total()), (1, 1, 1));
    let f = r.fractions;
    let ones = [f.smb_only, f.ki_only, f.blended, f.empty].iter().filter(|&&v| v == 1.0).count();
    assert_eq!(ones, 1);
    assert!(expressive_range(&model, 0, 3).is_err());
}

#[test]
fn range_csv_matches_report_and_is_deterministic() {
    let model = tiny(ModelKind::Vae);
    let report = expressive_range(&model, 200, 9).unwrap();
    let f = report.fractions;
    assert!((f.smb_only + f.ki_only + f.blended + f.empty - 1.0).abs() < 1e-12);

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = emit_artifacts(&report, a.path()).unwrap();
    emit_artifacts(&expressive_range(&model, 200, 9).unwrap(), b.path()).unwrap();
    for p in &files {
        let name = p.file_name().unwrap();
        assert_eq!(fs::read(p).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?} differs");
    }

    let csv_path = a.path().join("range_vae.csv");
    let rows = read_csv(&csv_path);
    assert_eq!(rows.len(), 200);
    let header = fs::read_to_string(&csv_path).unwrap();
    assert!(header.starts_with("density,difficulty,nonlinearity_mse,nonlinearity_pct,smb_proportion,blend_class\n"));
    let classes: Vec<BlendClass> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    let counts = BlendCounts::tally(classes.iter());
    assert_eq!(counts, report.counts);
    assert_eq!(counts.fractions(), report.fractions);
    let undefined = rows.iter().filter(|r| r[4].is_empty()).count();
    assert_eq!(undefined, report.excluded());
    assert_eq!(undefined, counts.empty);

    for name in ["range_vae_density.png", "range_vae_smb_proportion.png", "range_vae.manifest.json"] {
        assert!(a.path().join(name).exists(), "{name} missing");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("range_vae.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n"], 200);
    assert_eq!(manifest["seed"], 9);
}

#[test]
fn corner_overlay_counts() {
    let model = tiny(ModelKind::Vae);
    let corpus = Corpus::bundled();
    let data = corner_data(&model, 100, 1, &corpus).unwrap();
    assert_eq!(data.smb_training.len(), 187);
    assert_eq!(data.ki_training.len(), 191);
    assert!(data.ki_training.iter().all(|p| p[3] == 0.0));
    assert!(data.smb_training.iter().all(|p| p[3] == 100.0));
    assert_eq!(data.generated.len() + data.excluded, 100);
    assert_eq!(data.histograms.len(), 4);
    assert!(data.histograms.iter().all(|h| h.total() == data.generated.len()));
    assert_eq!(CornerData::pairs().len(), 6);

    let dir = tempfile::tempdir().unwrap();
    emit_artifacts(&data.clone().with_label("c"), dir.path()).unwrap();
    let rows = read_csv(&dir.path().join("corner_c.csv"));
    assert_eq!(rows.len(), data.generated.len() + 378);
    assert_eq!(read_csv(&dir.path().join("corner_c_histograms.csv")).len(), 40);
    assert!(dir.path().join("corner_c.png").exists());
}

#[test]
fn accuracy_grid_has_twenty_rows_that_recompute() {
    let model = tiny(ModelKind::Vae);
    let cfg = AccuracyConfig { runs: 1, budget: 32, seed: 4, ..AccuracyConfig::default() };
    let report = evolution_accuracy(&model, &cfg).unwrap();
    assert_eq!(report.rows.len(), 20);
    assert_eq!(report.runs.len(), 20);
    for row in &report.rows {
        assert_eq!(row.runs, 1);
        if row.defined == 1 {
            assert_eq!(row.std, Some(0.0));
            assert_eq!(row.mean, row.min);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let report = report.with_label("tiny");
    emit_artifacts(&report, dir.path()).unwrap();
    assert_eq!(read_csv(&dir.path().join("accuracy_tiny.csv")).len(), 20);
    let mut rdr = csv::Reader::from_path(dir.path().join("accuracy_runs_tiny.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ACCURACY_RUNS_HEADER);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let objective: Objective = rec[0].parse().unwrap();
        let grid = parse_grid_field(&rec[8]).unwrap();
        let recomputed = SegmentMetrics::of(&grid).value(objective.metric().unwrap());
        let emitted = (!rec[4].is_empty()).then(|| rec[4].parse::<f64>().unwrap());
        assert_eq!(recomputed, emitted);
    }
    assert!(dir.path().join("accuracy_tiny.png").exists());
}

#[test]
fn accuracy_seeds_are_distinct_per_cell() {
    let model = tiny(ModelKind::Vae);
    let cfg = AccuracyConfig {
        objectives: vec![Objective::Density],
        targets: vec![30.0],
        runs: 3,
        budget: 16,
        seed: 100,
        ..AccuracyConfig::default()
    };
    let report = evolution_accuracy(&model, &cfg).unwrap();
    let seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, [100, 101, 102]);
    assert!(evolution_accuracy(&model, &AccuracyConfig { runs: 0, ..cfg }).is_err());
}
