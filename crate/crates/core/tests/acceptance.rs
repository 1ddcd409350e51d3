//! Acceptance criteria, one PASS/FAIL line each on stderr.
//!
//! Criteria 1-6 need the public labeled comment dataset. Point `SATD_DATASET`
//! at its CSV (default: `<workspace>/data/technical_debt_dataset.csv`). When
//! it is missing those criteria report FAIL with the reason; set
//! `SATD_ACCEPTANCE_STRICT=1` to also fail the test run in that case.
//! Run with `--release` when the dataset is present.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::oracles::*;
use common::{random_matrix, synthetic_corpus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satd_core::balance::{
    adasyn_ratios, allocate, borderline_partition, resample, BorderlineClass, SamplerConfig, SamplerKind,
};
use satd_core::corpus::{load_corpus, preprocess, Corpus, Label, PreprocessConfig};
use satd_core::eval::{
    self, duplicate_impact_run, make_folds, roc_auc, run_grid, wilcoxon_signed_rank, write_benchmark,
    BenchmarkConfig, BenchmarkResult, Metric, Pairing, Protocol, Technique,
};
use satd_core::explain::linear_shap;
use satd_core::features::{FeatureVector, LabeledMatrix};
use satd_core::models::logistic::{self, LogRegHyper, LogisticObjective};
use satd_core::models::ModelKind;

const SMOTE: Technique = Technique::Sampling(SamplerKind::Smote);

enum Outcome {
    Pass(String),
    Fail(String),
    /// Could not be evaluated in this environment.
    Unavailable(String),
}

struct Report {
    failed: Vec<usize>,
    unavailable: Vec<usize>,
}

impl Report {
    fn record(&mut self, id: usize, title: &str, outcome: Outcome) {
        let line = match &outcome {
            Outcome::Pass(d) => format!("PASS [{id}] {title}: {d}"),
            Outcome::Fail(d) => {
                self.failed.push(id);
                format!("FAIL [{id}] {title}: {d}")
            }
            Outcome::Unavailable(d) => {
                self.unavailable.push(id);
                format!("FAIL [{id}] {title}: not evaluated, {d}")
            }
        };
        // Written to the raw handle so the line shows without --nocapture.
        let _ = writeln!(std::io::stderr(), "{line}");
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn dataset_path() -> PathBuf {
    std::env::var_os("SATD_DATASET").map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/technical_debt_dataset.csv")
    })
}

struct Dataset {
    raw: Corpus,
    clean: Corpus,
    stats: satd_core::corpus::PreprocessStats,
    elapsed: Duration,
}

fn load_dataset() -> Result<Dataset, String> {
    let path = dataset_path();
    if !path.exists() {
        return Err(format!("dataset not found at {} (set SATD_DATASET)", path.display()));
    }
    let start = Instant::now();
    let raw = load_corpus(&path, None).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let (clean, stats) = preprocess(&raw, &PreprocessConfig::default());
    Ok(Dataset {
        raw,
        clean,
        stats,
        elapsed: start.elapsed(),
    })
}

fn within(pct: f64, target: f64, got: f64) -> bool {
    (got - target).abs() <= target * pct / 100.0
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.3}"))
}

fn mean(r: &BenchmarkResult, t: Technique, m: ModelKind, metric: Metric) -> Option<f64> {
    r.cell(t, m).and_then(|c| c.mean(metric))
}

fn grid(protocol: Protocol, techniques: Vec<Technique>, models: Vec<ModelKind>) -> BenchmarkConfig {
    BenchmarkConfig {
        protocol,
        techniques,
        models,
        pairing: Pairing::PerProject,
        ..BenchmarkConfig::default()
    }
}

fn criterion_1(d: &Dataset) -> Outcome {
    let n = d.stats.output_count as f64;
    let satd = d.stats.output_satd as f64;
    let dup = 100.0 * d.stats.dedup.removed_fraction;
    let ok = within(5.0, 34_424.0, n)
        && within(5.0, 3_248.0, satd)
        && (dup - 37.75).abs() <= 2.0
        && d.elapsed < Duration::from_secs(60);
    check(
        ok,
        format!(
            "{} raw -> {n} comments (34,424 +-5%), {satd} SATD (3,248 +-5%), duplicates removed {dup:.2}% (37.75 +-2), {:.1}s (< 60s)",
            d.raw.len(),
            d.elapsed.as_secs_f64()
        ),
    )
}

fn criteria_2_3(d: &Dataset, report: &mut Report) {
    let start = Instant::now();
    let r = match run_grid(&d.clean, &grid(Protocol::Within, vec![Technique::Baseline, SMOTE], vec![ModelKind::Logistic])) {
        Ok(r) => r,
        Err(e) => {
            report.record(2, "within LR recall, SMOTE vs baseline", Outcome::Fail(e.to_string()));
            report.record(3, "within LR AUC, SMOTE vs baseline", Outcome::Fail(e.to_string()));
            return;
        }
    };
    let elapsed = start.elapsed();
    let lr = ModelKind::Logistic;
    let (rb, rs) = (mean(&r, Technique::Baseline, lr, Metric::Recall), mean(&r, SMOTE, lr, Metric::Recall));
    let sig = r
        .wilcoxon
        .iter()
        .find(|w| w.metric == Metric::Recall && w.model == lr && w.technique == SMOTE && w.reference == Technique::Baseline)
        .and_then(|w| w.result);
    let ok = matches!((rb, rs), (Some(b), Some(s)) if s - b >= 0.20)
        && sig.as_ref().is_some_and(|w| w.significant_at_95 && w.n_effective >= 10)
        && elapsed < Duration::from_secs(600);
    report.record(
        2,
        "within LR recall, SMOTE vs baseline",
        check(
            ok,
            format!(
                "baseline {} smote {} (need +0.20), signed-rank p={} over {} projects, {:.0}s (< 600s)",
                fmt(rb),
                fmt(rs),
                sig.as_ref().map_or("NA".into(), |w| format!("{:.4}", w.p_value)),
                sig.as_ref().map_or(0, |w| w.n_effective),
                elapsed.as_secs_f64()
            ),
        ),
    );
    let (ab, as_) = (mean(&r, Technique::Baseline, lr, Metric::RocAuc), mean(&r, SMOTE, lr, Metric::RocAuc));
    report.record(
        3,
        "within LR AUC, SMOTE vs baseline",
        check(
            matches!((ab, as_), (Some(b), Some(s)) if s >= b + 0.10),
            format!("baseline {} smote {} (need +0.10)", fmt(ab), fmt(as_)),
        ),
    );
}

fn criterion_4(d: &Dataset) -> Outcome {
    let rf = ModelKind::Forest;
    match run_grid(&d.clean, &grid(Protocol::Cross, vec![Technique::Baseline, SMOTE], vec![rf])) {
        Ok(r) => {
            let (b, s) = (mean(&r, Technique::Baseline, rf, Metric::Precision), mean(&r, SMOTE, rf, Metric::Precision));
            check(
                matches!((b, s), (Some(b), Some(s)) if b >= s),
                format!("baseline {} >= smote {}", fmt(b), fmt(s)),
            )
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn criterion_5(d: &Dataset) -> Outcome {
    let xgb = ModelKind::Boosted;
    match run_grid(&d.clean, &grid(Protocol::Within, vec![SMOTE], vec![xgb])) {
        Ok(r) => {
            let f1 = mean(&r, SMOTE, xgb, Metric::F1);
            check(
                f1.is_some_and(|f| (0.65..=0.85).contains(&f)),
                format!("mean F1 {} in [0.65, 0.85]", fmt(f1)),
            )
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn criterion_6(d: &Dataset) -> Outcome {
    let keep = PreprocessConfig {
        dedupe: false,
        dedupe_cleaned: false,
        ..PreprocessConfig::default()
    };
    let (with_dups, _) = preprocess(&d.raw, &keep);
    // Top cross-project cell: boosting with borderline oversampling.
    let bline = Technique::Sampling(SamplerKind::Borderline);
    let cfg = grid(Protocol::Cross, vec![bline], vec![ModelKind::Boosted]);
    match duplicate_impact_run(&with_dups, &d.clean, bline, ModelKind::Boosted, &cfg, &[Protocol::Cross]) {
        Ok(impact) => {
            let (w, dd) = impact.means.get(&Protocol::Cross).copied().unwrap_or((None, None));
            check(
                matches!((w, dd), (Some(w), Some(d)) if w <= d),
                format!("cross F1 with duplicates {} <= deduplicated {}", fmt(w), fmt(dd)),
            )
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: oracle suites
// ---------------------------------------------------------------------------

fn oracle_auc() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0f64;
    for case in 0..200 {
        let n = rng.gen_range(4..80);
        let labels: Vec<Label> = (0..n)
            .map(|i| if i < 2 || (i >= 4 && rng.gen_bool(0.3)) { Label::Satd } else { Label::NonSatd })
            .collect();
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 20.0).floor() / 20.0).collect();
        let (g, w) = (roc_auc(&labels, &scores), pair_count_auc(&labels, &scores));
        let (Some(g), Some(w)) = (g, w) else {
            return Err(format!("case {case}: AUC undefined"));
        };
        worst = worst.max((g - w).abs());
    }
    if worst <= 1e-12 {
        Ok(format!("200 cases, max error {worst:.1e}"))
    } else {
        Err(format!("max error {worst:.1e} > 1e-12"))
    }
}

fn oracle_wilcoxon() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0f64;
    for case in 0..100 {
        let n = rng.gen_range(5..=eval::EXACT_MAX_N);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64 / 10.0).collect();
        // Nonzero shifts keep every pair; repeated magnitudes give ties.
        let a: Vec<f64> = b
            .iter()
            .map(|x| {
                let s = rng.gen_range(1..=6) as f64 / 8.0;
                if rng.gen_bool(0.5) { x + s } else { x - s }
            })
            .collect();
        let r = wilcoxon_signed_rank(&a, &b).map_err(|e| format!("case {case}: {e}"))?;
        let (_, p) = enumerated_signed_rank(&a, &b);
        worst = worst.max((r.p_value - p).abs());
    }
    if worst <= 1e-12 {
        Ok(format!("100 cases n<=12, max error {worst:.1e}"))
    } else {
        Err(format!("max error {worst:.1e}"))
    }
}

fn oracle_gradient() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0f64;
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 20, 10, 0.5, 6);
        let w = vec![1.0; 20];
        let obj = LogisticObjective::new(&m, &w, 1e-2);
        let p: Vec<f64> = (0..obj.n_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut g = vec![0.0; p.len()];
        obj.loss_and_grad(&p, &mut g);
        for i in 0..p.len() {
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (obj.loss(&up) - obj.loss(&dn)) / 2e-6;
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8));
        }
    }
    if worst <= 1e-5 {
        Ok(format!("20 instances, max relative error {worst:.1e}"))
    } else {
        Err(format!("max relative error {worst:.1e} > 1e-5"))
    }
}

fn oracle_samplers() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for case in 0..50u64 {
        let rows = rng.gen_range(12..30);
        let n_min = rng.gen_range(3..rows / 2);
        let m = random_matrix(&mut rng, rows, 4, 0.7, n_min);
        let out = resample(&m, &SamplerConfig::new(SamplerKind::Smote, case)).map_err(|e| e.to_string())?;
        if out.matrix.count(Label::Satd) != out.matrix.count(Label::NonSatd) {
            return Err(format!("smote case {case}: unbalanced output"));
        }
        let minority: Vec<Vec<f64>> = m.rows_with(Label::Satd).iter().map(|&i| m.vector(i).to_dense()).collect();
        for v in &out.matrix.vectors()[rows..] {
            let s = v.to_dense();
            if !minority.iter().any(|a| minority.iter().any(|b| on_segment(&s, a, b, 1e-9))) {
                return Err(format!("smote case {case}: synthetic off every minority segment"));
            }
        }
    }

    // Minority at x = 0, 10, 20; majority at 1, 2, 21; k = 2 gives r = (1, 1, 0.5)
    // and 10 synthetics split 4 / 4 / 2.
    let xs = [1.0, 2.0, 21.0, 0.0, 10.0, 20.0];
    let labels = vec![Label::NonSatd, Label::NonSatd, Label::NonSatd, Label::Satd, Label::Satd, Label::Satd];
    let m = LabeledMatrix::new(1, xs.iter().map(|&x| FeatureVector::from_dense(&[x])).collect(), labels);
    let mut cfg = SamplerConfig::new(SamplerKind::Adasyn, 0);
    cfg.k_neighbors = 2;
    let r = adasyn_ratios(&m, &cfg).map_err(|e| e.to_string())?;
    if r != vec![(3, 1.0), (4, 1.0), (5, 0.5)] {
        return Err(format!("adasyn ratios {r:?}"));
    }
    let plan = allocate(&r, 10).ok_or("adasyn allocation empty")?;
    if plan.per_seed_counts.values().copied().collect::<Vec<_>>() != vec![4, 4, 2] {
        return Err(format!("adasyn allocation {:?}", plan.per_seed_counts));
    }

    for case in 0..20u64 {
        let m = random_matrix(&mut rng, 40, 3, 0.6, 12);
        let cfg = SamplerConfig::new(SamplerKind::Borderline, case);
        let got = borderline_partition(&m, &cfg).map_err(|e| e.to_string())?;
        for ((row, class), (_, maj)) in got.iter().zip(majority_neighbor_counts(&m, cfg.m_neighbors)) {
            let want = if maj == cfg.m_neighbors {
                BorderlineClass::Noise
            } else if 2 * maj >= cfg.m_neighbors {
                BorderlineClass::Danger
            } else {
                BorderlineClass::Safe
            };
            if *class != want {
                return Err(format!("borderline case {case} row {row}: {class:?} vs {want:?}"));
            }
        }
    }
    Ok("50 SMOTE matrices, ADASYN table, 20 borderline partitions".into())
}

fn oracle_shap() -> Result<String, String> {
    // Efficiency on every test row of a within-project fold.
    let corpus = synthetic_corpus(1, 600, 0.15, 105);
    let cfg = BenchmarkConfig::default();
    let plan = make_folds(&corpus, Protocol::Within, 5, 1).map_err(|e| e.to_string())?;
    let data = eval::Prepared::new(&corpus);
    let art = eval::run_fold(&data, &plan.folds[0], Technique::Baseline, ModelKind::Logistic, &cfg)
        ?;
    let lr = match &art.model {
        satd_core::models::ModelParams::Logistic(m) => m,
        _ => return Err("fold model is not logistic".into()),
    };
    let means = &art.background_means;
    let mut worst = 0f64;
    let mut n_rows = 0;
    for (i, v) in art.test.vectors().iter().enumerate() {
        let r = linear_shap(lr, v, means, i).map_err(|e| e.to_string())?;
        worst = worst.max((r.total() - lr.margin(v)).abs());
        n_rows += 1;
    }
    if worst > 1e-9 {
        return Err(format!("efficiency error {worst:.1e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let m = random_matrix(&mut rng, 50, 20, 0.4, 15);
    let model = logistic::fit(&m, &[1.0; 50], &LogRegHyper::default());
    let means = m.feature_means();
    let margin = |z: &[f64]| model.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + model.bias;
    let players = [1usize, 4, 7, 11, 15, 19];
    let mut x = means.clone();
    for &p in &players {
        x[p] = rng.gen_range(0.0..1.0);
    }
    let report = linear_shap(&model, &FeatureVector::from_dense(&x), &means, 0).map_err(|e| e.to_string())?;
    let phi = permutation_shapley(margin, &x, &means, &players);
    let err = players.iter().zip(&phi).map(|(&p, v)| (report.get(p) - v).abs()).fold(0.0, f64::max);
    if err > 1e-9 {
        return Err(format!("brute-force Shapley error {err:.1e}"));
    }
    Ok(format!(
        "efficiency max error {worst:.1e} on {n_rows} test rows, 6-feature brute force error {err:.1e}"
    ))
}

type OracleSuite = fn() -> Result<String, String>;

fn criterion_7() -> Outcome {
    let suites: [(&str, OracleSuite); 5] = [
        ("auc", oracle_auc),
        ("wilcoxon", oracle_wilcoxon),
        ("lr-gradient", oracle_gradient),
        ("samplers", oracle_samplers),
        ("shap", oracle_shap),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, f) in suites {
        match f() {
            Ok(d) => lines.push(format!("{name} ok ({d})")),
            Err(e) => {
                ok = false;
                lines.push(format!("{name} FAILED ({e})"));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn criterion_8(dataset: Option<&Dataset>) -> Outcome {
    let (corpus, source) = match dataset {
        Some(d) => (d.clean.clone(), "public dataset"),
        None => {
            let raw = load_corpus(common::data_dir().join("mini_corpus.csv"), None).unwrap();
            (preprocess(&raw, &PreprocessConfig::default()).0, "bundled mini corpus")
        }
    };
    let cfg = grid(Protocol::Within, vec![Technique::Baseline, SMOTE], vec![ModelKind::Logistic]);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        match run_grid(&corpus, &cfg) {
            Ok(r) => {
                write_benchmark(d.path(), &r).unwrap();
            }
            Err(e) => return Outcome::Fail(e.to_string()),
        }
    }
    let names = ["precision.csv", "recall.csv", "f1.csv", "roc_auc.csv", "wilcoxon.csv", "manifest.json"];
    let differing: Vec<&str> = names
        .iter()
        .copied()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).ok() != std::fs::read(dirs[1].path().join(n)).ok())
        .collect();
    check(
        differing.is_empty(),
        format!("two seeded runs on the {source}: {} of {} outputs differ", differing.len(), names.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let mut report = Report {
        failed: Vec::new(),
        unavailable: Vec::new(),
    };
    let dataset = load_dataset();
    match &dataset {
        Ok(d) => {
            report.record(1, "preprocessing reproduction", criterion_1(d));
            criteria_2_3(d, &mut report);
            report.record(4, "cross forest precision, baseline vs SMOTE", criterion_4(d));
            report.record(5, "within boosting+SMOTE F1 band", criterion_5(d));
            report.record(6, "duplicate impact direction (cross, boosting+borderline)", criterion_6(d));
        }
        Err(why) => {
            let titles = [
                "preprocessing reproduction",
                "within LR recall, SMOTE vs baseline",
                "within LR AUC, SMOTE vs baseline",
                "cross forest precision, baseline vs SMOTE",
                "within boosting+SMOTE F1 band",
                "duplicate impact direction (cross, boosting+borderline)",
            ];
            for (i, t) in titles.iter().enumerate() {
                report.record(i + 1, t, Outcome::Unavailable(why.clone()));
            }
        }
    }
    report.record(7, "oracle suites", criterion_7());
    report.record(8, "determinism", criterion_8(dataset.as_ref().ok()));

    let strict = std::env::var("SATD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    assert!(report.failed.is_empty(), "criteria failed: {:?}", report.failed);
    assert!(
        !strict || report.unavailable.is_empty(),
        "criteria not evaluated: {:?}",
        report.unavailable
    );
}
