use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{Map, Value};

use super::config::{ExperimentConfig, Variant};
use super::report::{write_csv, EpochRow, Summary, ThresholdRow};
use crate::dataset::{export_dataset, generate_blobs, inject_noise, CleanDataset, NoiseSpec, NoisyDataset};
use crate::error::{Error, Result};
use crate::gmm::GmmConfig;
use crate::metrics::Evaluator;
use crate::nn::Mlp;
use crate::rng::{stage_rng, stage_seed, Stage};
use crate::training::{run_plain_ce, run_training, DumpOptions, EpochReport};
use crate::warmup::{cross_filter, kfold_partition, plain_warmup, warmup_train, FilteredSet};

/// Noisy training set plus clean held-out test set.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub train: NoisyDataset,
    pub test: CleanDataset,
}

pub fn build_benchmark(cfg: &ExperimentConfig) -> Result<Benchmark> {
    let clean = generate_blobs(
        cfg.classes,
        cfg.per_class,
        cfg.dim,
        cfg.spread,
        stage_seed(cfg.seed, Stage::TrainData),
    )?;
    let test = generate_blobs(
        cfg.classes,
        cfg.test_per_class,
        cfg.dim,
        cfg.spread,
        stage_seed(cfg.seed, Stage::TestData),
    )?;
    let train = inject_noise(&clean, &cfg.noise_spec(), stage_seed(cfg.seed, Stage::Noise))?;
    Ok(Benchmark { train, test })
}

/// Output of cross-filtering followed by the semi-supervised warm-up.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub filtered: FilteredSet,
    pub net: Mlp,
}

fn fresh_net(cfg: &ExperimentConfig) -> Result<Mlp> {
    cfg.classifier()
        .build(cfg.dim, cfg.classes, &mut stage_rng(cfg.seed, Stage::MainInit))
}

/// Run only the cross-filter.
pub fn filter_benchmark(cfg: &ExperimentConfig, bench: &Benchmark) -> Result<FilteredSet> {
    let view = bench.train.train_view();
    let plan = kfold_partition(view.len(), cfg.folds, stage_seed(cfg.seed, Stage::Folds))?;
    Ok(cross_filter(view, &plan, &cfg.filter_config(), cfg.seed)?.filtered)
}

/// Cross-filter, then warm up a fresh main network on the filtered set.
/// Depends only on the dataset, filter and warm-up fields of `cfg`, so
/// variants that share those can share one warm start.
pub fn warm_start(cfg: &ExperimentConfig, bench: &Benchmark) -> Result<WarmStart> {
    warm_start_from(cfg, bench, filter_benchmark(cfg, bench)?)
}

/// Warm up a fresh main network on an already computed filtered set.
pub fn warm_start_from(cfg: &ExperimentConfig, bench: &Benchmark, filtered: FilteredSet) -> Result<WarmStart> {
    let mut net = fresh_net(cfg)?;
    warmup_train(
        &mut net,
        bench.train.train_view(),
        &filtered,
        &cfg.warmup_config(),
        stage_seed(cfg.seed, Stage::Warmup),
    )?;
    Ok(WarmStart { filtered, net })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub reports: Vec<EpochReport>,
    pub summary: Summary,
}

/// Run `cfg.variant` on a prepared benchmark. `warm` is reused when given and
/// the variant needs it; otherwise it is computed.
pub fn run_on(
    cfg: &ExperimentConfig,
    bench: &Benchmark,
    warm: Option<&WarmStart>,
    dumps: &DumpOptions,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let view = bench.train.train_view();
    let evaluator = Evaluator::new(bench.train.ground_truth(), &bench.test);
    let warm_schedule = cfg.warmup_config().schedule;
    let warm_seed = stage_seed(cfg.seed, Stage::Warmup);

    let computed;
    let (reports, filtered) = match cfg.variant {
        Variant::PlainCe => {
            let mut net = fresh_net(cfg)?;
            plain_warmup(&mut net, view, &warm_schedule, cfg.warmup_epochs, warm_seed)?;
            let gmm = GmmConfig {
                seed: stage_seed(cfg.seed, Stage::Gmm),
                ..GmmConfig::default()
            };
            let reports = run_plain_ce(
                &mut net,
                view,
                &evaluator,
                &cfg.main_schedule(),
                cfg.epochs,
                &gmm,
                cfg.seed,
            )?;
            (reports, None)
        }
        Variant::NoWarmup => {
            let mut net = fresh_net(cfg)?;
            plain_warmup(&mut net, view, &warm_schedule, cfg.warmup_epochs, warm_seed)?;
            let out = run_training(
                &mut net,
                view,
                &evaluator,
                &cfg.loop_config(),
                cfg.variant.loop_variant(),
                dumps,
            )?;
            (out.reports, None)
        }
        _ => {
            let warm = match warm {
                Some(w) => w,
                None => {
                    computed = warm_start(cfg, bench)?;
                    &computed
                }
            };
            let mut net = warm.net.clone();
            let out = run_training(
                &mut net,
                view,
                &evaluator,
                &cfg.loop_config(),
                cfg.variant.loop_variant(),
                dumps,
            )?;
            (out.reports, Some(&warm.filtered))
        }
    };

    let summary = summarize(cfg, &reports, filtered, &evaluator);
    Ok(ExperimentResult { reports, summary })
}

fn summarize(
    cfg: &ExperimentConfig,
    reports: &[EpochReport],
    filtered: Option<&FilteredSet>,
    evaluator: &Evaluator<'_>,
) -> Summary {
    let best = |f: fn(&EpochReport) -> Option<f64>| {
        reports
            .iter()
            .filter_map(f)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    let last = reports.last();
    let best_split_f1 = best(|r| r.split_f1_splitnet).or_else(|| best(|r| r.split_f1_gmm));
    Summary {
        variant: cfg.variant.to_string(),
        seed: cfg.seed,
        noise_ratio: cfg.noise_ratio,
        epochs: reports.len(),
        best_test_acc: best(|r| Some(r.test_acc)).unwrap_or(0.0),
        last_test_acc: last.map_or(0.0, |r| r.test_acc),
        best_split_f1,
        last_split_f1_splitnet: last.and_then(|r| r.split_f1_splitnet),
        last_split_f1_gmm: last.and_then(|r| r.split_f1_gmm),
        filter_size: filtered.map(FilteredSet::len),
        filter_precision: filtered.map(|f| evaluator.precision_of(&f.indices)),
        clean_fraction: evaluator.clean_fraction(),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let bench = build_benchmark(cfg)?;
    run_on(cfg, &bench, None, &DumpOptions::default())
}

/// Write `epochs.csv`, `thresholds.csv` and `summary.json` into `dir`.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<EpochRow> = result.reports.iter().map(EpochRow::from).collect();
    write_csv(&rows, &dir.join("epochs.csv"))?;
    let thresholds: Vec<ThresholdRow> = result.reports.iter().filter_map(ThresholdRow::from_report).collect();
    write_csv(&thresholds, &dir.join("thresholds.csv"))?;
    result.summary.save(&dir.join("summary.json"))
}

/// Run and write all artifacts (plus per-epoch dumps when `cfg.dumps`).
pub fn run_experiment_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentResult> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let dumps = DumpOptions {
        dir: cfg.dumps.then(|| dir.join("dumps")),
    };
    if let Some(d) = &dumps.dir {
        std::fs::create_dir_all(d)?;
    }
    let bench = build_benchmark(cfg)?;
    let result = run_on(cfg, &bench, None, &dumps)?;
    write_artifacts(&result, dir)?;
    let mut config_text = serde_json::to_string_pretty(cfg)?;
    config_text.push('\n');
    std::fs::write(dir.join("config.json"), config_text)?;
    Ok(result)
}

/// Cartesian product of a grid `{field: [values...]}` applied to `base`.
/// Points are ordered by field name, then by value order.
pub fn expand_grid(base: &ExperimentConfig, grid: &Value) -> Result<Vec<(String, ExperimentConfig)>> {
    let axes: &Map<String, Value> = grid
        .as_object()
        .ok_or_else(|| Error::config("grid", "must be a JSON object of arrays"))?;
    let base_value = serde_json::to_value(base)?;
    let mut points: Vec<(Vec<String>, Value)> = vec![(Vec::new(), base_value)];
    for (field, values) in axes {
        let values = values
            .as_array()
            .ok_or_else(|| Error::config(field.clone(), "grid axis must be an array"))?;
        let mut next = Vec::with_capacity(points.len() * values.len());
        for (names, point) in &points {
            for v in values {
                let mut p = point.clone();
                p[field.as_str()] = v.clone();
                let mut names = names.clone();
                let shown = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                names.push(format!("{field}={shown}"));
                next.push((names, p));
            }
        }
        points = next;
    }
    points
        .into_iter()
        .map(|(names, v)| {
            let cfg: ExperimentConfig = serde_json::from_value(v)?;
            cfg.validate()?;
            Ok((names.join(","), cfg))
        })
        .collect()
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub point: String,
    pub variant: String,
    pub seed: u64,
    pub noise_ratio: f64,
    pub best_test_acc: f64,
    pub last_test_acc: f64,
    pub best_split_f1: Option<f64>,
    pub filter_precision: Option<f64>,
}

/// Run every grid point into `root/<index>` and write `root/sweep.csv`.
pub fn sweep(base: &ExperimentConfig, grid: &Value, root: &Path) -> Result<Vec<SweepRow>> {
    let points = expand_grid(base, grid)?;
    std::fs::create_dir_all(root)?;
    let rows: Vec<Result<SweepRow>> = points
        .par_iter()
        .enumerate()
        .map(|(i, (name, cfg))| {
            let dir: PathBuf = root.join(format!("{i:03}"));
            let s = run_experiment_to_dir(cfg, &dir)?.summary;
            Ok(SweepRow {
                point: name.clone(),
                variant: s.variant,
                seed: s.seed,
                noise_ratio: s.noise_ratio,
                best_test_acc: s.best_test_acc,
                last_test_acc: s.last_test_acc,
                best_split_f1: s.best_split_f1,
                filter_precision: s.filter_precision,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    write_csv(&rows, &root.join("sweep.csv"))?;
    Ok(rows)
}

/// Export the benchmark's train and test sets as `train.{csv,json}` and
/// `test.{csv,json}` under `dir`.
pub fn generate_data(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let bench = build_benchmark(cfg)?;
    export_dataset(&bench.train, &cfg.noise_spec(), cfg.seed, &dir.join("train"))?;
    let test = NoisyDataset::from_parts(
        bench.test.features().to_owned(),
        bench.test.labels().to_vec(),
        bench.test.labels().to_vec(),
        cfg.classes,
    )?;
    export_dataset(&test, &NoiseSpec::symmetric(0.0), cfg.seed, &dir.join("test"))
}
