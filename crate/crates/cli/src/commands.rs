use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use quicfed_core::fed::{central_data, load_round_series, run_experiment, save_round_reports, ExperimentOutcome};
use quicfed_core::flowdata::{load_flows, write_flows_to};
use quicfed_core::metrics::{permutation_importance, stability, write_class_report, write_importance, FeatureImportance};
use quicfed_core::nn::{checkpoint, Dataset};
use quicfed_core::{synthgen, Aggregator, Error, FlowRecord, Model, Result, RoundIndex, Scalar, Scenario};

use crate::config::{Config, Precision};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn manifest_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSummary {
    pub corpus: PathBuf,
    pub manifest: PathBuf,
    pub flows: usize,
    pub sha256: String,
}

/// Writes the synthetic corpus and a manifest with its checksum and
/// per-client and per-round flow counts.
pub fn cmd_generate(cfg: &Config) -> Result<GenerateSummary> {
    let gen = cfg.gen_config();
    let flows = synthgen::generate(&gen)?;
    let mut bytes = Vec::new();
    write_flows_to(&mut bytes, &flows)?;
    let sha256 = Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    write_file(&cfg.corpus, &bytes)?;

    let mut per_client = vec![0usize; gen.n_clients as usize];
    let mut per_round = vec![0usize; gen.n_rounds as usize];
    for f in &flows {
        per_client[f.client_id as usize] += 1;
        per_round[RoundIndex::of(f.start_time, gen.round_seconds).0 as usize] += 1;
    }
    let mut m = String::new();
    let _ = writeln!(m, "[corpus]");
    let _ = writeln!(m, "seed = {}", gen.seed);
    let _ = writeln!(m, "flows = {}", flows.len());
    let _ = writeln!(m, "clients = {}", gen.n_clients);
    let _ = writeln!(m, "rounds = {}", gen.n_rounds);
    let _ = writeln!(m, "sha256 = {sha256}");
    let _ = writeln!(m, "\n[client_counts]");
    for (c, n) in per_client.iter().enumerate() {
        let _ = writeln!(m, "{c} = {n}");
    }
    let _ = writeln!(m, "\n[round_counts]");
    for (r, n) in per_round.iter().enumerate() {
        let _ = writeln!(m, "{r} = {n}");
    }
    let manifest = manifest_path(&cfg.corpus);
    write_file(&manifest, m.as_bytes())?;
    Ok(GenerateSummary {
        corpus: cfg.corpus.clone(),
        manifest,
        flows: flows.len(),
        sha256,
    })
}

fn load_corpus(cfg: &Config) -> Result<Vec<FlowRecord>> {
    if !cfg.corpus.exists() {
        return Err(Error::Config(format!(
            "corpus {} not found; run `generate` first",
            cfg.corpus.display()
        )));
    }
    load_flows(&cfg.corpus)
}

/// Output file stem, e.g. `fed-buffered_fedavg`.
pub fn run_stem(scenario: Scenario, aggregator: Aggregator) -> String {
    match scenario {
        Scenario::Centralized => format!("{scenario}_none"),
        _ => format!("{scenario}_{aggregator}"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub aggregator: Option<Aggregator>,
    pub rounds: usize,
    pub train_f1: Option<f64>,
    pub val_f1: Option<f64>,
    pub test_f1: Option<f64>,
    /// Last evaluated system macro-F1.
    pub final_f1: Option<f64>,
    pub window: RangeInclusive<usize>,
    pub mean_f1: Option<f64>,
    pub std_f1: Option<f64>,
    pub min_f1: Option<f64>,
    pub evaluated_rounds: usize,
    pub rounds_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub checkpoint: PathBuf,
}

const SUMMARY_HEADER: &str = "scenario,aggregator,rounds,train_f1,val_f1,test_f1,final_f1,\
window_start,window_end,mean_f1,std_f1,min_f1,evaluated_rounds";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunSummary {
    pub fn csv(&self) -> String {
        format!(
            "{SUMMARY_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.scenario,
            self.aggregator.map_or("none".into(), |a| a.to_string()),
            self.rounds,
            cell(self.train_f1),
            cell(self.val_f1),
            cell(self.test_f1),
            cell(self.final_f1),
            self.window.start(),
            self.window.end(),
            cell(self.mean_f1),
            cell(self.std_f1),
            cell(self.min_f1),
            self.evaluated_rounds
        )
    }
}

fn run_typed<S: Scalar>(
    cfg: &Config,
    flows: &[FlowRecord],
    scenario: Scenario,
    aggregator: Aggregator,
) -> Result<RunSummary> {
    let exp = cfg.experiment(scenario, aggregator);
    let stem = run_stem(scenario, aggregator);
    let out = &cfg.out_dir;
    create_dir(out)?;
    let every = cfg.checkpoint_every;
    let mut hook = |r: u32, m: &Model<S>| -> Result<()> {
        if every > 0 && (r + 1) % every == 0 {
            checkpoint::save(m, &out.join(format!("{stem}_round{r:03}.ckpt")))?;
        }
        Ok(())
    };
    let outcome: ExperimentOutcome<S> = run_experiment(flows, &exp, &mut hook)?;

    let rounds_csv = out.join(format!("{stem}_rounds.csv"));
    save_round_reports(&rounds_csv, &outcome.reports)?;
    if let Some(per_class) = outcome.per_class() {
        write_class_report(&out.join(format!("{stem}_classes.csv")), &per_class)?;
    }
    let ckpt = out.join(format!("{stem}_final.ckpt"));
    checkpoint::save(&outcome.model, &ckpt)?;

    let series = outcome.f1_series();
    let window = cfg.window_start..=cfg.window_end;
    let stats = match scenario {
        Scenario::Centralized => None,
        _ => stability(&series, window.clone()).ok(),
    };
    let central = outcome.central.as_ref();
    let summary = RunSummary {
        scenario,
        aggregator: (scenario != Scenario::Centralized).then_some(aggregator),
        rounds: outcome.reports.len(),
        train_f1: central.map(|c| c.train_f1),
        val_f1: central.and_then(|c| c.val_f1),
        test_f1: central.map(|c| c.test_f1),
        final_f1: series.iter().rev().copied().find(|v| !v.is_nan()),
        window,
        mean_f1: stats.as_ref().map(|s| s.mean),
        std_f1: stats.as_ref().map(|s| s.std),
        min_f1: stats.as_ref().map(|s| s.min),
        evaluated_rounds: series.iter().filter(|v| !v.is_nan()).count(),
        rounds_csv,
        summary_csv: out.join(format!("{stem}_summary.csv")),
        checkpoint: ckpt,
    };
    write_file(&summary.summary_csv, summary.csv().as_bytes())?;
    Ok(summary)
}

/// Runs one scenario and writes its per-round CSV, summary, per-class report
/// and checkpoints into the output directory.
pub fn cmd_run(cfg: &Config, scenario: Scenario, aggregator: Aggregator) -> Result<RunSummary> {
    cfg.validate()?;
    let flows = load_corpus(cfg)?;
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg, &flows, scenario, aggregator),
        Precision::F64 => run_typed::<f64>(cfg, &flows, scenario, aggregator),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub scenario: Scenario,
    pub aggregator: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub count: usize,
    /// Centralized F1 minus this row's mean, when a centralized report is present.
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub window: RangeInclusive<usize>,
    pub rows: Vec<CompareRow>,
    /// `(a, b, std_a / std_b)` for every pair `a` before `b`.
    pub ratios: Vec<(String, String, f64)>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut s = String::from("report,scenario,aggregator,mean_f1,std_f1,min_f1,rounds,gap\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.label,
                r.scenario,
                r.aggregator,
                r.mean,
                r.std,
                r.min,
                r.count,
                cell(r.gap)
            );
        }
        s
    }

    pub fn ratio_table(&self) -> String {
        let mut s = String::from("a,b,std_ratio\n");
        for (a, b, q) in &self.ratios {
            let _ = writeln!(s, "{a},{b},{q}");
        }
        s
    }
}

fn report_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_suffix("_rounds").map(str::to_string).unwrap_or(stem)
}

/// Window statistics per report plus pairwise std ratios. Federated reports
/// must span the same rounds; centralized reports contribute their single
/// test score.
pub fn cmd_compare(reports: &[PathBuf], window: RangeInclusive<usize>) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Config("compare needs at least two reports".into()));
    }
    let mut rows = Vec::new();
    let mut fed_rounds: Option<(usize, String)> = None;
    for path in reports {
        let series = load_round_series(path)?;
        let label = report_label(path);
        let stats = if series.scenario == Scenario::Centralized {
            stability(&series.f1, 0..=0)?
        } else {
            match &fed_rounds {
                Some((n, other)) if *n != series.f1.len() => {
                    return Err(Error::Config(format!(
                        "incompatible round ranges: {label} has {} rounds, {other} has {n}",
                        series.f1.len()
                    )))
                }
                _ => fed_rounds = Some((series.f1.len(), label.clone())),
            }
            if *window.end() >= series.f1.len() {
                return Err(Error::Config(format!(
                    "incompatible round ranges: window {}..={} exceeds the {} rounds of {label}",
                    window.start(),
                    window.end(),
                    series.f1.len()
                )));
            }
            stability(&series.f1, window.clone())?
        };
        rows.push(CompareRow {
            label,
            scenario: series.scenario,
            aggregator: series.aggregator,
            mean: stats.mean,
            std: stats.std,
            min: stats.min,
            count: stats.count,
            gap: None,
        });
    }
    if let Some(central) = rows.iter().find(|r| r.scenario == Scenario::Centralized).map(|r| r.mean) {
        for r in rows.iter_mut().filter(|r| r.scenario != Scenario::Centralized) {
            r.gap = Some(central - r.mean);
        }
    }
    let mut ratios = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            ratios.push((a.label.clone(), b.label.clone(), ratio(a.std, b.std)));
        }
    }
    Ok(Comparison { window, rows, ratios })
}

/// Writes the comparison tables next to each other in `out_dir`.
pub fn save_comparison(cmp: &Comparison, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    create_dir(out_dir)?;
    let table = out_dir.join("compare.csv");
    let ratios = out_dir.join("compare_ratios.csv");
    write_file(&table, cmp.table().as_bytes())?;
    write_file(&ratios, cmp.ratio_table().as_bytes())?;
    Ok((table, ratios))
}

fn importance_typed<S: Scalar>(cfg: &Config, ckpt: &Path) -> Result<Vec<FeatureImportance>> {
    let model: Model<S> = checkpoint::load(ckpt)?;
    let schema = cfg.schema();
    if model.input_dim() != schema.len() {
        return Err(Error::Shape(format!(
            "checkpoint expects {} features but the {} schema has {}",
            model.input_dim(),
            cfg.profile,
            schema.len()
        )));
    }
    let flows = load_corpus(cfg)?;
    let exp = cfg.experiment(Scenario::Centralized, cfg.aggregator);
    let data = central_data::<S>(&flows, &exp)?;
    let eval: Dataset<S> = match cfg.importance_max_samples {
        0 => data.test,
        k if k < data.test.len() => data.test.subset(&(0..k).collect::<Vec<_>>()),
        _ => data.test,
    };
    let ranked = permutation_importance(
        &model,
        &eval,
        &schema,
        cfg.importance_repeats,
        cfg.seed,
        &cfg.central_train.layer_hyper(),
    )?;
    create_dir(&cfg.out_dir)?;
    write_importance(&cfg.out_dir.join("importance.csv"), &ranked)?;
    Ok(ranked)
}

/// Permutation importance of a checkpoint on the centralized test split.
pub fn cmd_importance(cfg: &Config, ckpt: &Path) -> Result<Vec<FeatureImportance>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cfg.precision {
        Precision::F32 => importance_typed::<f32>(cfg, ckpt),
        Precision::F64 => importance_typed::<f64>(cfg, ckpt),
    })
}

/// Flushes stdout, ignoring broken pipes.
pub fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}
