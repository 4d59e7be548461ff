//! INI-style experiment configuration: `[section]` headers, `key = value`
//! lines, `#` or `;` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use quicfed_core::fed::{BufferCapacities, ExperimentConfig, ScalerPolicy, ServerHyper};
use quicfed_core::nn::{AdamConfig, TrainConfig};
use quicfed_core::synthgen::default_profiles;
use quicfed_core::{Aggregator, FeatureProfile, FeatureSchema, GenConfig, Scenario};

use quicfed_core::{Error, Result};

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(invalid(format!("training.precision: `{other}` is not f32 or f64"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub generator: GenConfig,
    pub profile: FeatureProfile,
    pub scaler_policy: ScalerPolicy,
    pub precision: Precision,
    pub fed_train: TrainConfig,
    pub central_train: TrainConfig,
    pub scenario: Scenario,
    pub aggregator: Aggregator,
    pub mu: f64,
    pub server: ServerHyper,
    pub capacities: BufferCapacities,
    pub min_val_for_early_stop: usize,
    pub checkpoint_every: u32,
    pub workers: usize,
    pub window_start: usize,
    pub window_end: usize,
    pub importance_repeats: usize,
    /// 0 means the whole test split.
    pub importance_max_samples: usize,
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            generator: GenConfig::default(),
            profile: FeatureProfile::Full,
            scaler_policy: ScalerPolicy::PerClient,
            precision: Precision::F32,
            fed_train: TrainConfig::federated(),
            central_train: TrainConfig::centralized(),
            scenario: Scenario::FedBuffered,
            aggregator: Aggregator::FedAvg,
            mu: 0.01,
            server: ServerHyper::default(),
            capacities: BufferCapacities::default(),
            min_val_for_early_stop: 64,
            checkpoint_every: 0,
            workers: 1,
            window_start: 56,
            window_end: 111,
            importance_repeats: 3,
            importance_max_samples: 0,
            corpus: PathBuf::from("corpus.csv"),
            out_dir: PathBuf::from("out"),
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut sections = Sections::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(invalid(format!("line {line_no}: expected `key = value`")));
        };
        let Some(section) = &current else {
            return Err(invalid(format!("line {line_no}: key outside any [section]")));
        };
        let key = key.trim().to_string();
        let entry = sections.get_mut(section).expect("section registered");
        if entry.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
            return Err(invalid(format!("line {line_no}: duplicate key {section}.{key}")));
        }
    }
    Ok(sections)
}

/// Pops keys out of the parsed sections; anything left over is an error.
struct Reader {
    sections: Sections,
}

impl Reader {
    fn take<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, raw)) = self.sections.get_mut(section).and_then(|s| s.remove(key)) {
            *slot = raw
                .parse()
                .map_err(|e| invalid(format!("line {line}: {section}.{key} = `{raw}`: {e}")))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        for (section, keys) in &self.sections {
            if let Some((key, (line, _))) = keys.iter().next() {
                return Err(invalid(format!("line {line}: unknown key {section}.{key}")));
            }
        }
        Ok(())
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut r = Reader {
            sections: parse_sections(text)?,
        };
        let known = ["experiment", "generator", "features", "training", "federation", "evaluation", "io"];
        if let Some(s) = r.sections.keys().find(|s| !known.contains(&s.as_str())) {
            return Err(invalid(format!("unknown section [{s}]")));
        }
        let mut c = Config::default();
        r.take("experiment", "seed", &mut c.seed)?;

        let g = &mut c.generator;
        r.take("generator", "n_clients", &mut g.n_clients)?;
        r.take("generator", "n_rounds", &mut g.n_rounds)?;
        r.take("generator", "round_seconds", &mut g.round_seconds)?;
        r.take("generator", "dirichlet_alpha", &mut g.dirichlet_alpha)?;
        r.take("generator", "rate_min", &mut g.rate_min)?;
        r.take("generator", "rate_max", &mut g.rate_max)?;
        r.take("generator", "night_floor_min", &mut g.night_floor_min)?;
        r.take("generator", "night_floor_max", &mut g.night_floor_max)?;
        r.take("generator", "phase_spread", &mut g.phase_spread)?;
        r.take("generator", "ps2_jitter", &mut g.ps2_jitter)?;
        g.profiles = default_profiles();

        r.take("features", "profile", &mut c.profile)?;
        r.take("features", "scaler_policy", &mut c.scaler_policy)?;

        r.take("training", "precision", &mut c.precision)?;
        r.take("training", "fed_learning_rate", &mut c.fed_train.learning_rate)?;
        r.take("training", "fed_batch_size", &mut c.fed_train.batch_size)?;
        r.take("training", "central_learning_rate", &mut c.central_train.learning_rate)?;
        r.take("training", "central_batch_size", &mut c.central_train.batch_size)?;
        let mut shared = c.fed_train.clone();
        r.take("training", "epochs", &mut shared.epochs)?;
        r.take("training", "dropout", &mut shared.dropout_p)?;
        r.take("training", "leaky_slope", &mut shared.leaky_slope)?;
        r.take("training", "early_stop_patience", &mut shared.early_stop_patience)?;
        r.take("training", "bn_momentum", &mut shared.bn_momentum)?;
        r.take("training", "bn_epsilon", &mut shared.bn_epsilon)?;
        let mut adam = AdamConfig::default();
        r.take("training", "adam_beta1", &mut adam.beta1)?;
        r.take("training", "adam_beta2", &mut adam.beta2)?;
        r.take("training", "adam_epsilon", &mut adam.epsilon)?;
        for t in [&mut c.fed_train, &mut c.central_train] {
            t.epochs = shared.epochs;
            t.dropout_p = shared.dropout_p;
            t.leaky_slope = shared.leaky_slope;
            t.early_stop_patience = shared.early_stop_patience;
            t.bn_momentum = shared.bn_momentum;
            t.bn_epsilon = shared.bn_epsilon;
            t.adam = adam;
        }

        r.take("federation", "scenario", &mut c.scenario)?;
        r.take("federation", "aggregator", &mut c.aggregator)?;
        r.take("federation", "mu", &mut c.mu)?;
        r.take("federation", "server_eta", &mut c.server.eta)?;
        r.take("federation", "server_beta1", &mut c.server.beta1)?;
        r.take("federation", "server_beta2", &mut c.server.beta2)?;
        r.take("federation", "server_tau", &mut c.server.tau)?;
        r.take("federation", "train_capacity", &mut c.capacities.train)?;
        r.take("federation", "val_capacity", &mut c.capacities.val)?;
        r.take("federation", "test_capacity", &mut c.capacities.test)?;
        r.take("federation", "min_val_for_early_stop", &mut c.min_val_for_early_stop)?;
        r.take("federation", "checkpoint_every", &mut c.checkpoint_every)?;
        r.take("federation", "workers", &mut c.workers)?;

        r.take("evaluation", "window_start", &mut c.window_start)?;
        r.take("evaluation", "window_end", &mut c.window_end)?;
        r.take("evaluation", "importance_repeats", &mut c.importance_repeats)?;
        r.take("evaluation", "importance_max_samples", &mut c.importance_max_samples)?;

        r.take("io", "corpus", &mut c.corpus)?;
        r.take("io", "out_dir", &mut c.out_dir)?;
        r.finish()?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative paths in `[io]` resolve against its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Config::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.corpus, &mut c.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.fed_train.validate()?;
        self.central_train.validate()?;
        self.server.validate()?;
        let caps = self.capacities;
        if caps.train == 0 || caps.val == 0 || caps.test == 0 {
            return Err(invalid("federation capacities must be positive"));
        }
        if self.mu < 0.0 {
            return Err(invalid("federation.mu must be >= 0"));
        }
        if self.workers == 0 {
            return Err(invalid("federation.workers must be >= 1"));
        }
        if self.window_start > self.window_end {
            return Err(invalid("evaluation.window_start must not exceed window_end"));
        }
        if self.importance_repeats == 0 {
            return Err(invalid("evaluation.importance_repeats must be >= 1"));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::for_profile(self.profile)
    }

    pub fn experiment(&self, scenario: Scenario, aggregator: Aggregator) -> ExperimentConfig {
        let mut e = ExperimentConfig::new(scenario, aggregator, self.schema());
        e.seed = self.seed;
        e.n_clients = self.generator.n_clients;
        e.n_rounds = self.generator.n_rounds;
        e.round_seconds = self.generator.round_seconds;
        e.fed_train = self.fed_train.clone();
        e.central_train = self.central_train.clone();
        e.server = self.server;
        e.mu = self.mu;
        e.capacities = self.capacities;
        e.min_val_for_early_stop = self.min_val_for_early_stop;
        e.scaler_policy = self.scaler_policy;
        e.workers = self.workers;
        e
    }

    /// Generator settings with the experiment seed applied.
    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            seed: self.seed,
            ..self.generator.clone()
        }
    }

    pub fn to_ini(&self) -> String {
        let g = &self.generator;
        let (f, ct) = (&self.fed_train, &self.central_train);
        let mut s = String::new();
        let mut section = |name: &str, items: &[(&str, String)]| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in items {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        section("experiment", &[("seed", self.seed.to_string())]);
        section(
            "generator",
            &[
                ("n_clients", g.n_clients.to_string()),
                ("n_rounds", g.n_rounds.to_string()),
                ("round_seconds", g.round_seconds.to_string()),
                ("dirichlet_alpha", g.dirichlet_alpha.to_string()),
                ("rate_min", g.rate_min.to_string()),
                ("rate_max", g.rate_max.to_string()),
                ("night_floor_min", g.night_floor_min.to_string()),
                ("night_floor_max", g.night_floor_max.to_string()),
                ("phase_spread", g.phase_spread.to_string()),
                ("ps2_jitter", g.ps2_jitter.to_string()),
            ],
        );
        section(
            "features",
            &[
                ("profile", self.profile.to_string()),
                ("scaler_policy", self.scaler_policy.to_string()),
            ],
        );
        section(
            "training",
            &[
                ("precision", self.precision.to_string()),
                ("fed_learning_rate", f.learning_rate.to_string()),
                ("fed_batch_size", f.batch_size.to_string()),
                ("central_learning_rate", ct.learning_rate.to_string()),
                ("central_batch_size", ct.batch_size.to_string()),
                ("epochs", f.epochs.to_string()),
                ("dropout", f.dropout_p.to_string()),
                ("leaky_slope", f.leaky_slope.to_string()),
                ("early_stop_patience", f.early_stop_patience.to_string()),
                ("bn_momentum", f.bn_momentum.to_string()),
                ("bn_epsilon", f.bn_epsilon.to_string()),
                ("adam_beta1", f.adam.beta1.to_string()),
                ("adam_beta2", f.adam.beta2.to_string()),
                ("adam_epsilon", f.adam.epsilon.to_string()),
            ],
        );
        section(
            "federation",
            &[
                ("scenario", self.scenario.to_string()),
                ("aggregator", self.aggregator.to_string()),
                ("mu", self.mu.to_string()),
                ("server_eta", self.server.eta.to_string()),
                ("server_beta1", self.server.beta1.to_string()),
                ("server_beta2", self.server.beta2.to_string()),
                ("server_tau", self.server.tau.to_string()),
                ("train_capacity", self.capacities.train.to_string()),
                ("val_capacity", self.capacities.val.to_string()),
                ("test_capacity", self.capacities.test.to_string()),
                ("min_val_for_early_stop", self.min_val_for_early_stop.to_string()),
                ("checkpoint_every", self.checkpoint_every.to_string()),
                ("workers", self.workers.to_string()),
            ],
        );
        section(
            "evaluation",
            &[
                ("window_start", self.window_start.to_string()),
                ("window_end", self.window_end.to_string()),
                ("importance_repeats", self.importance_repeats.to_string()),
                ("importance_max_samples", self.importance_max_samples.to_string()),
            ],
        );
        section(
            "io",
            &[
                ("corpus", self.corpus.display().to_string()),
                ("out_dir", self.out_dir.display().to_string()),
            ],
        );
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.capacities.train, 6400);
        assert_eq!(c.generator.n_clients, 14);
        assert_eq!(c.generator.n_rounds, 112);
    }

    #[test]
    fn round_trips_through_ini() {
        let text = "[experiment]\nseed = 7\n[features]\nprofile = reduced\n[training]\nprecision = f64\nepochs = 3\n\
                    [federation]\naggregator = fedyogi\ntrain_capacity = 640\n[io]\ncorpus = data/c.csv\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.profile, FeatureProfile::Reduced);
        assert_eq!(c.central_train.epochs, 3);
        let again = Config::parse(&c.to_ini()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_name_the_field() {
        let e = Config::parse("[training]\nfed_batch_size = many\n").unwrap_err().to_string();
        assert!(e.contains("training.fed_batch_size"), "{e}");
        let e = Config::parse("[federation]\naggregator = fedfoo\n").unwrap_err().to_string();
        assert!(e.contains("fedavg") && e.contains("fedyogi"), "{e}");
        let e = Config::parse("[io]\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("io.bogus"), "{e}");
        assert!(Config::parse("[federation]\nval_capacity = 0\n").is_err());
        assert!(Config::parse("seed = 1\n").is_err());
    }
}
