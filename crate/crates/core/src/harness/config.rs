//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gda::CorrectionMode;
use crate::nn::{Activation, ModelSpec};
use crate::orchestrator::{DatasetSpec, ExperimentConfig, Strategy, StrategyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    InProc,
    Tcp,
}

impl FromStr for Transport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(Transport::InProc),
            "tcp" => Ok(Transport::Tcp),
            other => Err(Error::Config(format!("unknown transport '{other}'"))),
        }
    }
}

/// An experiment plus everything about how to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `experiment.seed` is the first entry of `seeds`.
    pub experiment: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub transport: Transport,
    /// Bind address in TCP mode; without one, loopback clients are spawned.
    pub listen: Option<String>,
    pub out: PathBuf,
    pub record_wall_time: bool,
}

impl RunConfig {
    /// The experiment for one seed.
    pub fn for_seed(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig { seed, ..self.experiment.clone() }
    }
}

const KEYS: &[&str] = &[
    "strategy",
    "ablations",
    "clients",
    "rounds",
    "batch_size",
    "seed",
    "seeds",
    "layer_dims",
    "activation",
    "cut_index",
    "dataset",
    "classes",
    "dim",
    "samples_per_class",
    "spread",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "alpha",
    "lr_client",
    "lr_server",
    "momentum",
    "k_min",
    "k_max",
    "eta",
    "lambda",
    "lambda_g",
    "correction",
    "threshold_override",
    "sfl_interval",
    "eval_interval",
    "withhold_excluded",
    "transport",
    "listen",
    "out",
    "record_wall_time",
];

/// Parses `key = value` lines. `#` starts a comment; later lines win.
fn parse_lines(text: &str, errs: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_owned(), v.trim().to_owned());
            }
            None => errs.push(format!("line {}: expected 'key = value'", n + 1)),
        }
    }
    map
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errs: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: Display,
    {
        match self.map.get(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|e| {
                self.errs.push(format!("{key}: cannot parse '{v}': {e}"));
                default
            }),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Option<T>
    where
        T::Err: Display,
    {
        match self.map.get(key).map(String::as_str) {
            None => default,
            Some("" | "none") => None,
            Some(v) => match v.parse() {
                Ok(x) => Some(x),
                Err(e) => {
                    self.errs.push(format!("{key}: cannot parse '{v}': {e}"));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: Display,
    {
        let v = self.map.get(key)?;
        let mut out = Vec::new();
        for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.parse() {
                Ok(x) => out.push(x),
                Err(e) => {
                    self.errs.push(format!("{key}: cannot parse '{part}': {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn path(&mut self, key: &str) -> PathBuf {
        self.map.get(key).map(PathBuf::from).unwrap_or_default()
    }
}

/// Parses configuration text, applies `overrides` (same keys) on top, and
/// validates the result, reporting every violation at once.
///
/// `env_seed` (the `GAPSL_SEED` variable) applies when neither `seed` nor
/// `seeds` is set anywhere.
pub fn parse_config(text: &str, overrides: &[(String, String)], env_seed: Option<&str>) -> Result<RunConfig> {
    let mut errs = Vec::new();
    let mut map = parse_lines(text, &mut errs);
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    for k in map.keys() {
        if !KEYS.contains(&k.as_str()) {
            errs.push(format!("unknown key '{k}'"));
        }
    }
    if !map.contains_key("seed") && !map.contains_key("seeds") {
        if let Some(s) = env_seed {
            map.insert("seed".into(), s.trim().to_owned());
        }
    }
    let d = ExperimentConfig::default();
    let mut r = Reader { map: &map, errs: &mut errs };

    let kind: StrategyKind = r.get("strategy", d.strategy.kind);
    let mut strategy = Strategy::plain(kind);
    for flag in r.list::<String>("ablations").unwrap_or_default() {
        match strategy.with_ablation(&flag) {
            Ok(s) => strategy = s,
            Err(e) => r.errs.push(format!("ablations: {e}")),
        }
    }
    let seeds: Vec<u64> = match r.list("seeds") {
        Some(s) if !s.is_empty() => s,
        _ => vec![r.get("seed", d.seed)],
    };
    let layer_dims = r.list("layer_dims").unwrap_or(d.model.layer_dims.clone());
    let activation: Activation = r.get("activation", d.model.activation);
    let dataset = match r.get::<String>("dataset", "gaussian".into()).as_str() {
        "gaussian" => {
            let DatasetSpec::Gaussian { classes, dim, samples_per_class, spread } = d.dataset else { unreachable!() };
            DatasetSpec::Gaussian {
                classes: r.get("classes", classes),
                dim: r.get("dim", dim),
                samples_per_class: r.get("samples_per_class", samples_per_class),
                spread: r.get("spread", spread),
            }
        }
        "idx" => DatasetSpec::Idx {
            train_images: r.path("train_images"),
            train_labels: r.path("train_labels"),
            test_images: r.path("test_images"),
            test_labels: r.path("test_labels"),
        },
        other => {
            r.errs.push(format!("dataset: unknown kind '{other}' (expected gaussian or idx)"));
            d.dataset.clone()
        }
    };
    let alpha = match map.get("alpha").map(String::as_str) {
        Some("iid") => None,
        _ => r.opt("alpha", d.alpha),
    };
    let rounds = r.get("rounds", d.rounds);
    let correction = match r.get::<String>("correction", "gradient".into()).as_str() {
        "gradient" => CorrectionMode::Gradient,
        "loss_only" => CorrectionMode::LossOnly,
        other => {
            r.errs.push(format!("correction: unknown mode '{other}'"));
            CorrectionMode::Gradient
        }
    };
    let mut experiment = ExperimentConfig {
        strategy,
        num_clients: r.get("clients", d.num_clients),
        rounds,
        batch_size: r.get("batch_size", d.batch_size),
        seed: seeds[0],
        model: ModelSpec::new(layer_dims, activation),
        cut_index: r.get("cut_index", d.cut_index),
        dataset,
        alpha,
        lr_client: r.get("lr_client", d.lr_client),
        lr_server: r.get("lr_server", d.lr_server),
        momentum: r.get("momentum", d.momentum),
        lgi: d.lgi,
        gda: d.gda,
        sfl_interval: r.get("sfl_interval", d.sfl_interval),
        eval_interval: r.get("eval_interval", d.eval_interval),
        withhold_excluded: r.get("withhold_excluded", d.withhold_excluded),
    };
    experiment.lgi.k_min = r.get("k_min", d.lgi.k_min);
    experiment.lgi.k_max = r.get("k_max", d.lgi.k_max);
    experiment.lgi.total_rounds = rounds;
    experiment.gda.eta = r.get("eta", d.gda.eta);
    experiment.gda.lambda = r.get("lambda", d.gda.lambda);
    experiment.gda.lambda_g = r.opt("lambda_g", d.gda.lambda_g);
    experiment.gda.correction = correction;
    experiment.gda.threshold_override = r.opt("threshold_override", d.gda.threshold_override);
    let transport = r.get("transport", Transport::InProc);
    let listen = r.opt("listen", None);
    let out = r.map.get("out").map_or_else(|| PathBuf::from("runs/latest"), PathBuf::from);
    let record_wall_time = r.get("record_wall_time", false);

    errs.extend(experiment.violations());
    if transport == Transport::Tcp && matches!(kind, StrategyKind::Sfl | StrategyKind::VanillaSl) {
        errs.push(format!("transport tcp supports gapsl and psl only, not {}", strategy.name()));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    Ok(RunConfig { experiment, seeds, transport, listen, out, record_wall_time })
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Canonical text of an experiment; [`parse_config`] reads it back to an equal value.
pub fn experiment_text(c: &ExperimentConfig) -> String {
    let mut lines: Vec<(&str, String)> = vec![
        ("strategy", c.strategy.name().split('+').next().unwrap_or("gapsl").to_owned()),
        ("ablations", c.strategy.ablations().join(",")),
        ("clients", c.num_clients.to_string()),
        ("rounds", c.rounds.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("seed", c.seed.to_string()),
        ("layer_dims", join(&c.model.layer_dims)),
        ("activation", c.model.activation.name().to_owned()),
        ("cut_index", c.cut_index.to_string()),
    ];
    match &c.dataset {
        DatasetSpec::Gaussian { classes, dim, samples_per_class, spread } => lines.extend([
            ("dataset", "gaussian".to_owned()),
            ("classes", classes.to_string()),
            ("dim", dim.to_string()),
            ("samples_per_class", samples_per_class.to_string()),
            ("spread", spread.to_string()),
        ]),
        DatasetSpec::Idx { train_images, train_labels, test_images, test_labels } => lines.extend([
            ("dataset", "idx".to_owned()),
            ("train_images", train_images.display().to_string()),
            ("train_labels", train_labels.display().to_string()),
            ("test_images", test_images.display().to_string()),
            ("test_labels", test_labels.display().to_string()),
        ]),
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_owned(), |x| x.to_string());
    lines.extend([
        ("alpha", c.alpha.map_or_else(|| "iid".to_owned(), |a| a.to_string())),
        ("lr_client", c.lr_client.to_string()),
        ("lr_server", c.lr_server.to_string()),
        ("momentum", c.momentum.to_string()),
        ("k_min", c.lgi.k_min.to_string()),
        ("k_max", c.lgi.k_max.to_string()),
        ("eta", c.gda.eta.to_string()),
        ("lambda", c.gda.lambda.to_string()),
        ("lambda_g", opt(c.gda.lambda_g)),
        (
            "correction",
            match c.gda.correction {
                CorrectionMode::Gradient => "gradient",
                CorrectionMode::LossOnly => "loss_only",
            }
            .to_owned(),
        ),
        ("threshold_override", opt(c.gda.threshold_override)),
        ("sfl_interval", c.sfl_interval.to_string()),
        ("eval_interval", c.eval_interval.to_string()),
        ("withhold_excluded", c.withhold_excluded.to_string()),
    ]);
    lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
