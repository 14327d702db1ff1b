//! `key=value` experiment configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every other line must
//! be `key=value` with a known key; missing keys take the defaults below.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `n_devices` | 50 | devices `N` |
//! | `k_selected` | 10 | slots sampled per round `K` |
//! | `local_epochs` | 5 | requested local steps `E` |
//! | `batch_size` | 10 | minibatch size |
//! | `eta_l0` | 0.05 | initial local learning rate |
//! | `eta_g` | 1 | global learning rate (fedlga, fednova) |
//! | `gamma` | 0 | per-round local learning rate decay |
//! | `rho` | 0.5 | straggler ratio |
//! | `tau_max` | `local_epochs - 1` | largest straggler staleness |
//! | `rounds` | 300 | communication rounds `T` |
//! | `strategy` | fedlga | fedlga, fedavg, fedprox or fednova |
//! | `mu` | 1 | proximal weight (fedprox) |
//! | `model` | logistic | logistic or mlp |
//! | `hidden_dim` | 64 | mlp hidden width |
//! | `classes_per_device` | 2 | classes per shard `P` |
//! | `data_seed` | 0 | dataset and partition seed |
//! | `master_seed` | 0 | init and per-round randomness |
//! | `target_accuracy` | 0.8 | rounds-to-target threshold, or `none` |
//! | `early_stop` | false | stop once the target is reached |
//! | `eval_every` | 1 | evaluate every n rounds |
//! | `parallel` | true | train slots on a thread pool |
//! | `data` | synthetic | synthetic or idx |
//! | `synth_classes` | 10 | synthetic classes |
//! | `synth_dim` | 20 | synthetic input dimension |
//! | `synth_train_per_class` | 600 | training samples per class |
//! | `synth_test_per_class` | 200 | test samples per class |
//! | `synth_sep` | 3 | radius of the class-mean sphere |
//! | `synth_sigma` | 1 | isotropic noise |
//! | `idx_images`, `idx_labels` | | training IDX files (data=idx) |
//! | `idx_test_images`, `idx_test_labels` | | test IDX files (data=idx) |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelKind;
use crate::server::Strategy;
use crate::simulation::{DataSource, ExperimentConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {0:?} given more than once")]
    DuplicateKey(String),
    #[error("key {key:?}: cannot parse {value:?}: {reason}")]
    Malformed {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{message} (keys: {})", keys.join(", "))]
    Invariant { keys: Vec<String>, message: String },
}

impl ConfigError {
    fn invariant(keys: &[&str], message: impl Into<String>) -> Self {
        Self::Invariant {
            keys: keys.iter().map(|k| k.to_string()).collect(),
            message: message.into(),
        }
    }
}

const KEYS: &[&str] = &[
    "n_devices",
    "k_selected",
    "local_epochs",
    "batch_size",
    "eta_l0",
    "eta_g",
    "gamma",
    "rho",
    "tau_max",
    "rounds",
    "strategy",
    "mu",
    "model",
    "hidden_dim",
    "classes_per_device",
    "data_seed",
    "master_seed",
    "target_accuracy",
    "early_stop",
    "eval_every",
    "parallel",
    "data",
    "synth_classes",
    "synth_dim",
    "synth_train_per_class",
    "synth_test_per_class",
    "synth_sep",
    "synth_sigma",
    "idx_images",
    "idx_labels",
    "idx_test_images",
    "idx_test_labels",
];

const DEFAULT_HIDDEN: usize = 64;

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|e: T::Err| ConfigError::Malformed {
                key: key.to_string(),
                value: raw.clone(),
                reason: e.to_string(),
            }),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn malformed(&self, key: &str, reason: &str) -> ConfigError {
        ConfigError::Malformed {
            key: key.to_string(),
            value: self.raw(key).unwrap_or_default().to_string(),
            reason: reason.to_string(),
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.raw(key)
            .map(PathBuf::from)
            .ok_or_else(|| ConfigError::invariant(&["data", key], "data=idx requires this key"))
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: line.to_string(),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
    }
    Ok(Entries(map))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let e = tokenize(text)?;
    let d = ExperimentConfig::default();

    let local_epochs = e.get("local_epochs", d.local_epochs)?;
    let eta_g = e.get("eta_g", 1.0)?;
    let mu = e.get("mu", 1.0)?;
    let strategy = match e.raw("strategy").unwrap_or("fedlga") {
        "fedlga" => Strategy::FedLga { eta_g },
        "fedavg" => Strategy::FedAvg,
        "fedprox" => Strategy::FedProx { mu },
        "fednova" => Strategy::FedNova { eta_g },
        _ => return Err(e.malformed("strategy", "expected fedlga, fedavg, fedprox or fednova")),
    };
    let model = match e.raw("model").unwrap_or("logistic") {
        "logistic" => ModelKind::Logistic,
        "mlp" => ModelKind::Mlp {
            hidden_dim: e.get("hidden_dim", DEFAULT_HIDDEN)?,
        },
        _ => return Err(e.malformed("model", "expected logistic or mlp")),
    };
    let data = match e.raw("data").unwrap_or("synthetic") {
        "synthetic" => DataSource::Synthetic {
            num_classes: e.get("synth_classes", 10)?,
            input_dim: e.get("synth_dim", 20)?,
            train_per_class: e.get("synth_train_per_class", 600)?,
            test_per_class: e.get("synth_test_per_class", 200)?,
            class_sep: e.get("synth_sep", 3.0)?,
            noise_sigma: e.get("synth_sigma", 1.0)?,
        },
        "idx" => DataSource::Idx {
            images: e.path("idx_images")?,
            labels: e.path("idx_labels")?,
            test_images: e.path("idx_test_images")?,
            test_labels: e.path("idx_test_labels")?,
        },
        _ => return Err(e.malformed("data", "expected synthetic or idx")),
    };
    let target_accuracy = match e.raw("target_accuracy") {
        Some("none") => None,
        Some(_) => Some(e.get("target_accuracy", 0.0)?),
        None => d.target_accuracy,
    };

    let config = ExperimentConfig {
        n_devices: e.get("n_devices", d.n_devices)?,
        k_selected: e.get("k_selected", d.k_selected)?,
        local_epochs,
        batch_size: e.get("batch_size", d.batch_size)?,
        eta_l0: e.get("eta_l0", d.eta_l0)?,
        gamma: e.get("gamma", d.gamma)?,
        rho: e.get("rho", d.rho)?,
        tau_max: e.get("tau_max", local_epochs.saturating_sub(1))?,
        rounds: e.get("rounds", d.rounds)?,
        strategy,
        model,
        data,
        classes_per_device: e.get("classes_per_device", d.classes_per_device)?,
        data_seed: e.get("data_seed", d.data_seed)?,
        master_seed: e.get("master_seed", d.master_seed)?,
        target_accuracy,
        early_stop: e.get("early_stop", d.early_stop)?,
        eval_every: e.get("eval_every", d.eval_every)?,
        parallel: e.get("parallel", d.parallel)?,
    };
    validate(&config)?;
    Ok(config)
}

/// Checks cross-field invariants; errors name the keys involved.
pub fn validate(c: &ExperimentConfig) -> Result<(), ConfigError> {
    let positive = [
        ("n_devices", c.n_devices),
        ("k_selected", c.k_selected),
        ("local_epochs", c.local_epochs),
        ("batch_size", c.batch_size),
        ("rounds", c.rounds),
        ("classes_per_device", c.classes_per_device),
        ("eval_every", c.eval_every),
    ];
    for (key, value) in positive {
        if value == 0 {
            return Err(ConfigError::invariant(&[key], "must be at least 1"));
        }
    }
    if c.k_selected > c.n_devices {
        return Err(ConfigError::invariant(
            &["k_selected", "n_devices"],
            format!("k_selected = {} exceeds n_devices = {}", c.k_selected, c.n_devices),
        ));
    }
    if c.tau_max >= c.local_epochs {
        return Err(ConfigError::invariant(
            &["tau_max", "local_epochs"],
            format!("tau_max = {} must be below local_epochs = {}", c.tau_max, c.local_epochs),
        ));
    }
    if !(0.0..1.0).contains(&c.gamma) {
        return Err(ConfigError::invariant(&["gamma"], "gamma must lie in [0, 1)"));
    }
    if !(0.0..=1.0).contains(&c.rho) {
        return Err(ConfigError::invariant(&["rho"], "rho must lie in [0, 1]"));
    }
    if c.rho > 0.0 && c.tau_max < 2 {
        return Err(ConfigError::invariant(
            &["rho", "tau_max"],
            "stragglers need tau_max >= 2",
        ));
    }
    if !(c.eta_l0 > 0.0 && c.eta_l0.is_finite()) {
        return Err(ConfigError::invariant(&["eta_l0"], "must be positive"));
    }
    match c.strategy {
        Strategy::FedLga { eta_g } | Strategy::FedNova { eta_g } if !(eta_g > 0.0) => {
            return Err(ConfigError::invariant(&["eta_g"], "must be positive"));
        }
        Strategy::FedProx { mu } if !(mu > 0.0) => {
            return Err(ConfigError::invariant(&["mu"], "fedprox needs mu > 0"));
        }
        _ => {}
    }
    if let ModelKind::Mlp { hidden_dim: 0 } = c.model {
        return Err(ConfigError::invariant(&["hidden_dim"], "must be at least 1"));
    }
    if let DataSource::Synthetic {
        num_classes,
        input_dim,
        train_per_class,
        test_per_class,
        ..
    } = c.data
    {
        if num_classes < 2 {
            return Err(ConfigError::invariant(&["synth_classes"], "need at least 2 classes"));
        }
        if input_dim == 0 || train_per_class == 0 || test_per_class == 0 {
            return Err(ConfigError::invariant(
                &["synth_dim", "synth_train_per_class", "synth_test_per_class"],
                "must be at least 1",
            ));
        }
    }
    if let Some(target) = c.target_accuracy {
        if !(0.0..=f64::MAX).contains(&target) {
            return Err(ConfigError::invariant(&["target_accuracy"], "must be nonnegative"));
        }
    }
    Ok(())
}

/// Writes every key explicitly; `parse_config` of the output reproduces `c`.
pub fn to_config_text(c: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{k}={v}");
    };
    put("n_devices", &c.n_devices);
    put("k_selected", &c.k_selected);
    put("local_epochs", &c.local_epochs);
    put("batch_size", &c.batch_size);
    put("eta_l0", &c.eta_l0);
    let (eta_g, mu) = match c.strategy {
        Strategy::FedLga { eta_g } | Strategy::FedNova { eta_g } => (eta_g, 1.0),
        Strategy::FedProx { mu } => (1.0, mu),
        Strategy::FedAvg => (1.0, 1.0),
    };
    put("eta_g", &eta_g);
    put("gamma", &c.gamma);
    put("rho", &c.rho);
    put("tau_max", &c.tau_max);
    put("rounds", &c.rounds);
    put("strategy", &c.strategy.tag());
    put("mu", &mu);
    match c.model {
        ModelKind::Logistic => {
            put("model", &"logistic");
        }
        ModelKind::Mlp { hidden_dim } => {
            put("model", &"mlp");
            put("hidden_dim", &hidden_dim);
        }
    }
    put("classes_per_device", &c.classes_per_device);
    put("data_seed", &c.data_seed);
    put("master_seed", &c.master_seed);
    match c.target_accuracy {
        Some(t) => put("target_accuracy", &t),
        None => put("target_accuracy", &"none"),
    }
    put("early_stop", &c.early_stop);
    put("eval_every", &c.eval_every);
    put("parallel", &c.parallel);
    match &c.data {
        DataSource::Synthetic {
            num_classes,
            input_dim,
            train_per_class,
            test_per_class,
            class_sep,
            noise_sigma,
        } => {
            put("data", &"synthetic");
            put("synth_classes", num_classes);
            put("synth_dim", input_dim);
            put("synth_train_per_class", train_per_class);
            put("synth_test_per_class", test_per_class);
            put("synth_sep", class_sep);
            put("synth_sigma", noise_sigma);
        }
        DataSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
        } => {
            put("data", &"idx");
            put("idx_images", &images.display());
            put("idx_labels", &labels.display());
            put("idx_test_images", &test_images.display());
            put("idx_test_labels", &test_labels.display());
        }
    }
    out
}
