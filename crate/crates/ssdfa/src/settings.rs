//! Run settings shared by `train` and `sweep`. Values come from defaults,
//! then a config file, then command-line flags, each layer overriding the
//! previous one. File keys are the flag names.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ssdfa_core::network::Precision;
use ssdfa_core::{synthetic_teacher, Activation, Algorithm, Dataset, Split, TrainConfig};

use crate::cifar::{load_cifar, Cifar};
use crate::config::{self, Entry};
use crate::error::{Error, Result};
use crate::idx::load_mnist;

/// Environment variable that overrides the default data directory.
pub const DATA_DIR_ENV: &str = "SSDFA_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetKind {
    pub fn default_arch(self) -> Vec<usize> {
        match self {
            DatasetKind::Mnist => vec![784, 400, 10],
            DatasetKind::Cifar10 => vec![3072, 1000, 1000, 1000, 10],
            DatasetKind::Cifar100 => vec![3072, 1000, 1000, 1000, 100],
            DatasetKind::Synthetic => vec![20, 64, 4],
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" | "cifar-10" => Ok(DatasetKind::Cifar10),
            "cifar100" | "cifar-100" => Ok(DatasetKind::Cifar100),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(format!("unknown dataset '{other}' (expected mnist, cifar10, cifar100 or synthetic)")),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub algorithm: Algorithm,
    pub arch: Option<Vec<usize>>,
    pub rank: Option<usize>,
    pub sparsity: f64,
    pub lr: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub bias: bool,
    pub precision: Precision,
    pub activation: Activation,
    pub feedback_scale: Option<f64>,
    pub all_angles: bool,
    pub count_costs: bool,
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Use only the first `limit` training samples.
    pub limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub ranks: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub repetitions: usize,
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Settings {
            algorithm: t.algorithm,
            arch: None,
            rank: None,
            sparsity: 0.0,
            lr: t.lr,
            decay: t.lr_decay,
            epochs: t.epochs,
            batch: t.batch_size,
            seed: t.seed,
            bias: t.bias,
            precision: t.precision,
            activation: t.hidden_activation,
            feedback_scale: None,
            all_angles: false,
            count_costs: false,
            dataset: DatasetKind::Mnist,
            data_dir: None,
            out: None,
            limit: None,
            test_limit: None,
            ranks: vec![1, 2, 5, 10],
            sparsities: vec![0.0, 0.5, 0.9],
            repetitions: 10,
            jobs: 1,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("invalid value '{v}' for {key}"))
}

fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    let items: Vec<T> = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect::<std::result::Result<_, _>>()?;
    if items.is_empty() {
        return Err(format!("{key} needs at least one value"));
    }
    Ok(items)
}

fn flag(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("invalid value '{v}' for {key}, expected true or false")),
    }
}

fn opt_if_set<T: FromStr>(key: &str, v: &str) -> std::result::Result<Option<T>, String> {
    if v.trim().is_empty() || v.trim().eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl Settings {
    /// Sets one value by key (flag name without dashes).
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let key = config::normalize_key(key);
        let k = key.as_str();
        match k {
            "algo" | "algorithm" => self.algorithm = value.parse().map_err(|e: ssdfa_core::Error| e.to_string())?,
            "arch" => self.arch = Some(list(k, value)?),
            "rank" => self.rank = opt_if_set(k, value)?,
            "sparsity" => self.sparsity = num(k, value)?,
            "lr" => self.lr = num(k, value)?,
            "decay" => self.decay = num(k, value)?,
            "epochs" => self.epochs = num(k, value)?,
            "batch" => self.batch = num(k, value)?,
            "seed" => self.seed = num(k, value)?,
            "bias" => self.bias = flag(k, value)?,
            "precision" => self.precision = value.parse().map_err(|e: ssdfa_core::Error| e.to_string())?,
            "activation" => self.activation = value.parse().map_err(|e: ssdfa_core::Error| e.to_string())?,
            "feedback_scale" => self.feedback_scale = opt_if_set(k, value)?,
            "all_angles" => self.all_angles = flag(k, value)?,
            "count_costs" => self.count_costs = flag(k, value)?,
            "dataset" => self.dataset = value.parse()?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value.trim())),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "limit" => self.limit = opt_if_set(k, value)?,
            "test_limit" => self.test_limit = opt_if_set(k, value)?,
            "ranks" => self.ranks = list(k, value)?,
            "sparsities" => self.sparsities = list(k, value)?,
            "repetitions" => self.repetitions = num(k, value)?,
            "jobs" => self.jobs = num(k, value)?,
            _ => return Err(format!("unknown setting '{key}'")),
        }
        Ok(())
    }

    pub fn apply_entries(&mut self, entries: &[Entry], path: &Path) -> Result<()> {
        for e in entries {
            self.set(&e.key, &e.value).map_err(|m| Error::parse(path, e.line, m))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_entries(&config::read(path)?, path)
    }

    pub fn arch(&self) -> Vec<usize> {
        self.arch.clone().unwrap_or_else(|| self.dataset.default_arch())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            algorithm: self.algorithm,
            lr: self.lr,
            lr_decay: self.decay,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            bias: self.bias,
            precision: self.precision,
            hidden_activation: self.activation,
            rank: self.rank,
            sparsity: self.sparsity,
            feedback_scale: self.feedback_scale,
            all_angles: self.all_angles,
            count_costs: self.count_costs,
        }
    }

    /// Data directory: the setting, else `$SSDFA_DATA_DIR`, else `data`.
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }

    /// Loads train and test sets, applying the limits.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let dir = self.data_dir();
        let (train, test) = match self.dataset {
            DatasetKind::Mnist => {
                let d = subdir(&dir, "mnist");
                (load_mnist(&d, Split::Train)?, load_mnist(&d, Split::Test)?)
            }
            DatasetKind::Cifar10 | DatasetKind::Cifar100 => {
                let (kind, name) = if self.dataset == DatasetKind::Cifar10 { (Cifar::Ten, "cifar10") } else { (Cifar::Hundred, "cifar100") };
                let d = subdir(&dir, name);
                (load_cifar(&d, kind, Split::Train)?, load_cifar(&d, kind, Split::Test)?)
            }
            DatasetKind::Synthetic => {
                let arch = self.arch();
                let (n_train, n_test) = (self.limit.unwrap_or(1000), self.test_limit.unwrap_or(500));
                let all = synthetic_teacher(n_train + n_test, arch[0], *arch.last().unwrap(), &[16], self.seed)?;
                return Ok((all.take(n_train), all.range(n_train, n_train + n_test).with_split(Split::Test)));
            }
        };
        let train = match self.limit {
            Some(n) => train.take(n),
            None => train,
        };
        let test = match self.test_limit {
            Some(n) => test.take(n),
            None => test,
        };
        Ok((train, test))
    }
}

fn subdir(dir: &Path, name: &str) -> PathBuf {
    let nested = dir.join(name);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_parses_every_key() {
        let mut s = Settings::default();
        for (k, v) in [
            ("algo", "ssdfa"),
            ("arch", "784,100,10"),
            ("rank", "5"),
            ("sparsity", "0.5"),
            ("lr", "0.1"),
            ("decay", "0.9"),
            ("epochs", "3"),
            ("batch", "16"),
            ("seed", "7"),
            ("bias", "true"),
            ("precision", "double"),
            ("activation", "relu"),
            ("feedback-scale", "0.3"),
            ("all_angles", "yes"),
            ("count_costs", "1"),
            ("dataset", "synthetic"),
            ("data_dir", "/tmp/d"),
            ("out", "/tmp/o"),
            ("limit", "100"),
            ("test_limit", "50"),
            ("ranks", "1, 10"),
            ("sparsities", "0,0.9"),
            ("repetitions", "3"),
            ("jobs", "2"),
        ] {
            s.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(s.algorithm, Algorithm::Ssdfa);
        assert_eq!(s.arch(), vec![784, 100, 10]);
        assert_eq!(s.ranks, vec![1, 10]);
        assert_eq!(s.sparsities, vec![0.0, 0.9]);
        assert!(s.bias && s.all_angles && s.count_costs);
        assert_eq!(s.train_config().lr_decay, 0.9);
        assert_eq!(s.data_dir(), PathBuf::from("/tmp/d"));
    }

    #[test]
    fn bad_values_are_reported() {
        let mut s = Settings::default();
        assert!(s.set("epochs", "ten").unwrap_err().contains("epochs"));
        assert!(s.set("colour", "red").unwrap_err().contains("unknown"));
        assert!(s.set("ranks", "").is_err());
        assert!(s.set("bias", "maybe").is_err());
        assert!(s.set("algo", "fa").is_err());
    }
}
