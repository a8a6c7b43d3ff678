//! Run configuration: a flat `key = value` file, `#` starts a comment line.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use domino::data::{
    make_blobs, parse_idx_images, parse_idx_labels, split_dataset, BlobSpec, Dataset,
    SplitFractions,
};
use domino::loss::{LossConfig, Reduction};
use domino::metrics::DEFAULT_NUM_BINS;
use domino::train::{Method, TrainConfig};

use crate::error::CliError;

const KEYS: &[&str] = &[
    "dataset",
    "dataset_id",
    "data_seed",
    "num_classes",
    "class_names",
    "blobs.samples_per_class",
    "blobs.dim",
    "blobs.radius",
    "blobs.spread",
    "blobs.confusable",
    "idx.images",
    "idx.labels",
    "split",
    "method",
    "hidden",
    "epochs",
    "batch_size",
    "learning_rate",
    "momentum",
    "seed",
    "beta",
    "reduction",
    "cm_floor",
    "hierarchy",
    "w_file",
    "num_bins",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Blobs(BlobSpec),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        num_classes: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: DatasetSource,
    pub dataset_id: String,
    pub data_seed: u64,
    pub class_names: Option<Vec<String>>,
    pub split: SplitFractions,
    pub method: Method,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub beta: f64,
    pub reduction: Reduction,
    pub cm_floor: f64,
    pub hierarchy: Option<PathBuf>,
    pub w_file: Option<PathBuf>,
    pub num_bins: usize,
    pub output_dir: PathBuf,
    /// Non-fatal findings to print before running.
    pub warnings: Vec<String>,
}

pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

struct Entries {
    values: BTreeMap<String, (usize, String)>,
    base_dir: PathBuf,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config line {line}: `{key}` = `{v}`: {e}"))),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| CliError::usage(format!("config: missing required key `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>().map_err(|e| {
                    CliError::usage(format!("config line {line}: `{key}`: `{s}`: {e}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|(_, v)| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }

    fn existing_path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        match self.path(key) {
            Some(p) if !p.exists() => Err(CliError::usage(format!(
                "config: `{key}` points to {}, which does not exist",
                p.display()
            ))),
            other => Ok(other),
        }
    }
}

fn parse_entries(text: &str, base_dir: &Path) -> Result<Entries, CliError> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            CliError::usage(format!("config line {line}: expected `key = value`"))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::usage(format!(
                "config line {line}: unknown key `{key}`"
            )));
        }
        if values
            .insert(key.to_string(), (line, value.trim().to_string()))
            .is_some()
        {
            return Err(CliError::usage(format!(
                "config line {line}: duplicate key `{key}`"
            )));
        }
    }
    Ok(Entries {
        values,
        base_dir: base_dir.to_path_buf(),
    })
}

// "0-1:0.8, 2-3:0.8"
fn parse_pairs(text: &str) -> Result<Vec<(usize, usize, f64)>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (pair, dist) = item
                .split_once(':')
                .ok_or_else(|| format!("`{item}`: expected `i-j:distance`"))?;
            let (i, j) = pair
                .split_once('-')
                .ok_or_else(|| format!("`{item}`: expected `i-j:distance`"))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("`{item}`: {e}"))
            };
            let d = dist
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("`{item}`: {e}"))?;
            Ok((num(i)?, num(j)?, d))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let e = parse_entries(text, base_dir)?;
        let mut warnings = Vec::new();
        let seed: u64 = e.get("seed", 0)?;
        let kind: String = e.require("dataset")?;
        let num_classes: usize = e.require("num_classes")?;
        let source = match kind.as_str() {
            "blobs" => {
                for k in ["idx.images", "idx.labels"] {
                    if e.has(k) {
                        return Err(CliError::usage(format!(
                            "config: `{k}` is not valid with dataset = blobs"
                        )));
                    }
                }
                let dim = e.get("blobs.dim", 2)?;
                let mut spec = BlobSpec::ring(
                    num_classes,
                    e.require("blobs.samples_per_class")?,
                    dim,
                    e.get("blobs.radius", 3.0)?,
                    e.get("blobs.spread", 1.0)?,
                );
                if dim < 2 {
                    return Err(CliError::usage("config: blobs.dim must be at least 2"));
                }
                if let Some((line, v)) = e.raw("blobs.confusable") {
                    spec.confusable_pairs = parse_pairs(v).map_err(|m| {
                        CliError::usage(format!("config line {line}: blobs.confusable: {m}"))
                    })?;
                }
                spec.validate()
                    .map_err(|err| CliError::usage(format!("config: {err}")))?;
                DatasetSource::Blobs(spec)
            }
            "idx" => {
                if let Some(k) = KEYS.iter().find(|k| k.starts_with("blobs.") && e.has(k)) {
                    return Err(CliError::usage(format!(
                        "config: `{k}` is not valid with dataset = idx"
                    )));
                }
                let need = |k: &str| {
                    e.existing_path(k)?.ok_or_else(|| {
                        CliError::usage(format!("config: missing required key `{k}`"))
                    })
                };
                DatasetSource::Idx {
                    images: need("idx.images")?,
                    labels: need("idx.labels")?,
                    num_classes,
                }
            }
            other => {
                return Err(CliError::usage(format!(
                    "config: unknown dataset `{other}` (expected blobs or idx)"
                )))
            }
        };
        let split = match e.list::<f64>("split")? {
            None => SplitFractions::default(),
            Some(v) if v.len() == 3 => SplitFractions::new(v[0], v[1], v[2])
                .map_err(|err| CliError::usage(format!("config: split: {err}")))?,
            Some(v) => {
                return Err(CliError::usage(format!(
                    "config: split needs three fractions (train, val, test), got {}",
                    v.len()
                )))
            }
        };
        let method: Method = e.require("method")?;
        let beta: f64 = e.get("beta", 0.0)?;
        if method == Method::Baseline && e.has("beta") {
            warnings.push(format!("beta = {beta} is ignored for method = baseline"));
        }
        let hierarchy = e.existing_path("hierarchy")?;
        let w_file = e.existing_path("w_file")?;
        match method {
            Method::Hc if hierarchy.is_some() == w_file.is_some() => {
                return Err(CliError::usage(
                    "config: method = hc needs exactly one of `hierarchy` or `w_file`",
                ))
            }
            Method::Baseline | Method::Cm if hierarchy.is_some() || w_file.is_some() => {
                return Err(CliError::usage(format!(
                    "config: method = {method} does not take `hierarchy` or `w_file`"
                )))
            }
            _ => {}
        }
        if method != Method::Cm && e.has("cm_floor") {
            warnings.push(format!("cm_floor is ignored for method = {method}"));
        }
        let class_names = e.list::<String>("class_names")?;
        if let Some(names) = &class_names {
            if names.len() != num_classes {
                return Err(CliError::usage(format!(
                    "config: {} class names for {num_classes} classes",
                    names.len()
                )));
            }
        }
        let cfg = Self {
            source,
            dataset_id: e.get("dataset_id", kind.clone())?,
            data_seed: e.get("data_seed", seed)?,
            class_names,
            split,
            method,
            hidden: e.list("hidden")?.unwrap_or_else(|| vec![32]),
            epochs: e.get("epochs", 20)?,
            batch_size: e.get("batch_size", 32)?,
            learning_rate: e.get("learning_rate", 0.05)?,
            momentum: e.get("momentum", 0.9)?,
            seed,
            beta,
            reduction: e.get("reduction", Reduction::Mean)?,
            cm_floor: e.get("cm_floor", 0.0)?,
            hierarchy,
            w_file,
            num_bins: e.get("num_bins", DEFAULT_NUM_BINS)?,
            output_dir: e.path("output_dir").unwrap_or_else(|| base_dir.join("out")),
            warnings,
        };
        if cfg.num_bins == 0 {
            return Err(CliError::usage("config: num_bins must be positive"));
        }
        cfg.train_config(0).and_then(|t| {
            t.validate()
                .map_err(|err| CliError::usage(format!("config: {err}")))
        })?;
        Ok(cfg)
    }

    pub fn num_classes(&self) -> usize {
        match &self.source {
            DatasetSource::Blobs(spec) => spec.num_classes,
            DatasetSource::Idx { num_classes, .. } => *num_classes,
        }
    }

    /// Training config for a dataset with `input_dim` features. With
    /// `input_dim = 0` only the non-architecture fields are meaningful.
    pub fn train_config(&self, input_dim: usize) -> Result<TrainConfig, CliError> {
        let loss = LossConfig::new(self.beta, self.reduction)
            .map_err(|e| CliError::usage(format!("config: {e}")))?;
        let mut layers = vec![input_dim.max(1)];
        layers.extend(&self.hidden);
        layers.push(self.num_classes());
        let mut cfg = TrainConfig::new(layers, self.method, loss, self.seed);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg.momentum = self.momentum;
        cfg.cm_floor = self.cm_floor;
        Ok(cfg)
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let mut ds = match &self.source {
            DatasetSource::Blobs(spec) => make_blobs(spec, self.data_seed)
                .map_err(|e| CliError::usage(format!("config: {e}")))?,
            DatasetSource::Idx {
                images,
                labels,
                num_classes,
            } => {
                let read = |p: &PathBuf| {
                    std::fs::read(p)
                        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))
                };
                let data_err = |p: &PathBuf, e: domino::DataError| {
                    CliError::runtime(format!("{}: {e}", p.display()))
                };
                let imgs = parse_idx_images(&read(images)?).map_err(|e| data_err(images, e))?;
                let labs = parse_idx_labels(&read(labels)?, *num_classes)
                    .map_err(|e| data_err(labels, e))?;
                Dataset::new(imgs, labs).map_err(|e| CliError::runtime(format!("dataset: {e}")))?
            }
        };
        ds.class_names = self.class_names.clone();
        Ok(ds)
    }

    pub fn load_splits(&self) -> Result<Splits, CliError> {
        let ds = self.load_dataset()?;
        let (train, val, test) = split_dataset(&ds, self.split, self.data_seed)
            .map_err(|e| CliError::runtime(format!("split: {e}")))?;
        Ok(Splits { train, val, test })
    }
}
