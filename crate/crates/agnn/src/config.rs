//! Experiment settings from flags and an optional TOML file. Flags win over
//! the file, the file wins over `AGNN_OUT_DIR`, and built-in presets fill
//! the rest.

use std::fs;
use std::path::{Path, PathBuf};

use agnn_core::model::{Fusion, Mode};
use agnn_core::train::{RegressionConfig, Regularizer, SplitPolicy, TrainConfig};
use serde::{Deserialize, Deserializer};

use crate::{file_error, Error, Result};

pub const OUT_DIR_ENV: &str = "AGNN_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "agnn-out";

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Edge file (`source<TAB>target`).
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Feature file (`id<TAB>v1,v2,...`); one-hot features when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Label file (`id<TAB>class`, or `graph_id<TAB>value` with --graph-set).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Graph-set manifest for graph regression.
    #[arg(long)]
    pub graph_set: Option<PathBuf>,
    /// Hyperparameter preset: citation or co-purchase.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Regularization weight; a comma-separated list for sweep-lambda.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub lambda: Option<Vec<f64>>,
    /// Fusion (sum, max, mean, concat); a comma-separated list for sweep-fusion.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub fusion: Option<Vec<String>>,
    /// directed or undirected-tied.
    #[arg(long)]
    pub mode: Option<String>,
    /// Train on the symmetrized graph.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub symmetrize: Option<bool>,
    /// dense, none, or sampled:K (K negatives per edge).
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience; 0 disables it.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training labels per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Validation nodes.
    #[arg(long)]
    pub val_size: Option<usize>,
    /// Mini-batch size for graph regression.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of graphs used for training in graph regression.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Worker threads for independent repeats.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (default: $AGNN_OUT_DIR, else ./agnn-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    /// Reads a TOML file; relative dataset paths resolve against its folder.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(file_error(path))?;
        let mut s = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [
            &mut s.edges,
            &mut s.features,
            &mut s.labels,
            &mut s.graph_set,
            &mut s.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// `self` where set, else `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        overlay!(
            self,
            lower,
            edges,
            features,
            labels,
            graph_set,
            preset,
            hidden,
            layers,
            lr,
            weight_decay,
            dropout,
            lambda,
            fusion,
            mode,
            symmetrize,
            regularizer,
            epochs,
            patience,
            repeats,
            seed,
            per_class,
            val_size,
            batch_size,
            train_fraction,
            threads,
            out
        )
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn repeats(&self) -> Result<usize> {
        match self.repeats.unwrap_or(1) {
            0 => Err(Error::Config("--repeats must be at least 1".into())),
            r => Ok(r),
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn single<T: Copy>(list: &Option<Vec<T>>, flag: &str) -> Result<Option<T>> {
        match list.as_deref() {
            None => Ok(None),
            Some([x]) => Ok(Some(*x)),
            Some(_) => Err(Error::Config(format!(
                "--{flag} takes one value for this command"
            ))),
        }
    }

    /// Sorted, deduplicated λ list; every value must be finite and ≥ 0.
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        let mut list = self.lambda.clone().unwrap_or_default();
        if list.is_empty() {
            return Err(Error::Config("--lambda needs at least one value".into()));
        }
        if let Some(bad) = list.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {bad}"
            )));
        }
        list.sort_by(f64::total_cmp);
        list.dedup();
        Ok(list)
    }

    /// Deduplicated fusion list in canonical order; all four when unset.
    pub fn fusions(&self) -> Result<Vec<Fusion>> {
        let Some(names) = &self.fusion else {
            return Ok(Fusion::ALL.to_vec());
        };
        let mut list = names
            .iter()
            .map(|n| n.trim().parse::<Fusion>())
            .collect::<agnn_core::Result<Vec<_>>>()?;
        if list.is_empty() {
            return Err(Error::Config("--fusion needs at least one value".into()));
        }
        list.sort();
        list.dedup();
        Ok(list)
    }

    fn regularizer_kind(&self) -> Result<Option<Regularizer>> {
        let Some(text) = self.regularizer.as_deref() else {
            return Ok(None);
        };
        let kind = match text.trim().to_ascii_lowercase().as_str() {
            "dense" => Regularizer::Dense,
            "none" | "off" | "disabled" => Regularizer::Disabled,
            other => match other.strip_prefix("sampled:").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Regularizer::Sampled {
                    negatives_per_edge: k,
                },
                _ => {
                    return Err(Error::Config(format!(
                        "unknown regularizer `{text}` (expected dense, none or sampled:K)"
                    )))
                }
            },
        };
        Ok(Some(kind))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = match self.preset.as_deref() {
            None | Some("citation") => TrainConfig::default(),
            Some("co-purchase") => TrainConfig::co_purchase(),
            Some(other) => return Err(Error::Config(format!("unknown preset `{other}`"))),
        };
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => { $(if let Some(v) = self.$src { c.$dst = v; })* };
        }
        set!(hidden => hidden, layers => layers, lr => lr, weight_decay => weight_decay,
             dropout => dropout, epochs => max_epochs, patience => patience, seed => seed,
             symmetrize => symmetrize);
        if let Some(l) = Self::single(&self.lambda, "lambda")? {
            c.lambda = l;
        }
        if let Some(names) = &self.fusion {
            match names.as_slice() {
                [one] => c.fusion = one.parse()?,
                _ => {
                    return Err(Error::Config(
                        "--fusion takes one value for this command".into(),
                    ))
                }
            }
        }
        if let Some(m) = &self.mode {
            c.mode = m.parse::<Mode>()?;
        }
        if let Some(r) = self.regularizer_kind()? {
            c.regularizer = r;
        }
        c.split = SplitPolicy {
            per_class: self.per_class.unwrap_or(c.split.per_class),
            val_size: self.val_size.unwrap_or(c.split.val_size),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn regression_config(&self) -> Result<RegressionConfig> {
        let mut c = RegressionConfig::default();
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => { $(if let Some(v) = self.$src { c.$dst = v; })* };
        }
        set!(hidden => hidden, layers => layers, lr => lr, weight_decay => weight_decay,
             dropout => dropout, epochs => epochs, seed => seed, batch_size => batch_size);
        if let Some(l) = Self::single(&self.lambda, "lambda")? {
            c.lambda = l;
        }
        if let Some(m) = &self.mode {
            c.mode = m.parse::<Mode>()?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn train_fraction(&self) -> Result<f64> {
        let f = self.train_fraction.unwrap_or(0.9);
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must be in (0, 1), got {f}"
            )));
        }
        Ok(f)
    }
}
