//! Declarative run configuration, read from TOML. Every field has a default
//! and unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pacbayes::certify::{linspace, logspace, BoundParams, Grid};
use pacbayes::curvature::ProbeOptions;
use pacbayes::nnet::{Head, LossKind, TrainConfig};
use pacbayes::posterior::{Family, ViConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Relative paths are resolved under `PACBAYES_OUT` when it is set.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub certify: CertifyConfig,
    pub grids: BTreeMap<Family, GridOverride>,
    pub vi: ViConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            certify: CertifyConfig::default(),
            grids: BTreeMap::new(),
            vi: ViConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Gaussian clusters generated from `seed`.
    Blobs,
    /// MNIST-format IDX files.
    Idx,
    /// CIFAR-10 binary batches.
    Cifar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Merge the ten classes into this many (2 or 5); `0` keeps them.
    pub collapse: usize,
    /// Min–max scale features, fitted on the training split.
    pub scale: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_batches: Vec<PathBuf>,
    pub test_batches: Vec<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Blobs,
            collapse: 2,
            scale: true,
            n_train: 10_000,
            n_test: 2_000,
            dim: 784,
            classes: 10,
            separation: 8.0,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_batches: vec![],
            test_batches: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: vec![100, 100], head: Head::Softmax }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub families: Vec<Family>,
    #[serde(flatten)]
    pub bound: BoundParams,
    /// Bound `β` candidates for the curvature families.
    pub catoni_betas: Range,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            families: vec![Family::IsoZero, Family::IsoInit],
            bound: BoundParams::default(),
            catoni_betas: Range { lo: 1.0, hi: 5.0, count: 9 },
        }
    }
}

/// `count` points from `lo` to `hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// `β` is spaced linearly and `λ` geometrically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub beta: Range,
    pub lambda: Range,
}

/// Per-family grid settings; missing ranges keep the family default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Range>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Range>,
}

impl GridConfig {
    /// Ranges used in the original experiments on MNIST.
    pub fn default_for(family: Family) -> Self {
        let r = |lo, hi, count| Range { lo, hi, count };
        match family {
            Family::IsoZero | Family::IsoInit => GridConfig { beta: r(1.0, 5.0, 20), lambda: r(0.031, 0.3, 20) },
            Family::ClosedDiag => GridConfig { beta: r(0.001, 0.07, 20), lambda: r(5e-5, 0.01, 20) },
            // λ cancels out of the joint optimum.
            Family::ClosedJoint => GridConfig { beta: r(7e-6, 1e-3, 20), lambda: r(0.01, 0.01, 1) },
            Family::ViDiag => GridConfig { beta: r(1.0, 5.0, 20), lambda: r(0.03, 0.1, 20) },
            Family::SkfacBlock => GridConfig { beta: r(0.001, 0.02, 20), lambda: r(0.001, 0.1, 20) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub directions: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub lambdas: Vec<f64>,
    pub loss: LossKind,
    pub max_samples: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            directions: 4,
            t_min: -200.0,
            t_max: 200.0,
            t_points: 81,
            lambdas: vec![0.04],
            loss: LossKind::Categorical,
            max_samples: None,
        }
    }
}

impl ProbeConfig {
    pub fn options(&self, seed: u64) -> ProbeOptions {
        ProbeOptions {
            directions: self.directions,
            t_grid: linspace(self.t_min, self.t_max, self.t_points),
            lambdas: self.lambdas.clone(),
            loss: self.loss,
            max_samples: self.max_samples,
            seed,
        }
    }
}

impl RunConfig {
    pub fn grid(&self, family: Family) -> GridConfig {
        let base = GridConfig::default_for(family);
        let o = self.grids.get(&family).copied().unwrap_or_default();
        GridConfig { beta: o.beta.unwrap_or(base.beta), lambda: o.lambda.unwrap_or(base.lambda) }
    }

    pub fn build_grid(&self, family: Family) -> Grid {
        let g = self.grid(family);
        let c = self.certify.catoni_betas;
        Grid {
            betas: linspace(g.beta.lo, g.beta.hi, g.beta.count),
            lambdas: logspace(g.lambda.lo, g.lambda.hi, g.lambda.count),
            catoni_betas: linspace(c.lo, c.hi, c.count),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.certify.bound.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return usage("net.hidden needs at least one positive width".into());
        }
        if ![0, 2, 5].contains(&self.data.collapse) {
            return usage(format!("data.collapse must be 0, 2 or 5, got {}", self.data.collapse));
        }
        let c = self.certify.bound.c;
        for &family in &self.certify.families {
            let g = self.grid(family);
            for (name, r) in [("beta", g.beta), ("lambda", g.lambda)] {
                if !(r.lo > 0.0 && r.hi >= r.lo && r.hi.is_finite()) {
                    return usage(format!("grids.{family}.{name} needs 0 < lo <= hi"));
                }
            }
            if g.lambda.count > 0 && g.lambda.hi >= c {
                return usage(format!("grids.{family}.lambda.hi = {} must be below certify.c = {c}", g.lambda.hi));
            }
        }
        let cb = self.certify.catoni_betas;
        if !(cb.lo > 0.0 && cb.hi >= cb.lo) || cb.count == 0 {
            return usage("certify.catoni_betas needs 0 < lo <= hi and count >= 1".into());
        }
        if self.probe.t_points < 3 {
            return usage("probe.t_points must be at least 3".into());
        }
        Ok(())
    }
}

/// Parses `text`, applies `key=value` overrides, then deserializes.
pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse(&text, overrides)
}

/// `a.b.c=value`; the value is read as TOML and falls back to a string.
fn apply_override(doc: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{item}`")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad key `{key}`")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::Usage(format!("`{part}` in `{key}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Full configuration with every default filled in.
pub fn render(cfg: &RunConfig) -> String {
    let mut full = cfg.clone();
    for &f in &cfg.certify.families {
        let g = cfg.grid(f);
        full.grids.insert(f, GridOverride { beta: Some(g.beta), lambda: Some(g.lambda) });
    }
    toml::to_string(&full).expect("config serializes")
}
