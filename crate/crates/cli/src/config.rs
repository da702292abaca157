//! Experiment configuration: one TOML file with a section per command.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gtv_core::continuum::{PolyhedralFunction, QuadSpec};
use gtv_core::domain::{BoxDomain, DensityKind, EpsilonRule};
use gtv_core::energy::{DoubleWell, TvNormalization};
use gtv_core::kernel::InteractionKernel;
use gtv_core::minimize::RelaxParams;
use gtv_core::transport::{ReferencePoints, Tl1Method};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every other seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<CloudSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<InteractionKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimize: Option<MinimizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tl1: Option<Tl1Section>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aniso: Option<AnisoSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CloudSection {
    Sample {
        domain: BoxDomain,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<DensityKind>,
        n: usize,
    },
    /// CSV with a header row and one column per coordinate.
    File { path: PathBuf, domain: BoxDomain },
    ThreePoint {},
    AnisoClusters { per_cluster: usize },
    /// Uniform unit-square cloud; corner patches are available as seeds.
    CornerCloud { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<EpsilonRule>,
    /// O(n^2) construction, needed for kernels without bounded support.
    #[serde(default)]
    pub all_pairs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelSpec {
    Values { values: Vec<f64> },
    /// CSV `index,label`.
    File { path: PathBuf },
    /// Indicator of a polyhedral set.
    Region { set: PolyhedralFunction },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub labels: LabelSpec,
    #[serde(default)]
    pub well: DoubleWell,
    #[serde(default = "squared")]
    pub normalization: TvNormalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

fn squared() -> TvNormalization {
    TvNormalization::Squared
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeedSpec {
    List { seeds: Vec<(usize, u8)> },
    /// Vertices with `x[axis] < below` get 0, those with `x[axis] > above` get 1.
    Strips { axis: usize, below: f64, above: f64 },
    /// The `per_corner` vertices nearest each corner of the unit square:
    /// `two-phase` labels the bottom corners 0 and the top corners 1,
    /// `cross` alternates along the diagonals.
    CornerPatches { per_corner: usize, pattern: CornerPattern },
    None {},
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CornerPattern {
    TwoPhase,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Cut,
    Relax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelitySection {
    pub lambda: f64,
    pub reference: LabelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeSection {
    pub seeds: SeedSpec,
    #[serde(default = "both_solvers")]
    pub solvers: Vec<Solver>,
    #[serde(default)]
    pub well: DoubleWell,
    /// Drop the double-well term from the relaxed objective.
    #[serde(default)]
    pub tv_only: bool,
    #[serde(default)]
    pub relax: RelaxParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelitySection>,
    #[serde(default = "width_cutoff")]
    pub width_cutoff: f64,
}

fn both_solvers() -> Vec<Solver> {
    vec![Solver::Cut, Solver::Relax]
}

fn width_cutoff() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tl1Section {
    pub labels: LabelSpec,
    pub target: PolyhedralFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityKind>,
    pub method: Tl1Method,
    #[serde(default)]
    pub reference: ReferencePoints,
    /// Reference points for the assignment method (defaults to n).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub mu: PolyhedralFunction,
    pub ns: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub extended: bool,
    #[serde(default)]
    pub quad: QuadSpec,
    #[serde(default = "v_samples")]
    pub v_samples: usize,
}

fn v_samples() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisoSection {
    #[serde(default = "alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "aniso_eps")]
    pub eps: f64,
    #[serde(default = "half")]
    pub c1: f64,
    #[serde(default = "half")]
    pub c2: f64,
    #[serde(default)]
    pub well: DoubleWell,
}

fn alphas() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

fn aniso_eps() -> f64 {
    gtv_core::fixtures::ANISO_EPS
}

fn half() -> f64 {
    0.5
}

/// Splits `key=value`; the value is read as a TOML literal, falling back to a
/// bare string.
fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("override `{s}` is not of the form key=value"))?;
    let path: Vec<String> = k.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override key `{k}` has an empty component");
    }
    let v = v.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((path, value))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut t = root;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| anyhow!("override path `{}`: `{p}` is not a table", path.join(".")))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
}

/// Parses `path`, applies `--set` overrides and the `--seed` flag, and
/// validates the result.
pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let display = path.display();
    // typed parse of the file as written, so errors carry its line numbers
    let parsed: ExperimentConfig = toml::from_str(&text).map_err(|e| anyhow!("{display}: {e}"))?;
    let mut config = if overrides.is_empty() {
        parsed
    } else {
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| anyhow!("{display}: {e}"))?;
        for o in overrides {
            let (p, v) = parse_override(o)?;
            apply_override(&mut table, &p, v)?;
        }
        ExperimentConfig::deserialize(toml::Value::Table(table)).map_err(|e| anyhow!("{display} after --set overrides: {e}"))?
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    validate(&config)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

pub fn validate(c: &ExperimentConfig) -> Result<()> {
    if c.schema_version != SCHEMA_VERSION {
        bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", c.schema_version);
    }
    if c.seed > i64::MAX as u64 {
        bail!("seed {} does not fit in a TOML integer", c.seed);
    }
    if let Some(g) = &c.graph {
        match (g.eps, &g.schedule) {
            (Some(_), Some(_)) => bail!("[graph] sets both eps and schedule"),
            (None, None) => bail!("[graph] needs eps or schedule"),
            (Some(e), None) if !(e > 0.0 && e.is_finite()) => bail!("[graph] eps must be positive, got {e}"),
            _ => {}
        }
    }
    if let Some(m) = &c.minimize {
        if m.solvers.is_empty() {
            bail!("[minimize] solvers must not be empty");
        }
        if !(m.width_cutoff > 0.0 && m.width_cutoff < 0.5) {
            bail!("[minimize] width_cutoff must lie in (0, 1/2)");
        }
    }
    if let Some(a) = &c.aniso {
        if a.alphas.iter().any(|x| !(0.0..=1.0).contains(x)) {
            bail!("[aniso] alphas must lie in [0, 1]");
        }
    }
    Ok(())
}

/// Canonical TOML of a resolved config.
pub fn to_toml(c: &ExperimentConfig) -> Result<String> {
    toml::to_string(c).context("serializing config")
}
