use std::path::PathBuf;

use cheaptalk_core::equilibrium::InitScheme;
use cheaptalk_core::sources::{Family, SourceModel, TabulatedDensity};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Verify,
    Classify,
    Rd,
    Transform,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Classify => "classify",
            Command::Rd => "rd",
            Command::Transform => "transform",
            Command::Sweep => "sweep",
        }
    }
}

/// Everything one run needs, after overrides and seed resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub source: Option<SourceBlock>,
    #[serde(default)]
    pub bias: Vec<f64>,
    #[serde(default)]
    pub solver: SolverBlock,
    pub policy: Option<PolicyBlock>,
    pub rd: Option<RdBlock>,
    pub transform: Option<TransformBlock>,
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct SourceBlock {
    pub dim: usize,
    pub epsilon: Option<f64>,
    #[serde(flatten)]
    pub family: FamilyBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyBlock {
    IidGaussian {
        #[serde(default)]
        mean: f64,
        variance: f64,
    },
    CorrelatedGaussian2d {
        #[serde(default)]
        mean: [f64; 2],
        variances: [f64; 2],
        covariance: f64,
    },
    IidUniform {
        lo: f64,
        hi: f64,
    },
    IidExponential {
        rate: f64,
    },
    IidLaplace {
        #[serde(default)]
        mean: f64,
        scale: f64,
    },
    /// A CSV table with header `x,density` or `x1,x2,density`.
    TabulatedDensity {
        path: PathBuf,
    },
}

impl TryFrom<toml::Table> for SourceBlock {
    type Error = String;

    fn try_from(mut table: toml::Table) -> Result<Self, String> {
        let dim = match table.remove("dim") {
            Some(toml::Value::Integer(d)) if d > 0 => d as usize,
            Some(other) => return Err(format!("source.dim must be a positive integer, got {other}")),
            None => return Err("source.dim is missing".into()),
        };
        let epsilon = match table.remove("epsilon") {
            None => None,
            Some(v) => Some(v.as_float().ok_or_else(|| format!("source.epsilon must be a float, got {v}"))?),
        };
        let family = FamilyBlock::deserialize(toml::Value::Table(table)).map_err(|e| e.message().to_owned())?;
        Ok(Self { dim, epsilon, family })
    }
}

impl SourceBlock {
    pub fn build(&self) -> cheaptalk_core::Result<SourceModel> {
        let family = match &self.family {
            FamilyBlock::IidGaussian { mean, variance } => Family::IidGaussian { mean: *mean, variance: *variance },
            FamilyBlock::CorrelatedGaussian2d { mean, variances, covariance } => {
                Family::CorrelatedGaussian2d { mean: *mean, variances: *variances, covariance: *covariance }
            }
            FamilyBlock::IidUniform { lo, hi } => Family::IidUniform { lo: *lo, hi: *hi },
            FamilyBlock::IidExponential { rate } => Family::IidExponential { rate: *rate },
            FamilyBlock::IidLaplace { mean, scale } => Family::IidLaplace { mean: *mean, scale: *scale },
            FamilyBlock::TabulatedDensity { path } => Family::Tabulated { table: TabulatedDensity::from_csv_path(path)? },
        };
        let model = SourceModel::new(family, self.dim)?;
        match self.epsilon {
            Some(e) => model.with_epsilon(e),
            None => Ok(model),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    /// Number of bins (or bins on the last coordinate for reveal policies).
    pub k: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub samples: usize,
    pub seed: u64,
    pub grid_levels: usize,
    pub init: InitScheme,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            k: 2,
            tolerance: 1e-8,
            max_iterations: 1000,
            damping: 1.0,
            samples: 1_000_000,
            seed: 42,
            grid_levels: 1024,
            init: InitScheme::default(),
        }
    }
}

/// Which policy `verify` checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyBlock {
    /// Solve for `solver.k` actions, then verify them.
    FixedPoint,
    /// A fixed action set, one row per action.
    Actions { actions: Vec<Vec<f64>> },
    /// Reveal all but the last transformed coordinate.
    RevealPlusQuantize,
    /// The linear reveal of a 2D iid pair.
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdBlock {
    #[serde(default = "unit")]
    pub sigma_sq: f64,
    pub b: f64,
    pub de: f64,
    pub dd: f64,
    /// A team code to lift into the game, given as rate and distortion.
    pub rate_team: Option<f64>,
    pub d_team: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Pair,
    Helmert,
    BiasAligning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformBlock {
    pub kind: TransformKind,
    /// Dimension for `helmert` when no bias is given.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default = "unit")]
    pub sigma_sq: f64,
    pub b: f64,
    pub rate: u32,
    pub n_list: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Where JSON records go; standard output when unset.
    pub records: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

fn unit() -> f64 {
    1.0
}

/// Parses an override value as a TOML literal, falling back to a bare
/// string so `--source.family=iid-uniform` needs no quoting.
fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Sets `path` (dot separated) to `raw` inside `root`, creating tables.
pub fn apply_override(root: &mut toml::Table, path: &str, raw: &str) -> Result<(), String> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(format!("malformed override path {path:?}"));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut table = root;
    for key in parents {
        let entry = table.entry(*key).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| format!("{key} in {path:?} is not a table"))?;
    }
    table.insert((*last).to_owned(), parse_literal(raw));
    Ok(())
}

impl RunConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, String> {
        RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| e.message().to_owned())
    }

    /// SHA-256 of the canonical JSON form (keys sorted), hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).expect("config serializes").to_string();
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, String> {
        RunConfig::from_table(toml::from_str(text).unwrap())
    }

    #[test]
    fn source_block_parses_and_rejects_unknown_keys() {
        let c = parse("[source]\nfamily = \"iid-uniform\"\ndim = 2\nlo = 0.0\nhi = 1.0\n").unwrap();
        assert!(c.source.unwrap().build().is_ok());
        assert!(parse("[source]\nfamily = \"iid-uniform\"\ndim = 2\nlo = 0.0\nhi = 1.0\nmu = 3\n").is_err());
        assert!(parse("[source]\nfamily = \"iid-gaussian\"\nmean = 0.0\nvariance = 1.0\n").is_err());
        assert!(parse("[source]\nfamily = \"cauchy\"\ndim = 1\n").is_err());
    }

    #[test]
    fn overrides_create_and_replace_leaves() {
        let mut t: toml::Table = toml::from_str("[solver]\nseed = 1\n").unwrap();
        apply_override(&mut t, "solver.seed", "7").unwrap();
        apply_override(&mut t, "bias", "[1.0, -1.0]").unwrap();
        apply_override(&mut t, "source.family", "iid-uniform").unwrap();
        assert_eq!(t["solver"]["seed"].as_integer(), Some(7));
        assert_eq!(t["bias"].as_array().unwrap().len(), 2);
        assert_eq!(t["source"]["family"].as_str(), Some("iid-uniform"));
        assert!(apply_override(&mut t, "bias.x", "1").is_err());
        assert!(apply_override(&mut t, "solver..seed", "1").is_err());
    }

    #[test]
    fn hash_ignores_key_order_but_not_values() {
        let a = parse("bias = [1.0]\n[solver]\nk = 3\nseed = 5\n").unwrap();
        let b = parse("[solver]\nseed = 5\nk = 3\n[output]\n").unwrap();
        let b = RunConfig { bias: vec![1.0], ..b };
        assert_eq!(a.hash(), b.hash());
        let c = parse("bias = [1.0]\n[solver]\nk = 3\nseed = 6\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
