//! Experiment configuration: JSON documents with dotted `--set` overrides.

use std::path::{Path, PathBuf};

use gmc_core::asymptotics::{log_grid, ExponentMode, LaplaceKind};
use gmc_core::fusion::LawSpec;
use gmc_core::geometry::{DensitySpec, GridSpec, SetSpec};
use gmc_core::kernels::KernelDescriptor;
use gmc_core::quad::QuadratureConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SEED_ENV: &str = "GMC_SEED";

fn one() -> usize {
    1
}

fn two() -> f64 {
    2.0
}

fn default_samples() -> usize {
    1000
}

fn default_output() -> PathBuf {
    PathBuf::from("gmc-out")
}

fn unit_density() -> DensitySpec {
    DensitySpec::constant(1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// ε ladder, coarsest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetSpec>,
    #[serde(default = "unit_density")]
    pub density: DensitySpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<LogGridConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceKind>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_table: Option<KernelTableConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tauberian: Option<TauberianConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bessel: Option<BesselConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universality: Option<UniversalityConfig>,
}

/// Box `[lo, hi]`; the spacing is fixed or tied to each ε of the ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default = "two")]
    pub spacing_per_epsilon: f64,
}

impl GridConfig {
    pub fn build(&self, eps: f64) -> Result<GridSpec, CliError> {
        let h = self.spacing.unwrap_or(self.spacing_per_epsilon * eps);
        Ok(GridSpec::boxed(self.lo.clone(), self.hi.clone(), h)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegimeConfig {
    Critical,
    Subcritical { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl LogGridConfig {
    pub fn build(&self) -> Result<Vec<f64>, CliError> {
        Ok(log_grid(self.lo, self.hi, self.points)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTableConfig {
    /// Number of ratios `c = k/n`, `k = 1..=n`, in the S_d table.
    #[serde(default = "hundred")]
    pub ratios: usize,
}

fn hundred() -> usize {
    100
}

fn default_h() -> f64 {
    0.01
}

fn default_ptol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    pub n: usize,
    pub n_inner: usize,
    #[serde(default = "zero_law")]
    pub v: LawSpec,
    #[serde(default = "zero_law")]
    pub w: LawSpec,
    #[serde(default = "default_ptol")]
    pub ptol: f64,
    /// Decreasing λ values in (0, 1/2) for the small-λ limit; empty skips it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub limit_lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_n: Option<usize>,
}

fn zero_law() -> LawSpec {
    LawSpec::Zero
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauberianConfig {
    pub a: f64,
    pub lambdas: Vec<f64>,
    pub t_grid: LogGridConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselConfig {
    pub x: f64,
    #[serde(default = "half_percent")]
    pub h: f64,
    /// Horizon of the path-decomposition marginal.
    pub t: f64,
    #[serde(default = "default_ptol")]
    pub ptol: f64,
    pub n: usize,
}

fn half_percent() -> f64 {
    0.005
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalityConfig {
    /// Kernels compared on the same grid, set and density; the first is the
    /// baseline.
    pub kernels: Vec<KernelDescriptor>,
}

/// Set `path = value` in a JSON document, creating objects along the way.
/// Path segments are object keys or array indices; the value is parsed as JSON
/// and falls back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not of the form key=value")))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override key {path:?} has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match cur {
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| CliError::Config(format!("{seg:?} is not an array index in {path:?}")))?;
                let len = items.len();
                items.get_mut(i).ok_or_else(|| CliError::Config(format!("index {i} out of range ({len} items) in {path:?}")))?
            }
            Value::Object(map) => map.entry(seg.to_string()).or_insert(Value::Null),
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just created").entry(seg.to_string()).or_insert(Value::Null)
            }
            _ => return Err(CliError::Config(format!("cannot descend into a scalar at {seg:?} in {path:?}"))),
        };
    }
    *cur = value;
    Ok(())
}

/// Parse a configuration document, apply overrides, then the seed variable.
pub fn resolve(text: &str, overrides: &[String], env_seed: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
    if !doc.is_object() {
        return Err(CliError::Config("config must be a JSON object".into()));
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(s) = env_seed {
        let seed: u64 = s.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        doc["seed"] = Value::from(seed);
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let env = std::env::var(SEED_ENV).ok();
    resolve(&text, overrides, env.as_deref())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.epsilon.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad(format!("epsilon values must lie in (0, 1), got {:?}", self.epsilon));
        }
        if self.epsilon.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("epsilon ladder must decrease".into());
        }
        if let Some(RegimeConfig::Subcritical { gamma }) = self.regime {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return bad(format!("gamma must be positive, got {gamma}"));
            }
        }
        if let Some(g) = &self.grid {
            if let Some(h) = g.spacing {
                if !(h > 0.0) || !h.is_finite() {
                    return bad(format!("grid spacing must be positive, got {h}"));
                }
            }
            if !(g.spacing_per_epsilon > 0.0) || !g.spacing_per_epsilon.is_finite() {
                return bad(format!("spacing_per_epsilon must be positive, got {}", g.spacing_per_epsilon));
            }
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        self.quadrature.validate()?;
        Ok(())
    }

    pub fn kernel(&self) -> Result<&KernelDescriptor, CliError> {
        self.kernel.as_ref().ok_or_else(|| CliError::Config("this command needs a \"kernel\"".into()))
    }

    pub fn grid(&self) -> Result<&GridConfig, CliError> {
        self.grid.as_ref().ok_or_else(|| CliError::Config("this command needs a \"grid\"".into()))
    }

    pub fn set(&self) -> Result<&SetSpec, CliError> {
        self.set.as_ref().ok_or_else(|| CliError::Config("this command needs a \"set\"".into()))
    }

    pub fn ladder(&self) -> Result<&[f64], CliError> {
        if self.epsilon.is_empty() {
            return Err(CliError::Config("this command needs a nonempty \"epsilon\" ladder".into()));
        }
        Ok(&self.epsilon)
    }

    pub fn regime(&self) -> Result<RegimeConfig, CliError> {
        self.regime.ok_or_else(|| CliError::Config("this command needs a \"regime\"".into()))
    }

    pub fn t_grid(&self) -> Result<Vec<f64>, CliError> {
        self.t_grid.as_ref().ok_or_else(|| CliError::Config("this command needs a \"t_grid\"".into()))?.build()
    }

    pub fn section<'a, T>(&self, v: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        v.as_ref().ok_or_else(|| CliError::Config(format!("this command needs a \"{name}\" section")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_and_replace() {
        let mut v = json!({"seed": 1, "grid": {"lo": [0.0], "hi": [1.0]}});
        apply_override(&mut v, "grid.hi.0=2.5").unwrap();
        apply_override(&mut v, "fusion.d=2").unwrap();
        apply_override(&mut v, "output_dir=runs/a").unwrap();
        assert_eq!(v["grid"]["hi"][0], json!(2.5));
        assert_eq!(v["fusion"]["d"], json!(2));
        assert_eq!(v["output_dir"], json!("runs/a"));
        assert!(apply_override(&mut v, "seed.x=1").is_err());
        assert!(apply_override(&mut v, "grid.hi.7=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
    }

    #[test]
    fn seed_is_mandatory_and_env_wins() {
        assert!(matches!(resolve("{}", &[], None), Err(CliError::Config(_))));
        let c = resolve(r#"{"seed": 4}"#, &[], Some("9")).unwrap();
        assert_eq!(c.seed, 9);
        assert!(resolve(r#"{"seed": 4}"#, &[], Some("x")).is_err());
        let c = resolve(r#"{"seed": 4}"#, &["seed=5".into()], None).unwrap();
        assert_eq!(c.seed, 5);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(resolve(r#"{"seed": 1, "sample": 3}"#, &[], None).is_err());
        assert!(resolve(r#"{"seed": 1, "grid": {"lo": [0], "hi": [1], "step": 1}}"#, &[], None).is_err());
        assert!(resolve(r#"{"seed": 1, "epsilon": [0.1, 0.2]}"#, &[], None).is_err());
        assert!(resolve(r#"[1]"#, &[], None).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"{"seed": 3, "kernel": {"variant": "l_exact", "L": 0.0, "d": 1},
            "grid": {"lo": [0], "hi": [1]}, "epsilon": [0.1, 0.05],
            "set": [{"box": {"lo": [0], "hi": [1]}}], "regime": {"regime": "critical"}}"#;
        let c = resolve(text, &[], None).unwrap();
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(serde_json::to_value(&again).unwrap(), serde_json::to_value(&c).unwrap());
    }
}
