//! Experiment configuration (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coordinate::CoordinateParams;
use crate::distortion::ConstantParams;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::{CriticalPoint, ExpressionMap, Family, MapModel, NormalForm, Orientation};
use crate::structure::StructureParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapConfig,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub coordinate: CoordinateConfig,
    pub verification: VerificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub family: FamilyConfig,
    #[serde(default = "unit_interval")]
    pub domain: [f64; 2],
    #[serde(default)]
    pub circle_wrap: bool,
    /// Required for expression and piecewise maps.
    #[serde(default)]
    pub critical_points: Option<Vec<CriticalPointConfig>>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalPointConfig {
    pub c: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_left: Option<f64>,
    #[serde(default)]
    pub gamma_right: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Quadratic {
        a: f64,
    },
    Tent {
        slope: f64,
    },
    NormalForm {
        c: f64,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        gamma_left: Option<f64>,
        #[serde(default)]
        gamma_right: Option<f64>,
        sigma: f64,
        value: f64,
        orientation: Orientation,
    },
    Expression {
        expr: String,
        #[serde(default)]
        derivative: Option<String>,
    },
    Piecewise {
        pieces: Vec<PieceConfig>,
    },
    AffineConjugate {
        scale: f64,
        shift: f64,
        inner: Box<FamilyConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub interval: [f64; 2],
    pub family: FamilyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_depth")]
    pub postcritical_depth: usize,
    #[serde(default = "one")]
    pub postcritical_offset: usize,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self { radii: default_radii(), postcritical_depth: default_depth(), postcritical_offset: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateConfig {
    #[serde(default)]
    pub chart_radii: Vec<f64>,
    #[serde(default = "default_collar")]
    pub collar: f64,
}

impl Default for CoordinateConfig {
    fn default() -> Self {
        Self { chart_radii: Vec::new(), collar: default_collar() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n_max: usize,
    #[serde(default = "default_pairs")]
    pub pairs_per_sequence: usize,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_holder_samples")]
    pub holder_samples: usize,
    #[serde(default = "default_holder_samples")]
    pub expansion_samples: usize,
    #[serde(default = "default_expansion_steps")]
    pub expansion_steps: usize,
    /// Root intervals `I_0` of the enumerated sequences.
    pub roots: Vec<[f64; 2]>,
    /// Run the three-product diagnostics on the first pair of every sequence.
    #[serde(default = "yes")]
    pub three_products: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir(), format: OutputFormat::Json }
    }
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_fd_step() -> f64 {
    1e-6
}
fn default_radii() -> Vec<f64> {
    vec![0.1]
}
fn default_depth() -> usize {
    100
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_collar() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    1.0
}
fn default_pairs() -> usize {
    50
}
fn default_safety() -> f64 {
    1.5
}
fn default_holder_samples() -> usize {
    2000
}
fn default_expansion_steps() -> usize {
    30
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.verification;
        let finite = |name: &str, x: f64| if x.is_finite() { Ok(()) } else { Err(config_err(format!("{name} must be finite"))) };
        let [lo, hi] = self.map.domain;
        finite("map.domain", lo)?;
        finite("map.domain", hi)?;
        if !(lo < hi) {
            return Err(config_err("map.domain must satisfy lo < hi"));
        }
        if !(self.map.fd_step > 0.0 && self.map.fd_step < 1e-2 * (hi - lo)) {
            return Err(config_err("map.fd_step must lie in (0, 0.01 * domain length)"));
        }
        if self.structure.radii.is_empty() || self.structure.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(config_err("structure.radii must be a nonempty list of positive numbers"));
        }
        if self.structure.postcritical_depth == 0 || self.structure.postcritical_depth > 100_000 {
            return Err(config_err("structure.postcritical_depth must lie in 1..=100000"));
        }
        if self.structure.postcritical_offset == 0 {
            return Err(config_err("structure.postcritical_offset must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.coordinate.collar) {
            return Err(config_err("coordinate.collar must lie in [0, 1)"));
        }
        if self.coordinate.chart_radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(config_err("coordinate.chart_radii must be positive"));
        }
        if !(v.alpha > 0.0 && v.alpha <= 1.0) {
            return Err(config_err("verification.alpha must lie in (0, 1]"));
        }
        if v.n_max > 40 {
            return Err(config_err("verification.n_max must be at most 40"));
        }
        if v.pairs_per_sequence == 0 {
            return Err(config_err("verification.pairs_per_sequence must be positive"));
        }
        if !(v.safety >= 1.0 && v.safety.is_finite()) {
            return Err(config_err("verification.safety must be at least 1"));
        }
        if v.holder_samples < 1000 {
            return Err(config_err("verification.holder_samples must be at least 1000"));
        }
        if v.expansion_samples == 0 || v.expansion_steps == 0 {
            return Err(config_err("verification.expansion_samples and expansion_steps must be positive"));
        }
        if v.roots.is_empty() {
            return Err(config_err("verification.roots must not be empty"));
        }
        for [a, b] in &v.roots {
            if !(a < b && *a >= lo && *b <= hi) {
                return Err(config_err(format!("root [{a}, {b}] must be a nondegenerate interval inside the domain")));
            }
        }
        Ok(())
    }

    pub fn build_map(&self) -> Result<MapModel> {
        let family = build_family(&self.map.family)?;
        let [lo, hi] = self.map.domain;
        let mut builder = MapModel::builder(family, Interval::new(lo, hi))
            .circle_wrap(self.map.circle_wrap)
            .fd_step(self.map.fd_step);
        if let Some(points) = &self.map.critical_points {
            builder = builder.critical(points.iter().map(critical_point).collect::<Result<_>>()?);
        }
        builder.build()
    }

    pub fn structure_params(&self) -> StructureParams {
        StructureParams {
            radii: self.structure.radii.clone(),
            postcritical_depth: self.structure.postcritical_depth,
            postcritical_offset: self.structure.postcritical_offset,
        }
    }

    pub fn coordinate_params(&self) -> CoordinateParams {
        CoordinateParams { chart_radii: self.coordinate.chart_radii.clone(), collar: self.coordinate.collar }
    }

    pub fn constant_params(&self) -> ConstantParams {
        let v = &self.verification;
        ConstantParams {
            alpha: v.alpha,
            samples: v.holder_samples,
            safety: v.safety,
            seed: v.seed,
            expansion_samples: v.expansion_samples,
            expansion_steps: v.expansion_steps,
        }
    }

    pub fn roots(&self) -> Vec<Interval> {
        self.verification.roots.iter().map(|[a, b]| Interval::new(*a, *b)).collect()
    }
}

fn exponents(gamma: Option<f64>, left: Option<f64>, right: Option<f64>) -> Result<(f64, f64)> {
    match (gamma, left, right) {
        (Some(g), None, None) => Ok((g, g)),
        (None, Some(l), Some(r)) => Ok((l, r)),
        _ => Err(config_err("give either `gamma` or both `gamma_left` and `gamma_right`")),
    }
}

fn critical_point(cfg: &CriticalPointConfig) -> Result<CriticalPoint> {
    let (gamma_left, gamma_right) = exponents(cfg.gamma, cfg.gamma_left, cfg.gamma_right)?;
    Ok(CriticalPoint { c: cfg.c, gamma_left, gamma_right })
}

fn build_family(cfg: &FamilyConfig) -> Result<Family> {
    Ok(match cfg {
        FamilyConfig::Quadratic { a } => Family::Quadratic { a: *a },
        FamilyConfig::Tent { slope } => Family::Tent { slope: *slope },
        FamilyConfig::NormalForm { c, gamma, gamma_left, gamma_right, sigma, value, orientation } => {
            let (gamma_left, gamma_right) = exponents(*gamma, *gamma_left, *gamma_right)?;
            Family::NormalForm(NormalForm { c: *c, gamma_left, gamma_right, sigma: *sigma, value: *value, orientation: *orientation })
        }
        FamilyConfig::Expression { expr, derivative } => {
            Family::Expression(ExpressionMap::parse(expr, derivative.as_deref()).map_err(|e| config_err(e.to_string()))?)
        }
        FamilyConfig::Piecewise { pieces } => Family::Piecewise(
            pieces
                .iter()
                .map(|p| Ok((Interval::new(p.interval[0], p.interval[1]), build_family(&p.family)?)))
                .collect::<Result<_>>()?,
        ),
        FamilyConfig::AffineConjugate { scale, shift, inner } => {
            Family::AffineConjugate { inner: Box::new(build_family(inner)?), scale: *scale, shift: *shift }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [map]
        family = { kind = "quadratic", a = 4.0 }

        [verification]
        n_max = 3
        roots = [[0.2, 0.3]]
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.structure.radii, vec![0.1]);
        assert_eq!(cfg.verification.safety, 1.5);
        assert_eq!(cfg.verification.pairs_per_sequence, 50);
        cfg.build_map().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("a = 4.0", "a = 4.0, b = 1.0");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = format!("{MINIMAL}\nunknown = 3\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("n_max = 3", "n_max = 3\nnmax = 4");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn ranges_are_checked() {
        let bad = MINIMAL.replace("n_max = 3", "n_max = 3\nalpha = 1.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("[[0.2, 0.3]]", "[[0.3, 0.2]]");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn nested_families() {
        let text = r#"
            [map]
            family = { kind = "affine_conjugate", scale = 2.0, shift = 0.0, inner = { kind = "quadratic", a = 4.0 } }
            domain = [0.0, 2.0]

            [verification]
            n_max = 2
            roots = [[0.4, 0.6]]
        "#;
        let m = ExperimentConfig::from_toml_str(text).unwrap().build_map().unwrap();
        assert_eq!(m.critical_points()[0].c, 1.0);

        let text = r#"
            [map]
            family = { kind = "expression", expr = "x^2 * (1.0 + x)", derivative = "2.0 * x + 3.0 * x^2" }
            domain = [-0.5, 0.5]
            critical_points = [{ c = 0.0, gamma = 2.0 }]

            [verification]
            n_max = 2
            roots = [[0.2, 0.3]]
        "#;
        ExperimentConfig::from_toml_str(text).unwrap().build_map().unwrap();
    }
}
