//! Declarative suite configuration, read from TOML and validated before any
//! computation starts.

use serde::{Deserialize, Serialize};
use stable_bregman::divergence::PExponent;
use stable_bregman::forms::ExteriorData;
use stable_bregman::functions::{handle, AnnulusBump, AnnulusLevels, AnnulusSupport, TruncatedPower};
use stable_bregman::kernels::{BallDomain, StableKernel};
use stable_bregman::quadrature::QuadratureConfig;
use stable_bregman::variational::{MAX_CELLS, MIN_RESOLUTION};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Douglas,
    HardyStein,
    Inequalities,
    Minimize,
    Nonminimizer,
    Divergence,
    All,
}

impl SuiteName {
    pub const EVERY: [SuiteName; 7] = [
        SuiteName::Douglas,
        SuiteName::HardyStein,
        SuiteName::Inequalities,
        SuiteName::Minimize,
        SuiteName::Nonminimizer,
        SuiteName::Divergence,
        SuiteName::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteName::Douglas => "douglas",
            SuiteName::HardyStein => "hardy-stein",
            SuiteName::Inequalities => "inequalities",
            SuiteName::Minimize => "minimize",
            SuiteName::Nonminimizer => "nonminimizer",
            SuiteName::Divergence => "divergence",
            SuiteName::All => "all",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            SuiteName::Douglas => "Douglas identity, full-space variant, harmonicity, smooth-function identity",
            SuiteName::HardyStein => "Hardy-Stein identity and mean exit time by Monte Carlo",
            SuiteName::Inequalities => "quadratic comparison of F_p, comparison of forms, W-extension constant",
            SuiteName::Minimize => "discrete minimizers, quasiminimizer ratios, W-form refinement",
            SuiteName::Nonminimizer => "positive remainder for truncated-power data, harmonic control",
            SuiteName::Divergence => "moment identities, p-moment bounds, increment constants",
            SuiteName::All => "every suite above, in order",
        }
    }

    /// Concrete suites this name stands for.
    pub fn expand(self) -> Vec<SuiteName> {
        match self {
            SuiteName::All => SuiteName::EVERY[..6].to_vec(),
            s => vec![s],
        }
    }
}

impl std::fmt::Display for SuiteName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts `alpha = 1.0` as well as `alpha = [0.5, 1.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub d: usize,
    pub alpha: OneOrMany,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { d: 1, alpha: OneOrMany::Many(vec![0.5, 1.0, 1.5]) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub center: f64,
    pub radius: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { center: 0.0, radius: 1.0 }
    }
}

/// Exterior data presets, all radial about the domain center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum ExteriorPreset {
    Indicator { inner: f64, outer: f64 },
    TwoLevel { inner: f64, outer: f64, left: f64, right: f64 },
    AnnulusBump { inner: f64, outer: f64 },
    TruncatedPower { inner: f64, outer: f64, exponent: f64, cap: f64 },
}

impl ExteriorPreset {
    pub fn name(&self) -> &'static str {
        match self {
            ExteriorPreset::Indicator { .. } => "indicator",
            ExteriorPreset::TwoLevel { .. } => "two-level",
            ExteriorPreset::AnnulusBump { .. } => "annulus-bump",
            ExteriorPreset::TruncatedPower { .. } => "truncated-power",
        }
    }

    fn radii(&self) -> (f64, f64) {
        match *self {
            ExteriorPreset::Indicator { inner, outer }
            | ExteriorPreset::TwoLevel { inner, outer, .. }
            | ExteriorPreset::AnnulusBump { inner, outer }
            | ExteriorPreset::TruncatedPower { inner, outer, .. } => (inner, outer),
        }
    }

    pub fn build(&self, center: f64) -> stable_bregman::Result<ExteriorData> {
        let (inner, outer) = self.radii();
        let annulus = AnnulusSupport::new(inner, outer)?;
        let g = match *self {
            ExteriorPreset::Indicator { .. } => handle(AnnulusLevels::indicator(center, annulus)),
            ExteriorPreset::TwoLevel { left, right, .. } => handle(AnnulusLevels { center, annulus, left, right }),
            ExteriorPreset::AnnulusBump { .. } => handle(AnnulusBump { center, annulus }),
            ExteriorPreset::TruncatedPower { exponent, cap, .. } => {
                handle(TruncatedPower { center, annulus, exponent, cap })
            }
        };
        Ok(ExteriorData::new(g))
    }

    fn problems(&self, radius: f64) -> Vec<String> {
        let (inner, outer) = self.radii();
        let mut out = Vec::new();
        // supports stay half a radius away from the domain
        if !(inner >= 1.5 * radius && outer > inner && outer.is_finite()) {
            out.push(format!(
                "{}: need 1.5 * radius <= inner < outer < inf, got inner = {inner}, outer = {outer}",
                self.name()
            ));
        }
        match *self {
            ExteriorPreset::TwoLevel { left, right, .. } if !(left.is_finite() && right.is_finite()) => {
                out.push("two-level: levels must be finite".into())
            }
            ExteriorPreset::TruncatedPower { exponent, cap, .. } if !(exponent > 0.0 && cap > 0.0 && cap.is_finite()) => {
                out.push("truncated-power: exponent and cap must be positive".into())
            }
            _ => {}
        }
        out
    }
}

fn default_presets() -> Vec<ExteriorPreset> {
    vec![
        ExteriorPreset::Indicator { inner: 1.5, outer: 2.0 },
        ExteriorPreset::TwoLevel { inner: 1.5, outer: 2.0, left: 1.0, right: -0.5 },
        ExteriorPreset::AnnulusBump { inner: 1.5, outer: 2.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub tail_cut: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self { rel_tol: 1e-6, abs_tol: 1e-10, tail_cut: 1e4, max_subdivisions: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n: usize,
    pub seed: u64,
    /// Starting point, relative to the domain center.
    pub x: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { n: 100_000, seed: 1, x: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Cells across the domain.
    pub resolution: usize,
    /// Box, relative to the domain center.
    #[serde(rename = "box")]
    pub bbox: [f64; 2],
    /// Resolutions for the W-form refinement study.
    pub refinement: Vec<usize>,
    /// Random sub-intervals per quasiminimizer test.
    pub trials: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { resolution: 64, bbox: [-2.0, 2.0], refinement: vec![32, 64, 128, 256], trials: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonminimizerSection {
    /// Inner and outer radius of the annulus carrying the truncated power.
    pub inner: f64,
    pub outer: f64,
    /// Truncation levels.
    pub n: Vec<f64>,
}

impl Default for NonminimizerSection {
    fn default() -> Self {
        Self { inner: 2.0, outer: 3.0, n: vec![1.0, 10.0, 100.0, 1000.0, 10000.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub report: String,
    pub tables: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("sbverify-out"), report: "reports.jsonl".into(), tables: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: SuiteName,
    pub kernel: KernelSection,
    pub domain: DomainSection,
    pub p: Vec<f64>,
    pub g: Vec<ExteriorPreset>,
    pub quadrature: QuadratureSection,
    pub mc: McSection,
    pub grid: GridSection,
    pub nonminimizer: NonminimizerSection,
    pub output: OutputSection,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            suite: SuiteName::All,
            kernel: KernelSection::default(),
            domain: DomainSection::default(),
            p: vec![1.5, 2.0, 3.0],
            g: default_presets(),
            quadrature: QuadratureSection::default(),
            mc: McSection::default(),
            grid: GridSection::default(),
            nonminimizer: NonminimizerSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SuiteConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.kernel.alpha.values()
    }

    pub fn exponents(&self) -> Vec<PExponent> {
        self.p.iter().filter_map(|&p| PExponent::new(p).ok()).collect()
    }

    pub fn kernel(&self, alpha: f64) -> stable_bregman::Result<StableKernel> {
        StableKernel::new(self.kernel.d, alpha)
    }

    pub fn domain(&self) -> stable_bregman::Result<BallDomain> {
        BallDomain::interval(self.domain.center, self.domain.radius)
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        let q = &self.quadrature;
        QuadratureConfig {
            rel_tol: q.rel_tol,
            abs_tol: q.abs_tol,
            tail_cut: q.tail_cut,
            max_subdivisions: q.max_subdivisions,
            ..Default::default()
        }
    }

    /// Absolute grid box.
    pub fn grid_box(&self) -> (f64, f64) {
        (self.domain.center + self.grid.bbox[0], self.domain.center + self.grid.bbox[1])
    }

    /// Every problem with the config, or `Ok` when it is usable as is.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.kernel.d != 1 {
            errs.push(format!("kernel.d = {}: the suites run on intervals, d must be 1", self.kernel.d));
        }
        let alphas = self.alphas();
        if alphas.is_empty() {
            errs.push("kernel.alpha: at least one value is needed".into());
        }
        for a in &alphas {
            if !(*a > 0.0 && *a < 2.0) {
                errs.push(format!("kernel.alpha = {a}: must lie in (0, 2)"));
            }
        }
        let DomainSection { center, radius } = self.domain;
        if !(center.is_finite() && radius > 0.0 && radius.is_finite()) {
            errs.push(format!("domain: need a finite center and positive radius, got center = {center}, radius = {radius}"));
        }
        if self.p.is_empty() {
            errs.push("p: at least one exponent is needed".into());
        }
        for p in &self.p {
            if PExponent::new(*p).is_err() {
                errs.push(format!("p = {p}: exponents must be finite and greater than 1"));
            }
        }
        if self.g.is_empty() {
            errs.push("g: at least one exterior preset is needed".into());
        }
        for g in &self.g {
            errs.extend(g.problems(radius).into_iter().map(|e| format!("g.{e}")));
        }
        if let Err(e) = self.quadrature().validate() {
            errs.push(format!("quadrature: {e}"));
        }
        if self.mc.n == 0 {
            errs.push("mc.n must be positive".into());
        }
        if !(self.mc.x.abs() < radius) {
            errs.push(format!("mc.x = {}: the starting point must lie inside the domain", self.mc.x));
        }
        let [lo, hi] = self.grid.bbox;
        if !(lo < -radius && hi > radius) {
            errs.push(format!("grid.box = [{lo}, {hi}]: must strictly contain [-{radius}, {radius}]"));
        }
        for g in &self.g {
            if g.radii().1 > hi.min(-lo) {
                errs.push(format!("grid.box = [{lo}, {hi}]: must contain the support of {}", g.name()));
            }
        }
        let cells_per_unit = |res: usize| res as f64 / (2.0 * radius);
        for &res in std::iter::once(&self.grid.resolution).chain(&self.grid.refinement) {
            if res < MIN_RESOLUTION {
                errs.push(format!("grid resolution {res} is below {MIN_RESOLUTION}"));
            } else if cells_per_unit(res) * (hi - lo) > MAX_CELLS as f64 {
                errs.push(format!("grid resolution {res} over the box exceeds {MAX_CELLS} cells"));
            }
        }
        if self.grid.trials == 0 {
            errs.push("grid.trials must be positive".into());
        }
        let nm = &self.nonminimizer;
        if !(nm.inner > center.abs() + radius && nm.outer > nm.inner && nm.outer.is_finite()) {
            errs.push(format!(
                "nonminimizer: need |center| + radius < inner < outer < inf, got inner = {}, outer = {}",
                nm.inner, nm.outer
            ));
        }
        if nm.n.is_empty() || nm.n.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            errs.push("nonminimizer.n: need a nonempty list of positive levels".into());
        }
        if self.output.report.is_empty() {
            errs.push("output.report must name a file".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SuiteConfig::default().validate().unwrap();
        let cfg = SuiteConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SuiteConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = SuiteConfig::from_toml_str(
            r#"
            suite = "hardy-stein"
            p = [2.0, 3.0]
            [kernel]
            alpha = 1.0
            [[g]]
            preset = "two-level"
            inner = 1.5
            outer = 1.75
            left = 1.0
            right = 2.0
            [mc]
            n = 1000
            seed = 9
            "#,
        )
        .unwrap();
        assert_eq!(cfg.suite, SuiteName::HardyStein);
        assert_eq!(cfg.alphas(), vec![1.0]);
        assert_eq!(cfg.g.len(), 1);
        assert_eq!(cfg.mc.seed, 9);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[kernel]\nalpha = 2.5",
            "p = [0.5]",
            "suite = \"nope\"",
            "[[g]]\npreset = \"mystery\"\ninner = 2.0\nouter = 3.0",
            "[[g]]\npreset = \"indicator\"\ninner = 1.2\nouter = 1.8",
            "[grid]\nbox = [-0.5, 3.0]",
            "[quadrature]\nrel_tol = 0.0",
            "unknown_key = 1",
        ] {
            assert!(SuiteConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn all_expands_to_the_six_suites() {
        let s = SuiteName::All.expand();
        assert_eq!(s.len(), 6);
        assert!(!s.contains(&SuiteName::All));
    }
}
