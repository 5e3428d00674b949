//! Experiment configuration: JSON schema, defaults and validation.

use std::path::{Path, PathBuf};

use anyon_core::afm::Schedule;
use anyon_core::fields::{ExternalField, TrapPotential};
use anyon_core::Grid2D;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Minimize,
    Rstudy,
    Verify,
    Fewbody,
    Weyl,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Minimize => "minimize",
            Suite::Rstudy => "rstudy",
            Suite::Verify => "verify",
            Suite::Fewbody => "fewbody",
            Suite::Weyl => "weyl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub side: f64,
    pub n: usize,
}

impl GridSpec {
    pub const fn new(side: f64, n: usize) -> Self {
        Self { side, n }
    }

    pub fn build(&self) -> anyon_core::Result<Grid2D> {
        Grid2D::new(self.side, self.n)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(8.0, 128)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub step: f64,
    pub max_iter: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        let s = Schedule::default();
        Self { step: s.step, max_iter: s.max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeSpec {
    /// Random states on which nonnegativity of the energy is checked.
    pub positivity_states: usize,
    /// Random directions for the finite-difference gradient check.
    pub gradient_directions: usize,
    pub export: bool,
}

impl Default for MinimizeSpec {
    fn default() -> Self {
        Self { positivity_states: 100, gradient_directions: 20, export: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RStudySpec {
    /// Accepted interval for the fitted log-log slope.
    pub slope_band: [f64; 2],
}

impl Default for RStudySpec {
    fn default() -> Self {
        Self { slope_band: [0.7, 1.3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelChecks {
    pub exponents: Vec<f64>,
    pub radii: Vec<f64>,
}

impl Default for KernelChecks {
    fn default() -> Self {
        Self { exponents: vec![3.0, 4.0, 8.0], radii: dyadic(1.0, 7) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryChecks {
    pub samples: usize,
    pub radii: Vec<f64>,
}

impl Default for GeometryChecks {
    fn default() -> Self {
        Self { samples: 100_000, radii: vec![0.01, 0.1, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardyChecks {
    pub tests: usize,
    pub samples: usize,
    pub triangles: usize,
}

impl Default for HardyChecks {
    fn default() -> Self {
        Self { tests: 20, samples: 1_000_000, triangles: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormChecks {
    pub radii: Vec<f64>,
    pub family: usize,
    #[serde(rename = "L")]
    pub side: f64,
    /// Field used for the robustness comparison of the mixed term.
    pub field: ExternalField,
}

impl Default for FormChecks {
    fn default() -> Self {
        Self {
            radii: dyadic(0.25, 5),
            family: 16,
            side: 4.0,
            field: ExternalField::with_bumps(
                1.0,
                vec![anyon_core::fields::GaussianBump { center: [0.3, -0.2], amplitude: 1.0, width: 0.5 }],
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateChecks {
    pub cases: usize,
    pub grid: GridSpec,
}

impl Default for StateChecks {
    fn default() -> Self {
        Self { cases: 50, grid: GridSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub kernel: KernelChecks,
    pub geometry: GeometryChecks,
    pub hardy: HardyChecks,
    pub forms: FormChecks,
    pub diamagnetic: StateChecks,
    pub magnetic: StateChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FewBodySpec {
    pub grid: GridSpec,
    pub betas: Vec<f64>,
    #[serde(rename = "R_list")]
    pub radii: Vec<f64>,
    pub point_cap: usize,
    /// Allowed relative spread of the a-priori ratio across radii.
    pub apriori_spread: f64,
    pub export: bool,
}

impl Default for FewBodySpec {
    fn default() -> Self {
        Self {
            grid: GridSpec::new(4.0, 32),
            betas: vec![0.0, 0.25, 0.5, 1.0],
            radii: vec![0.5, 0.25],
            point_cap: anyon_core::fewbody::DEFAULT_POINT_CAP,
            apriori_spread: 0.2,
            export: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeylSpec {
    pub grid: GridSpec,
    pub cutoffs: Vec<f64>,
    /// Allowed deviation of the fitted exponent from `1 + 2/s`.
    pub exponent_tol: f64,
}

impl Default for WeylSpec {
    fn default() -> Self {
        Self { grid: GridSpec::new(16.0, 64), cutoffs: vec![11.0, 21.0, 31.0, 41.0], exponent_tol: 0.2 }
    }
}

fn default_radius() -> f64 {
    0.25
}

fn default_radii() -> Vec<f64> {
    dyadic(0.5, 5)
}

fn default_tol() -> f64 {
    1e-8
}

/// `start, start/2, …` with `count` entries.
pub fn dyadic(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start / f64::from(1u32 << k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub suite: Option<Suite>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub field: ExternalField,
    #[serde(default)]
    pub trap: TrapPotential,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_radius", rename = "R")]
    pub radius: f64,
    #[serde(default = "default_radii", rename = "R_list")]
    pub radii: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub minimize: MinimizeSpec,
    #[serde(default)]
    pub rstudy: RStudySpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub fewbody: FewBodySpec,
    #[serde(default)]
    pub weyl: WeylSpec,
}

impl ExperimentConfig {
    /// Minimizer schedule with the configured gradient tolerance.
    pub fn schedule(&self) -> Schedule {
        Schedule { step: self.schedule.step, max_iter: self.schedule.max_iter, tol: self.tol }
    }

    pub fn suite(&self) -> Result<Suite, CliError> {
        self.suite.ok_or_else(|| CliError::Config("no suite selected".into()))
    }

    /// Structural checks that need no computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for (name, g) in [
            ("grid", self.grid),
            ("fewbody.grid", self.fewbody.grid),
            ("weyl.grid", self.weyl.grid),
            ("verify.diamagnetic.grid", self.verify.diamagnetic.grid),
            ("verify.magnetic.grid", self.verify.magnetic.grid),
        ] {
            if let Err(e) = g.build() {
                return bad(format!("{name}: {e}"));
            }
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol: must be positive, got {}", self.tol));
        }
        if !self.beta.is_finite() {
            return bad("beta: must be finite".into());
        }
        if !(self.radius > 0.0) {
            return bad(format!("R: must be positive, got {}", self.radius));
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("R_list: needs positive entries".into());
        }
        for w in self.radii.windows(2) {
            if (w[0] / w[1] - 2.0).abs() > 1e-12 {
                return bad(format!("R_list: must be dyadic decreasing, found {} then {}", w[0], w[1]));
            }
        }
        if let Err(e) = TrapPotential::new(self.trap.c, self.trap.s, self.trap.offset) {
            return bad(format!("trap: {e}"));
        }
        let [lo, hi] = self.rstudy.slope_band;
        if !(lo <= hi) {
            return bad("rstudy.slope_band: lower end exceeds upper end".into());
        }
        Ok(())
    }
}

/// Where a configuration came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub sha256: String,
}

/// Reads, schema-checks and validates a JSON experiment file.
pub fn parse_config(path: &Path) -> Result<(ExperimentConfig, Provenance), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("{}: not UTF-8: {e}", path.display())))?;
    let cfg = parse_str(text)?;
    let provenance = Provenance { path: path.display().to_string(), sha256: format!("{:x}", Sha256::digest(&bytes)) };
    Ok((cfg, provenance))
}

/// Schema check of an in-memory document; errors name the offending path.
pub fn parse_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_str(r#"{"suite": "minimize"}"#).unwrap();
        assert_eq!(cfg.grid, GridSpec::new(8.0, 128));
        assert_eq!(cfg.tol, 1e-8);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.suite, Some(Suite::Minimize));
        assert_eq!(cfg.radii, vec![0.5, 0.25, 0.125, 0.0625, 0.03125]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_str(r#"{"suite": "minimize", "betaa": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("betaa"), "{err}");
        let nested = parse_str(r#"{"verify": {"hardy": {"sample": 3}}}"#).unwrap_err();
        assert!(nested.to_string().contains("verify.hardy"), "{nested}");
    }

    #[test]
    fn structural_errors() {
        assert!(parse_str(r#"{"grid": {"L": 8, "n": 100}}"#).is_err());
        assert!(parse_str(r#"{"R_list": [0.5, 0.2]}"#).is_err());
        assert!(parse_str(r#"{"trap": {"s": -1}}"#).is_err());
        assert!(parse_str(r#"{"suite": "bogus"}"#).is_err());
    }

    #[test]
    fn hash_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "{}").unwrap();
        let (_, prov) = parse_config(&p).unwrap();
        assert_eq!(prov.sha256, "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a");
        assert!(matches!(parse_config(&dir.path().join("missing.json")), Err(CliError::Config(_))));
    }
}
