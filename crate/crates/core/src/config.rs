//! Run configuration: one JSON document drives every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dispersion::{GridSpec, RaySpec};
use crate::error::{Error, Result};
use crate::physics::FluidConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: FluidConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub cutoff: CutoffConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub escape: EscapeConfig,
    #[serde(default)]
    pub periodic: Option<PeriodicConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub elements_per_layer: usize,
    pub tol: f64,
    /// Horizontal samples per wavelength for cutoff quadrature.
    pub horizontal_resolution: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            elements_per_layer: 64,
            tol: 1e-10,
            horizontal_resolution: 16,
            seed: 42,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// Magnitudes along `(r, 0)`.
    Ray,
    /// Square grid on the half plane `xi2 > 0`.
    HalfPlane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub kind: ScanKind,
    pub xi_min: f64,
    pub xi_max: Option<f64>,
    pub samples: usize,
    pub densify: bool,
    /// Golden-section steps used to sharpen the peak; 0 disables.
    pub refine_iterations: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let ray = RaySpec::default();
        ScanConfig {
            kind: ScanKind::Ray,
            xi_min: ray.xi_min,
            xi_max: ray.xi_max,
            samples: ray.samples,
            densify: ray.densify,
            refine_iterations: 24,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    /// Frequency of the reported mode; defaults to the scan argmax.
    pub xi: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffConfig {
    pub n: Vec<usize>,
    pub xi: Option<[f64; 2]>,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        CutoffConfig {
            n: vec![8, 16, 32],
            xi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    Eigenmode,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Time step; defaults to `1e-2 / lambda`.
    pub dt: Option<f64>,
    /// Final time; defaults to the time of amplification `amplification`.
    pub horizon: Option<f64>,
    pub amplification: f64,
    pub initial: InitialData,
    pub xi: Option<[f64; 2]>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            dt: None,
            horizon: None,
            amplification: 1e4,
            initial: InitialData::Eigenmode,
            xi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        EscapeConfig {
            epsilon: 1.0,
            delta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicConfig {
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub frequencies: usize,
    pub trials_per_frequency: usize,
    pub symmetry_pairs: usize,
    pub alpha_grid: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            frequencies: 20,
            trials_per_frequency: 10,
            symmetry_pairs: 10,
            alpha_grid: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("rt-spectra-out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

const LAW_KEYS: &[&str] = &["family", "k", "gamma", "slope", "offset"];

fn known_keys(path: &str) -> Option<&'static [&'static str]> {
    Some(match path {
        "" => &[
            "physics", "numerics", "scan", "mode", "cutoff", "evolve", "escape", "periodic",
            "verify", "outputs",
        ],
        "physics" => &[
            "g",
            "theta",
            "mu_plus",
            "mu_minus",
            "zeta_plus",
            "zeta_minus",
            "h_minus",
            "h_plus",
            "p_plus",
            "p_minus",
            "rho_minus_at_interface",
        ],
        "physics.p_plus" | "physics.p_minus" => LAW_KEYS,
        "numerics" => &["elements_per_layer", "tol", "horizontal_resolution", "seed", "threads"],
        "scan" => &["kind", "xi_min", "xi_max", "samples", "densify", "refine_iterations"],
        "mode" => &["xi"],
        "cutoff" => &["n", "xi"],
        "evolve" => &["dt", "horizon", "amplification", "initial", "xi"],
        "escape" => &["epsilon", "delta"],
        "periodic" => &["l1", "l2"],
        "verify" => &["frequencies", "trials_per_frequency", "symmetry_pairs", "alpha_grid"],
        "outputs" => &["directory", "formats"],
        _ => return None,
    })
}

fn suggest(key: &str, candidates: &[&str]) -> String {
    let best = candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(key, c), *c))
        .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
    if best.0 >= 0.7 {
        format!("did you mean `{}`?", best.1)
    } else {
        format!("expected one of: {}", candidates.join(", "))
    }
}

fn walk(value: &Value, path: &str) -> Result<()> {
    let (Value::Object(map), Some(keys)) = (value, known_keys(path)) else {
        return Ok(());
    };
    for (k, v) in map {
        let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        if !keys.contains(&k.as_str()) {
            return Err(Error::field(child, format!("unknown key; {}", suggest(k, keys))));
        }
        walk(v, &child)?;
    }
    Ok(())
}

fn finite_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::field(field, "must be finite and > 0"))
    }
}

fn check_xi(field: &str, xi: Option<[f64; 2]>) -> Result<()> {
    match xi {
        Some(x) if !(x[0].is_finite() && x[1].is_finite() && x[0].hypot(x[1]) > 0.0) => {
            Err(Error::field(field, "must be finite and nonzero"))
        }
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        if !value.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        walk(&value, "")?;
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("config does not match the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate().map_err(|e| match e {
            Error::InvalidField { field, reason } => Error::InvalidField {
                field: format!("physics.{field}"),
                reason,
            },
            other => other,
        })?;
        let n = &self.numerics;
        if n.elements_per_layer < 4 {
            return Err(Error::field("numerics.elements_per_layer", "must be >= 4"));
        }
        if !(n.tol > 0.0 && n.tol < 1.0) {
            return Err(Error::field("numerics.tol", "must lie in (0, 1)"));
        }
        if n.horizontal_resolution < 16 {
            return Err(Error::field(
                "numerics.horizontal_resolution",
                "must be >= 16 samples per wavelength",
            ));
        }
        if n.threads == Some(0) {
            return Err(Error::field("numerics.threads", "must be >= 1"));
        }
        let s = &self.scan;
        finite_positive("scan.xi_min", s.xi_min)?;
        if let Some(hi) = s.xi_max {
            if !(hi.is_finite() && hi > s.xi_min) {
                return Err(Error::field("scan.xi_max", "must be finite and > xi_min"));
            }
        }
        if s.samples < 2 {
            return Err(Error::field("scan.samples", "must be >= 2"));
        }
        check_xi("mode.xi", self.mode.xi)?;
        check_xi("cutoff.xi", self.cutoff.xi)?;
        check_xi("evolve.xi", self.evolve.xi)?;
        if self.cutoff.n.is_empty() || self.cutoff.n.iter().any(|&k| k < 2) {
            return Err(Error::field("cutoff.n", "must be a nonempty list of values >= 2"));
        }
        let e = &self.evolve;
        if let Some(dt) = e.dt {
            finite_positive("evolve.dt", dt)?;
        }
        if let Some(h) = e.horizon {
            finite_positive("evolve.horizon", h)?;
        }
        if !(e.amplification.is_finite() && e.amplification > 1.0) {
            return Err(Error::field("evolve.amplification", "must be finite and > 1"));
        }
        finite_positive("escape.epsilon", self.escape.epsilon)?;
        finite_positive("escape.delta", self.escape.delta)?;
        if self.escape.delta >= self.escape.epsilon {
            return Err(Error::field("escape.delta", "must be smaller than epsilon"));
        }
        if let Some(p) = self.periodic {
            finite_positive("periodic.l1", p.l1)?;
            finite_positive("periodic.l2", p.l2)?;
        }
        let v = &self.verify;
        if v.frequencies == 0 || v.trials_per_frequency == 0 {
            return Err(Error::field("verify", "frequencies and trials_per_frequency must be >= 1"));
        }
        if v.alpha_grid < 2 {
            return Err(Error::field("verify.alpha_grid", "must be >= 2"));
        }
        if self.outputs.formats.is_empty() {
            return Err(Error::field("outputs.formats", "must name at least one format"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            elements_per_layer: self.numerics.elements_per_layer,
            tol: self.numerics.tol,
        }
    }

    pub fn ray_spec(&self) -> RaySpec {
        RaySpec {
            xi_min: self.scan.xi_min,
            xi_max: self.scan.xi_max,
            samples: self.scan.samples,
            densify: self.scan.densify,
        }
    }

    /// Pretty JSON of the effective configuration, defaults included.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Reads, parses, and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn minimal() -> Value {
        json!({
            "physics": {
                "g": 1.0, "theta": 0.0,
                "mu_plus": 0.1, "mu_minus": 0.1, "zeta_plus": 0.1, "zeta_minus": 0.1,
                "h_minus": -1.0, "h_plus": 1.0,
                "p_plus": {"family": "affine", "slope": 1.0, "offset": 0.0},
                "p_minus": {"family": "affine", "slope": 2.0, "offset": 0.0},
                "rho_minus_at_interface": 1.0
            }
        })
    }

    #[test]
    fn defaults_are_filled() {
        let cfg = RunConfig::from_value(minimal()).unwrap();
        assert_eq!(cfg.numerics.elements_per_layer, 64);
        assert_eq!(cfg.numerics.tol, 1e-10);
        assert_eq!(cfg.scan.samples, 64);
        assert_eq!(cfg.scan.kind, ScanKind::Ray);
        assert_eq!(cfg.numerics.seed, 42);
        assert!(cfg.periodic.is_none());
    }

    #[test]
    fn negative_viscosity_names_field() {
        let mut v = minimal();
        v["physics"]["mu_plus"] = json!(-0.1);
        match RunConfig::from_value(v) {
            Err(Error::InvalidField { field, .. }) => assert_eq!(field, "physics.mu_plus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_gets_suggestion() {
        let mut v = minimal();
        v["physics"]["viscocity"] = json!(0.1);
        let err = RunConfig::from_value(v).unwrap_err();
        assert!(err.is_config());
        let msg = err.to_string();
        assert!(msg.contains("physics.viscocity"), "{msg}");
        assert!(msg.contains("expected one of") || msg.contains("did you mean"), "{msg}");

        let mut v = minimal();
        v["numerics"] = json!({"elements_per_layr": 8});
        let msg = RunConfig::from_value(v).unwrap_err().to_string();
        assert!(msg.contains("did you mean `elements_per_layer`"), "{msg}");
    }

    #[test]
    fn evolve_dt_zero_rejected() {
        let mut v = minimal();
        v["evolve"] = json!({"dt": 0.0});
        match RunConfig::from_value(v) {
            Err(Error::InvalidField { field, .. }) => assert_eq!(field, "evolve.dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coarse_resolution_rejected() {
        let mut v = minimal();
        v["numerics"] = json!({"horizontal_resolution": 8});
        assert!(RunConfig::from_value(v).unwrap_err().is_config());
    }

    #[test]
    fn canonical_echo_round_trips() {
        let mut v = minimal();
        v["periodic"] = json!({"l1": 1.0, "l2": 2.0});
        let cfg = RunConfig::from_value(v).unwrap();
        let echo = cfg.canonical_json();
        let back = RunConfig::from_json(&echo).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.canonical_json(), echo);
    }

    #[test]
    fn schema_table_covers_every_field() {
        let mut v = minimal();
        v["periodic"] = json!({"l1": 1.0, "l2": 2.0});
        let full: Value = serde_json::from_str(&RunConfig::from_value(v).unwrap().canonical_json()).unwrap();
        fn check(v: &Value, path: &str) {
            if let (Value::Object(m), Some(keys)) = (v, known_keys(path)) {
                for (k, c) in m {
                    assert!(keys.contains(&k.as_str()), "{path}.{k}");
                    check(c, &if path.is_empty() { k.clone() } else { format!("{path}.{k}") });
                }
            }
        }
        check(&full, "");
        assert!(walk(&full, "").is_ok());
    }
}
