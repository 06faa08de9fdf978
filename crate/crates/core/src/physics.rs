//! Pressure laws and hydrostatic equilibrium profiles.
//!
//! The equilibrium is parameterized by the lower-fluid density at the
//! interface. The upper interface density follows from continuity of the
//! pressure across `y3 = 0`, and each layer is then integrated outward from
//! the interface with classical RK4 applied to `d rho / dy3 = -g rho / P'(rho)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing barotropic pressure law `P(tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum PressureLaw {
    /// `P(tau) = k * tau^gamma`.
    Polytropic { k: f64, gamma: f64 },
    /// `P(tau) = slope * tau + offset`.
    Affine { slope: f64, offset: f64 },
}

impl PressureLaw {
    pub fn polytropic(k: f64, gamma: f64) -> Self {
        PressureLaw::Polytropic { k, gamma }
    }

    pub fn affine(slope: f64, offset: f64) -> Self {
        PressureLaw::Affine { slope, offset }
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        match *self {
            PressureLaw::Polytropic { k, gamma } => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(Error::field(format!("{field}.k"), "must be finite and > 0"));
                }
                if !(gamma.is_finite() && gamma >= 1.0) {
                    return Err(Error::field(
                        format!("{field}.gamma"),
                        "must be finite and >= 1",
                    ));
                }
            }
            PressureLaw::Affine { slope, offset } => {
                if !(slope.is_finite() && slope > 0.0) {
                    return Err(Error::field(
                        format!("{field}.slope"),
                        "must be finite and > 0",
                    ));
                }
                if !(offset.is_finite() && offset >= 0.0) {
                    return Err(Error::field(
                        format!("{field}.offset"),
                        "must be finite and >= 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Pressure only; `tau` must be positive.
    pub fn pressure(&self, tau: f64) -> Result<f64> {
        eval_pressure(self, tau).map(|(p, _)| p)
    }

    /// Derivative `P'(tau)`; `tau` must be positive.
    pub fn derivative(&self, tau: f64) -> Result<f64> {
        eval_pressure(self, tau).map(|(_, dp)| dp)
    }
}

/// Evaluates `(P(tau), P'(tau))`.
pub fn eval_pressure(law: &PressureLaw, tau: f64) -> Result<(f64, f64)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("density must be positive, got {tau}")));
    }
    let (p, dp) = match *law {
        PressureLaw::Polytropic { k, gamma } => {
            (k * tau.powf(gamma), k * gamma * tau.powf(gamma - 1.0))
        }
        PressureLaw::Affine { slope, offset } => (slope * tau + offset, slope),
    };
    if !(p > 0.0 && dp > 0.0 && p.is_finite() && dp.is_finite()) {
        return Err(Error::Domain(format!(
            "pressure law not positive and increasing at tau = {tau}"
        )));
    }
    Ok((p, dp))
}

/// Physical parameters of the two-fluid slab.
///
/// Indices `plus`/`minus` refer to the upper (`0 < y3 < h_plus`) and lower
/// (`h_minus < y3 < 0`) fluid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub g: f64,
    /// Surface-tension coefficient.
    pub theta: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub zeta_plus: f64,
    pub zeta_minus: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    pub p_plus: PressureLaw,
    pub p_minus: PressureLaw,
    pub rho_minus_at_interface: f64,
}

impl FluidConfig {
    pub fn validate(&self) -> Result<()> {
        fn finite(field: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::field(field, "must be finite"))
            }
        }
        finite("g", self.g)?;
        if self.g < 0.0 {
            return Err(Error::field("g", "must be >= 0"));
        }
        finite("theta", self.theta)?;
        if self.theta < 0.0 {
            return Err(Error::field("theta", "must be >= 0"));
        }
        for (name, v) in [("mu_plus", self.mu_plus), ("mu_minus", self.mu_minus)] {
            finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::field(name, "shear viscosity must be > 0"));
            }
        }
        for (name, v) in [("zeta_plus", self.zeta_plus), ("zeta_minus", self.zeta_minus)] {
            finite(name, v)?;
            if v < 0.0 {
                return Err(Error::field(name, "bulk viscosity must be >= 0"));
            }
        }
        finite("h_minus", self.h_minus)?;
        finite("h_plus", self.h_plus)?;
        if self.h_minus >= 0.0 {
            return Err(Error::field("h_minus", "must be < 0"));
        }
        if self.h_plus <= 0.0 {
            return Err(Error::field("h_plus", "must be > 0"));
        }
        self.p_plus.validate("p_plus")?;
        self.p_minus.validate("p_minus")?;
        finite("rho_minus_at_interface", self.rho_minus_at_interface)?;
        if self.rho_minus_at_interface <= 0.0 {
            return Err(Error::field("rho_minus_at_interface", "must be > 0"));
        }
        Ok(())
    }

    pub(crate) fn mu(&self, side: Side) -> f64 {
        match side {
            Side::Lower => self.mu_minus,
            Side::Upper => self.mu_plus,
        }
    }

    pub(crate) fn zeta(&self, side: Side) -> f64 {
        match side {
            Side::Lower => self.zeta_minus,
            Side::Upper => self.zeta_plus,
        }
    }

    pub(crate) fn law(&self, side: Side) -> &PressureLaw {
        match side {
            Side::Lower => &self.p_minus,
            Side::Upper => &self.p_plus,
        }
    }
}

/// Which fluid layer a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

/// Samples on one layer, ordered by increasing `y3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSamples {
    pub y: Vec<f64>,
    pub rho: Vec<f64>,
    /// `P'(rho) * rho` at each sample.
    pub pprime_rho: Vec<f64>,
}

impl LayerSamples {
    fn interp(&self, values: &[f64], y: f64) -> f64 {
        let n = self.y.len();
        let (a, b) = (self.y[0], self.y[n - 1]);
        let h = (b - a) / (n - 1) as f64;
        let pos = ((y - a) / h).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    }

    pub fn spacing(&self) -> f64 {
        (self.y[self.y.len() - 1] - self.y[0]) / (self.y.len() - 1) as f64
    }
}

/// Sampled hydrostatic equilibrium on both layers.
///
/// The interface station `y3 = 0` appears in both layers, carrying the
/// one-sided densities `rho(0-)` and `rho(0+)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumProfile {
    pub lower: LayerSamples,
    pub upper: LayerSamples,
    pub jump_rho: f64,
    pub g: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    pub p_minus: PressureLaw,
    pub p_plus: PressureLaw,
}

impl EquilibriumProfile {
    pub fn layer(&self, side: Side) -> &LayerSamples {
        match side {
            Side::Lower => &self.lower,
            Side::Upper => &self.upper,
        }
    }

    /// Piecewise-linear interpolant of the density on the given side.
    pub fn rho_at(&self, y: f64, side: Side) -> f64 {
        let layer = self.layer(side);
        layer.interp(&layer.rho, y)
    }

    /// Piecewise-linear interpolant of `P'(rho) rho` on the given side.
    pub fn pprime_rho_at(&self, y: f64, side: Side) -> f64 {
        let layer = self.layer(side);
        layer.interp(&layer.pprime_rho, y)
    }

    pub fn rho_interface_lower(&self) -> f64 {
        *self.lower.rho.last().expect("non-empty layer")
    }

    pub fn rho_interface_upper(&self) -> f64 {
        self.upper.rho[0]
    }

    /// Mismatch `|P+(rho(0+)) - P-(rho(0-))|`.
    pub fn pressure_mismatch(&self) -> f64 {
        let pp = self.p_plus.pressure(self.rho_interface_upper()).unwrap_or(f64::NAN);
        let pm = self.p_minus.pressure(self.rho_interface_lower()).unwrap_or(f64::NAN);
        (pp - pm).abs()
    }

    /// Maximum over interior samples of `|d P(rho)/dy3 + g rho|`, using
    /// centred differences within each layer.
    pub fn hydrostatic_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (layer, law) in [(&self.lower, &self.p_minus), (&self.upper, &self.p_plus)] {
            let h = layer.spacing();
            let p: Vec<f64> = layer
                .rho
                .iter()
                .map(|&r| law.pressure(r).unwrap_or(f64::NAN))
                .collect();
            for i in 1..p.len() - 1 {
                let r = (p[i + 1] - p[i - 1]) / (2.0 * h) + self.g * layer.rho[i];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    pub fn min_density(&self) -> f64 {
        self.lower
            .rho
            .iter()
            .chain(self.upper.rho.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Returns `rho(0+) - rho(0-)`.
pub fn interface_jump(profile: &EquilibriumProfile) -> f64 {
    profile.rho_interface_upper() - profile.rho_interface_lower()
}

fn match_interface_density(law: &PressureLaw, target: f64, scale: f64) -> Result<f64> {
    let mut lo = 1e-12 * scale;
    if law.pressure(lo)? > target {
        return Err(Error::Config(format!(
            "upper pressure law exceeds the interface pressure {target} at every admissible density"
        )));
    }
    let mut hi = scale;
    let mut grow = 0;
    while law.pressure(hi)? < target {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return Err(Error::Config(
                "interface pressure matching failed to bracket a root".into(),
            ));
        }
    }
    for _ in 0..400 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if law.pressure(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn integrate_layer(
    law: &PressureLaw,
    g: f64,
    rho0: f64,
    extent: f64,
    nodes: usize,
    side: Side,
) -> Result<Vec<f64>> {
    let steps = nodes - 1;
    let dy = extent / steps as f64;
    let rhs = |rho: f64| -> Result<f64> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Config(format!(
                "vacuum reached in the {side:?} layer before the slab boundary"
            )));
        }
        Ok(-g * rho / law.derivative(rho)?)
    };
    let mut out = Vec::with_capacity(nodes);
    out.push(rho0);
    let mut rho = rho0;
    for _ in 0..steps {
        let k1 = rhs(rho)?;
        let k2 = rhs(rho + 0.5 * dy * k1)?;
        let k3 = rhs(rho + 0.5 * dy * k2)?;
        let k4 = rhs(rho + dy * k3)?;
        rho += dy / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Config(format!(
                "vacuum reached in the {side:?} layer before the slab boundary"
            )));
        }
        out.push(rho);
    }
    Ok(out)
}

/// Builds the hydrostatic equilibrium with `nodes_per_layer` uniformly spaced
/// samples on each layer (interface and slab boundary included).
pub fn build_equilibrium(cfg: &FluidConfig, nodes_per_layer: usize) -> Result<EquilibriumProfile> {
    cfg.validate()?;
    if nodes_per_layer < 8 {
        return Err(Error::field("nodes_per_layer", "must be >= 8"));
    }
    let rho_minus0 = cfg.rho_minus_at_interface;
    let target = cfg.p_minus.pressure(rho_minus0)?;
    let rho_plus0 = match_interface_density(&cfg.p_plus, target, rho_minus0)?;
    let jump = rho_plus0 - rho_minus0;
    if jump <= 0.0 {
        return Err(Error::Config(format!(
            "Rayleigh-Taylor condition violated: density jump {jump:e} is not positive"
        )));
    }

    let upper_rho = integrate_layer(&cfg.p_plus, cfg.g, rho_plus0, cfg.h_plus, nodes_per_layer, Side::Upper)?;
    let mut lower_rho =
        integrate_layer(&cfg.p_minus, cfg.g, rho_minus0, cfg.h_minus, nodes_per_layer, Side::Lower)?;
    lower_rho.reverse();

    let ys = |a: f64, b: f64| -> Vec<f64> {
        (0..nodes_per_layer)
            .map(|i| a + (b - a) * i as f64 / (nodes_per_layer - 1) as f64)
            .collect()
    };
    let mut lower_y = ys(cfg.h_minus, 0.0);
    lower_y[nodes_per_layer - 1] = 0.0;
    let upper_y = ys(0.0, cfg.h_plus);

    let pr = |law: &PressureLaw, rho: &[f64]| -> Result<Vec<f64>> {
        rho.iter().map(|&r| Ok(law.derivative(r)? * r)).collect()
    };
    let profile = EquilibriumProfile {
        lower: LayerSamples {
            pprime_rho: pr(&cfg.p_minus, &lower_rho)?,
            y: lower_y,
            rho: lower_rho,
        },
        upper: LayerSamples {
            pprime_rho: pr(&cfg.p_plus, &upper_rho)?,
            y: upper_y,
            rho: upper_rho,
        },
        jump_rho: jump,
        g: cfg.g,
        h_minus: cfg.h_minus,
        h_plus: cfg.h_plus,
        p_minus: cfg.p_minus,
        p_plus: cfg.p_plus,
    };

    let mismatch = profile.pressure_mismatch();
    if !(mismatch <= 1e-10 * target.max(1.0)) {
        return Err(Error::Numerical(format!(
            "interface pressure mismatch {mismatch:e} exceeds tolerance"
        )));
    }
    Ok(profile)
}
