//! Frequency scans, the largest growth rate, and stability classification.

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble_forms, build_grid, FormSet, VerticalGrid};
use crate::error::{Error, Result};
use crate::physics::{EquilibriumProfile, FluidConfig};
use crate::spectral::{solve_lambda_with, LambdaOutcome, ModeSolution, Pencil};

/// Discretization parameters shared by every per-frequency solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub elements_per_layer: usize,
    pub tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            elements_per_layer: 64,
            tol: 1e-10,
        }
    }
}

/// `sqrt(g [rho] / theta)`, or infinity without surface tension.
pub fn critical_frequency(cfg: &FluidConfig, profile: &EquilibriumProfile) -> f64 {
    if cfg.theta > 0.0 {
        (cfg.g * profile.jump_rho / cfg.theta).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Growth-rate solve at a single frequency.
pub fn solve_at(
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    grid: &VerticalGrid,
    tol: f64,
    xi: [f64; 2],
) -> Result<(FormSet, LambdaOutcome)> {
    let forms = assemble_forms(profile, grid, cfg, xi)?;
    let pencil = Pencil::new(&forms)?;
    let out = solve_lambda_with(&pencil, &forms, cfg, profile, tol, None)?;
    Ok((forms, out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSample {
    pub xi: [f64; 2],
    /// `None` when the frequency is stable.
    pub lambda: Option<f64>,
    pub alpha_residual: f64,
    pub energy_residual: f64,
    pub iterations: usize,
}

impl DispersionSample {
    pub fn xi_norm(&self) -> f64 {
        self.xi[0].hypot(self.xi[1])
    }

    fn from_outcome(xi: [f64; 2], out: &LambdaOutcome) -> Self {
        match out.mode() {
            Some(m) => DispersionSample {
                xi,
                lambda: Some(m.lambda),
                alpha_residual: m.alpha_residual,
                energy_residual: m.residual_energy,
                iterations: m.iterations,
            },
            None => DispersionSample {
                xi,
                lambda: None,
                alpha_residual: 0.0,
                energy_residual: 0.0,
                iterations: 0,
            },
        }
    }
}

/// Result of re-running a ray scan with twice the sample density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Refinement {
    pub dense_lambda: f64,
    /// True if the densified maximum differs by more than `1e-3` relative.
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionCurve {
    pub samples: Vec<DispersionSample>,
    /// Largest sampled growth rate, `0` if every sample is stable.
    pub lambda_max: f64,
    /// Sample argmax.
    pub xi1: Option<[f64; 2]>,
    pub xi_c: f64,
    pub c7: Option<f64>,
    pub periods: Option<(f64, f64)>,
    pub refinement: Option<Refinement>,
}

impl DispersionCurve {
    /// Reduces solved samples; an empty list gives a stable curve.
    pub fn from_samples(samples: Vec<DispersionSample>, xi_c: f64) -> Self {
        let best = samples
            .iter()
            .filter_map(|s| s.lambda.map(|l| (l, s.xi)))
            .fold(None::<(f64, [f64; 2])>, |acc, (l, xi)| match acc {
                Some((b, _)) if b >= l => acc,
                _ => Some((l, xi)),
            });
        let period = |x: f64| if x != 0.0 { 1.0 / x.abs() } else { 1.0 };
        DispersionCurve {
            lambda_max: best.map_or(0.0, |b| b.0),
            xi1: best.map(|b| b.1),
            c7: best.map(|b| b.0),
            periods: best.map(|b| (period(b.1[0]), period(b.1[1]))),
            xi_c,
            samples,
            refinement: None,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.xi1.is_none()
    }
}

/// Solves every frequency in `xi_samples` (in parallel on the current rayon
/// pool) and reduces in sample order.
pub fn scan(
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    spec: &GridSpec,
    xi_samples: &[[f64; 2]],
) -> Result<DispersionCurve> {
    if xi_samples.is_empty() {
        return Err(Error::field("scan.samples", "at least one frequency is required"));
    }
    let grid = build_grid(profile, spec.elements_per_layer)?;
    let samples = xi_samples
        .par_iter()
        .map(|&xi| {
            let (_, out) = solve_at(cfg, profile, &grid, spec.tol, xi)?;
            Ok(DispersionSample::from_outcome(xi, &out))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionCurve::from_samples(samples, critical_frequency(cfg, profile)))
}

/// Frequencies along the positive `xi1` axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RaySpec {
    pub xi_min: f64,
    /// Upper end; `None` selects `|xi|_c`, or an adaptive cap when
    /// `theta = 0`.
    pub xi_max: Option<f64>,
    pub samples: usize,
    pub densify: bool,
}

impl Default for RaySpec {
    fn default() -> Self {
        RaySpec {
            xi_min: 1e-2,
            xi_max: None,
            samples: 64,
            densify: true,
        }
    }
}

/// `count` equispaced magnitudes on `[lo, hi]` along `(r, 0)`.
pub fn ray_samples(lo: f64, hi: f64, count: usize) -> Vec<[f64; 2]> {
    if count == 1 {
        return vec![[lo, 0.0]];
    }
    (0..count)
        .map(|k| [lo + (hi - lo) * k as f64 / (count - 1) as f64, 0.0])
        .collect()
}

fn midpoints(xs: &[[f64; 2]]) -> Vec<[f64; 2]> {
    xs.windows(2)
        .map(|w| [0.5 * (w[0][0] + w[1][0]), 0.5 * (w[0][1] + w[1][1])])
        .collect()
}

/// Ray scan with the default range rules and the densification check.
pub fn scan_ray(
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    spec: &GridSpec,
    ray: &RaySpec,
) -> Result<DispersionCurve> {
    if ray.samples < 2 {
        return Err(Error::field("scan.samples", "must be >= 2"));
    }
    if !(ray.xi_min > 0.0 && ray.xi_min.is_finite()) {
        return Err(Error::field("scan.xi_min", "must be finite and > 0"));
    }
    let xi_c = critical_frequency(cfg, profile);
    let mut curve = match ray.xi_max {
        Some(hi) => {
            if !(hi > ray.xi_min && hi.is_finite()) {
                return Err(Error::field("scan.xi_max", "must be finite and > xi_min"));
            }
            scan(cfg, profile, spec, &ray_samples(ray.xi_min, hi, ray.samples))?
        }
        None if xi_c.is_finite() => {
            if xi_c <= ray.xi_min {
                return Err(Error::field("scan.xi_min", "must be below the critical frequency"));
            }
            scan(cfg, profile, spec, &ray_samples(ray.xi_min, xi_c, ray.samples))?
        }
        None => {
            let scale = 1.0 / cfg.h_plus.max(-cfg.h_minus);
            let mut cap = 10.0 * scale;
            let mut curve = scan(cfg, profile, spec, &ray_samples(ray.xi_min, cap, ray.samples))?;
            for _ in 0..8 {
                cap *= 2.0;
                let next = scan(cfg, profile, spec, &ray_samples(ray.xi_min, cap, ray.samples))?;
                let moved = (next.lambda_max - curve.lambda_max).abs() > 0.01 * curve.lambda_max;
                curve = next;
                if !moved {
                    break;
                }
            }
            curve
        }
    };
    if ray.densify {
        let xs: Vec<[f64; 2]> = curve.samples.iter().map(|s| s.xi).collect();
        let extra = scan(cfg, profile, spec, &midpoints(&xs))?;
        let dense = curve.lambda_max.max(extra.lambda_max);
        curve.refinement = Some(Refinement {
            dense_lambda: dense,
            changed: (dense - curve.lambda_max).abs() > 1e-3 * curve.lambda_max.max(f64::MIN_POSITIVE),
        });
    }
    Ok(curve)
}

/// Golden-section refinement of the peak of `lambda(r * direction)` for `r`
/// between the neighbours of the sampled argmax.
///
/// Returns the best `(xi, lambda)` seen, which is never below the sampled
/// maximum.
pub fn refine_peak(
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    spec: &GridSpec,
    curve: &DispersionCurve,
    iterations: usize,
) -> Result<Option<([f64; 2], f64)>> {
    let Some(xi1) = curve.xi1 else { return Ok(None) };
    let r1 = xi1[0].hypot(xi1[1]);
    let dir = [xi1[0] / r1, xi1[1] / r1];
    let mut radii: Vec<f64> = curve.samples.iter().map(|s| s.xi_norm()).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let k = radii.iter().position(|&r| r == r1).unwrap_or(0);
    let mut a = if k > 0 { radii[k - 1] } else { 0.5 * r1 };
    let mut b = if k + 1 < radii.len() { radii[k + 1] } else { 1.5 * r1 };
    if curve.xi_c.is_finite() {
        b = b.min(curve.xi_c);
    }
    let grid = build_grid(profile, spec.elements_per_layer)?;
    let eval = |r: f64| -> Result<f64> {
        let (_, out) = solve_at(cfg, profile, &grid, spec.tol, [r * dir[0], r * dir[1]])?;
        Ok(out.lambda().unwrap_or(0.0))
    };
    let mut best = (xi1, curve.lambda_max);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for (r, f) in [(c, fc), (d, fd)] {
        if f > best.1 {
            best = ([r * dir[0], r * dir[1]], f);
        }
    }
    for _ in 0..iterations {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(c)?;
            if fc > best.1 {
                best = ([c * dir[0], c * dir[1]], fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(d)?;
            if fd > best.1 {
                best = ([d * dir[0], d * dir[1]], fd);
            }
        }
    }
    Ok(Some(best))
}

/// Converged mode at one frequency, if unstable.
pub fn mode_at(
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    spec: &GridSpec,
    xi: [f64; 2],
) -> Result<(FormSet, Option<ModeSolution>)> {
    let grid = build_grid(profile, spec.elements_per_layer)?;
    let (forms, out) = solve_at(cfg, profile, &grid, spec.tol, xi)?;
    let mode = out.mode().cloned();
    Ok((forms, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StabilityMode {
    Periodic { l1: f64, l2: f64 },
    WholePlane,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub mode: StabilityMode,
    /// Rayleigh number; `None` without surface tension or on the whole plane.
    pub r: Option<f64>,
    pub verdict: Verdict,
    /// Unstable lattice frequency of minimal modulus.
    pub witness: Option<[f64; 2]>,
}

/// Classification of the horizontally periodic problem with periods
/// `2 pi L1` and `2 pi L2`.
pub fn classify_periodic(
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    l1: f64,
    l2: f64,
) -> Result<StabilityReport> {
    if !(l1 > 0.0 && l1.is_finite()) {
        return Err(Error::field("periodic.l1", "must be finite and > 0"));
    }
    if !(l2 > 0.0 && l2.is_finite()) {
        return Err(Error::field("periodic.l2", "must be finite and > 0"));
    }
    let lmax = l1.max(l2);
    let smallest = if l1 >= l2 { [1.0 / l1, 0.0] } else { [0.0, 1.0 / l2] };
    let mode = StabilityMode::Periodic { l1, l2 };
    if cfg.theta == 0.0 {
        return Ok(StabilityReport {
            mode,
            r: None,
            verdict: Verdict::Unstable,
            witness: Some(smallest),
        });
    }
    let r = cfg.theta / (cfg.g * lmax * lmax * profile.jump_rho);
    let xi_c = critical_frequency(cfg, profile);
    let verdict = if (r - 1.0).abs() <= 1e-9 {
        Verdict::Marginal
    } else if r > 1.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    let lattice_unstable = 1.0 / lmax < xi_c;
    if verdict != Verdict::Marginal && lattice_unstable != (verdict == Verdict::Unstable) {
        return Err(Error::Numerical(format!(
            "Rayleigh number {r} disagrees with the lattice test"
        )));
    }
    Ok(StabilityReport {
        mode,
        r: Some(r),
        verdict,
        witness: (verdict == Verdict::Unstable).then_some(smallest),
    })
}

/// Classification of the whole-plane problem from a scan.
pub fn classify_whole_plane(curve: &DispersionCurve) -> StabilityReport {
    StabilityReport {
        mode: StabilityMode::WholePlane,
        r: None,
        verdict: if curve.is_stable() { Verdict::Stable } else { Verdict::Unstable },
        witness: curve.xi1,
    }
}

/// `ln(epsilon / delta) / c7`.
pub fn escape_time(c7: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(c7 > 0.0 && c7.is_finite()) {
        return Err(Error::Domain(format!("growth constant must be positive, got {c7}")));
    }
    if !(delta > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain("epsilon and delta must be positive".into()));
    }
    if delta >= epsilon {
        return Err(Error::Domain(format!(
            "delta = {delta} must be smaller than epsilon = {epsilon}"
        )));
    }
    Ok((epsilon / delta).ln() / c7)
}
