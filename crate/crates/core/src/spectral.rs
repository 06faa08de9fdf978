//! Modified variational problem: `alpha(s)`, the fixed point `lambda^2 =
//! alpha(lambda)`, and residual diagnostics of the converged mode.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{trace_at_interface, FormSet, VerticalGrid};
use crate::error::{Error, Result};
use crate::physics::{EquilibriumProfile, FluidConfig, Side};

/// Largest eigenpair of `(E - s D) v = alpha J v`.
#[derive(Debug, Clone)]
pub struct AlphaResult {
    pub s: f64,
    pub alpha: f64,
    /// J-normalized, sign fixed so that `psi(0) > 0`.
    pub maximizer: DVector<f64>,
}

/// A converged growing mode at one frequency.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub xi: [f64; 2],
    pub lambda: f64,
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    /// Free dof-vector of the mode, `v^T J v = 1`.
    pub v: DVector<f64>,
    pub residual_energy: f64,
    pub residual_strong: f64,
    pub residual_jump: f64,
    /// `|lambda^2 - alpha(lambda)|`.
    pub alpha_residual: f64,
    pub iterations: usize,
}

impl ModeSolution {
    pub fn psi_at_interface(&self, grid: &VerticalGrid) -> f64 {
        self.psi[grid.interface_index]
    }
}

#[derive(Debug, Clone)]
pub enum LambdaOutcome {
    Growing(Box<ModeSolution>),
    Stable,
}

impl LambdaOutcome {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            LambdaOutcome::Growing(m) => Some(m.lambda),
            LambdaOutcome::Stable => None,
        }
    }

    pub fn mode(&self) -> Option<&ModeSolution> {
        match self {
            LambdaOutcome::Growing(m) => Some(m),
            LambdaOutcome::Stable => None,
        }
    }
}

/// `J`-reduced pencil: with `J = L L^T`, stores `L`, `L^-1 E L^-T` and
/// `L^-1 D L^-T`, so every `alpha(s)` is one dense symmetric eigensolve.
#[derive(Debug, Clone)]
pub struct Pencil {
    l: DMatrix<f64>,
    e: DMatrix<f64>,
    d: DMatrix<f64>,
    grid: VerticalGrid,
    band: Option<Banded>,
}

/// `J`, `D`, `E` in node-interleaved order and lower band storage, for
/// definiteness tests of `a J + b D - E` by banded Cholesky.
#[derive(Debug, Clone)]
struct Banded {
    n: usize,
    w: usize,
    j: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
}

impl Banded {
    fn new(forms: &FormSet) -> Option<Self> {
        let n = forms.dim;
        let at = |k: usize| (k % 3) * (n / 3) + k / 3;
        let mats = [&forms.j, &forms.d, &forms.e];
        let mut w = 0;
        for r in 0..n {
            for c in 0..r {
                if mats.iter().any(|a| a[(at(r), at(c))] != 0.0) {
                    w = w.max(r - c);
                }
            }
        }
        if 4 * w > n {
            return None;
        }
        let pack = |a: &DMatrix<f64>| {
            let mut out = vec![0.0; n * (w + 1)];
            for r in 0..n {
                for c in r.saturating_sub(w)..=r {
                    out[r * (w + 1) + r - c] = a[(at(r), at(c))];
                }
            }
            out
        };
        Some(Banded { n, w, j: pack(&forms.j), d: pack(&forms.d), e: pack(&forms.e) })
    }

    fn at(&self, k: usize) -> usize {
        let m = self.n / 3;
        (k % 3) * m + k / 3
    }

    /// Banded Cholesky factor of `a J + b D - E`, `None` unless positive definite.
    fn factor(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        let (n, w) = (self.n, self.w);
        let mut l: Vec<f64> = (0..n * (w + 1))
            .map(|k| a * self.j[k] + b * self.d[k] - self.e[k])
            .collect();
        for r in 0..n {
            for c in r.saturating_sub(w)..=r {
                let mut sum = l[r * (w + 1) + r - c];
                for k in r.saturating_sub(w)..c {
                    sum -= l[r * (w + 1) + r - k] * l[c * (w + 1) + c - k];
                }
                if r == c {
                    if !(sum > 0.0) {
                        return None;
                    }
                    l[r * (w + 1)] = sum.sqrt();
                } else {
                    l[r * (w + 1) + r - c] = sum / l[c * (w + 1)];
                }
            }
        }
        Some(l)
    }

    fn positive_definite(&self, a: f64, b: f64) -> bool {
        self.factor(a, b).is_some()
    }

    fn solve(&self, l: &[f64], x: &mut [f64]) {
        let (n, w) = (self.n, self.w);
        for r in 0..n {
            for k in r.saturating_sub(w)..r {
                x[r] -= l[r * (w + 1) + r - k] * x[k];
            }
            x[r] /= l[r * (w + 1)];
        }
        for r in (0..n).rev() {
            x[r] /= l[r * (w + 1)];
            for k in r.saturating_sub(w)..r {
                x[k] -= l[r * (w + 1) + r - k] * x[r];
            }
        }
    }

    fn mul_j(&self, x: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        let mut y = vec![0.0; n];
        for r in 0..n {
            y[r] += self.j[r * (w + 1)] * x[r];
            for c in r.saturating_sub(w)..r {
                let a = self.j[r * (w + 1) + r - c];
                y[r] += a * x[c];
                y[c] += a * x[r];
            }
        }
        y
    }

    /// Top eigenvector of `(E - s D, J)` by inverse iteration, shifted just
    /// above the largest eigenvalue, which is located by factorization
    /// success. Returned in block order, J-normalized.
    fn top_vector(&self, s: f64, guess: f64) -> Option<DVector<f64>> {
        let mut margin = 1e-8 * guess.abs().max(s * s).max(f64::MIN_POSITIVE);
        let l = (0..40).find_map(|_| {
            let f = self.factor(guess + margin, s);
            margin *= 10.0;
            f
        })?;
        let mut x: Vec<f64> = (0..self.n).map(|k| 1.0 + 0.1 * (k % 7) as f64).collect();
        for _ in 0..200 {
            let prev = x.clone();
            let mut y = self.mul_j(&x);
            self.solve(&l, &mut y);
            let norm = y.iter().zip(self.mul_j(&y)).map(|(a, b)| a * b).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return None;
            }
            y.iter_mut().for_each(|v| *v /= norm);
            let sign = if y.iter().zip(&prev).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            y.iter_mut().for_each(|v| *v *= sign);
            let change = y.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = y;
            if change <= 1e-14 * x.iter().fold(0.0f64, |a, v| a.max(v.abs())) {
                break;
            }
        }
        let mut v = DVector::zeros(self.n);
        for (k, val) in x.into_iter().enumerate() {
            v[self.at(k)] = val;
        }
        Some(v)
    }
}

fn congruence(l: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let fail = || Error::Numerical("triangular solve failed".into());
    let half = l.solve_lower_triangular(m).ok_or_else(fail)?;
    let full = l.solve_lower_triangular(&half.transpose()).ok_or_else(fail)?;
    Ok((&full + full.transpose()) * 0.5)
}

impl Pencil {
    pub fn new(forms: &FormSet) -> Result<Self> {
        let chol = forms
            .j
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("mass form is not positive definite".into()))?;
        let l = chol.l();
        Ok(Pencil {
            e: congruence(&l, &forms.e)?,
            d: congruence(&l, &forms.d)?,
            l,
            grid: forms.grid.clone(),
            band: Banded::new(forms),
        })
    }

    fn shifted(&self, s: f64) -> DMatrix<f64> {
        &self.e - &self.d * s
    }

    /// `alpha(s)` without the maximizer.
    pub fn alpha_value(&self, s: f64) -> f64 {
        self.shifted(s).symmetric_eigenvalues().max()
    }

    pub fn alpha(&self, s: f64) -> Result<AlphaResult> {
        let eig = self.shifted(s).symmetric_eigen();
        let (idx, alpha) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
        let y = eig.eigenvectors.column(idx).into_owned();
        let mut v = self
            .l
            .transpose()
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Numerical("back substitution failed".into()))?;
        fix_sign(&self.grid, &mut v);
        Ok(AlphaResult { s, alpha, maximizer: v })
    }

    /// True when `alpha(s) > s^2`, i.e. `s^2 J + s D - E` is indefinite.
    fn above(&self, s: f64) -> bool {
        match &self.band {
            Some(b) => !b.positive_definite(s * s, s),
            None => self.alpha_value(s) > s * s,
        }
    }

    /// `alpha(s)` from the Rayleigh quotient of an inverse-iteration
    /// maximizer, evaluated element-wise; falls back to the dense eigensolve.
    fn alpha_near(&self, forms: &FormSet, s: f64, guess: f64) -> Result<AlphaResult> {
        let Some(mut v) = self.band.as_ref().and_then(|b| b.top_vector(s, guess)) else {
            return self.alpha(s);
        };
        let fv = forms.values(&v);
        v /= fv.j.sqrt();
        fix_sign(&self.grid, &mut v);
        Ok(AlphaResult { s, alpha: (fv.e - s * fv.d) / fv.j, maximizer: v })
    }

    /// True when `alpha(s) <= 0`.
    fn stable_at(&self, s: f64) -> bool {
        match &self.band {
            Some(b) => b.positive_definite(0.0, s),
            None => self.alpha_value(s) <= 0.0,
        }
    }

    /// Smallest eigenvalue of `D v = b J v`.
    pub fn min_dissipation(&self) -> f64 {
        self.d.symmetric_eigenvalues().min()
    }
}

fn fix_sign(grid: &VerticalGrid, v: &mut DVector<f64>) {
    let m = grid.free_nodes();
    let psi0 = trace_at_interface(grid, v);
    let psi = v.rows(2 * m, m);
    let big = psi.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    let sign = if psi0.abs() > 1e-12 * big.abs() && psi0 != 0.0 {
        psi0.signum()
    } else if big != 0.0 {
        big.signum()
    } else {
        1.0
    };
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// `alpha(s)` with its J-normalized maximizer.
pub fn alpha(forms: &FormSet, s: f64) -> Result<AlphaResult> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("s must be positive, got {s}")));
    }
    Pencil::new(forms)?.alpha(s)
}

/// The constant `b1`: smallest eigenvalue of `D` relative to `J`.
pub fn min_dissipation(forms: &FormSet) -> Result<f64> {
    Ok(Pencil::new(forms)?.min_dissipation())
}

/// Initial bisection bracket for the fixed point.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

/// Upper bound `3 h_plus g [rho] / (2 mu_plus)` on every growth rate.
pub fn viscous_rate_bound(cfg: &FluidConfig, profile: &EquilibriumProfile) -> f64 {
    3.0 * cfg.h_plus * cfg.g * profile.jump_rho / (2.0 * cfg.mu_plus)
}

/// Positive root of `s^2 + b1 s - g(|xi1| + |xi2|)`.
pub fn dissipation_rate_bound(cfg: &FluidConfig, xi: [f64; 2], b1: f64) -> f64 {
    let c = cfg.g * (xi[0].abs() + xi[1].abs());
    2.0 * c / (b1 + (b1 * b1 + 4.0 * c).sqrt())
}

/// Solves `lambda^2 = alpha(lambda)`.
pub fn solve_lambda(
    forms: &FormSet,
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    tol: f64,
) -> Result<LambdaOutcome> {
    let pencil = Pencil::new(forms)?;
    solve_lambda_with(&pencil, forms, cfg, profile, tol, None)
}

/// Fixed-point solve on a prepared pencil, optionally from a caller-supplied
/// bracket instead of the analytic bounds.
pub fn solve_lambda_with(
    pencil: &Pencil,
    forms: &FormSet,
    cfg: &FluidConfig,
    profile: &EquilibriumProfile,
    tol: f64,
    bracket: Option<Bracket>,
) -> Result<LambdaOutcome> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::field("tol", "must lie in (0, 1)"));
    }
    if pencil.stable_at(tol) {
        return Ok(LambdaOutcome::Stable);
    }
    let (mut lo, mut hi) = match bracket {
        Some(b) => (b.lo.max(0.0), b.hi),
        None => {
            let b1 = pencil.min_dissipation();
            let hi = viscous_rate_bound(cfg, profile).min(dissipation_rate_bound(cfg, forms.xi, b1));
            (0.0, hi)
        }
    };
    if !(hi > lo) {
        return Err(Error::Numerical(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut expansions = 0;
    while pencil.above(hi) {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Numerical(
                "fixed-point bracket could not be closed; alpha is not decreasing".into(),
            ));
        }
    }
    if lo > 0.0 && !pencil.above(lo) {
        return Err(Error::Numerical(
            "supplied bracket does not contain the fixed point".into(),
        ));
    }

    let mut iterations = 0;
    let s = loop {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid {
            break mid;
        }
        if pencil.above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if iterations >= 200 {
            return Err(Error::Numerical("bisection did not converge".into()));
        }
    };

    let (s, top) = polish(pencil, forms, s)?;
    let grid = &forms.grid;
    let mut mode = ModeSolution {
        xi: forms.xi,
        lambda: s,
        y: grid.nodes.clone(),
        phi: grid.component(&top.maximizer, 0),
        theta: grid.component(&top.maximizer, 1),
        psi: grid.component(&top.maximizer, 2),
        v: top.maximizer,
        residual_energy: 0.0,
        residual_strong: 0.0,
        residual_jump: 0.0,
        alpha_residual: (s * s - top.alpha).abs(),
        iterations,
    };
    mode.residual_energy = energy_identity_residual(&mode, forms);
    let (ode, jump) = euler_lagrange_residual(&mode, profile, cfg);
    mode.residual_strong = ode;
    mode.residual_jump = jump;
    Ok(LambdaOutcome::Growing(Box::new(mode)))
}

/// Positive root of `J s^2 + D s - E = 0`.
fn quadratic_rate(j: f64, e: f64, d: f64) -> Option<f64> {
    (e > 0.0 && j > 0.0).then(|| 2.0 * e / (d + (d * d + 4.0 * j * e).sqrt()))
}

/// Rayleigh-quotient refinement of a bisected fixed point: the eigensolver
/// resolves `alpha` only to `eps * |E - sD|`, which dominates `s^2` at small
/// rates, while the forms of the maximizer are evaluated far more accurately.
fn polish(pencil: &Pencil, forms: &FormSet, s: f64) -> Result<(f64, AlphaResult)> {
    let mut s = s;
    let mut top = pencil.alpha_near(forms, s, s * s)?;
    for _ in 0..4 {
        let fv = forms.values(&top.maximizer);
        let Some(next) = quadratic_rate(fv.j, fv.e, fv.d) else { break };
        if (next - s).abs() > 1e-3 * s {
            break;
        }
        let done = (next - s).abs() <= 4.0 * f64::EPSILON * s;
        s = next;
        top = pencil.alpha_near(forms, s, s * s)?;
        if done {
            break;
        }
    }
    Ok((s, top))
}

/// `|lambda^2 J - E + lambda D| / (lambda^2 J)` at the stored mode.
pub fn energy_identity_residual(mode: &ModeSolution, forms: &FormSet) -> f64 {
    energy_residual(forms, &mode.v, mode.lambda)
}

/// Relative energy-identity residual of an arbitrary vector and rate.
pub fn energy_residual(forms: &FormSet, v: &DVector<f64>, lambda: f64) -> f64 {
    let fv = forms.values(v);
    let lhs = lambda * lambda * fv.j;
    (lhs - fv.e + lambda * fv.d).abs() / lhs
}

struct Coefficients<'a> {
    profile: &'a EquilibriumProfile,
    side: Side,
}

impl Coefficients<'_> {
    fn rho(&self, y: f64) -> f64 {
        self.profile.rho_at(y, self.side)
    }

    fn pr(&self, y: f64) -> f64 {
        self.profile.pprime_rho_at(y, self.side)
    }
}

/// Strong-form residuals of the normal-mode ODEs at interior nodes of each
/// layer, and of the three interface jump conditions.
pub fn euler_lagrange_residual(
    mode: &ModeSolution,
    profile: &EquilibriumProfile,
    cfg: &FluidConfig,
) -> (f64, f64) {
    let lam = mode.lambda;
    let [x1, x2] = mode.xi;
    let xx = x1 * x1 + x2 * x2;
    let g = cfg.g;
    let y = &mode.y;
    let (phi, theta, psi) = (&mode.phi, &mode.theta, &mode.psi);
    let n = (y.len() - 1) / 2;
    let xs = |i: usize| x1 * phi[i] + x2 * theta[i];

    let mut ode = 0.0f64;
    for (side, range) in [(Side::Lower, 1..n), (Side::Upper, n + 1..2 * n)] {
        let c = Coefficients { profile, side };
        let (mu, zeta) = (cfg.mu(side), cfg.zeta(side));
        let k = zeta + mu / 3.0;
        for i in range {
            let h = y[i + 1] - y[i];
            let yi = y[i];
            let (rho, pr) = (c.rho(yi), c.pr(yi));
            let d2 = |f: &[f64]| (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);
            let d1 = |f: &[f64]| (f[i + 1] - f[i - 1]) / (2.0 * h);
            let couple = lam * k + pr;

            let r_phi = (lam * (lam * rho + mu * xx + x1 * x1 * k) + x1 * x1 * pr) * phi[i]
                - lam * mu * d2(phi)
                - x1 * (g * rho * psi[i] - couple * d1(psi))
                + x1 * x2 * couple * theta[i];
            let r_theta = (lam * (lam * rho + mu * xx + x2 * x2 * k) + x2 * x2 * pr) * theta[i]
                - lam * mu * d2(theta)
                - x2 * (g * rho * psi[i] - couple * d1(psi))
                + x1 * x2 * couple * phi[i];

            let flux = |a: usize, b: usize| {
                let ym = 0.5 * (y[a] + y[b]);
                (lam * (4.0 * mu / 3.0 + zeta) + c.pr(ym)) * (psi[b] - psi[a]) / h
            };
            let wcoef = |j: usize| (lam * k + c.pr(y[j])) * xs(j);
            let r_psi = (lam * lam * rho + lam * mu * xx) * psi[i]
                - (flux(i, i + 1) - flux(i - 1, i)) / h
                - (wcoef(i + 1) - wcoef(i - 1)) / (2.0 * h)
                - g * rho * xs(i);
            ode = ode.max(r_phi.abs()).max(r_theta.abs()).max(r_psi.abs());
        }
    }

    let (hl, hu) = (y[n] - y[n - 1], y[n + 1] - y[n]);
    let dl = |f: &[f64]| (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * hl);
    let du = |f: &[f64]| (-3.0 * f[n] + 4.0 * f[n + 1] - f[n + 2]) / (2.0 * hu);
    let (mul, muu) = (cfg.mu_minus, cfg.mu_plus);
    let p0 = psi[n];
    let j1 = muu * (du(phi) - x1 * p0) - mul * (dl(phi) - x1 * p0);
    let j2 = muu * (du(theta) - x2 * p0) - mul * (dl(theta) - x2 * p0);
    let normal = |side: Side, dpsi: f64| {
        let (mu, zeta) = (cfg.mu(side), cfg.zeta(side));
        let pr = profile.pprime_rho_at(0.0, side);
        let x0 = xs(n);
        (lam * (zeta + mu / 3.0) + pr) * (x0 + dpsi) + lam * mu * (dpsi - x0)
    };
    let j3 = normal(Side::Upper, du(psi)) - normal(Side::Lower, dl(psi))
        - cfg.theta * xx * p0;
    (ode, j1.abs().max(j2.abs()).max(j3.abs()))
}

/// Outcome of the explicit positivity construction for `alpha`.
#[derive(Debug, Clone)]
pub struct PositivityProbe {
    pub beta: f64,
    /// `v^T E v` of the interpolated test function.
    pub energy: f64,
    /// `v^T D v` of the interpolated test function.
    pub dissipation: f64,
    /// `F(s) > 0` for all `0 < s < s0`; `None` if `energy <= 0`.
    pub s0: Option<f64>,
}

/// Evaluates `F(s) = E - s D` on the test triple built from
/// `psi_beta = (1 - y^2 / h^2)^(beta / 2)` with `h` the layer bound, and the
/// horizontal component chosen so that `xi1 phi + xi2 theta = -psi'`.
///
/// With `auto_increase`, `beta` is doubled (up to 1024) until the energy is
/// positive.
pub fn positivity_probe(forms: &FormSet, beta: f64, auto_increase: bool) -> PositivityProbe {
    let grid = &forms.grid;
    let [x1, x2] = forms.xi;
    let mut beta = beta;
    loop {
        let mut psi = Vec::with_capacity(grid.nodes.len());
        let mut horiz = Vec::with_capacity(grid.nodes.len());
        for &y in &grid.nodes {
            let h = if y < 0.0 { grid.h_minus() } else { grid.h_plus() };
            let q = (1.0 - y * y / (h * h)).max(0.0);
            psi.push(q.powf(beta / 2.0));
            horiz.push(beta / 2.0 * q.powf(beta / 2.0 - 1.0) * (-2.0 * y / (h * h)));
        }
        let zero = vec![0.0; psi.len()];
        let v = if x1.abs() >= x2.abs() && x1 != 0.0 {
            let phi: Vec<f64> = horiz.iter().map(|d| -d / x1).collect();
            grid.pack(&phi, &zero, &psi)
        } else if x2 != 0.0 {
            let theta: Vec<f64> = horiz.iter().map(|d| -d / x2).collect();
            grid.pack(&zero, &theta, &psi)
        } else {
            grid.pack(&zero, &zero, &psi)
        };
        let energy = forms.e_of(&v);
        let dissipation = forms.d_of(&v);
        if energy > 0.0 || !auto_increase || beta >= 1024.0 {
            return PositivityProbe {
                beta,
                energy,
                dissipation,
                s0: (energy > 0.0).then(|| energy / dissipation),
            };
        }
        beta *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::tests::{forms_for, reference_config};
    use crate::physics::build_equilibrium;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(cfg: &FluidConfig, n: usize, xi: [f64; 2]) -> (FormSet, LambdaOutcome) {
        let profile = build_equilibrium(cfg, n + 1).unwrap();
        let f = forms_for(cfg, n, xi);
        let out = solve_lambda(&f, cfg, &profile, 1e-10).unwrap();
        (f, out)
    }

    #[test]
    fn zero_frequency_has_negative_alpha() {
        let f = forms_for(&reference_config(), 16, [0.0, 0.0]);
        for s in [1e-6, 0.1, 10.0] {
            assert!(alpha(&f, s).unwrap().alpha < 0.0);
        }
    }

    #[test]
    fn strong_tension_has_negative_alpha() {
        let mut cfg = reference_config();
        cfg.theta = 2.0;
        let f = forms_for(&cfg, 16, [1.0, 0.0]);
        for s in [1e-8, 0.1, 1.0] {
            assert!(alpha(&f, s).unwrap().alpha < 0.0);
        }
        let (_, out) = solve(&cfg, 16, [1.0, 0.0]);
        assert!(matches!(out, LambdaOutcome::Stable));
    }

    #[test]
    fn alpha_rejects_non_positive_s() {
        let f = forms_for(&reference_config(), 8, [1.0, 0.0]);
        assert!(alpha(&f, 0.0).is_err());
    }

    #[test]
    fn maximizer_is_normalized_and_consistent() {
        let f = forms_for(&reference_config(), 16, [1.0, 0.5]);
        let a = alpha(&f, 0.1).unwrap();
        let v = &a.maximizer;
        assert!((f.j_of(v) - 1.0).abs() <= 1e-10);
        let rq = (f.e_of(v) - 0.1 * f.d_of(v)) / f.j_of(v);
        assert!((rq - a.alpha).abs() <= 1e-9 * a.alpha.abs());
        assert!(trace_at_interface(&f.grid, v) > 0.0);
    }

    #[test]
    fn b1_is_positive_and_linear_in_viscosity() {
        let cfg = reference_config();
        let b = min_dissipation(&forms_for(&cfg, 16, [1.0, 0.0])).unwrap();
        assert!(b > 0.0);
        let mut twice = cfg.clone();
        twice.mu_plus *= 2.0;
        twice.mu_minus *= 2.0;
        twice.zeta_plus *= 2.0;
        twice.zeta_minus *= 2.0;
        let b2 = min_dissipation(&forms_for(&twice, 16, [1.0, 0.0])).unwrap();
        assert!((b2 - 2.0 * b).abs() <= 1e-10 * b);
    }

    #[test]
    fn reference_mode_properties() {
        let cfg = reference_config();
        let (f, out) = solve(&cfg, 32, [1.0, 0.0]);
        let m = out.mode().expect("unstable");
        assert!((m.lambda - 0.228516).abs() < 1e-5, "{}", m.lambda);
        assert!(m.residual_energy <= 1e-8);
        assert!(m.iterations <= 60);
        assert_eq!(m.phi[0], 0.0);
        assert_eq!(*m.psi.last().unwrap(), 0.0);
        assert!(m.psi_at_interface(&f.grid) > 0.0);
        assert!(m.phi.iter().any(|&x| x != 0.0));
        // xi2 = 0 decouples theta.
        assert!(m.theta.iter().all(|&x| x.abs() < 1e-10));
    }

    #[test]
    fn rate_bound_example() {
        let mut cfg = reference_config();
        cfg.mu_plus = 1.0;
        let profile = build_equilibrium(&cfg, 9).unwrap();
        assert!((viscous_rate_bound(&cfg, &profile) - 1.5).abs() < 1e-9);
        let (_, out) = solve(&cfg, 16, [1.0, 0.0]);
        assert!(out.lambda().unwrap() <= 1.5);
    }

    #[test]
    fn energy_residual_detects_perturbations() {
        let cfg = reference_config();
        let (f, out) = solve(&cfg, 16, [1.0, 0.0]);
        let m = out.mode().unwrap();
        let base = energy_identity_residual(m, &f);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = &m.v + DVector::from_fn(f.dim, |_, _| 1e-3 * rng.gen_range(-1.0..1.0));
        let probe = energy_residual(&f, &noisy, m.lambda);
        assert!(probe >= 1e-7 && probe > 100.0 * base, "{probe} vs {base}");
        assert!(energy_residual(&f, &m.v, m.lambda / 2.0) > 1.0);
    }

    #[test]
    fn random_vector_violates_jump_conditions() {
        let cfg = reference_config();
        let (f, out) = solve(&cfg, 16, [1.0, 0.0]);
        let mut m = out.mode().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = DVector::from_fn(f.dim, |_, _| rng.gen_range(-1.0..1.0));
        m.phi = f.grid.component(&v, 0);
        m.theta = f.grid.component(&v, 1);
        m.psi = f.grid.component(&v, 2);
        let profile = build_equilibrium(&cfg, 17).unwrap();
        let (_, jump) = euler_lagrange_residual(&m, &profile, &cfg);
        assert!(jump > 0.1);
    }

    #[test]
    fn residuals_converge() {
        let cfg = reference_config();
        let (_, a) = solve(&cfg, 16, [1.0, 0.0]);
        let (_, b) = solve(&cfg, 32, [1.0, 0.0]);
        let (a, b) = (a.mode().unwrap(), b.mode().unwrap());
        assert!(a.residual_strong / b.residual_strong >= 1.8);
        assert!(a.residual_jump / b.residual_jump >= 1.8);
    }

    #[test]
    fn alpha_properties_on_s_grid() {
        let cfg = reference_config();
        let xi = [1.0, 0.3];
        let f = forms_for(&cfg, 16, xi);
        let p = Pencil::new(&f).unwrap();
        let b1 = p.min_dissipation();
        let s: Vec<f64> = (0..20).map(|k| 1e-3 * 500f64.powf(k as f64 / 19.0)).collect();
        let res: Vec<AlphaResult> = s.iter().map(|&s| p.alpha(s).unwrap()).collect();
        let lip = res.iter().map(|r| f.d_of(&r.maximizer)).fold(0.0, f64::max);
        for w in res.windows(2) {
            assert!(w[0].alpha > w[1].alpha);
            assert!((w[0].alpha - w[1].alpha).abs() <= lip * (w[1].s - w[0].s) * (1.0 + 1e-9));
        }
        for r in &res {
            assert!(r.alpha <= cfg.g * (xi[0].abs() + xi[1].abs()) - r.s * b1 + 1e-9);
        }
    }

    #[test]
    fn positivity_probe_below_critical_frequency() {
        let mut cfg = reference_config();
        cfg.theta = 0.2;
        for xi in [[1.0, 0.0], [0.0, 1.5], [0.3, 0.4]] {
            let f = forms_for(&cfg, 32, xi);
            let probe = positivity_probe(&f, 8.0, true);
            let s0 = probe.s0.expect("positive energy");
            assert!(alpha(&f, 0.5 * s0).unwrap().alpha > 0.0);
        }
    }

    #[test]
    fn bisection_is_bracket_independent() {
        let cfg = reference_config();
        let profile = build_equilibrium(&cfg, 17).unwrap();
        let f = forms_for(&cfg, 16, [1.0, 0.0]);
        let p = Pencil::new(&f).unwrap();
        let a = solve_lambda_with(&p, &f, &cfg, &profile, 1e-10, None).unwrap();
        let b = solve_lambda_with(&p, &f, &cfg, &profile, 1e-10, Some(Bracket { lo: 0.05, hi: 7.0 }))
            .unwrap();
        let (a, b) = (a.lambda().unwrap(), b.lambda().unwrap());
        assert!((a - b).abs() <= 10.0 * 1e-10 * a.max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn fixed_point_identity_holds(r in 0.2f64..3.0, angle in 0.0f64..std::f64::consts::PI) {
            let cfg = reference_config();
            let xi = [r * angle.cos(), r * angle.sin()];
            let (f, out) = solve(&cfg, 8, xi);
            let m = out.mode().unwrap();
            prop_assert!(m.residual_energy <= 1e-8);
            prop_assert!(m.lambda <= viscous_rate_bound(&cfg, &build_equilibrium(&cfg, 9).unwrap()));
            prop_assert!((f.j_of(&m.v) - 1.0).abs() < 1e-10);
        }
    }
}
