//! Real growing-mode synthesis, horizontal cutoffs and their norms, and the
//! largest-growth-rate inequality on per-mode trial fields.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::assembly::{assemble_forms, VerticalGrid};
use crate::error::{Error, Result};
use crate::physics::{EquilibriumProfile, FluidConfig};
use crate::spectral::ModeSolution;

const ORDER: usize = 5;

/// Truncated Taylor series `sum c_k (x - x0)^k`, `k < 5`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Jet([f64; ORDER]);

impl Jet {
    fn variable(x0: f64, slope: f64) -> Self {
        Jet([x0, slope, 0.0, 0.0, 0.0])
    }

    fn add(self, o: Jet) -> Jet {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(o.0) {
            *a += b;
        }
        Jet(c)
    }

    fn neg(self) -> Jet {
        Jet(self.0.map(|x| -x))
    }

    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; ORDER];
        for k in 0..ORDER {
            for i in 0..=k {
                c[k] += self.0[i] * o.0[k - i];
            }
        }
        Jet(c)
    }

    fn recip(self) -> Jet {
        let a = self.0;
        let mut r = [0.0; ORDER];
        r[0] = 1.0 / a[0];
        for k in 1..ORDER {
            let s: f64 = (1..=k).map(|i| a[i] * r[k - i]).sum();
            r[k] = -s / a[0];
        }
        Jet(r)
    }

    fn exp(self) -> Jet {
        let a = self.0;
        let mut e = [0.0; ORDER];
        e[0] = a[0].exp();
        for k in 1..ORDER {
            let s: f64 = (1..=k).map(|j| j as f64 * a[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Jet(e)
    }

    /// Derivatives `f^(k)(x0)`.
    fn derivatives(self) -> [f64; ORDER] {
        let mut fact = 1.0;
        let mut d = self.0;
        for (k, v) in d.iter_mut().enumerate().skip(1) {
            fact *= k as f64;
            *v *= fact;
        }
        d
    }
}

/// `exp(-1/x)` for `x > 0`, flat zero otherwise. Below `x = 0.005` the value
/// and its first four derivatives are under `1e-60` and are flushed to zero.
fn flat(x: f64, slope: f64) -> Jet {
    if x < 0.005 {
        Jet([0.0; ORDER])
    } else {
        Jet::variable(x, slope).recip().neg().exp()
    }
}

/// Smooth step on `[0, 1]` from 1 down to 0, flat to all orders at both ends.
fn step(t: f64) -> Jet {
    if t <= 0.0 {
        return Jet([1.0, 0.0, 0.0, 0.0, 0.0]);
    }
    if t >= 1.0 {
        return Jet([0.0; ORDER]);
    }
    let a = flat(1.0 - t, -1.0);
    let b = flat(t, 1.0);
    a.mul(a.add(b).recip())
}

/// Horizontal cutoff `chi_n(r)`: 1 for `|r| <= n - 1`, 0 for `|r| >= n`.
pub fn chi_n(r: f64, n: f64) -> f64 {
    chi_n_derivatives(r, n)[0]
}

/// `chi_n` and its first four derivatives in `r`.
pub fn chi_n_derivatives(r: f64, n: f64) -> [f64; 5] {
    let d = step(r.abs() - (n - 1.0)).derivatives();
    let sign = if r < 0.0 { -1.0 } else { 1.0 };
    let mut out = d;
    let mut s = 1.0;
    for v in out.iter_mut().skip(1) {
        s *= sign;
        *v *= s;
    }
    out
}

/// Real horizontally periodic growing mode built from the conjugate pair
/// `xi1`, `-xi1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowingMode {
    pub xi1: [f64; 2],
    pub c7: f64,
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub interface_index: usize,
}

pub fn build_real_mode(mode: &ModeSolution) -> Result<GrowingMode> {
    if !(mode.lambda > 0.0) {
        return Err(Error::Domain("growing mode requires lambda > 0".into()));
    }
    Ok(GrowingMode {
        xi1: mode.xi,
        c7: mode.lambda,
        y: mode.y.clone(),
        phi: mode.phi.clone(),
        theta: mode.theta.clone(),
        psi: mode.psi.clone(),
        interface_index: (mode.y.len() - 1) / 2,
    })
}

impl GrowingMode {
    fn phase(&self, yh: [f64; 2]) -> f64 {
        self.xi1[0] * yh[0] + self.xi1[1] * yh[1]
    }

    /// `u0` at horizontal point `yh` and vertical node `j`.
    pub fn u0(&self, yh: [f64; 2], j: usize) -> [f64; 3] {
        let (s, c) = self.phase(yh).sin_cos();
        [2.0 * self.phi[j] * s, 2.0 * self.theta[j] * s, 2.0 * self.psi[j] * c]
    }

    pub fn eta0(&self, yh: [f64; 2], j: usize) -> [f64; 3] {
        self.u0(yh, j).map(|x| x / self.c7)
    }

    /// Two-term complex synthesis whose real part is `u0`.
    pub fn complex_synthesis(&self, yh: [f64; 2], j: usize) -> [Complex64; 3] {
        let i = Complex64::i();
        let a = self.phase(yh);
        let w = |sign: f64| {
            [
                -i * self.phi[j],
                -i * self.theta[j],
                Complex64::new(sign * self.psi[j], 0.0),
            ]
        };
        let (w1, w2) = (w(1.0), w(-1.0));
        let (e1, e2) = (Complex64::from_polar(1.0, a), Complex64::from_polar(1.0, -a));
        [0, 1, 2].map(|k| w1[k] * e1 - w2[k] * e2)
    }

    pub fn scaled(&self, c: f64) -> GrowingMode {
        let mut m = self.clone();
        for v in [&mut m.phi, &mut m.theta, &mut m.psi] {
            v.iter_mut().for_each(|x| *x *= c);
        }
        m
    }

    /// Samples `u0` on an `points x points` horizontal grid over
    /// `[-half_width, half_width]^2` at every vertical node.
    pub fn sample(&self, half_width: f64, points: usize) -> Vec<([f64; 3], [f64; 3])> {
        let mut out = Vec::with_capacity(points * points * self.y.len());
        let step = if points > 1 { 2.0 * half_width / (points - 1) as f64 } else { 0.0 };
        for a in 0..points {
            for b in 0..points {
                let yh = [-half_width + a as f64 * step, -half_width + b as f64 * step];
                for (j, &y3) in self.y.iter().enumerate() {
                    out.push(([yh[0], yh[1], y3], self.u0(yh, j)));
                }
            }
        }
        out
    }
}

/// `d^k f / dy^k` on one layer by repeated second-order differences.
fn layer_derivative(f: &[f64], h: f64, k: usize) -> Vec<f64> {
    let mut cur = f.to_vec();
    for _ in 0..k {
        let n = cur.len();
        let mut next = vec![0.0; n];
        next[0] = (-3.0 * cur[0] + 4.0 * cur[1] - cur[2]) / (2.0 * h);
        next[n - 1] = (3.0 * cur[n - 1] - 4.0 * cur[n - 2] + cur[n - 3]) / (2.0 * h);
        for i in 1..n - 1 {
            next[i] = (cur[i + 1] - cur[i - 1]) / (2.0 * h);
        }
        cur = next;
    }
    cur
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

/// `int (d^k f / dy3^k)^2 dy3`, differentiating within each layer.
pub fn vertical_square_integral(y: &[f64], f: &[f64], k: usize) -> f64 {
    let m = (y.len() - 1) / 2;
    let mut total = 0.0;
    for range in [0..m + 1, m..y.len()] {
        let ys = &y[range.clone()];
        let h = ys[1] - ys[0];
        let d = layer_derivative(&f[range], h, k);
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        total += trapezoid(&sq, h);
    }
    total
}

/// One-dimensional weights `w(y) = (chi_n^(b)(y))^2` integrated against
/// `1` and `cos(2 xi y)` on `[-n, n]`.
#[derive(Debug, Clone, Copy)]
struct Moments {
    w: f64,
    c: f64,
}

fn moments(n: f64, b: usize, xi: f64, h: f64) -> Moments {
    let count = (2.0 * n / h).ceil() as usize;
    let h = 2.0 * n / count as f64;
    let (mut w, mut c) = (0.0, 0.0);
    for j in 0..=count {
        let y = -n + j as f64 * h;
        let d = chi_n_derivatives(y, n)[b];
        let q = d * d;
        let wt = if j == 0 || j == count { 0.5 * h } else { h };
        w += wt * q;
        c += wt * q * (2.0 * xi * y).cos();
    }
    Moments { w, c }
}

/// Trapezoid minus closed form for `int_{-n}^{n} cos(2 xi y) dy`.
pub fn oscillatory_quadrature_error(xi: f64, n: f64, points_per_wavelength: usize) -> f64 {
    let h = 2.0 * std::f64::consts::PI / (xi.abs() * points_per_wavelength as f64);
    let count = (2.0 * n / h).ceil() as usize;
    let h = 2.0 * n / count as f64;
    let f: Vec<f64> = (0..=count).map(|j| (2.0 * xi * (-n + j as f64 * h)).cos()).collect();
    let exact = if xi == 0.0 { 2.0 * n } else { (2.0 * xi * n).sin() / xi };
    trapezoid(&f, h) - exact
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wave {
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffNorm {
    pub name: String,
    pub value: f64,
    /// Closed-form `n -> infinity` limit, when one exists.
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffField {
    pub n: f64,
    pub norms: Vec<CutoffNorm>,
}

impl CutoffField {
    pub fn get(&self, name: &str) -> Option<&CutoffNorm> {
        self.norms.iter().find(|c| c.name == name)
    }
}

/// Horizontal quadrature helper for one cutoff radius.
struct Horizontal {
    n: f64,
    xi: [f64; 2],
    h: f64,
    cache: std::collections::HashMap<(usize, usize), Moments>,
}

impl Horizontal {
    fn new(gm: &GrowingMode, n: f64, resolution: usize) -> Result<Self> {
        if resolution < 16 {
            return Err(Error::field(
                "cutoff.resolution",
                "at least 16 samples per horizontal wavelength are required",
            ));
        }
        let r = gm.xi1[0].hypot(gm.xi1[1]);
        let wavelength = if r > 0.0 { 2.0 * std::f64::consts::PI / r } else { 1.0 };
        Ok(Horizontal {
            n,
            xi: gm.xi1,
            h: (wavelength / resolution as f64).min(1.0 / 32.0),
            cache: Default::default(),
        })
    }

    fn m(&mut self, dir: usize, b: usize) -> Moments {
        let (n, xi, h) = (self.n, self.xi[dir], self.h);
        *self.cache.entry((dir, b)).or_insert_with(|| moments(n, b, xi, h))
    }

    /// `int int (chi^(b1)(y1) chi^(b2)(y2))^2 wave(xi . y)^2`.
    fn integral(&mut self, b: [usize; 2], wave: Wave) -> f64 {
        let (m1, m2) = (self.m(0, b[0]), self.m(1, b[1]));
        let cross = m1.c * m2.c;
        match wave {
            Wave::Sin => 0.5 * (m1.w * m2.w - cross),
            Wave::Cos => 0.5 * (m1.w * m2.w + cross),
        }
    }
}

fn flip(w: Wave, order: usize) -> Wave {
    if order % 2 == 0 {
        w
    } else if w == Wave::Sin {
        Wave::Cos
    } else {
        Wave::Sin
    }
}

/// `||chi_nn d^beta u0_comp||^2 / n^2` with the derivative on `u0`, and its
/// limit `8 |xi1|^(2 b1) |xi2|^(2 b2) int (d3^b3 f)^2`.
pub fn cutoff_term(
    gm: &GrowingMode,
    comp: usize,
    beta: [usize; 3],
    n: f64,
    resolution: usize,
) -> Result<(f64, f64)> {
    let mut hz = Horizontal::new(gm, n, resolution)?;
    Ok(cutoff_term_with(gm, &mut hz, comp, beta))
}

fn profile_of(gm: &GrowingMode, comp: usize) -> (&[f64], Wave) {
    match comp {
        0 => (&gm.phi, Wave::Sin),
        1 => (&gm.theta, Wave::Sin),
        _ => (&gm.psi, Wave::Cos),
    }
}

fn cutoff_term_with(gm: &GrowingMode, hz: &mut Horizontal, comp: usize, beta: [usize; 3]) -> (f64, f64) {
    let (f, wave) = profile_of(gm, comp);
    let vert = vertical_square_integral(&gm.y, f, beta[2]);
    let amp = gm.xi1[0].abs().powi(2 * beta[0] as i32) * gm.xi1[1].abs().powi(2 * beta[1] as i32);
    let horiz = hz.integral([0, 0], flip(wave, beta[0] + beta[1]));
    let n2 = hz.n * hz.n;
    (4.0 * vert * amp * horiz / n2, 8.0 * amp * vert)
}

/// `||d1^b1 d2^b2 chi_nn . d3^b3 u0||^2 / n` summed over components, with the
/// horizontal derivatives on the cutoff only.
fn dchi_term(gm: &GrowingMode, hz: &mut Horizontal, beta: [usize; 3]) -> f64 {
    let mut total = 0.0;
    for comp in 0..3 {
        let (f, wave) = profile_of(gm, comp);
        let vert = vertical_square_integral(&gm.y, f, beta[2]);
        total += 4.0 * vert * hz.integral([beta[0], beta[1]], wave);
    }
    total / hz.n
}

fn multi_indices(max: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for b1 in 0..=max {
        for b2 in 0..=max - b1 {
            for b3 in 0..=max - b1 - b2 {
                out.push([b1, b2, b3]);
            }
        }
    }
    out
}

/// Norms of `chi_nn (eta0, u0) / n` and the derivative-weighted sums.
pub fn cutoff_norms(gm: &GrowingMode, n: f64, resolution: usize) -> Result<CutoffField> {
    if !(n >= 2.0 && n.is_finite()) {
        return Err(Error::field("cutoff.n", "must be >= 2"));
    }
    let mut hz = Horizontal::new(gm, n, resolution)?;
    let mut norms = Vec::new();
    let c7 = gm.c7;

    let (h1, l1) = cutoff_term_with(gm, &mut hz, 0, [0, 0, 0]);
    let (h2, l2) = cutoff_term_with(gm, &mut hz, 1, [0, 0, 0]);
    let (v3, l3) = cutoff_term_with(gm, &mut hz, 2, [0, 0, 0]);
    let p0 = gm.psi[gm.interface_index];
    let trace = 4.0 * p0 * p0 * hz.integral([0, 0], Wave::Cos) / (n * n);
    let trace_limit = 8.0 * p0 * p0;

    for (prefix, scale) in [("u0", 1.0), ("eta0", 1.0 / c7)] {
        let mut push = |name: &str, sq: f64, lim: f64| {
            norms.push(CutoffNorm {
                name: format!("{prefix}_{name}"),
                value: sq.sqrt() * scale,
                limit: Some(lim.sqrt() * scale),
            })
        };
        push("h_l2", h1 + h2, l1 + l2);
        push("3_l2", v3, l3);
        push("3_trace", trace, trace_limit);
    }

    let mut h4 = 0.0;
    let mut h4_limit = 0.0;
    let mut dchi = 0.0;
    for beta in multi_indices(4) {
        for comp in 0..3 {
            let (v, l) = cutoff_term_with(gm, &mut hz, comp, beta);
            h4 += v;
            h4_limit += l;
        }
        if beta[0] + beta[1] >= 1 {
            dchi += dchi_term(gm, &mut hz, beta);
        }
    }
    norms.push(CutoffNorm {
        name: "u0_h4_sum".into(),
        value: h4.sqrt(),
        limit: Some(h4_limit.sqrt()),
    });
    norms.push(CutoffNorm {
        name: "u0_dchi_sum".into(),
        value: dchi,
        limit: None,
    });
    Ok(CutoffField { n, norms })
}

/// Per-mode trial field: real and imaginary parts of the vertical profile.
#[derive(Debug, Clone)]
pub struct GrowthTrial {
    pub xi: [f64; 2],
    pub re: DVector<f64>,
    pub im: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthCheck {
    /// `max (LHS - RHS)+ / scale` with the left side from `E`.
    pub max_violation: f64,
    /// Same with the left side from the rewritten `E`.
    pub max_violation_alt: f64,
    pub trials: usize,
}

/// Checks `E(w) <= Lambda^2 J(w) + Lambda D(w)` on every trial, where the
/// forms act on real and imaginary parts separately.
pub fn growth_inequality_check(
    profile: &EquilibriumProfile,
    cfg: &FluidConfig,
    grid: &VerticalGrid,
    lambda_max: f64,
    trials: &[GrowthTrial],
) -> Result<GrowthCheck> {
    if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
        return Err(Error::Domain(format!("Lambda must be >= 0, got {lambda_max}")));
    }
    let mut worst = 0.0f64;
    let mut worst_alt = 0.0f64;
    let mut forms: Option<crate::assembly::FormSet> = None;
    for t in trials {
        if forms.as_ref().map_or(true, |f| f.xi != t.xi) {
            forms = Some(assemble_forms(profile, grid, cfg, t.xi)?);
        }
        let f = forms.as_ref().expect("assembled");
        let j = f.j_of(&t.re) + f.j_of(&t.im);
        let d = f.d_of(&t.re) + f.d_of(&t.im);
        let e = f.e_of(&t.re) + f.e_of(&t.im);
        let ea = f.e_alt_of(&t.re) + f.e_alt_of(&t.im);
        let rhs = lambda_max * lambda_max * j + lambda_max * d;
        let scale = rhs.max(e.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((e - rhs).max(0.0) / scale);
        worst_alt = worst_alt.max((ea - rhs).max(0.0) / scale.max(ea.abs()));
    }
    Ok(GrowthCheck {
        max_violation: worst,
        max_violation_alt: worst_alt,
        trials: trials.len(),
    })
}

/// Random per-mode trials: `per_xi` fields at each frequency, nodal values
/// uniform in `[-1, 1]`.
pub fn random_trials<R: Rng>(
    grid: &VerticalGrid,
    xis: &[[f64; 2]],
    per_xi: usize,
    rng: &mut R,
) -> Vec<GrowthTrial> {
    let dim = grid.dim();
    let mut out = Vec::with_capacity(xis.len() * per_xi);
    for &xi in xis {
        for _ in 0..per_xi {
            let re = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let im = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            out.push(GrowthTrial { xi, re, im });
        }
    }
    out
}
