#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Brute-force reference solver, written independently of the library.
//!
//! Unknowns are interleaved per node (`phi, theta, psi`), which makes every
//! form a symmetric band matrix of half-width 5. Instead of eigenvalues the
//! solver only asks whether a band matrix is positive definite (a banded
//! Cholesky that stops at the first non-positive pivot) and bisects on that.

const HALF_BAND: usize = 5;

/// Lower band storage: `band[i][k] = A[i][i - k]`.
#[derive(Clone)]
pub struct Band {
    pub n: usize,
    band: Vec<[f64; HALF_BAND + 1]>,
}

impl Band {
    pub fn zeros(n: usize) -> Self {
        Band { n, band: vec![[0.0; HALF_BAND + 1]; n] }
    }

    /// Adds `v` to the symmetric entry `(i, j)`.
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.band[r][r - c] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > HALF_BAND {
            0.0
        } else {
            self.band[r][r - c]
        }
    }

    /// `a A + b B + c C`.
    pub fn combine(terms: &[(f64, &Band)]) -> Band {
        let mut out = Band::zeros(terms[0].1.n);
        for (w, m) in terms {
            for (o, b) in out.band.iter_mut().zip(&m.band) {
                for k in 0..=HALF_BAND {
                    o[k] += w * b[k];
                }
            }
        }
        out
    }

    pub fn is_positive_definite(&self) -> bool {
        let n = self.n;
        let mut l = self.band.clone();
        for i in 0..n {
            for k in (1..=HALF_BAND.min(i)).rev() {
                let j = i - k;
                let mut s = l[i][k];
                for m in 1..=HALF_BAND {
                    if k + m > HALF_BAND || m > j {
                        break;
                    }
                    s -= l[i][k + m] * l[j][m];
                }
                l[i][k] = s / l[j][0];
            }
            let mut d = l[i][0];
            for k in 1..=HALF_BAND.min(i) {
                d -= l[i][k] * l[i][k];
            }
            if !(d > 0.0) {
                return false;
            }
            l[i][0] = d.sqrt();
        }
        true
    }

    pub fn quad(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.band[i][0] * v[i] * v[i];
            for k in 1..=HALF_BAND.min(i) {
                s += 2.0 * self.band[i][k] * v[i] * v[i - k];
            }
        }
        s
    }
}

/// One fluid layer with a closed-form density.
pub struct Layer {
    pub rho: Box<dyn Fn(f64) -> f64>,
    /// `P'(tau)`.
    pub dp: Box<dyn Fn(f64) -> f64>,
    pub mu: f64,
    pub zeta: f64,
}

pub struct Slab {
    pub g: f64,
    pub theta: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    pub lower: Layer,
    pub upper: Layer,
}

impl Slab {
    /// `P+(tau) = tau`, `P-(tau) = 2 tau`, `g = 1`, lower interface density 1,
    /// unit depths and `mu = zeta = 0.1` on both sides.
    pub fn reference(theta: f64) -> Self {
        Slab {
            g: 1.0,
            theta,
            h_minus: -1.0,
            h_plus: 1.0,
            lower: Layer {
                rho: Box::new(|y| (-0.5 * y).exp()),
                dp: Box::new(|_| 2.0),
                mu: 0.1,
                zeta: 0.1,
            },
            upper: Layer {
                rho: Box::new(|y| 2.0 * (-y).exp()),
                dp: Box::new(|_| 1.0),
                mu: 0.1,
                zeta: 0.1,
            },
        }
    }

    pub fn jump(&self) -> f64 {
        (self.upper.rho)(0.0) - (self.lower.rho)(0.0)
    }
}

pub struct Forms {
    pub j: Band,
    pub e: Band,
    pub d: Band,
    pub nodes: Vec<f64>,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// P1 forms with `n` elements per layer.
pub fn assemble(slab: &Slab, n: usize, xi: [f64; 2]) -> Forms {
    let nodes: Vec<f64> = (0..=2 * n)
        .map(|i| {
            if i <= n {
                slab.h_minus * (1.0 - i as f64 / n as f64)
            } else {
                slab.h_plus * (i - n) as f64 / n as f64
            }
        })
        .collect();
    let dim = 3 * (2 * n - 1);
    let (mut j, mut e, mut d) = (Band::zeros(dim), Band::zeros(dim), Band::zeros(dim));
    let [k1, k2] = xi;
    let g = slab.g;
    for el in 0..2 * n {
        let layer = if el < n { &slab.lower } else { &slab.upper };
        let (ya, yb) = (nodes[el], nodes[el + 1]);
        let h = yb - ya;
        // Local index 3 * a + c for node a in {0, 1} and component c.
        let global = |a: usize, c: usize| -> Option<usize> {
            let node = el + a;
            (1..2 * n).contains(&node).then(|| 3 * (node - 1) + c)
        };
        for (t, w) in GAUSS3 {
            let y = ya + t * h;
            let w = w * h;
            let rho = (layer.rho)(y);
            let dp = (layer.dp)(rho);
            let pr = dp * rho;
            let val = [1.0 - t, t];
            let der = [-1.0 / h, 1.0 / h];
            // Each quantity as a 6-vector of coefficients in local dofs.
            let comp = |f: &dyn Fn(usize, usize) -> f64| {
                let mut out = [0.0; 6];
                for a in 0..2 {
                    for c in 0..3 {
                        out[3 * a + c] = f(a, c);
                    }
                }
                out
            };
            let phi = comp(&|a, c| if c == 0 { val[a] } else { 0.0 });
            let theta = comp(&|a, c| if c == 1 { val[a] } else { 0.0 });
            let psi = comp(&|a, c| if c == 2 { val[a] } else { 0.0 });
            let dphi = comp(&|a, c| if c == 0 { der[a] } else { 0.0 });
            let dtheta = comp(&|a, c| if c == 1 { der[a] } else { 0.0 });
            let dpsi = comp(&|a, c| if c == 2 { der[a] } else { 0.0 });
            let mix = |terms: &[(f64, &[f64; 6])]| {
                let mut o = [0.0; 6];
                for (c, v) in terms {
                    for i in 0..6 {
                        o[i] += c * v[i];
                    }
                }
                o
            };
            let x = mix(&[(k1, &phi), (k2, &theta)]);
            let div = mix(&[(1.0, &x), (1.0, &dpsi)]);
            let hyd = mix(&[(g / dp, &psi), (-1.0, &x), (-1.0, &dpsi)]);
            let rot = mix(&[(k2, &phi), (-k1, &theta)]);
            let s1 = mix(&[(1.0, &dphi), (-k1, &psi)]);
            let s2 = mix(&[(1.0, &dtheta), (-k2, &psi)]);
            let sh = mix(&[(1.0, &x), (-1.0, &dpsi)]);

            let outer = |m: &mut Band, c: f64, a: &[f64; 6], b: &[f64; 6]| {
                for p in 0..6 {
                    let Some(gp) = global(p / 3, p % 3) else { continue };
                    for q in 0..6 {
                        let Some(gq) = global(q / 3, q % 3) else { continue };
                        if gp >= gq {
                            m.add(gp, gq, c * (a[p] * b[q] + b[p] * a[q]) * 0.5);
                        }
                    }
                }
            };
            for v in [&phi, &theta, &psi] {
                outer(&mut j, w * rho, v, v);
            }
            outer(&mut e, -w * pr, &hyd, &hyd);
            outer(&mut d, w * (layer.zeta + layer.mu / 3.0), &div, &div);
            for v in [&rot, &s1, &s2, &sh] {
                outer(&mut d, w * layer.mu, v, v);
            }
        }
    }
    let k = 3 * (n - 1) + 2;
    e.add(k, k, g * slab.jump() - slab.theta * (k1 * k1 + k2 * k2));
    Forms { j, e, d, nodes }
}

fn bisect(mut lo: f64, mut hi: f64, above: impl Fn(f64) -> bool) -> f64 {
    // `above(lo)` is false, `above(hi)` is true.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl Forms {
    /// Largest eigenvalue of `E - s D` relative to `J`.
    pub fn alpha(&self, s: f64) -> f64 {
        let pd = |mu: f64| Band::combine(&[(mu, &self.j), (-1.0, &self.e), (s, &self.d)]).is_positive_definite();
        let mut hi = 1.0;
        while !pd(hi) {
            hi *= 2.0;
        }
        let mut lo = -1.0;
        while pd(lo) {
            lo *= 2.0;
        }
        bisect(lo, hi, pd)
    }

    /// Smallest eigenvalue of `D` relative to `J`.
    pub fn min_dissipation(&self) -> f64 {
        let not_pd = |mu: f64| !Band::combine(&[(1.0, &self.d), (-mu, &self.j)]).is_positive_definite();
        let mut hi = 1.0;
        while !not_pd(hi) {
            hi *= 2.0;
        }
        bisect(0.0, hi, not_pd)
    }

    /// The growth rate: the smallest `s > 0` with `s^2 J + s D - E` positive
    /// definite, or `None` if that already holds at `s = 0+`.
    pub fn lambda(&self) -> Option<f64> {
        let pd = |s: f64| Band::combine(&[(s * s, &self.j), (s, &self.d), (-1.0, &self.e)]).is_positive_definite();
        if pd(1e-12) {
            return None;
        }
        let mut hi = 1.0;
        while !pd(hi) {
            hi *= 2.0;
        }
        Some(bisect(0.0, hi, pd))
    }
}

/// `(4 f(2n) - f(n)) / 3` from second-order data at `n` and `2n`.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

pub fn lambda_extrapolated(slab: &Slab, xi: [f64; 2]) -> f64 {
    let a = assemble(slab, 256, xi).lambda().expect("unstable");
    let b = assemble(slab, 512, xi).lambda().expect("unstable");
    richardson(a, b)
}

pub fn alpha_extrapolated(slab: &Slab, xi: [f64; 2], s: f64) -> f64 {
    richardson(assemble(slab, 256, xi).alpha(s), assemble(slab, 512, xi).alpha(s))
}

pub fn min_dissipation_extrapolated(slab: &Slab, xi: [f64; 2]) -> f64 {
    richardson(
        assemble(slab, 256, xi).min_dissipation(),
        assemble(slab, 512, xi).min_dissipation(),
    )
}
