//! Finite-element assembly of the per-mode quadratic forms.
//!
//! Unknowns are continuous piecewise-linear `(phi, theta, psi)` on a vertical
//! grid with one shared node at the interface. Boundary values at `h_minus`
//! and `h_plus` are eliminated, and the free degrees of freedom are stored in
//! component blocks: index `comp * m + (node - 1)` with `m` free nodes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::physics::{EquilibriumProfile, FluidConfig, Side};

const GAUSS: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

/// Vertical P1 grid with a single interface node.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalGrid {
    pub nodes: Vec<f64>,
    pub elements_per_layer: usize,
    pub interface_index: usize,
}

impl VerticalGrid {
    /// Number of free (interior) nodes.
    pub fn free_nodes(&self) -> usize {
        self.nodes.len() - 2
    }

    /// Number of free degrees of freedom, `3 * free_nodes`.
    pub fn dim(&self) -> usize {
        3 * self.free_nodes()
    }

    /// Index of component `comp` (0 = phi, 1 = theta, 2 = psi) at `node`, or
    /// `None` on an eliminated boundary node.
    pub fn dof(&self, comp: usize, node: usize) -> Option<usize> {
        if node == 0 || node + 1 >= self.nodes.len() {
            None
        } else {
            Some(comp * self.free_nodes() + node - 1)
        }
    }

    pub fn h_minus(&self) -> f64 {
        self.nodes[0]
    }

    pub fn h_plus(&self) -> f64 {
        *self.nodes.last().expect("non-empty grid")
    }

    /// Side of the element `[nodes[e], nodes[e+1]]`.
    pub fn element_side(&self, e: usize) -> Side {
        if e < self.interface_index {
            Side::Lower
        } else {
            Side::Upper
        }
    }

    /// Nodal values of one component including the zero boundary values.
    pub fn component(&self, v: &DVector<f64>, comp: usize) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|i| self.dof(comp, i).map_or(0.0, |k| v[k]))
            .collect()
    }

    /// Packs nodal values of `(phi, theta, psi)` into a free dof-vector;
    /// boundary entries are ignored.
    pub fn pack(&self, phi: &[f64], theta: &[f64], psi: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for (comp, vals) in [phi, theta, psi].into_iter().enumerate() {
            for (i, &x) in vals.iter().enumerate() {
                if let Some(k) = self.dof(comp, i) {
                    v[k] = x;
                }
            }
        }
        v
    }
}

/// Builds the uniform-per-layer grid over the profile's slab.
pub fn build_grid(profile: &EquilibriumProfile, elements_per_layer: usize) -> Result<VerticalGrid> {
    if elements_per_layer < 4 {
        return Err(Error::field("elements_per_layer", "must be >= 4"));
    }
    let n = elements_per_layer;
    let (hm, hp) = (profile.h_minus, profile.h_plus);
    let mut nodes = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        nodes.push(hm - hm * i as f64 / n as f64);
    }
    nodes.push(0.0);
    for i in 1..n {
        nodes.push(hp * i as f64 / n as f64);
    }
    nodes.push(hp);
    Ok(VerticalGrid {
        nodes,
        elements_per_layer: n,
        interface_index: n,
    })
}

/// Assembled forms at one horizontal frequency.
#[derive(Debug, Clone)]
pub struct FormSet {
    pub xi: [f64; 2],
    pub j: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub e_alt: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dim: usize,
    pub grid: VerticalGrid,
    points: Vec<QuadPoint>,
    g: f64,
    tension: f64,
    buoyancy: f64,
}

/// Coefficients at one quadrature point, kept for element-wise evaluation.
#[derive(Debug, Clone, Copy)]
struct QuadPoint {
    el: usize,
    t: f64,
    w: f64,
    rho: f64,
    pr: f64,
    gp: f64,
    mu: f64,
    zeta: f64,
}

/// `J(v)`, `E(v)`, rewritten `E(v)` and `D(v)` of one vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormValues {
    pub j: f64,
    pub e: f64,
    pub e_alt: f64,
    pub d: f64,
}

impl FormSet {
    /// All four forms at `v`, integrated element by element from nodal
    /// differences. Agrees with the matrices up to rounding, but avoids the
    /// cancellation of `v^T M v` when the forms are small.
    pub fn values(&self, v: &DVector<f64>) -> FormValues {
        let grid = &self.grid;
        let (phi, theta, psi) = (grid.component(v, 0), grid.component(v, 1), grid.component(v, 2));
        let [x1, x2] = self.xi;
        let mut out = FormValues { j: 0.0, e: 0.0, e_alt: 0.0, d: 0.0 };
        for q in &self.points {
            let (a, b) = (q.el, q.el + 1);
            let h = grid.nodes[b] - grid.nodes[a];
            let at = |f: &[f64]| f[a] * (1.0 - q.t) + f[b] * q.t;
            let dy = |f: &[f64]| (f[b] - f[a]) / h;
            let (p, th, ps) = (at(&phi), at(&theta), at(&psi));
            let (dp, dth, dps) = (dy(&phi), dy(&theta), dy(&psi));
            let x = x1 * p + x2 * th;
            let div = x + dps;
            let hyd = q.gp * ps - x - dps;
            let rot = x2 * p - x1 * th;
            let (s1, s2, sh) = (dp - x1 * ps, dth - x2 * ps, x - dps);
            out.j += q.w * q.rho * (p * p + th * th + ps * ps);
            out.e += q.w * (2.0 * q.rho * self.g * x * ps - q.pr * div * div);
            out.e_alt -= q.w * q.pr * hyd * hyd;
            out.d += q.w
                * ((q.zeta + q.mu / 3.0) * div * div + q.mu * (rot * rot + s1 * s1 + s2 * s2 + sh * sh));
        }
        let p0 = psi[grid.interface_index];
        out.e -= self.tension * p0 * p0;
        out.e_alt += (self.buoyancy - self.tension) * p0 * p0;
        out
    }


    pub fn xi_norm(&self) -> f64 {
        self.xi[0].hypot(self.xi[1])
    }

    pub fn j_of(&self, v: &DVector<f64>) -> f64 {
        self.values(v).j
    }

    pub fn e_of(&self, v: &DVector<f64>) -> f64 {
        self.values(v).e
    }

    pub fn e_alt_of(&self, v: &DVector<f64>) -> f64 {
        self.values(v).e_alt
    }

    pub fn d_of(&self, v: &DVector<f64>) -> f64 {
        self.values(v).d
    }
}

type Local = [[f64; 6]; 6];

/// Adds `c * (a.u)(b.u)`, symmetrized, to a local element matrix.
fn term(m: &mut Local, c: f64, a: &[f64; 6], b: &[f64; 6]) {
    for i in 0..6 {
        for j in 0..6 {
            m[i][j] += c * (a[i] * b[j] + b[i] * a[j]) * 0.5;
        }
    }
}

fn lin(terms: &[(f64, &[f64; 6])]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (c, v) in terms {
        for k in 0..6 {
            out[k] += c * v[k];
        }
    }
    out
}

/// Assembles `J`, `E`, the rewritten `E`, and `D` at frequency `xi`.
pub fn assemble_forms(
    profile: &EquilibriumProfile,
    grid: &VerticalGrid,
    cfg: &FluidConfig,
    xi: [f64; 2],
) -> Result<FormSet> {
    let tol = 1e-12 * (profile.h_plus - profile.h_minus);
    if (grid.h_minus() - profile.h_minus).abs() > tol
        || (grid.h_plus() - profile.h_plus).abs() > tol
        || grid.nodes[grid.interface_index] != 0.0
    {
        return Err(Error::Config(
            "grid and equilibrium profile cover different slabs".into(),
        ));
    }
    if !(xi[0].is_finite() && xi[1].is_finite()) {
        return Err(Error::field("xi", "must be finite"));
    }
    let [x1, x2] = xi;
    let g = cfg.g;
    let dim = grid.dim();
    let mut j = DMatrix::zeros(dim, dim);
    let mut e = DMatrix::zeros(dim, dim);
    let mut e_alt = DMatrix::zeros(dim, dim);
    let mut d = DMatrix::zeros(dim, dim);
    let mut points = Vec::with_capacity(2 * (grid.nodes.len() - 1));

    for el in 0..grid.nodes.len() - 1 {
        let (ya, yb) = (grid.nodes[el], grid.nodes[el + 1]);
        let h = yb - ya;
        let side = grid.element_side(el);
        let law = cfg.law(side);
        let (mu, zeta) = (cfg.mu(side), cfg.zeta(side));
        let mut lj = [[0.0; 6]; 6];
        let mut le = [[0.0; 6]; 6];
        let mut la = [[0.0; 6]; 6];
        let mut ld = [[0.0; 6]; 6];
        for (t, w) in GAUSS {
            let y = ya + t * h;
            let w = w * h;
            let rho = profile.rho_at(y, side);
            let pr = profile.pprime_rho_at(y, side);
            let gp = g / law.derivative(rho)?;
            points.push(QuadPoint { el, t, w, rho, pr, gp, mu, zeta });
            let (na, nb) = (1.0 - t, t);
            let (da, db) = (-1.0 / h, 1.0 / h);
            let phi = [na, nb, 0.0, 0.0, 0.0, 0.0];
            let theta = [0.0, 0.0, na, nb, 0.0, 0.0];
            let psi = [0.0, 0.0, 0.0, 0.0, na, nb];
            let dphi = [da, db, 0.0, 0.0, 0.0, 0.0];
            let dtheta = [0.0, 0.0, da, db, 0.0, 0.0];
            let dpsi = [0.0, 0.0, 0.0, 0.0, da, db];
            let x = lin(&[(x1, &phi), (x2, &theta)]);
            let div = lin(&[(1.0, &x), (1.0, &dpsi)]);
            let shear = lin(&[(1.0, &x), (-1.0, &dpsi)]);
            let rot = lin(&[(x2, &phi), (-x1, &theta)]);
            let s1 = lin(&[(1.0, &dphi), (-x1, &psi)]);
            let s2 = lin(&[(1.0, &dtheta), (-x2, &psi)]);
            let hyd = lin(&[(gp, &psi), (-1.0, &x), (-1.0, &dpsi)]);

            for v in [&phi, &theta, &psi] {
                term(&mut lj, w * rho, v, v);
            }
            term(&mut le, 2.0 * w * g * rho, &x, &psi);
            term(&mut le, -w * pr, &div, &div);
            term(&mut la, -w * pr, &hyd, &hyd);
            term(&mut ld, w * (zeta + mu / 3.0), &div, &div);
            for v in [&rot, &s1, &s2, &shear] {
                term(&mut ld, w * mu, v, v);
            }
        }
        let map: [Option<usize>; 6] = [
            grid.dof(0, el),
            grid.dof(0, el + 1),
            grid.dof(1, el),
            grid.dof(1, el + 1),
            grid.dof(2, el),
            grid.dof(2, el + 1),
        ];
        for a in 0..6 {
            let Some(ga) = map[a] else { continue };
            for b in 0..6 {
                let Some(gb) = map[b] else { continue };
                j[(ga, gb)] += lj[a][b];
                e[(ga, gb)] += le[a][b];
                e_alt[(ga, gb)] += la[a][b];
                d[(ga, gb)] += ld[a][b];
            }
        }
    }

    let k = grid
        .dof(2, grid.interface_index)
        .expect("interface node is free");
    let tension = cfg.theta * (x1 * x1 + x2 * x2);
    e[(k, k)] -= tension;
    e_alt[(k, k)] += g * profile.jump_rho - tension;

    Ok(FormSet {
        xi,
        j,
        e,
        e_alt,
        d,
        dim,
        grid: grid.clone(),
        points,
        g,
        tension,
        buoyancy: g * profile.jump_rho,
    })
}

/// The `psi` component of `v` at the interface node.
pub fn trace_at_interface(grid: &VerticalGrid, v: &DVector<f64>) -> f64 {
    grid.dof(2, grid.interface_index).map_or(0.0, |k| v[k])
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::physics::{build_equilibrium, PressureLaw};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn reference_config() -> FluidConfig {
        FluidConfig {
            g: 1.0,
            theta: 0.0,
            mu_plus: 0.1,
            mu_minus: 0.1,
            zeta_plus: 0.1,
            zeta_minus: 0.1,
            h_minus: -1.0,
            h_plus: 1.0,
            p_plus: PressureLaw::affine(1.0, 0.0),
            p_minus: PressureLaw::affine(2.0, 0.0),
            rho_minus_at_interface: 1.0,
        }
    }

    pub(crate) fn forms_for(cfg: &FluidConfig, n: usize, xi: [f64; 2]) -> FormSet {
        let profile = build_equilibrium(cfg, n + 1).unwrap();
        let grid = build_grid(&profile, n).unwrap();
        assemble_forms(&profile, &grid, cfg, xi).unwrap()
    }

    #[test]
    fn grid_counting() {
        let p = build_equilibrium(&reference_config(), 9).unwrap();
        let g = build_grid(&p, 4).unwrap();
        assert_eq!(g.nodes.len(), 9);
        assert_eq!(g.interface_index, 4);
        assert_eq!(g.dim(), 21);
        assert!(build_grid(&p, 3).is_err());
    }

    #[test]
    fn grid_widths_per_layer() {
        let mut cfg = reference_config();
        cfg.h_minus = -2.0;
        let p = build_equilibrium(&cfg, 9).unwrap();
        let g = build_grid(&p, 8).unwrap();
        assert!((g.nodes[1] - g.nodes[0] - 0.25).abs() < 1e-15);
        assert!((g.nodes[9] - g.nodes[8] - 0.125).abs() < 1e-15);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.nodes[0], -2.0);
        assert_eq!(g.nodes[16], 1.0);
    }

    #[test]
    fn mismatched_bounds_rejected() {
        let cfg = reference_config();
        let p = build_equilibrium(&cfg, 9).unwrap();
        let mut other = cfg.clone();
        other.h_plus = 2.0;
        let q = build_equilibrium(&other, 9).unwrap();
        let g = build_grid(&q, 8).unwrap();
        assert!(matches!(assemble_forms(&p, &g, &cfg, [1.0, 0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn exact_symmetry() {
        let f = forms_for(&reference_config(), 16, [0.7, -0.4]);
        for m in [&f.j, &f.e, &f.e_alt, &f.d] {
            assert_eq!(m, &m.transpose());
        }
    }

    #[test]
    fn zero_frequency_decouples_potential() {
        let f = forms_for(&reference_config(), 8, [0.0, 0.0]);
        let m = f.grid.free_nodes();
        for r in 0..f.dim {
            for c in 0..f.dim {
                if r < 2 * m || c < 2 * m {
                    assert_eq!(f.e[(r, c)], 0.0);
                }
            }
        }
        let psi = f.e.view((2 * m, 2 * m), (m, m));
        assert!(psi.symmetric_eigenvalues().iter().all(|&l| l < 0.0));
    }

    #[test]
    fn elementwise_values_match_matrices() {
        let f = forms_for(&reference_config(), 8, [0.7, -0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let v = DVector::from_fn(f.dim, |_, _| rng.gen_range(-1.0..1.0));
            let fv = f.values(&v);
            let quad = |m: &DMatrix<f64>| v.dot(&(m * &v));
            for (a, b) in [(fv.j, quad(&f.j)), (fv.e, quad(&f.e)), (fv.e_alt, quad(&f.e_alt)), (fv.d, quad(&f.d))] {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} {b}");
            }
        }
    }

    #[test]
    fn dissipation_matches_direct_quadrature() {
        let cfg = reference_config();
        let n = 16;
        let f = forms_for(&cfg, n, [1.0, 0.0]);
        let nodes = &f.grid.nodes;
        let phi: Vec<f64> = nodes.iter().map(|y| (std::f64::consts::PI * y).sin() * (1.0 - y * y)).collect();
        let zero = vec![0.0; nodes.len()];
        let v = f.grid.pack(&phi, &zero, &zero);
        // psi = theta = 0, xi = (1,0): integrand (zeta + 4 mu / 3) phi^2 + mu phi'^2.
        let mut direct = 0.0;
        for e in 0..nodes.len() - 1 {
            let h = nodes[e + 1] - nodes[e];
            let side = f.grid.element_side(e);
            let (mu, zeta) = (cfg.mu(side), cfg.zeta(side));
            let dp = (phi[e + 1] - phi[e]) / h;
            for (t, w) in GAUSS {
                let p = phi[e] * (1.0 - t) + phi[e + 1] * t;
                direct += w * h * ((zeta + 4.0 * mu / 3.0) * p * p + mu * dp * dp);
            }
        }
        assert!((f.d_of(&v) - direct).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn mass_is_positive_definite() {
        let f = forms_for(&reference_config(), 16, [1.0, 1.0]);
        assert!(f.j.clone().cholesky().is_some());
        let min = f.j.symmetric_eigenvalues().min();
        assert!(min > 0.0);
    }

    #[test]
    fn dissipation_positive_on_random_vectors() {
        let f = forms_for(&reference_config(), 16, [0.3, 1.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = DVector::from_fn(f.dim, |_, _| rng.gen_range(-1.0..1.0));
            assert!(f.d_of(&v) > 0.0);
        }
    }

    #[test]
    fn trace_examples() {
        let f = forms_for(&reference_config(), 8, [1.0, 0.0]);
        let grid = &f.grid;
        assert_eq!(trace_at_interface(grid, &DVector::zeros(f.dim)), 0.0);
        let ones = vec![1.0; grid.nodes.len()];
        let zero = vec![0.0; grid.nodes.len()];
        assert_eq!(trace_at_interface(grid, &grid.pack(&zero, &zero, &ones)), 1.0);
        let mut hat = zero.clone();
        hat[grid.interface_index] = 1.0;
        assert_eq!(trace_at_interface(grid, &grid.pack(&zero, &zero, &hat)), 1.0);
    }

    #[test]
    fn surface_tension_enters_both_energy_forms() {
        let mut cfg = reference_config();
        let base = forms_for(&cfg, 8, [1.0, 1.0]);
        cfg.theta = 0.5;
        let tens = forms_for(&cfg, 8, [1.0, 1.0]);
        let k = base.grid.dof(2, base.grid.interface_index).unwrap();
        assert!((base.e[(k, k)] - tens.e[(k, k)] - 1.0).abs() < 1e-14);
        assert!((base.e_alt[(k, k)] - tens.e_alt[(k, k)] - 1.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn forms_are_rotation_invariant(angle in 0.0f64..std::f64::consts::TAU, r in 0.05f64..3.0) {
            let cfg = reference_config();
            let a = forms_for(&cfg, 8, [r, 0.0]);
            let b = forms_for(&cfg, 8, [r * angle.cos(), r * angle.sin()]);
            let (ma, mb) = (a.e.symmetric_eigenvalues().max(), b.e.symmetric_eigenvalues().max());
            prop_assert!((ma - mb).abs() <= 1e-9 * (1.0 + ma.abs()));
            let (da, db) = (a.d.symmetric_eigenvalues().min(), b.d.symmetric_eigenvalues().min());
            prop_assert!((da - db).abs() <= 1e-9 * (1.0 + da.abs()));
        }
    }
}
