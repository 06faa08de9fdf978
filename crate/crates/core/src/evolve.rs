//! Per-frequency time integration of `J s'' = E s - D s'`, used to check
//! computed growth rates against actual exponential growth.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::Serialize;

use crate::assembly::{trace_at_interface, FormSet};
use crate::error::{Error, Result};

/// Displacement `sigma` and velocity `sigma_dot` dof-vectors at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub sigma: DVector<f64>,
    pub sigma_dot: DVector<f64>,
    pub t: f64,
}

impl EvolutionState {
    pub fn zeros(dim: usize) -> Self {
        EvolutionState {
            sigma: DVector::zeros(dim),
            sigma_dot: DVector::zeros(dim),
            t: 0.0,
        }
    }

    /// `(v, lambda v)`: the exact initial data of the growing mode `e^{lambda t} v`.
    pub fn eigenmode(v: &DVector<f64>, lambda: f64) -> Self {
        EvolutionState {
            sigma: v.clone(),
            sigma_dot: v * lambda,
            t: 0.0,
        }
    }
}

/// Implicit trapezoidal stepper with the system matrix factored once.
pub struct Stepper<'a> {
    forms: &'a FormSet,
    dt: f64,
    lu: LU<f64, Dyn, Dyn>,
    explicit: DMatrix<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(forms: &'a FormSet, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::field("evolve.dt", "must be finite and > 0"));
        }
        let q = 0.25 * dt * dt;
        let implicit = &forms.j + &forms.d * (0.5 * dt) - &forms.e * q;
        let explicit = &forms.j - &forms.d * (0.5 * dt) + &forms.e * q;
        let lu = implicit.lu();
        if !lu.is_invertible() {
            return Err(Error::Numerical("trapezoidal system matrix is singular".into()));
        }
        Ok(Stepper { forms, dt, lu, explicit })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &EvolutionState) -> Result<EvolutionState> {
        let rhs = &self.explicit * &state.sigma_dot + (&self.forms.e * &state.sigma) * self.dt;
        let v1 = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("trapezoidal solve failed".into()))?;
        let sigma = &state.sigma + (&state.sigma_dot + &v1) * (0.5 * self.dt);
        Ok(EvolutionState {
            sigma,
            sigma_dot: v1,
            t: state.t + self.dt,
        })
    }
}

/// One trapezoidal step.
pub fn step(forms: &FormSet, state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
    Stepper::new(forms, dt)?.step(state)
}

/// `H = v^T J v / 2 - sigma^T E sigma / 2`; the scheme satisfies
/// `H1 - H0 = -dt vbar^T D vbar` with `vbar` the mean velocity.
pub fn discrete_energy(forms: &FormSet, state: &EvolutionState) -> f64 {
    0.5 * forms.j_of(&state.sigma_dot) - 0.5 * forms.e_of(&state.sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub j_norm: f64,
    pub psi0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub rate: f64,
    pub trajectory: Vec<TrajectoryRow>,
}

fn scaled_norm(forms: &FormSet, sigma: &DVector<f64>) -> f64 {
    let m = sigma.amax();
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * forms.j_of(&(sigma / m)).max(0.0).sqrt()
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, y) in points {
        num += (t - mt) * (y - my);
        den += (t - mt) * (t - mt);
    }
    (den > 0.0).then(|| num / den)
}

/// Integrates to `horizon` and fits the slope of `ln sqrt(sigma^T J sigma)`
/// over the second half of the run.
pub fn measure_growth(
    forms: &FormSet,
    ic: &EvolutionState,
    dt: f64,
    horizon: f64,
) -> Result<GrowthFit> {
    if !(horizon.is_finite() && horizon >= 10.0 * dt) {
        return Err(Error::field("evolve.horizon", "must be at least 10 dt"));
    }
    let stepper = Stepper::new(forms, dt)?;
    let steps = (horizon / dt).round() as usize;
    let mut state = ic.clone();
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut fit = Vec::new();
    let record = |s: &EvolutionState| TrajectoryRow {
        t: s.t,
        j_norm: scaled_norm(forms, &s.sigma),
        psi0: trace_at_interface(&forms.grid, &s.sigma),
    };
    trajectory.push(record(&state));
    for k in 1..=steps {
        state = stepper.step(&state)?;
        let row = record(&state);
        if !(row.j_norm.is_finite() && row.j_norm < 1e300 && row.j_norm > 1e-300) {
            return Err(Error::Horizon {
                reason: format!("solution norm left the representable range at t = {}", row.t),
                partial_rate: slope(&fit),
            });
        }
        if 2 * k >= steps {
            fit.push((row.t, row.j_norm.ln()));
        }
        trajectory.push(row);
    }
    let rate = slope(&fit).ok_or_else(|| Error::Numerical("empty fit window".into()))?;
    Ok(GrowthFit { rate, trajectory })
}
