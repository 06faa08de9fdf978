#![allow(dead_code)]

pub mod oracle;

use rt_spectra::physics::{FluidConfig, PressureLaw};

/// Library form of [`oracle::Slab::reference`].
pub fn reference_config(theta: f64) -> FluidConfig {
    FluidConfig {
        g: 1.0,
        theta,
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

pub fn reference_json(theta: f64) -> serde_json::Value {
    serde_json::json!({ "physics": serde_json::to_value(reference_config(theta)).unwrap() })
}
