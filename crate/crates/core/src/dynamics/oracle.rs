//! Exact single-mode solutions for a one-term Prony kernel and `f = 0`.
//!
//! The closed system `u' = v`, `v' = -lambda (u + zeta) + g`,
//! `zeta' = -delta zeta + (c/delta) v` is augmented with the forcing
//! generator `(sin, cos, 1)` so one matrix exponential gives the full
//! variation-of-constants solution.

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleForce {
    Zero,
    Constant(f64),
    /// `amplitude sin(frequency t + phase)`
    Sin { amplitude: f64, frequency: f64, phase: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
}

/// Matrix of the homogeneous `(u, v, zeta)` system.
pub fn system_matrix(lambda: f64, amplitude: f64, rate: f64) -> Matrix3<f64> {
    Matrix3::new(
        0.0, 1.0, 0.0, //
        -lambda, 0.0, -lambda, //
        0.0, amplitude / rate, -rate,
    )
}

/// Exact trajectory from `(u, v) = initial` and zero memory, at `times`.
pub fn matrix_oracle(
    kernel: &MemoryKernel,
    lambda: f64,
    force: OracleForce,
    initial: (f64, f64),
    times: &[f64],
) -> Result<OracleTrajectory> {
    let term = match kernel.prony_terms() {
        Some([t]) => *t,
        _ => return Err(Error::KernelMismatch("oracle needs a single-term Prony kernel".into())),
    };
    let (g_sin, g_one, omega, phase) = match force {
        OracleForce::Zero => (0.0, 0.0, 0.0, 0.0),
        OracleForce::Constant(a) => (0.0, a, 0.0, 0.0),
        OracleForce::Sin { amplitude, frequency, phase } => (amplitude, 0.0, frequency, phase),
    };
    let s = system_matrix(lambda, term.amplitude, term.rate);
    let mut m = Matrix6::<f64>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&s);
    m[(1, 3)] = g_sin;
    m[(1, 5)] = g_one;
    m[(3, 4)] = omega;
    m[(4, 3)] = -omega;
    let x0 = Vector6::new(initial.0, initial.1, 0.0, phase.sin(), phase.cos(), 1.0);
    let mut out = OracleTrajectory {
        times: times.to_vec(),
        u: Vec::with_capacity(times.len()),
        v: Vec::with_capacity(times.len()),
        zeta: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let x = (m * t).exp() * x0;
        out.u.push(x[0]);
        out.v.push(x[1]);
        out.zeta.push(x[2]);
    }
    Ok(out)
}
