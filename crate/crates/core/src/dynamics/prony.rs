//! Exact ODE reduction of Prony-sum memory.
//!
//! For `mu(s) = sum_j c_j exp(-delta_j s)` the modal integrals
//! `zeta_j = int c_j exp(-delta_j s) eta(s) ds` obey
//! `zeta_j' = -delta_j zeta_j + (c_j/delta_j) u_t`, and the quadratic
//! moments `psi_j = int c_j exp(-delta_j s) eta(s)^2 ds` (per mode) obey
//! `psi_j' = -delta_j psi_j + 2 zeta_j u_t`. Both are stepped with
//! exponential integrators that are exact for piecewise-linear inputs.

use crate::error::{Error, Result};
use crate::kernels::{MemoryKernel, PronyTerm};

#[derive(Debug, Clone, PartialEq)]
pub struct PronyEngine {
    terms: Vec<PronyTerm>,
    /// `zeta[j][n]`
    pub zeta: Vec<Vec<f64>>,
    /// `psi[j][n]`
    pub psi: Vec<Vec<f64>>,
    decay: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
}

// (1 - e^-z)/z and (z - 1 + e^-z)/z^2
fn phi_functions(z: f64) -> (f64, f64) {
    if z < 1e-4 {
        (1.0 - z / 2.0 + z * z / 6.0, 0.5 - z / 6.0 + z * z / 24.0)
    } else {
        let em1 = (-z).exp_m1();
        (-em1 / z, (z + em1) / (z * z))
    }
}

impl PronyEngine {
    /// Engine at rest (`eta = 0`) for `dim` modes and step `dt`.
    pub fn new(kernel: &MemoryKernel, dim: usize, dt: f64) -> Result<Self> {
        let terms = kernel
            .prony_terms()
            .ok_or_else(|| Error::KernelMismatch("Prony engine needs a Prony-sum kernel".into()))?
            .to_vec();
        let mut decay = Vec::new();
        let mut phi1 = Vec::new();
        let mut phi2 = Vec::new();
        for t in &terms {
            let z = t.rate * dt;
            decay.push((-z).exp());
            let (a, b) = phi_functions(z);
            phi1.push(a);
            phi2.push(b);
        }
        Ok(PronyEngine {
            zeta: vec![vec![0.0; dim]; terms.len()],
            psi: vec![vec![0.0; dim]; terms.len()],
            terms,
            decay,
            phi1,
            phi2,
        })
    }

    pub fn terms(&self) -> &[PronyTerm] {
        &self.terms
    }

    /// Coefficient `gamma` and vector `m` with
    /// `sum_j zeta_j(t + dt) = gamma u(t + dt) - m`, given `u(t)`.
    pub fn implicit_split(&self, u: &[f64], m: &mut [f64]) -> f64 {
        m.iter_mut().for_each(|x| *x = 0.0);
        let mut gamma = 0.0;
        for (j, t) in self.terms.iter().enumerate() {
            let a = t.amplitude / t.rate * self.phi1[j];
            gamma += a;
            for ((mi, z), ui) in m.iter_mut().zip(&self.zeta[j]).zip(u) {
                *mi += a * ui - self.decay[j] * z;
            }
        }
        gamma
    }

    /// Advances `zeta` across a step in which `u` moves from `u_old` to `u_new`.
    pub fn advance_zeta(&mut self, u_old: &[f64], u_new: &[f64]) {
        for (j, t) in self.terms.iter().enumerate() {
            let a = t.amplitude / t.rate * self.phi1[j];
            let e = self.decay[j];
            for ((z, uo), un) in self.zeta[j].iter_mut().zip(u_old).zip(u_new) {
                *z = e * *z + a * (un - uo);
            }
        }
    }

    /// Advances `psi` given `zeta` and velocity at both ends of the step;
    /// call after `advance_zeta` with the old `zeta` saved in `zeta_old`.
    pub fn advance_psi(&mut self, dt: f64, zeta_old: &[Vec<f64>], v_old: &[f64], v_new: &[f64]) {
        for j in 0..self.terms.len() {
            let e = self.decay[j];
            let wb = dt * self.phi2[j];
            let wa = dt * self.phi1[j] - wb;
            for n in 0..v_new.len() {
                let f_old = 2.0 * zeta_old[j][n] * v_old[n];
                let f_new = 2.0 * self.zeta[j][n] * v_new[n];
                self.psi[j][n] = e * self.psi[j][n] + wa * f_old + wb * f_new;
            }
        }
    }

    /// Modal `sum_j zeta_j` into `out`.
    pub fn zeta_sum(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for z in &self.zeta {
            for (o, x) in out.iter_mut().zip(z) {
                *o += x;
            }
        }
    }

    /// `int mu ||eta||^2_{sigma+1}` from the quadratic moments.
    pub fn memory_norm_sq(&self, eigenvalues: &[f64], sigma: f64) -> f64 {
        let mut s = 0.0;
        for psi in &self.psi {
            for (p, l) in psi.iter().zip(eigenvalues) {
                s += l.powf(sigma + 1.0) * p;
            }
        }
        s
    }

    /// `I = 1/2 sum_j delta_j int c_j e^{-delta_j s} ||eta||_1^2`.
    pub fn dissipation(&self, eigenvalues: &[f64]) -> f64 {
        let mut s = 0.0;
        for (t, psi) in self.terms.iter().zip(&self.psi) {
            let m: f64 = psi.iter().zip(eigenvalues).map(|(p, l)| l * p).sum();
            s += t.rate * m;
        }
        0.5 * s
    }
}
