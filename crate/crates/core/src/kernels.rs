//! Admissible memory kernels `mu = -kappa'` and their lag-grid quadrature.
//!
//! Two families are supported: finite exponential (Prony) sums
//! `mu(s) = sum_j c_j exp(-delta_j s)` and the weakly singular class
//! `mu(s) = C s^(-alpha) exp(-delta s)`. Every window integral used by the
//! solver is evaluated in closed form through incomplete gamma functions, so
//! singular kernels get finite first-window weights.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PronyTerm {
    pub amplitude: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelForm {
    PronySum(Vec<PronyTerm>),
    PowerLawExp { amplitude: f64, alpha: f64, rate: f64 },
}

/// A memory kernel together with the decay constant `delta` used in the
/// condition `mu' + delta mu <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernel {
    form: KernelForm,
    decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: &'static str,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "violates {} (witness {})", self.condition, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

pub const COND_AMPLITUDE: &str = "amplitude > 0";
pub const COND_RATE: &str = "rate > 0";
pub const COND_ALPHA: &str = "alpha in [0,1)";
pub const COND_NONNEGATIVE: &str = "mu(s) >= 0";
pub const COND_K2: &str = "mu'(s) + delta*mu(s) <= 0";
pub const COND_MASS: &str = "kappa0 in (0,1)";
pub const COND_POWER_BOUND: &str = "C < delta^(1-alpha)/Gamma(1-alpha)";
pub const COND_DECAY: &str = "delta > 0";

/// Log-spaced sample points in `[1e-4, 1e2]` used for the sampled checks.
pub fn sample_lags(count: usize) -> impl Iterator<Item = f64> {
    let (lo, hi) = (1e-4f64.ln(), 1e2f64.ln());
    (0..count).map(move |i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
}

impl MemoryKernel {
    /// Prony sum with `delta` set to the smallest rate.
    pub fn prony(terms: &[(f64, f64)]) -> Self {
        let terms: Vec<PronyTerm> = terms
            .iter()
            .map(|&(amplitude, rate)| PronyTerm { amplitude, rate })
            .collect();
        let decay = terms.iter().map(|t| t.rate).fold(f64::INFINITY, f64::min);
        MemoryKernel {
            form: KernelForm::PronySum(terms),
            decay,
        }
    }

    pub fn power_law_exp(amplitude: f64, alpha: f64, rate: f64) -> Self {
        MemoryKernel {
            form: KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            },
            decay: rate,
        }
    }

    /// Overrides the decay constant. Only values not larger than the default
    /// keep the kernel admissible.
    pub fn with_decay(mut self, decay: f64) -> Self {
        self.decay = decay;
        self
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn prony_terms(&self) -> Option<&[PronyTerm]> {
        match &self.form {
            KernelForm::PronySum(t) => Some(t),
            KernelForm::PowerLawExp { .. } => None,
        }
    }

    /// `mu(s)`.
    pub fn density(&self, s: f64) -> f64 {
        match &self.form {
            KernelForm::PronySum(terms) => terms
                .iter()
                .map(|t| t.amplitude * (-t.rate * s).exp())
                .sum(),
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => amplitude * s.powf(-alpha) * (-rate * s).exp(),
        }
    }

    /// `mu'(s)`, analytic.
    pub fn derivative(&self, s: f64) -> f64 {
        match &self.form {
            KernelForm::PronySum(terms) => terms
                .iter()
                .map(|t| -t.amplitude * t.rate * (-t.rate * s).exp())
                .sum(),
            KernelForm::PowerLawExp { alpha, rate, .. } => {
                -self.density(s) * (alpha / s + rate)
            }
        }
    }

    fn well_formed(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::DivergentIntegral(m.to_string()));
        match &self.form {
            KernelForm::PronySum(terms) => {
                if terms.is_empty() {
                    return bad("empty Prony sum");
                }
                if terms.iter().any(|t| !(t.rate > 0.0) || !t.amplitude.is_finite()) {
                    return bad("Prony rates must be positive");
                }
            }
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => {
                if !(*rate > 0.0) || !(*alpha < 1.0) || !amplitude.is_finite() {
                    return bad("power-law kernel needs alpha < 1 and rate > 0");
                }
            }
        }
        Ok(())
    }

    /// Total mass `kappa0 = int_0^inf mu`, closed form.
    pub fn total_mass(&self) -> Result<f64> {
        self.well_formed()?;
        Ok(match &self.form {
            KernelForm::PronySum(terms) => terms.iter().map(|t| t.amplitude / t.rate).sum(),
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => amplitude * gamma(1.0 - alpha) * rate.powf(alpha - 1.0),
        })
    }

    /// Total mass by adaptive quadrature, independent of the closed forms.
    pub fn total_mass_by_quadrature(&self) -> Result<f64> {
        self.well_formed()?;
        let q = match &self.form {
            KernelForm::PowerLawExp { alpha, .. } => 1.0 / (1.0 - alpha),
            KernelForm::PronySum(_) => 1.0,
        };
        // s = t^q on (0,1) removes the s^(-alpha) singularity; s = 1/t on (1, inf).
        let near = quad::integrate(
            |t: f64| q * t.powf(q - 1.0) * self.density(t.powf(q)),
            0.0,
            1.0,
            1e-14,
            0.0,
        );
        let far = quad::integrate(
            |t: f64| {
                if t <= 0.0 {
                    0.0
                } else {
                    self.density(1.0 / t) / (t * t)
                }
            },
            0.0,
            1.0,
            1e-14,
            0.0,
        );
        Ok(near + far)
    }

    /// `int_0^b s^m mu(s) ds` for integer moment `m`.
    pub fn moment_below(&self, b: f64, m: i32) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        let mf = f64::from(m);
        match &self.form {
            KernelForm::PronySum(terms) => terms.iter().map(|t| prony_moment(t, b, mf)).sum(),
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => {
                let a = mf + 1.0 - alpha;
                amplitude * gamma(a) * rate.powf(-a) * lower_regularized(a, rate * b)
            }
        }
    }

    /// `int_s^inf mu`.
    pub fn mass_above(&self, s: f64) -> f64 {
        match &self.form {
            KernelForm::PronySum(terms) => terms
                .iter()
                .map(|t| t.amplitude / t.rate * (-t.rate * s).exp())
                .sum(),
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => {
                let a = 1.0 - alpha;
                if s <= 0.0 {
                    amplitude * gamma(a) * rate.powf(-a)
                } else {
                    amplitude * gamma(a) * rate.powf(-a) * gamma_ur(a, rate * s)
                }
            }
        }
    }

    /// `int_0^s mu`.
    pub fn mass_below(&self, s: f64) -> f64 {
        self.moment_below(s, 0)
    }

    /// `int_a^b mu` for `0 <= a < b`.
    pub fn window_mass(&self, a: f64, b: f64) -> f64 {
        if a <= 0.0 {
            self.mass_below(b)
        } else {
            self.mass_above(a) - self.mass_above(b)
        }
    }

    /// `int_0^b s^2 (-mu'(s)) ds`, finite also for singular kernels.
    pub fn dissipation_moment_below(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        match &self.form {
            // -mu' is the Prony sum with amplitudes c_j delta_j
            KernelForm::PronySum(terms) => {
                terms.iter().map(|t| t.rate * prony_moment(t, b, 2.0)).sum()
            }
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => {
                // -mu' = alpha C s^(-alpha-1) e^(-delta s) + delta mu
                let singular = if *alpha > 0.0 {
                    let a = 2.0 - alpha;
                    alpha * amplitude * gamma(a) * rate.powf(-a) * lower_regularized(a, rate * b)
                } else {
                    0.0
                };
                singular + rate * self.moment_below(b, 2)
            }
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let push = |v: &mut Vec<Violation>, condition, value| v.push(Violation { condition, value });
        if !(self.decay > 0.0) {
            push(&mut violations, COND_DECAY, self.decay);
        }
        let mut structural = false;
        match &self.form {
            KernelForm::PronySum(terms) => {
                if terms.is_empty() {
                    push(&mut violations, COND_AMPLITUDE, 0.0);
                    structural = true;
                }
                for t in terms {
                    if !(t.amplitude > 0.0) {
                        push(&mut violations, COND_AMPLITUDE, t.amplitude);
                    }
                    if !(t.rate > 0.0) {
                        push(&mut violations, COND_RATE, t.rate);
                        structural = true;
                    }
                }
                if let Some(min_rate) = terms.iter().map(|t| t.rate).reduce(f64::min) {
                    if min_rate < self.decay {
                        push(&mut violations, COND_K2, self.decay - min_rate);
                    }
                }
            }
            KernelForm::PowerLawExp {
                amplitude,
                alpha,
                rate,
            } => {
                if !(*amplitude > 0.0) {
                    push(&mut violations, COND_AMPLITUDE, *amplitude);
                }
                if !(*rate > 0.0) {
                    push(&mut violations, COND_RATE, *rate);
                    structural = true;
                }
                if !(0.0..1.0).contains(alpha) {
                    push(&mut violations, COND_ALPHA, *alpha);
                    structural = true;
                }
                if !structural {
                    let bound = rate.powf(1.0 - alpha) / gamma(1.0 - alpha);
                    if !(*amplitude < bound) {
                        push(&mut violations, COND_POWER_BOUND, *amplitude);
                    }
                }
                if *rate < self.decay {
                    push(&mut violations, COND_K2, self.decay - rate);
                }
            }
        }
        if !structural {
            let mut worst_neg = 0.0f64;
            let mut worst_k2 = f64::NEG_INFINITY;
            for s in sample_lags(1000) {
                let mu = self.density(s);
                worst_neg = worst_neg.min(mu);
                worst_k2 = worst_k2.max(self.derivative(s) + self.decay * mu);
            }
            if worst_neg < 0.0 {
                push(&mut violations, COND_NONNEGATIVE, worst_neg);
            }
            if worst_k2 > 1e-12 && !violations.iter().any(|v| v.condition == COND_K2) {
                push(&mut violations, COND_K2, worst_k2);
            }
            match self.total_mass() {
                Ok(k) if k > 0.0 && k < 1.0 => {}
                Ok(k) => push(&mut violations, COND_MASS, k),
                Err(_) => push(&mut violations, COND_MASS, f64::INFINITY),
            }
        }
        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }
}

fn prony_moment(t: &PronyTerm, b: f64, m: f64) -> f64 {
    let a = m + 1.0;
    t.amplitude * gamma(a) * t.rate.powf(-a) * lower_regularized(a, t.rate * b)
}

fn lower_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x > 700.0 {
        1.0
    } else {
        gamma_lr(a, x)
    }
}

/// What happens to kernel mass beyond the last stored lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailMode {
    /// Drop the tail.
    Truncate,
    /// Add the tail mass to the last lag weight.
    Lump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPolicy {
    pub mode: TailMode,
    /// Largest admissible tail mass as a fraction of `kappa0`.
    pub max_tail_fraction: f64,
}

impl Default for TailPolicy {
    fn default() -> Self {
        TailPolicy {
            mode: TailMode::Truncate,
            max_tail_fraction: 1e-6,
        }
    }
}

impl TailPolicy {
    pub fn truncate(max_tail_fraction: f64) -> Self {
        TailPolicy {
            mode: TailMode::Truncate,
            max_tail_fraction,
        }
    }
}

/// Lag-grid weights on `s_k = k dt`, `k = 1..=n_max`.
///
/// Window `k` covers `((k-1/2)dt, (k+1/2)dt)`; the first window starts at 0.
/// `mass` holds the plain window masses of `mu`. `norm` and `dissipation`
/// hold the weights of `mu` and `-mu'` used for quadratic functionals of the
/// history: they agree with window masses except on the first window, where
/// the integrand is weighted by `(s/dt)^2` to follow `eta(s) ~ s` near 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    pub dt: f64,
    pub mass: Vec<f64>,
    pub norm: Vec<f64>,
    pub dissipation: Vec<f64>,
    /// Mass beyond the last window that the weights do not carry.
    pub tail: f64,
    pub total_mass: f64,
}

impl QuadratureWeights {
    pub fn n_max(&self) -> usize {
        self.mass.len()
    }

    /// Sum of the lag weights actually applied by the solver.
    pub fn applied_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Smallest lag count whose tail mass meets the policy.
pub fn history_depth(kernel: &MemoryKernel, dt: f64, policy: &TailPolicy) -> Result<usize> {
    let kappa0 = kernel.total_mass()?;
    let allowed = policy.max_tail_fraction * kappa0;
    let tail = |n: usize| kernel.mass_above((n as f64 + 0.5) * dt);
    let mut hi = 1usize;
    while tail(hi) > allowed {
        hi *= 2;
        if hi > 1 << 28 {
            return Err(Error::InsufficientHistory {
                tail: tail(hi),
                allowed,
            });
        }
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(1);
    }
    // tail(lo) > allowed >= tail(hi)
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if tail(mid) > allowed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

pub fn quadrature_weights(
    kernel: &MemoryKernel,
    dt: f64,
    n_max: usize,
    policy: &TailPolicy,
) -> Result<QuadratureWeights> {
    if !(dt > 0.0) || n_max == 0 {
        return Err(Error::InvalidArgument(format!(
            "quadrature needs dt > 0 and n_max >= 1 (dt = {dt}, n_max = {n_max})"
        )));
    }
    let total_mass = kernel.total_mass()?;
    let edge = |k: usize| (k as f64 + 0.5) * dt;
    let mut mass = Vec::with_capacity(n_max);
    let mut dissipation = Vec::with_capacity(n_max);
    mass.push(kernel.mass_below(edge(1)));
    dissipation.push(kernel.dissipation_moment_below(edge(1)) / (dt * dt));
    let mut upper = kernel.mass_above(edge(1));
    let mut density_lo = kernel.density(edge(1));
    for k in 2..=n_max {
        let next = kernel.mass_above(edge(k));
        mass.push(upper - next);
        let density_hi = kernel.density(edge(k));
        dissipation.push(density_lo - density_hi);
        upper = next;
        density_lo = density_hi;
    }
    let mut norm = mass.clone();
    norm[0] = kernel.moment_below(edge(1), 2) / (dt * dt);
    let tail = upper.max(0.0);
    let allowed = policy.max_tail_fraction * total_mass;
    if tail > allowed {
        return Err(Error::InsufficientHistory { tail, allowed });
    }
    let mut left_out = tail;
    if policy.mode == TailMode::Lump {
        *mass.last_mut().expect("n_max >= 1") += tail;
        *norm.last_mut().expect("n_max >= 1") += tail;
        left_out = 0.0;
    }
    Ok(QuadratureWeights {
        dt,
        mass,
        norm,
        dissipation,
        tail: left_out,
        total_mass,
    })
}

/// Weights with the history depth chosen from the tail policy.
pub fn auto_weights(kernel: &MemoryKernel, dt: f64, policy: &TailPolicy) -> Result<QuadratureWeights> {
    let n = history_depth(kernel, dt, policy)?;
    quadrature_weights(kernel, dt, n, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn validate_examples() {
        let k = MemoryKernel::prony(&[(0.5, 1.0)]);
        let r = k.validate();
        assert!(r.ok, "{r:?}");
        assert!(close(k.total_mass().unwrap(), 0.5, 1e-15));

        let r = MemoryKernel::prony(&[(2.0, 1.0)]).validate();
        assert!(!r.ok);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].condition, COND_MASS);
        assert!(close(r.violations[0].value, 2.0, 1e-15));

        // 1/Gamma(1/2) = 1/sqrt(pi) ~ 0.5642 > 0.5
        let bound = 1.0 / std::f64::consts::PI.sqrt();
        assert!(0.5 < bound);
        assert!(MemoryKernel::power_law_exp(0.5, 0.5, 1.0).validate().ok);
        let r = MemoryKernel::power_law_exp(0.57, 0.5, 1.0).validate();
        assert!(r.violations.iter().any(|v| v.condition == COND_POWER_BOUND));
        assert!(r.violations.iter().any(|v| v.condition == COND_MASS));
    }

    #[test]
    fn malformed_kernels_are_reported_not_panicking() {
        let r = MemoryKernel::prony(&[(0.5, -1.0)]).validate();
        assert!(!r.ok);
        assert!(r.violations.iter().any(|v| v.condition == COND_RATE));
        let r = MemoryKernel::power_law_exp(0.1, 1.2, 1.0).validate();
        assert!(r.violations.iter().any(|v| v.condition == COND_ALPHA));
        assert!(MemoryKernel::power_law_exp(0.1, 1.2, 1.0).total_mass().is_err());
        let r = MemoryKernel::prony(&[(0.2, 1.0), (0.1, 3.0)]).with_decay(2.0).validate();
        assert!(r.violations.iter().any(|v| v.condition == COND_K2));
        let r = MemoryKernel::prony(&[]).validate();
        assert!(!r.ok);
    }

    #[test]
    fn total_mass_examples() {
        let k = MemoryKernel::prony(&[(0.2, 1.0), (0.3, 2.0)]);
        assert!(close(k.total_mass().unwrap(), 0.35, 1e-15));
        assert_eq!(k.decay(), 1.0);
        let p = MemoryKernel::power_law_exp(0.5, 0.5, 1.0);
        let expected = 0.5 * std::f64::consts::PI.sqrt();
        assert!(close(p.total_mass().unwrap(), expected, 1e-13));
        assert!((p.total_mass().unwrap() - 0.8862).abs() < 1e-4);
    }

    #[test]
    fn quadrature_fallback_agrees_with_closed_form() {
        for k in [
            MemoryKernel::prony(&[(0.5, 1.0)]),
            MemoryKernel::prony(&[(0.2, 1.0), (0.3, 2.0), (0.05, 0.25)]),
            MemoryKernel::power_law_exp(0.5, 0.5, 1.0),
            MemoryKernel::power_law_exp(0.3, 0.25, 2.0),
            MemoryKernel::power_law_exp(0.2, 0.0, 0.5),
        ] {
            let exact = k.total_mass().unwrap();
            let numeric = k.total_mass_by_quadrature().unwrap();
            assert!(close(numeric, exact, 1e-10), "{k:?}: {numeric} vs {exact}");
        }
    }

    #[test]
    fn first_weight_closed_form() {
        let k = MemoryKernel::prony(&[(0.5, 1.0)]);
        let w = quadrature_weights(&k, 0.1, 400, &TailPolicy::default()).unwrap();
        let expected = 0.5 * (1.0 - (-0.15f64).exp());
        assert!(close(w.mass[0], expected, 1e-14));
        assert!((w.mass[0] - 0.06964).abs() < 1e-5);
    }

    #[test]
    fn singular_kernel_has_finite_weights() {
        let k = MemoryKernel::power_law_exp(0.5, 0.5, 1.0);
        let w = auto_weights(&k, 0.01, &TailPolicy::default()).unwrap();
        assert!(w.mass[0].is_finite() && w.mass[0] > 0.0);
        assert!(w.dissipation[0].is_finite() && w.dissipation[0] > 0.0);
        assert!(w.norm[0].is_finite());
        // window integral of C s^(-1/2) on (0, 0.015) ~ 2 C sqrt(0.015)
        assert!((w.mass[0] - 2.0 * 0.5 * 0.015f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn window_integrals_match_adaptive_quadrature() {
        let k = MemoryKernel::power_law_exp(0.4, 0.3, 1.5);
        let dt = 0.05;
        let w = quadrature_weights(&k, dt, 2000, &TailPolicy::default()).unwrap();
        for idx in [0usize, 1, 7, 100] {
            let a = if idx == 0 { 0.0 } else { (idx as f64 + 0.5) * dt };
            let b = (idx as f64 + 1.5) * dt;
            let direct = if idx == 0 {
                // substitution s = t^(1/(1-alpha)) on the singular window
                let q = 1.0 / 0.7;
                quad::integrate(|t: f64| q * t.powf(q - 1.0) * k.density(t.powf(q)), 0.0, b.powf(0.7), 1e-14, 0.0)
            } else {
                quad::integrate(|s| k.density(s), a, b, 1e-14, 0.0)
            };
            assert!(close(w.mass[idx], direct, 1e-10), "window {idx}: {} vs {direct}", w.mass[idx]);
            if idx > 0 {
                let d = quad::integrate(|s| -k.derivative(s), a, b, 1e-14, 0.0);
                assert!(close(w.dissipation[idx], d, 1e-9));
            }
        }
        // first-window second moments
        let b = 1.5 * dt;
        let q = 1.0 / 0.7;
        let m2 = quad::integrate(|t: f64| { let s = t.powf(q); q * t.powf(q - 1.0) * s * s * k.density(s) }, 0.0, b.powf(0.7), 1e-14, 0.0);
        assert!(close(w.norm[0], m2 / (dt * dt), 1e-9));
        let d2 = quad::integrate(|t: f64| { let s = t.powf(q); -q * t.powf(q - 1.0) * s * s * k.derivative(s) }, 0.0, b.powf(0.7), 1e-14, 0.0);
        assert!(close(w.dissipation[0], d2 / (dt * dt), 1e-9));
    }

    #[test]
    fn exponential_kernel_dissipation_is_delta_times_norm() {
        for k in [MemoryKernel::prony(&[(0.5, 1.0)]), MemoryKernel::power_law_exp(0.3, 0.0, 2.0)] {
            let w = auto_weights(&k, 0.01, &TailPolicy::default()).unwrap();
            for (d, n) in w.dissipation.iter().zip(&w.norm) {
                assert!(close(*d, k.decay() * n, 1e-9), "{d} vs {}", k.decay() * n);
            }
        }
    }

    #[test]
    fn insufficient_depth_is_an_error() {
        let k = MemoryKernel::prony(&[(0.5, 1.0)]);
        let e = quadrature_weights(&k, 0.1, 5, &TailPolicy::default()).unwrap_err();
        assert!(matches!(e, Error::InsufficientHistory { .. }));
        let ok = quadrature_weights(&k, 0.1, 5, &TailPolicy::truncate(1.0)).unwrap();
        assert!(ok.tail > 0.0);
    }

    #[test]
    fn history_depth_is_minimal() {
        let k = MemoryKernel::prony(&[(0.25, 1.0), (0.5, 2.0)]);
        let p = TailPolicy::default();
        let n = history_depth(&k, 0.01, &p).unwrap();
        let kappa = k.total_mass().unwrap();
        assert!(k.mass_above((n as f64 + 0.5) * 0.01) <= 1e-6 * kappa);
        assert!(k.mass_above((n as f64 - 0.5) * 0.01) > 1e-6 * kappa);
    }

    fn valid_kernel() -> impl Strategy<Value = MemoryKernel> {
        prop_oneof![
            prop::collection::vec((0.01f64..0.3, 0.2f64..5.0), 1..4).prop_map(|t| MemoryKernel::prony(&t)),
            (0.05f64..0.4, 0.0f64..0.9, 0.5f64..3.0).prop_map(|(c, a, d)| MemoryKernel::power_law_exp(c, a, d)),
        ]
        .prop_filter("admissible", |k| k.validate().ok)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn partition_of_mass(k in valid_kernel(), dt in 1e-3f64..0.2, n in 1usize..2000) {
            let w = quadrature_weights(&k, dt, n, &TailPolicy::truncate(1.0)).unwrap();
            let total = k.total_mass().unwrap();
            prop_assert!((w.mass.iter().sum::<f64>() + w.tail - total).abs() <= 1e-10 * total);
        }

        #[test]
        fn decay_condition_on_samples(k in valid_kernel()) {
            for s in sample_lags(1000) {
                prop_assert!(k.derivative(s) + k.decay() * k.density(s) <= 1e-12);
            }
        }

        #[test]
        fn refinement_moves_cumulative_mass_within_tolerance(k in valid_kernel(), dt in 1e-3f64..0.1) {
            // window edges of the two grids never coincide, so compare the
            // cumulative mass carried by the whole stored history
            let policy = TailPolicy::default();
            let coarse = auto_weights(&k, dt, &policy).unwrap();
            let fine = auto_weights(&k, dt / 2.0, &policy).unwrap();
            let allowed = policy.max_tail_fraction * k.total_mass().unwrap();
            let (a, b) = (coarse.applied_mass(), fine.applied_mass());
            prop_assert!((a - b).abs() <= allowed, "{a} {b}");
        }
    }

    #[test]
    fn lump_mode_conserves_mass_in_weights() {
        let k = MemoryKernel::prony(&[(0.5, 1.0)]);
        let p = TailPolicy { mode: TailMode::Lump, max_tail_fraction: 1.0 };
        let w = quadrature_weights(&k, 0.1, 10, &p).unwrap();
        assert!(close(w.applied_mass(), 0.5, 1e-14));
    }
}
