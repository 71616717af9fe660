//! Energy functionals, inequality checkers, the attractor-size exponent
//! recursion and log-log rate fitting.

use serde::{Deserialize, Serialize};

use crate::dynamics::{MemoryBackend, Solver};
use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    /// Positivity shift of the energy.
    pub c_e: f64,
    /// Small parameter of the modified kernel.
    pub varpi: f64,
    /// Split point: `int_0^{s_varpi} mu = varpi kappa0 / 2`.
    pub s_varpi: f64,
}

impl EnergyConfig {
    pub fn new(kernel: &MemoryKernel, c_e: f64, varpi: f64) -> Result<Self> {
        if !(varpi > 0.0 && varpi < 1.0) {
            return Err(Error::InvalidArgument(format!("varpi must lie in (0,1), got {varpi}")));
        }
        let target = 0.5 * varpi * kernel.total_mass()?;
        let mut hi = 1.0;
        while kernel.mass_below(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if kernel.mass_below(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(EnergyConfig { c_e, varpi, s_varpi: lo })
    }

    pub fn with_defaults(kernel: &MemoryKernel) -> Result<Self> {
        Self::new(kernel, 1.0, 0.05)
    }

    /// The split point keeps the mass below it under `varpi kappa0 / 2`.
    pub fn check(&self, kernel: &MemoryKernel) -> Result<bool> {
        Ok(kernel.mass_below(self.s_varpi) <= 0.5 * self.varpi * kernel.total_mass()? * (1.0 + 1e-10))
    }

    /// Lag weights of `mu_varpi - mu` on the solver's lag windows. The two
    /// kernels differ only below `s_varpi`, where `mu_varpi = mu(s_varpi)`.
    pub fn correction_weights(&self, kernel: &MemoryKernel, dt: f64) -> Vec<f64> {
        let level = kernel.density(self.s_varpi);
        let mut out = Vec::new();
        let mut k = 1usize;
        loop {
            let a = if k == 1 { 0.0 } else { (k as f64 - 0.5) * dt };
            if a >= self.s_varpi {
                break;
            }
            let b = ((k as f64 + 0.5) * dt).min(self.s_varpi);
            out.push(level * (b - a) - kernel.window_mass(a, b));
            k += 1;
        }
        out
    }
}

/// `c_E = 1 + max(0, -min(1/2 ||U||^2 + F))` over a warm-up run.
pub fn c_e_from_warmup(shifted_free_energy: &[f64]) -> f64 {
    let m = shifted_free_energy.iter().cloned().fold(f64::INFINITY, f64::min);
    1.0 + if m.is_finite() { (-m).max(0.0) } else { 0.0 }
}

/// `E = 1/2 ||U||^2 + F(u) + c_E`.
pub fn energy_e(solver: &Solver, cfg: &EnergyConfig) -> f64 {
    let p = solver.energy_parts();
    0.5 * p.h_norm_sq() + p.potential + cfg.c_e
}

/// `I = -1/2 int mu' ||eta||_1^2`.
pub fn dissipation_i(solver: &Solver) -> f64 {
    solver.energy_parts().dissipation
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LFunctionals {
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
}

/// `L1 = -(1/kappa0) int mu_varpi <u_t, eta>`, `L2 = <u_t, u>`, `L = 2 L1 + L2`.
pub fn functionals_l(solver: &Solver, cfg: &EnergyConfig) -> Result<LFunctionals> {
    let st = &solver.state;
    let l2 = st.v.dot(&st.u);
    let l1 = match solver.backend {
        MemoryBackend::Off => 0.0,
        _ => {
            let kernel = &solver.problem.kernel;
            let corr = cfg.correction_weights(kernel, solver.stepper.dt);
            if corr.len() > st.history.depth() {
                return Err(Error::HistoryUnderrun {
                    lag: cfg.s_varpi,
                    depth: st.history.depth() as f64 * st.dt,
                });
            }
            let mut mem = vec![0.0; st.dim()];
            solver.memory_integral(&mut mem);
            let bulk: f64 = mem.iter().zip(st.v.as_slice()).map(|(m, v)| m * v).sum();
            -(bulk + st.history_pairing(&corr, &st.v)) / kernel.total_mass()?
        }
    };
    Ok(LFunctionals { l1, l2, l: 2.0 * l1 + l2 })
}

/// `Lambda_omega = E + omega L`.
pub fn lambda_omega(solver: &Solver, cfg: &EnergyConfig, omega: f64) -> Result<f64> {
    let l = if omega == 0.0 { 0.0 } else { functionals_l(solver, cfg)?.l };
    Ok(energy_e(solver, cfg) + omega * l)
}

/// Buffer depth needed by [`functionals_l`] at step `dt`.
pub fn l_depth(kernel: &MemoryKernel, cfg: &EnergyConfig, dt: f64) -> usize {
    cfg.correction_weights(kernel, dt).len().max(1)
}

/// Two-sided comparison `(1/c) Phi <= Lambda <= c Phi + c` over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichFit {
    /// `min Lambda / Phi`
    pub lower_ratio: f64,
    /// `max Lambda / (Phi + 1)`
    pub upper_ratio: f64,
    /// Smallest `c >= 1` covering both sides.
    pub c: f64,
    pub holds: bool,
}

pub fn fit_sandwich(phi: &[f64], lambda: &[f64]) -> Result<SandwichFit> {
    if phi.len() != lambda.len() || phi.is_empty() {
        return Err(Error::DimensionMismatch { expected: phi.len(), got: lambda.len() });
    }
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for (p, l) in phi.iter().zip(lambda) {
        if *p > 0.0 {
            lower = lower.min(l / p);
        }
        upper = upper.max(l / (p + 1.0));
    }
    let holds = lower > 0.0 && lower.is_finite() && upper.is_finite();
    let c = if holds { (1.0 / lower).max(upper).max(1.0) } else { f64::INFINITY };
    Ok(SandwichFit { lower_ratio: lower, upper_ratio: upper, c, holds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub samples: usize,
    /// Fraction of samples where `Lambda' + omega Lambda > c omega^2 Lambda^beta + g/omega`.
    pub violation_fraction: f64,
    /// Smallest `c` leaving at most 1% of the samples in violation.
    pub minimal_c: f64,
    /// Fitted decay rate of `phi(t) <= q e^{-omega_hat (t - t0)} + offset`.
    pub omega_hat: f64,
    pub q: f64,
    pub offset: f64,
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::NonUniformSampling("need at least three samples".into()));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300) {
            return Err(Error::NonUniformSampling(format!("spacing {} differs from {h}", w[1] - w[0])));
        }
    }
    Ok(h)
}

/// Checks the differential inequality along sampled `Lambda` with source
/// `g` and fits the exponential-decay conclusion.
pub fn check_gronwall(times: &[f64], lambda: &[f64], g: &[f64], omega: f64, c: f64, beta: f64) -> Result<GronwallReport> {
    let h = uniform_step(times)?;
    if lambda.len() != times.len() || g.len() != times.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: lambda.len().min(g.len()) });
    }
    if !(1.0..1.5).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta must lie in [1, 1.5), got {beta}")));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    let mut needed = Vec::with_capacity(times.len());
    let mut violations = 0usize;
    for i in 1..times.len() - 1 {
        let d = (lambda[i + 1] - lambda[i - 1]) / (2.0 * h);
        let lhs = d + omega * lambda[i] - g[i] / omega;
        let scale = omega * omega * lambda[i].abs().powf(beta);
        let slack = 1e-12 * (lambda[i].abs() + g[i].abs() / omega + d.abs());
        if lhs > c * scale + slack {
            violations += 1;
        }
        needed.push(if lhs > slack { lhs / scale } else { 0.0 });
    }
    let n = needed.len();
    needed.sort_by(|a, b| b.total_cmp(a));
    let allowed = n / 100;
    let minimal_c = needed.get(allowed).copied().unwrap_or(0.0);
    let (omega_hat, q, offset) = fit_decay(times, lambda);
    Ok(GronwallReport {
        samples: n,
        violation_fraction: violations as f64 / n as f64,
        minimal_c,
        omega_hat,
        q,
        offset,
    })
}

/// Fits `phi(t) <= q e^{-rate (t - t0)} + offset` to the upper envelope.
/// The offset is scanned between 0 and the envelope level over the last
/// tenth of the run, keeping the value with the straightest log-linear decay.
pub fn fit_decay(times: &[f64], phi: &[f64]) -> (f64, f64, f64) {
    let n = phi.len();
    let mut env = phi.to_vec();
    for i in (0..n.saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let tail_level = env[n - n / 10 - 1];
    let t0 = times[0];
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for j in 0..=40 {
        let offset = tail_level * j as f64 / 40.0;
        let floor = offset + 1e-2 * (env[0] - offset);
        let pts: Vec<(f64, f64)> = (0..n)
            .filter(|&i| env[i] > floor && env[i] > offset)
            .map(|i| (times[i] - t0, (env[i] - offset).ln()))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        let (slope, intercept, _) = least_squares(&pts);
        let mse = pts.iter().map(|(t, y)| (y - intercept - slope * t).powi(2)).sum::<f64>() / pts.len() as f64;
        let rate = (-slope).max(0.0);
        let q = pts.iter().map(|(t, y)| (y + rate * t).exp()).fold(0.0, f64::max);
        if best.map_or(true, |b| mse < b.0) {
            best = Some((mse, rate, q, offset));
        }
    }
    match best {
        Some((_, rate, q, offset)) => (rate, q, offset),
        None => (0.0, env[0] - tail_level, tail_level),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapVerdict {
    UniformBound,
    NoGuarantee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub p: f64,
    pub rho: f64,
    pub rho_star: f64,
    /// Only for `p > 1`.
    pub gamma_star: Option<f64>,
    /// Undefined at `rho = 0`.
    pub kappa: Option<f64>,
    /// `rho kappa^n` for `n = 0..=n_stop`, or the first terms when the
    /// recursion does not stop.
    pub sequence: Vec<f64>,
    pub n_stop: Option<usize>,
    /// `gamma m_gamma <= rho kappa^{n+1}` along the sequence, strictly for `n >= 1`.
    pub induction_holds: bool,
    pub verdict: BootstrapVerdict,
}

fn check_p(p: f64) -> Result<()> {
    if (1.0..3.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("p must lie in [1, 3), got {p}")))
    }
}

/// `max{0, 2(p-1)/(p+1) - (1-rho)/gamma}`.
pub fn m_gamma(p: f64, rho: f64, gamma: f64) -> Result<f64> {
    check_p(p)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1], got {rho}")));
    }
    Ok((2.0 * (p - 1.0) / (p + 1.0) - (1.0 - rho) / gamma).max(0.0))
}

pub fn bootstrap(p: f64, rho: f64) -> Result<BootstrapReport> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1], got {rho}")));
    }
    let rho_star = (p + 1.0) / (3.0 * p - 1.0);
    let kappa = (rho > 0.0).then(|| 2.0 * (p - 1.0) / (p + 1.0) - (1.0 - rho) / rho);
    let mut report = BootstrapReport {
        p,
        rho,
        rho_star,
        gamma_star: None,
        kappa,
        sequence: vec![rho],
        n_stop: Some(0),
        induction_holds: true,
        verdict: BootstrapVerdict::UniformBound,
    };
    if p == 1.0 {
        return Ok(report);
    }
    let gamma_star = (1.0 - rho) * (p + 1.0) / (2.0 * (p - 1.0));
    report.gamma_star = Some(gamma_star);
    if rho <= gamma_star {
        return Ok(report);
    }
    let kappa = kappa.expect("rho > gamma_star >= 0");
    if rho >= 1.0 {
        // gamma_star = 0 and the sequence stays positive
        report.sequence = (0..8).map(|n| rho * kappa.powi(n)).collect();
        report.n_stop = None;
        report.verdict = BootstrapVerdict::NoGuarantee;
        return Ok(report);
    }
    let mut seq = vec![rho];
    let mut holds = true;
    let mut n = 0usize;
    while seq[n] > gamma_star {
        let gamma = seq[n];
        let next = gamma * kappa;
        let shrunk = gamma * m_gamma(p, rho, gamma)?;
        holds &= if n == 0 { shrunk <= next * (1.0 + 1e-12) } else { shrunk < next };
        seq.push(next);
        n += 1;
        if n > 100_000 {
            return Err(Error::InvalidArgument(format!("recursion did not stop for p = {p}, rho = {rho}")));
        }
    }
    report.sequence = seq;
    report.n_stop = Some(n);
    report.induction_holds = holds;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = pts.iter().map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    (slope, intercept, res)
}

/// Least-squares line through `(log eps, log value)`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 pairs, got {}", pairs.len())));
    }
    if let Some((e, v)) = pairs.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive data ({e}, {v})")));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(e, v)| (e.ln(), v.ln())).collect();
    let (slope, intercept, max_residual) = least_squares(&pts);
    Ok(RateFit { slope, intercept, max_residual })
}
