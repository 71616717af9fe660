//! Phase-space state `U = (u, u_t, eta)` with the memory variable
//! reconstructed from stored past displacements.
//!
//! `eta^t(s)` is never stored. For `s <= t - tau` it equals
//! `u(t) - u(t - s)`, and for older lags `eta_tau(s - (t - tau)) + u(t) - u_tau`.
//! The second branch is realised by seeding the ring buffer with the
//! virtual past `u(tau - r) = u_tau - eta_tau(r)`, so both branches read the
//! buffer the same way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::QuadratureWeights;
use crate::spectral::{ModalBasis, ModalField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NonlinearityModel {
    /// `f(u) = a |u|^(p-1) u`.
    PowerLaw { a: f64, p: f64 },
    /// `f(u) = b sin u`, growth order 1.
    SineGordon { b: f64 },
}

impl NonlinearityModel {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            NonlinearityModel::PowerLaw { a, p } => {
                if p == 1.0 {
                    a * u
                } else if p == 2.0 {
                    a * u.abs() * u
                } else {
                    a * u.abs().powf(p - 1.0) * u
                }
            }
            NonlinearityModel::SineGordon { b } => b * u.sin(),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            NonlinearityModel::PowerLaw { a, p } => a * p * u.abs().powf(p - 1.0),
            NonlinearityModel::SineGordon { b } => b * u.cos(),
        }
    }

    /// Primitive `F(u) = int_0^u f`.
    pub fn primitive(&self, u: f64) -> f64 {
        match *self {
            NonlinearityModel::PowerLaw { a, p } => a * u.abs().powf(p + 1.0) / (p + 1.0),
            NonlinearityModel::SineGordon { b } => b * (1.0 - u.cos()),
        }
    }

    /// Growth order `p`.
    pub fn order(&self) -> f64 {
        match *self {
            NonlinearityModel::PowerLaw { p, .. } => p,
            NonlinearityModel::SineGordon { .. } => 1.0,
        }
    }

    /// Constant `c` in `|f'(u)| <= c (1 + |u|^(p-1))`.
    pub fn growth_constant(&self) -> f64 {
        match *self {
            NonlinearityModel::PowerLaw { a, p } => a * p,
            NonlinearityModel::SineGordon { b } => b,
        }
    }

    /// Dissipativity constant `d0` in `f(u) u >= d0 |u|^(p+1) - c`, if any.
    pub fn dissipativity(&self) -> Option<f64> {
        match *self {
            NonlinearityModel::PowerLaw { a, .. } => Some(a),
            NonlinearityModel::SineGordon { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NonlinearityModel::PowerLaw { a, p } if a > 0.0 && (1.0..3.0).contains(&p) => Ok(()),
            NonlinearityModel::SineGordon { b } if b > 0.0 => Ok(()),
            other => Err(Error::InvalidArgument(format!(
                "nonlinearity {other:?} needs a, b > 0 and p in [1, 3)"
            ))),
        }
    }
}

/// Initial memory `eta_tau`, given by samples and interpolated linearly,
/// with `eta_tau(0) = 0` and constant extension past the last sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialMemory {
    #[default]
    Zero,
    Samples(Vec<(f64, ModalField)>),
}

impl InitialMemory {
    pub fn at(&self, r: f64, dim: usize) -> ModalField {
        match self {
            InitialMemory::Zero => ModalField::zeros(dim),
            InitialMemory::Samples(samples) => {
                let mut prev_s = 0.0;
                let mut prev = ModalField::zeros(dim);
                for (s, f) in samples {
                    if r <= *s {
                        let theta = if *s > prev_s { (r - prev_s) / (s - prev_s) } else { 1.0 };
                        let mut out = prev.scaled(1.0 - theta);
                        out.axpy(theta, f);
                        return out;
                    }
                    prev_s = *s;
                    prev = f.clone();
                }
                prev
            }
        }
    }
}

/// Ring buffer of past displacements on a uniform grid, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    dim: usize,
    depth: usize,
    head: usize,
    data: Vec<f64>,
}

impl HistoryBuffer {
    /// Buffer holding `depth` past snapshots plus the current one, all
    /// initialised from `past(k)` = displacement `k` steps ago.
    pub fn new(dim: usize, depth: usize, past: impl Fn(usize) -> ModalField) -> Self {
        let mut data = Vec::with_capacity((depth + 1) * dim);
        for k in 0..=depth {
            data.extend_from_slice(past(k).as_slice());
        }
        HistoryBuffer { dim, depth, head: 0, data }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Displacement `k` steps ago, `k <= depth`.
    pub fn lag(&self, k: usize) -> &[f64] {
        debug_assert!(k <= self.depth);
        let slot = (self.head + k) % (self.depth + 1);
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Calls `visit(w, snapshot)` for `w = weights[k]` and the snapshot at
    /// lag `first + k`, walking the ring in contiguous runs.
    pub(crate) fn for_each_weighted(&self, weights: &[f64], first: usize, mut visit: impl FnMut(f64, &[f64])) {
        debug_assert!(first + weights.len() <= self.depth + 1);
        let slots = self.depth + 1;
        let mut slot = (self.head + first) % slots;
        let mut rest = weights;
        while !rest.is_empty() {
            let run = (slots - slot).min(rest.len());
            let block = &self.data[slot * self.dim..(slot + run) * self.dim];
            for (w, row) in rest[..run].iter().zip(block.chunks_exact(self.dim)) {
                visit(*w, row);
            }
            rest = &rest[run..];
            slot = 0;
        }
    }

    /// Adds `sum_k weights[k] lag(first + k)` to `out`.
    pub fn weighted_sum(&self, weights: &[f64], first: usize, out: &mut [f64]) {
        if self.dim == 1 {
            let mut acc = 0.0;
            self.for_each_weighted(weights, first, |w, row| acc += w * row[0]);
            out[0] += acc;
            return;
        }
        self.for_each_weighted(weights, first, |w, row| {
            for (o, x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        });
    }

    /// Adds `sum_k weights[k] (center - lag(first + k))` to `out`; exactly
    /// zero on a history equal to `center`.
    pub fn weighted_deviation(&self, weights: &[f64], first: usize, center: &[f64], out: &mut [f64]) {
        if self.dim == 1 {
            let mut acc = 0.0;
            self.for_each_weighted(weights, first, |w, row| acc += w * (center[0] - row[0]));
            out[0] += acc;
            return;
        }
        self.for_each_weighted(weights, first, |w, row| {
            for ((o, c), x) in out.iter_mut().zip(center).zip(row) {
                *o += w * (c - x);
            }
        });
    }

    /// Makes `u` the current snapshot, dropping the oldest.
    pub fn push(&mut self, u: &[f64]) {
        self.head = (self.head + self.depth) % (self.depth + 1);
        let slot = self.head;
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(u);
    }

    /// Lag-aligned difference of two buffers of the same shape.
    pub fn difference(&self, other: &HistoryBuffer) -> Result<HistoryBuffer> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::DimensionMismatch {
                expected: self.depth,
                got: other.depth,
            });
        }
        Ok(HistoryBuffer::new(self.dim, self.depth, |k| {
            ModalField(self.lag(k).iter().zip(other.lag(k)).map(|(a, b)| a - b).collect())
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: ModalField,
    pub v: ModalField,
    pub history: HistoryBuffer,
    pub eta_init: InitialMemory,
    /// Displacement at the initial time.
    pub u_start: ModalField,
    /// Steps taken since the initial time.
    pub steps: usize,
    pub dt: f64,
}

impl State {
    pub fn new(u: ModalField, v: ModalField, dt: f64, depth: usize) -> Self {
        Self::with_memory(u, v, InitialMemory::Zero, dt, depth)
    }

    pub fn with_memory(u: ModalField, v: ModalField, eta_init: InitialMemory, dt: f64, depth: usize) -> Self {
        let dim = u.dim();
        let history = HistoryBuffer::new(dim, depth, |k| {
            let mut past = u.clone();
            past.axpy(-1.0, &eta_init.at(k as f64 * dt, dim));
            past
        });
        State {
            u_start: u.clone(),
            u,
            v,
            history,
            eta_init,
            steps: 0,
            dt,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    /// Time elapsed since the initial time.
    pub fn elapsed(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Records the new current displacement and velocity after one step.
    pub fn advance(&mut self, u: ModalField, v: ModalField) {
        self.history.push(u.as_slice());
        self.u = u;
        self.v = v;
        self.steps += 1;
    }

    /// `eta^t(s)` from the representation formula.
    pub fn eta_at(&self, s: f64) -> Result<ModalField> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("lag must be positive, got {s}")));
        }
        let depth_time = self.history.depth() as f64 * self.dt;
        let elapsed = self.elapsed();
        if s > depth_time {
            if s > elapsed {
                let mut eta = self.eta_init.at(s - elapsed, self.dim());
                eta += &(&self.u - &self.u_start);
                return Ok(eta);
            }
            return Err(Error::HistoryUnderrun { lag: s, depth: depth_time });
        }
        let x = s / self.dt;
        let k = x.floor() as usize;
        let theta = x - k as f64;
        let lo = self.history.lag(k);
        let past: Vec<f64> = if theta == 0.0 || k == self.history.depth() {
            lo.to_vec()
        } else {
            let hi = self.history.lag(k + 1);
            lo.iter().zip(hi).map(|(a, b)| (1.0 - theta) * a + theta * b).collect()
        };
        Ok(ModalField(self.u.0.iter().zip(&past).map(|(a, b)| a - b).collect()))
    }

    /// Lag-aligned difference `self - other` (linear in all components).
    pub fn difference(&self, other: &State) -> Result<State> {
        let eta_init = match (&self.eta_init, &other.eta_init) {
            (InitialMemory::Zero, InitialMemory::Zero) => InitialMemory::Zero,
            _ => {
                return Err(Error::InvalidArgument(
                    "difference of states with sampled initial memories".into(),
                ))
            }
        };
        Ok(State {
            u: &self.u - &other.u,
            v: &self.v - &other.v,
            history: self.history.difference(&other.history)?,
            eta_init,
            u_start: &self.u_start - &other.u_start,
            steps: self.steps,
            dt: self.dt,
        })
    }

    /// `sum_k w_k sum_n m_n (u_n - u_n(t - k dt))^2` over the lag weights.
    pub fn weighted_history_energy(&self, lag_weights: &[f64], mode_weights: &[f64]) -> f64 {
        let u = self.u.as_slice();
        let mut total = 0.0;
        self.history.for_each_weighted(lag_weights, 1, |w, past| {
            let e: f64 = u
                .iter()
                .zip(past)
                .zip(mode_weights)
                .map(|((a, b), m)| m * (a - b) * (a - b))
                .sum();
            total += w * e;
        });
        total
    }

    /// `sum_k w_k <v, eta(s_k)>` (plain `L^2` pairing).
    pub fn history_pairing(&self, lag_weights: &[f64], with: &ModalField) -> f64 {
        let u = self.u.as_slice();
        let mut total = 0.0;
        self.history.for_each_weighted(lag_weights, 1, |w, past| {
            let e: f64 = u.iter().zip(past).zip(with.as_slice()).map(|((a, b), x)| (a - b) * x).sum();
            total += w * e;
        });
        total
    }
}

fn check_depth(state: &State, weights: &QuadratureWeights) -> Result<()> {
    if weights.n_max() > state.history.depth() {
        return Err(Error::HistoryUnderrun {
            lag: weights.n_max() as f64 * weights.dt,
            depth: state.history.depth() as f64 * state.dt,
        });
    }
    if (weights.dt - state.dt).abs() > 1e-12 * state.dt {
        return Err(Error::InvalidArgument(format!(
            "weights built for dt = {} but state uses dt = {}",
            weights.dt, state.dt
        )));
    }
    Ok(())
}

/// Modal components `lambda_n sum_k w_k (u_n(t) - u_n(t - k dt))` of the
/// hereditary force, written into `out`.
pub fn memory_force_into(state: &State, basis: &ModalBasis, weights: &QuadratureWeights, out: &mut [f64]) {
    let applied = weights.applied_mass();
    for (o, u) in out.iter_mut().zip(state.u.as_slice()) {
        *o = applied * u;
    }
    for (i, w) in weights.mass.iter().enumerate() {
        let past = state.history.lag(i + 1);
        for (o, p) in out.iter_mut().zip(past) {
            *o -= w * p;
        }
    }
    for (o, l) in out.iter_mut().zip(basis.eigenvalues()) {
        *o *= l;
    }
}

pub fn memory_force(state: &State, basis: &ModalBasis, weights: &QuadratureWeights) -> Result<ModalField> {
    check_depth(state, weights)?;
    let mut out = vec![0.0; state.dim()];
    memory_force_into(state, basis, weights, &mut out);
    Ok(ModalField(out))
}

/// `||eta||_{M^sigma}^2 = int mu ||eta(s)||_{sigma+1}^2 ds`.
pub fn memory_norm_sq_sigma(state: &State, basis: &ModalBasis, weights: &QuadratureWeights, sigma: f64) -> Result<f64> {
    check_depth(state, weights)?;
    let modes: Vec<f64> = basis.eigenvalues().iter().map(|l| l.powf(sigma + 1.0)).collect();
    Ok(state.weighted_history_energy(&weights.norm, &modes))
}

pub fn memory_norm(state: &State, basis: &ModalBasis, weights: &QuadratureWeights) -> Result<f64> {
    Ok(memory_norm_sq_sigma(state, basis, weights, 0.0)?.sqrt())
}

/// The pieces of the energy-type functionals at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyParts {
    /// `||u||_1^2`
    pub u_sq: f64,
    /// `||u_t||^2`
    pub v_sq: f64,
    /// `||eta||_M^2`
    pub memory_sq: f64,
    /// `||u||_{L^{p+1}}^{p+1}`
    pub lp_pow: f64,
    /// `F(u)`
    pub potential: f64,
    /// `I = -1/2 int mu' ||eta||_1^2`
    pub dissipation: f64,
}

impl EnergyParts {
    pub fn h_norm_sq(&self) -> f64 {
        self.u_sq + self.v_sq + self.memory_sq
    }

    pub fn phi(&self) -> f64 {
        0.5 * self.h_norm_sq() + self.lp_pow
    }
}

/// Energy parts of a history-backed state.
pub fn energy_parts(
    state: &State,
    basis: &ModalBasis,
    nonlinearity: &NonlinearityModel,
    weights: &QuadratureWeights,
) -> Result<EnergyParts> {
    check_depth(state, weights)?;
    let l = basis.eigenvalues();
    let memory_sq = state.weighted_history_energy(&weights.norm, l);
    let dissipation = 0.5 * state.weighted_history_energy(&weights.dissipation, l);
    let (lp_pow, potential) = pointwise_parts(&state.u, basis, nonlinearity);
    Ok(EnergyParts {
        u_sq: basis.norm_sigma_sq(state.u.as_slice(), 1.0),
        v_sq: basis.norm_sigma_sq(state.v.as_slice(), 0.0),
        memory_sq,
        lp_pow,
        potential,
        dissipation,
    })
}

/// `(||u||_{L^{p+1}}^{p+1}, F(u))` by one collocation pass.
pub fn pointwise_parts(u: &ModalField, basis: &ModalBasis, nonlinearity: &NonlinearityModel) -> (f64, f64) {
    let p = nonlinearity.order();
    let grid = basis.to_grid(u).expect("field matches basis");
    let h = basis.weight();
    let lp: f64 = grid.iter().map(|x| x.abs().powf(p + 1.0)).sum::<f64>() * h;
    let pot: f64 = grid.iter().map(|&x| nonlinearity.primitive(x)).sum::<f64>() * h;
    (lp, pot)
}

/// `Phi(U) = 1/2 ||U||_H^2 + ||u||_{L^{p+1}}^{p+1}`.
pub fn phi(
    state: &State,
    basis: &ModalBasis,
    nonlinearity: &NonlinearityModel,
    weights: &QuadratureWeights,
) -> Result<f64> {
    Ok(energy_parts(state, basis, nonlinearity, weights)?.phi())
}

/// `F(u) = int F(u(x)) dx`.
pub fn potential(u: &ModalField, basis: &ModalBasis, nonlinearity: &NonlinearityModel) -> f64 {
    basis.integrate_pointwise(u, |x| nonlinearity.primitive(x))
}
