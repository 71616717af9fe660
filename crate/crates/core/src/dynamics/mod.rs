//! Time integration of the Galerkin system
//! `u'' + A u + A int mu(s) eta(s) ds + f(u) = g(t)`.
//!
//! Two memory backends share one stepping loop: a lag-grid quadrature over
//! a ring buffer of past displacements (any admissible kernel), and the exact
//! ODE reduction for Prony-sum kernels. A third, test-only mode switches the
//! memory term off.

mod oracle;
mod prony;
pub mod record;

pub use oracle::{matrix_oracle, system_matrix, OracleForce, OracleTrajectory};
pub use prony::PronyEngine;
pub use record::{Sample, Snapshot, TrajectoryRecord};

use crate::error::{Error, Result};
use crate::forcing::{ForceTerm, Forcing};
use crate::kernels::{auto_weights, MemoryKernel, QuadratureWeights, TailPolicy};
use crate::spectral::{ModalBasis, ModalField};
use crate::state::{pointwise_parts, EnergyParts, InitialMemory, NonlinearityModel, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Explicit leapfrog, run in its velocity form.
    #[default]
    CentralDifference,
    /// Newmark average acceleration with the stiffness and the memory force
    /// implicit per mode and `f` taken at a predictor.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepper {
    pub dt: f64,
    pub scheme: Scheme,
    pub safety: f64,
}

impl Stepper {
    pub fn new(dt: f64) -> Self {
        Stepper { dt, scheme: Scheme::CentralDifference, safety: 0.9 }
    }

    pub fn semi_implicit(dt: f64) -> Self {
        Stepper { scheme: Scheme::SemiImplicit, ..Self::new(dt) }
    }

    /// `dt^2 lambda_N (1 + kappa0)`, to be kept below `4 safety`.
    pub fn cfl_value(&self, lambda_max: f64, kappa0: f64) -> f64 {
        self.dt * self.dt * lambda_max * (1.0 + kappa0)
    }

    pub fn check_cfl(&self, lambda_max: f64, kappa0: f64) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.scheme == Scheme::SemiImplicit {
            return Ok(());
        }
        let value = self.cfl_value(lambda_max, kappa0);
        let limit = 4.0 * self.safety;
        if value < limit {
            Ok(())
        } else {
            Err(Error::Cfl { value, limit })
        }
    }

    /// Largest step passing the guard.
    pub fn max_stable_dt(lambda_max: f64, kappa0: f64, safety: f64) -> f64 {
        (4.0 * safety / (lambda_max * (1.0 + kappa0))).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub basis: ModalBasis,
    pub kernel: MemoryKernel,
    /// `None` means `f = 0`.
    pub nonlinearity: Option<NonlinearityModel>,
    pub forcing: Forcing,
}

impl Problem {
    pub fn order(&self) -> f64 {
        self.nonlinearity.as_ref().map_or(1.0, |n| n.order())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineKind {
    #[default]
    History,
    Prony,
    /// Memory term forced to zero. Test use only.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryBackend {
    History(QuadratureWeights),
    Prony(PronyEngine),
    Off,
}

impl MemoryBackend {
    pub fn kind(&self) -> EngineKind {
        match self {
            MemoryBackend::History(_) => EngineKind::History,
            MemoryBackend::Prony(_) => EngineKind::Prony,
            MemoryBackend::Off => EngineKind::Off,
        }
    }
}

/// Construction options beyond the problem and the step.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSetup {
    pub engine: EngineKind,
    pub tail: TailPolicy,
    /// Lags kept in the displacement buffer even when the backend needs fewer.
    pub min_depth: usize,
    pub eta_init: InitialMemory,
    pub start_time: f64,
}

impl Default for SolverSetup {
    fn default() -> Self {
        SolverSetup {
            engine: EngineKind::History,
            tail: TailPolicy::default(),
            min_depth: 1,
            eta_init: InitialMemory::Zero,
            start_time: 0.0,
        }
    }
}

impl SolverSetup {
    pub fn engine(engine: EngineKind) -> Self {
        SolverSetup { engine, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solver {
    pub problem: Problem,
    pub stepper: Stepper,
    pub backend: MemoryBackend,
    pub state: State,
    start_time: f64,
    accel: Vec<f64>,
    force: Vec<f64>,
    work: f64,
}

impl Solver {
    pub fn new(problem: Problem, stepper: Stepper, setup: SolverSetup, u0: ModalField, v0: ModalField) -> Result<Self> {
        let dim = problem.basis.modes();
        for f in [&u0, &v0, &problem.forcing.g0.profile, &problem.forcing.g1.profile] {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
            }
        }
        if let Some(n) = &problem.nonlinearity {
            n.validate()?;
        }
        let dt = stepper.dt;
        let (backend, kappa0, depth) = match setup.engine {
            EngineKind::History => {
                let w = auto_weights(&problem.kernel, dt, &setup.tail)?;
                let n = w.n_max();
                (MemoryBackend::History(w), problem.kernel.total_mass()?, n)
            }
            EngineKind::Prony => {
                if !matches!(setup.eta_init, InitialMemory::Zero) {
                    return Err(Error::InvalidArgument(
                        "the Prony engine starts from a zero initial memory".into(),
                    ));
                }
                let e = PronyEngine::new(&problem.kernel, dim, dt)?;
                (MemoryBackend::Prony(e), problem.kernel.total_mass()?, 1)
            }
            EngineKind::Off => (MemoryBackend::Off, 0.0, 1),
        };
        let lambda_max = problem.basis.eigenvalues().last().copied().unwrap_or(0.0);
        stepper.check_cfl(lambda_max, kappa0)?;
        let state = State::with_memory(u0, v0, setup.eta_init, dt, depth.max(setup.min_depth));
        let mut solver = Solver {
            problem,
            stepper,
            backend,
            state,
            start_time: setup.start_time,
            accel: vec![0.0; dim],
            force: vec![0.0; dim],
            work: 0.0,
        };
        let t = solver.time();
        solver.problem.forcing.evaluate_into(t, &mut solver.force);
        solver.accel = solver.acceleration_now();
        Ok(solver)
    }

    pub fn time(&self) -> f64 {
        self.start_time + self.state.elapsed()
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.problem.basis
    }

    /// Forcing work `int <g, u_t>` accumulated since the last reset.
    pub fn take_work(&mut self) -> f64 {
        std::mem::take(&mut self.work)
    }

    /// Same state and memory, new forcing.
    pub fn fork(&self, forcing: Forcing) -> Self {
        let mut s = self.clone();
        s.problem.forcing = forcing;
        s.problem.forcing.evaluate_into(s.time(), &mut s.force);
        s.accel = s.acceleration_now();
        s.work = 0.0;
        s
    }

    /// Modal `int mu(s) eta(s) ds` (no factor of `A`).
    pub fn memory_integral(&self, out: &mut [f64]) {
        match &self.backend {
            MemoryBackend::History(w) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                self.state.history.weighted_deviation(&w.mass, 1, self.state.u.as_slice(), out);
            }
            MemoryBackend::Prony(e) => e.zeta_sum(out),
            MemoryBackend::Off => out.iter_mut().for_each(|x| *x = 0.0),
        }
    }

    fn nonlinear_force(&self, u: &ModalField) -> Option<ModalField> {
        self.problem
            .nonlinearity
            .as_ref()
            .map(|n| self.problem.basis.project_pointwise(u, |x| n.value(x)))
    }

    /// `-A u - A int mu eta - f(u) + g` at the current state; `self.force`
    /// must hold `g` at the current time.
    fn acceleration_now(&self) -> Vec<f64> {
        let dim = self.state.dim();
        let mut mem = vec![0.0; dim];
        self.memory_integral(&mut mem);
        let f = self.nonlinear_force(&self.state.u);
        let l = self.problem.basis.eigenvalues();
        (0..dim)
            .map(|n| {
                let fx = f.as_ref().map_or(0.0, |f| f[n]);
                -l[n] * (self.state.u[n] + mem[n]) - fx + self.force[n]
            })
            .collect()
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<()> {
        let h = self.stepper.dt;
        let t_new = self.start_time + (self.state.steps + 1) as f64 * h;
        let dim = self.state.dim();
        let u_old = self.state.u.clone();
        let v_old = self.state.v.clone();
        let force_old = std::mem::replace(&mut self.force, vec![0.0; dim]);
        self.problem.forcing.evaluate_into(t_new, &mut self.force);
        let zeta_old = match &self.backend {
            MemoryBackend::Prony(e) => Some(e.zeta.clone()),
            _ => None,
        };

        let (u_new, v_new, a_new) = match self.stepper.scheme {
            Scheme::CentralDifference => {
                let v_half: Vec<f64> = (0..dim).map(|n| v_old[n] + 0.5 * h * self.accel[n]).collect();
                let u_new = ModalField((0..dim).map(|n| u_old[n] + h * v_half[n]).collect());
                if let MemoryBackend::Prony(e) = &mut self.backend {
                    e.advance_zeta(u_old.as_slice(), u_new.as_slice());
                }
                self.state.advance(u_new.clone(), ModalField(v_half.clone()));
                let a_new = self.acceleration_now();
                let v_new = ModalField((0..dim).map(|n| v_half[n] + 0.5 * h * a_new[n]).collect());
                (u_new, v_new, a_new)
            }
            Scheme::SemiImplicit => self.newmark(h, &u_old, &v_old),
        };

        if let (MemoryBackend::Prony(e), Some(z)) = (&mut self.backend, zeta_old) {
            e.advance_psi(h, &z, v_old.as_slice(), v_new.as_slice());
        }
        self.state.u = u_new;
        self.state.v = v_new;
        self.accel = a_new;

        let p_old: f64 = force_old.iter().zip(v_old.as_slice()).map(|(g, v)| g * v).sum();
        let p_new: f64 = self.force.iter().zip(self.state.v.as_slice()).map(|(g, v)| g * v).sum();
        self.work += 0.5 * h * (p_old + p_new);

        if !self.state.u.is_finite() || !self.state.v.is_finite() {
            return Err(Error::NonFinite { time: t_new, what: "displacement or velocity".into() });
        }
        Ok(())
    }

    // Average-acceleration Newmark step. The memory integral at the new time
    // is affine in the new displacement, `gamma u_new - m`, for both backends.
    fn newmark(&mut self, h: f64, u_old: &ModalField, v_old: &ModalField) -> (ModalField, ModalField, Vec<f64>) {
        let dim = u_old.dim();
        let mut m = vec![0.0; dim];
        let gamma = match &self.backend {
            MemoryBackend::History(w) => {
                self.state.history.weighted_sum(&w.mass, 0, &mut m);
                w.applied_mass()
            }
            MemoryBackend::Prony(e) => e.implicit_split(u_old.as_slice(), &mut m),
            MemoryBackend::Off => 0.0,
        };
        let predictor =
            ModalField((0..dim).map(|n| u_old[n] + h * v_old[n] + 0.5 * h * h * self.accel[n]).collect());
        let f = self.nonlinear_force(&predictor);
        let l = self.problem.basis.eigenvalues();
        let q = 0.25 * h * h;
        let mut u_new = vec![0.0; dim];
        let mut a_new = vec![0.0; dim];
        for n in 0..dim {
            let fx = f.as_ref().map_or(0.0, |f| f[n]);
            let load = l[n] * m[n] - fx + self.force[n];
            u_new[n] = (u_old[n] + h * v_old[n] + q * (self.accel[n] + load)) / (1.0 + q * l[n] * (1.0 + gamma));
            a_new[n] = -l[n] * (1.0 + gamma) * u_new[n] + load;
        }
        let v_new = ModalField((0..dim).map(|n| v_old[n] + 0.5 * h * (self.accel[n] + a_new[n])).collect());
        let u_new = ModalField(u_new);
        if let MemoryBackend::Prony(e) = &mut self.backend {
            e.advance_zeta(u_old.as_slice(), u_new.as_slice());
        }
        self.state.advance(u_new.clone(), v_new.clone());
        (u_new, v_new, a_new)
    }

    /// Steps until `time() >= until` (to within half a step).
    pub fn advance_to(&mut self, until: f64) -> Result<()> {
        while self.time() < until - 0.5 * self.stepper.dt {
            self.step()?;
        }
        Ok(())
    }

    /// Energy pieces at the current state in the energy space.
    pub fn energy_parts(&self) -> EnergyParts {
        let basis = &self.problem.basis;
        let l = basis.eigenvalues();
        let (memory_sq, dissipation) = match &self.backend {
            MemoryBackend::History(w) => (
                self.state.weighted_history_energy(&w.norm, l),
                0.5 * self.state.weighted_history_energy(&w.dissipation, l),
            ),
            MemoryBackend::Prony(e) => (e.memory_norm_sq(l, 0.0), e.dissipation(l)),
            MemoryBackend::Off => (0.0, 0.0),
        };
        let (lp_pow, potential) = match &self.problem.nonlinearity {
            Some(n) => pointwise_parts(&self.state.u, basis, n),
            None => (basis.norm_sigma_sq(self.state.u.as_slice(), 0.0), 0.0),
        };
        EnergyParts {
            u_sq: basis.norm_sigma_sq(self.state.u.as_slice(), 1.0),
            v_sq: basis.norm_sigma_sq(self.state.v.as_slice(), 0.0),
            memory_sq,
            lp_pow,
            potential,
            dissipation,
        }
    }

    /// `||U||^2` in `H^{sigma+1} x H^sigma x M^sigma`.
    pub fn norm_sq_sigma(&self, sigma: f64) -> f64 {
        let basis = &self.problem.basis;
        let l = basis.eigenvalues();
        let memory = match &self.backend {
            MemoryBackend::History(w) => {
                let m: Vec<f64> = l.iter().map(|x| x.powf(sigma + 1.0)).collect();
                self.state.weighted_history_energy(&w.norm, &m)
            }
            MemoryBackend::Prony(e) => e.memory_norm_sq(l, sigma),
            MemoryBackend::Off => 0.0,
        };
        basis.norm_sigma_sq(self.state.u.as_slice(), sigma + 1.0)
            + basis.norm_sigma_sq(self.state.v.as_slice(), sigma)
            + memory
    }

    /// Diagnostics row at the current state; `work` is taken from the
    /// accumulator.
    pub fn sample(&mut self, c_e: f64) -> Sample {
        let parts = self.energy_parts();
        let p = self.problem.order();
        Sample {
            time: self.time(),
            phi: parts.phi(),
            energy: 0.5 * parts.h_norm_sq() + parts.potential + c_e,
            dissipation: parts.dissipation,
            h_norm: parts.h_norm_sq().sqrt(),
            lp_norm: parts.lp_pow.powf(1.0 / (p + 1.0)),
            work: self.take_work(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { time: self.time(), u: self.state.u.clone(), v: self.state.v.clone() }
    }

    /// Runs to `until`, sampling every `opts.sample_every` steps (and at the
    /// start). `extra` may append named columns for each sample.
    pub fn run_with(
        &mut self,
        until: f64,
        opts: &RunOptions,
        mut extra: impl FnMut(&Solver, &mut TrajectoryRecord),
    ) -> Result<TrajectoryRecord> {
        let mut rec = TrajectoryRecord::default();
        let every = opts.sample_every.max(1);
        let steps = ((until - self.time()) / self.stepper.dt).round().max(0.0) as usize;
        self.work = 0.0;
        for n in 0..=steps {
            if n > 0 {
                self.step()?;
            }
            if n % every == 0 || n == steps {
                let s = self.sample(opts.c_e);
                rec.samples.push(s);
                extra(self, &mut rec);
            }
            if let Some(k) = opts.snapshot_every {
                if k > 0 && n % k == 0 {
                    rec.snapshots.push(self.snapshot());
                }
            }
        }
        Ok(rec)
    }

    pub fn run(&mut self, until: f64, opts: &RunOptions) -> Result<TrajectoryRecord> {
        self.run_with(until, opts, |_, _| {})
    }
}

/// Steps two solvers that share their past in lockstep and records the
/// diagnostics of `a` with an extra column `deviation = ||U_a - U_b||_H`.
///
/// The memory of the difference vanishes at the start, so for the Prony
/// backend a fresh engine driven by the displacement difference carries it.
pub fn lockstep_deviation(a: &mut Solver, b: &mut Solver, until: f64, opts: &RunOptions) -> Result<TrajectoryRecord> {
    if a.stepper.dt != b.stepper.dt || a.state.steps != b.state.steps || a.start_time != b.start_time {
        return Err(Error::InvalidArgument("lockstep runs need a common time grid".into()));
    }
    if a.backend.kind() != b.backend.kind() || a.problem.kernel != b.problem.kernel {
        return Err(Error::KernelMismatch("lockstep runs need the same memory backend".into()));
    }
    let dim = a.state.dim();
    let dt = a.stepper.dt;
    let mut diff_engine = match &a.backend {
        MemoryBackend::Prony(_) => Some(PronyEngine::new(&a.problem.kernel, dim, dt)?),
        _ => None,
    };
    let deviation = |a: &Solver, b: &Solver, engine: &Option<PronyEngine>| -> Result<f64> {
        let basis = &a.problem.basis;
        let l = basis.eigenvalues();
        let du = &a.state.u - &b.state.u;
        let dv = &a.state.v - &b.state.v;
        let memory = match (&a.backend, engine) {
            (MemoryBackend::History(w), _) => a.state.difference(&b.state)?.weighted_history_energy(&w.norm, l),
            (MemoryBackend::Prony(_), Some(e)) => e.memory_norm_sq(l, 0.0),
            _ => 0.0,
        };
        Ok((basis.norm_sigma_sq(du.as_slice(), 1.0) + basis.norm_sigma_sq(dv.as_slice(), 0.0) + memory).sqrt())
    };
    let mut rec = TrajectoryRecord::default();
    let every = opts.sample_every.max(1);
    let steps = ((until - a.time()) / dt).round().max(0.0) as usize;
    a.work = 0.0;
    for n in 0..=steps {
        if n > 0 {
            let du_old = &a.state.u - &b.state.u;
            let dv_old = &a.state.v - &b.state.v;
            a.step()?;
            b.step()?;
            if let Some(e) = diff_engine.as_mut() {
                let du_new = &a.state.u - &b.state.u;
                let dv_new = &a.state.v - &b.state.v;
                let zeta_old = e.zeta.clone();
                e.advance_zeta(du_old.as_slice(), du_new.as_slice());
                e.advance_psi(dt, &zeta_old, dv_old.as_slice(), dv_new.as_slice());
            }
        }
        if n % every == 0 || n == steps {
            let d = deviation(a, b, &diff_engine)?;
            rec.samples.push(a.sample(opts.c_e));
            rec.push_extra("deviation", d);
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub sample_every: usize,
    pub c_e: f64,
    pub snapshot_every: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { sample_every: 1, c_e: 1.0, snapshot_every: None }
    }
}

/// Trajectory of the linear problem driven by `k(t/eps)` from rest, with
/// extra columns `V_norm` holding `||V||` in `H^sigma x H^{sigma-1} x M^{sigma-1}`
/// and `V_sup`, its maximum over every step since the previous sample.
#[allow(clippy::too_many_arguments)]
pub fn solve_linear_aux(
    basis: &ModalBasis,
    kernel: &MemoryKernel,
    k: &ForceTerm,
    epsilon: f64,
    sigma: f64,
    horizon: f64,
    stepper: Stepper,
    setup: SolverSetup,
) -> Result<TrajectoryRecord> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let limit = epsilon / 20.0;
    if stepper.dt > limit * (1.0 + 1e-12) {
        return Err(Error::UnderResolved { dt: stepper.dt, limit });
    }
    let dim = basis.modes();
    let forcing = Forcing::new(ForceTerm::zero(dim), k.clone(), 0.0, epsilon)?;
    let problem = Problem { basis: basis.clone(), kernel: kernel.clone(), nonlinearity: None, forcing };
    let mut solver = Solver::new(problem, stepper, setup, ModalField::zeros(dim), ModalField::zeros(dim))?;
    let steps = (horizon / stepper.dt).round() as usize;
    let every = (steps / 2000).max(1);
    let mut rec = TrajectoryRecord::default();
    let mut running: f64 = 0.0;
    for n in 0..=steps {
        if n > 0 {
            solver.step()?;
        }
        let v = solver.norm_sq_sigma(sigma - 1.0).sqrt();
        running = running.max(v);
        if n % every == 0 || n == steps {
            rec.samples.push(solver.sample(0.0));
            rec.push_extra("V_norm", v);
            rec.push_extra("V_sup", running);
            running = 0.0;
        }
    }
    Ok(rec)
}
