//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any of them fails.

use std::time::{Duration, Instant};

use memwave::analysis::{bootstrap, BootstrapVerdict};
use memwave::dynamics::{matrix_oracle, EngineKind, OracleForce, Problem, RunOptions, Solver, SolverSetup, Stepper};
use memwave::forcing::{ForceTerm, Forcing, Waveform};
use memwave::harness::{run_experiment, Config, ExperimentSpec, Verdict};
use memwave::kernels::{auto_weights, quadrature_weights, MemoryKernel, TailMode, TailPolicy, COND_MASS};
use memwave::spectral::{ModalBasis, ModalField};
use memwave::state::{memory_norm_sq_sigma, NonlinearityModel, State};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_all(config: Config) -> memwave::harness::ExperimentOutcome {
    let spec = ExperimentSpec::from_config(config, 7).expect("valid experiment config");
    run_experiment(&spec, 0).expect("experiment runs")
}

fn config(pairs: &[(&str, &str)]) -> Config {
    let mut c = Config::default();
    for (k, v) in pairs {
        c.set(k, v).unwrap();
    }
    c
}

fn oracle_equivalence() -> Outcome {
    let kernel = MemoryKernel::prony(&[(1.0, 2.0)]);
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
    let exact = matrix_oracle(&kernel, 1.0, OracleForce::Zero, (1.0, 0.0), &times).map_err(|e| e.to_string())?;
    let err = |dt: f64| {
        let problem = Problem {
            basis: ModalBasis::with_modes(1).unwrap(),
            kernel: kernel.clone(),
            nonlinearity: None,
            forcing: Forcing::none(1),
        };
        let setup = SolverSetup { engine: EngineKind::History, tail: TailPolicy::truncate(1e-12), ..Default::default() };
        let mut s = Solver::new(problem, Stepper::new(dt), setup, ModalField(vec![1.0]), ModalField(vec![0.0])).unwrap();
        let mut e: f64 = 0.0;
        for (i, t) in times.iter().enumerate() {
            s.advance_to(*t).unwrap();
            let du = s.state.u[0] - exact.u[i];
            let dv = s.state.v[0] - exact.v[i];
            e = e.max((du * du + dv * dv).sqrt());
        }
        e
    };
    let (coarse, fine) = (err(1e-3), err(5e-4));
    let ratio = coarse / fine;
    check(coarse <= 1e-4 && ratio >= 3.5, format!("sup error {coarse:.3e} at dt=1e-3, ratio {ratio:.3}"))
}

fn engine_cross_validation() -> Outcome {
    let dt = 1e-3;
    let basis = ModalBasis::with_modes(32).unwrap();
    let kernel = MemoryKernel::prony(&[(0.25, 1.0), (0.5, 2.0)]);
    let forcing = Forcing::new(
        ForceTerm::new(ModalField::unit(32, 1), Waveform::sin(1.0)),
        ForceTerm::zero(32),
        0.0,
        0.0,
    )
    .unwrap();
    let problem = Problem {
        basis: basis.clone(),
        kernel: kernel.clone(),
        nonlinearity: Some(NonlinearityModel::PowerLaw { a: 1.0, p: 2.0 }),
        forcing,
    };
    let mut u0 = ModalField::zeros(32);
    u0[0] = 1.0;
    u0[1] = 0.5;
    u0[4] = -0.2;
    let v0 = ModalField::zeros(32);
    let policy = TailPolicy::default();
    let make = |engine| {
        let setup = SolverSetup { engine, tail: policy, ..Default::default() };
        Solver::new(problem.clone(), Stepper::new(dt), setup, u0.clone(), v0.clone()).unwrap()
    };
    let (mut h, mut p) = (make(EngineKind::History), make(EngineKind::Prony));
    let weights = auto_weights(&kernel, dt, &policy).unwrap();
    // memory of the difference, driven by the displacement difference from a zero past
    let mut diff = State::new(ModalField::zeros(32), ModalField::zeros(32), dt, weights.n_max());
    let mut sup: f64 = 0.0;
    while h.time() < 10.0 - 0.5 * dt {
        h.step().unwrap();
        p.step().unwrap();
        let du = &h.state.u - &p.state.u;
        let dv = &h.state.v - &p.state.v;
        diff.advance(du.clone(), dv.clone());
        let mem = memory_norm_sq_sigma(&diff, &basis, &weights, 0.0).unwrap();
        let d = basis.norm_sigma_sq(du.as_slice(), 1.0) + basis.norm_sigma_sq(dv.as_slice(), 0.0) + mem;
        sup = sup.max(d.sqrt());
    }
    let bound = 10.0 * (dt * dt + weights.tail);
    check(sup <= bound, format!("sup H-distance {sup:.3e}, bound {bound:.3e}"))
}

fn energy_identity() -> Outcome {
    let residual = |dt: f64| {
        let basis = ModalBasis::with_modes(16).unwrap();
        let forcing = Forcing::new(
            ForceTerm::new(ModalField::unit(16, 1), Waveform::sin(1.0)),
            ForceTerm::new(ModalField::unit(16, 2), Waveform::sin(1.0)),
            0.5,
            0.5,
        )
        .unwrap();
        let problem = Problem {
            basis,
            kernel: MemoryKernel::prony(&[(0.25, 1.0), (0.5, 2.0)]),
            nonlinearity: Some(NonlinearityModel::PowerLaw { a: 1.0, p: 2.0 }),
            forcing,
        };
        let mut u0 = ModalField::zeros(16);
        u0[0] = 1.0;
        u0[2] = 0.3;
        let setup = SolverSetup { engine: EngineKind::History, tail: TailPolicy::truncate(1e-10), ..Default::default() };
        let mut s = Solver::new(problem, Stepper::new(dt), setup, u0, ModalField::zeros(16)).unwrap();
        let rec = s.run(10.0, &RunOptions { sample_every: 1, c_e: 0.0, snapshot_every: None }).unwrap();
        let e0 = rec.samples[0].energy;
        let (mut dissipated, mut work, mut worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for w in rec.samples.windows(2) {
            let h = w[1].time - w[0].time;
            dissipated += 0.5 * h * (w[0].dissipation + w[1].dissipation);
            work += w[1].work;
            worst = worst.max((w[1].energy - e0 + dissipated - work).abs());
        }
        worst
    };
    let r: Vec<f64> = [4e-3, 2e-3, 1e-3].iter().map(|dt| residual(*dt)).collect();
    let orders = [(r[0] / r[1]).log2(), (r[1] / r[2]).log2()];
    check(
        orders.iter().all(|o| *o >= 1.5),
        format!("residuals {:.3e} {:.3e} {:.3e}, orders {:.2} {:.2}", r[0], r[1], r[2], orders[0], orders[1]),
    )
}

fn dissipativity() -> Outcome {
    let unforced = run_all(config(&[
        ("experiment.name", "absorbing"),
        ("force.g0.profile", "0"),
        ("force.g1.profile", "0"),
    ]));
    let forced = run_all(config(&[
        ("experiment.name", "absorbing"),
        ("force.epsilon", "1"),
        ("force.g0.profile", "1"),
        ("force.g0.waveform", "sin(t)"),
        ("force.g1.waveform", "sin(t)"),
    ]));
    let u = &unforced.report;
    let decays = u.checks.get("decay_below_1e-3") == Some(&true) && u.checks.get("positive_rate") == Some(&true);
    let f = &forced.report;
    let stays = f.checks.get("all_enter") == Some(&true) && f.checks.get("no_escape") == Some(&true);
    let spread = u.points.iter().map(|p| p.values["phi0"]).fold((f64::INFINITY, 0.0f64), |a, x| (a.0.min(x), a.1.max(x)));
    let covers = u.points.len() == 8 && spread.0 <= 0.1 * (1.0 + 1e-9) && spread.1 >= 100.0 * (1.0 - 1e-9);
    check(
        decays && stays && covers,
        format!(
            "decay {decays} (min omega_hat {:.3}), forced entry into R = {:.3}: {stays}, Phi0 in [{:.3}, {:.1}]",
            u.fits["min_omega_hat"], f.fits["R"], spread.0, spread.1
        ),
    )
}

fn equality_case() -> Outcome {
    let delta = 1.5;
    let problem = Problem {
        basis: ModalBasis::with_modes(8).unwrap(),
        kernel: MemoryKernel::power_law_exp(0.4, 0.0, delta),
        nonlinearity: Some(NonlinearityModel::PowerLaw { a: 1.0, p: 2.0 }),
        forcing: Forcing::none(8),
    };
    let mut u0 = ModalField::zeros(8);
    u0[0] = 1.0;
    u0[3] = 0.2;
    let setup = SolverSetup { engine: EngineKind::History, ..Default::default() };
    let mut s = Solver::new(problem, Stepper::new(1e-3), setup, u0, ModalField::zeros(8)).unwrap();
    let mut worst: f64 = 0.0;
    for k in 1..=20 {
        s.advance_to(0.25 * k as f64).unwrap();
        let parts = s.energy_parts();
        let rel = (parts.dissipation - 0.5 * delta * parts.memory_sq).abs() / parts.dissipation;
        worst = worst.max(rel);
    }
    check(worst <= 1e-8, format!("max relative gap {worst:.3e}"))
}

fn aux_scaling() -> Outcome {
    let base = [
        ("experiment.name", "aux_linear"),
        ("experiment.horizon", "20"),
        ("experiment.sigma", "1"),
        ("experiment.epsilons", "0.2, 0.1, 0.05, 0.025"),
        ("force.g1.profile", "1"),
    ];
    let zero_mean = run_all(config(&[base.as_slice(), &[("force.g1.waveform", "sin(t)")]].concat())).report;
    let constant = run_all(config(&[base.as_slice(), &[("force.g1.waveform", "1")]].concat())).report;
    let slope = zero_mean.fits["slope"];
    check(
        (slope - 1.0).abs() <= 0.15 && zero_mean.verdict == Verdict::Pass && constant.verdict == Verdict::NotApplicable,
        format!("slope {slope:.4}, constant forcing verdict {:?}", constant.verdict),
    )
}

fn deviation_rate() -> Outcome {
    let report = run_all(config(&[
        ("experiment.name", "averaging"),
        ("experiment.rhos", "0, 0.5"),
        ("experiment.epsilons", "0.2, 0.1, 0.05, 0.025"),
        ("experiment.compare", "5"),
        ("force.g0.profile", "1"),
        ("force.g0.waveform", "sin(t)"),
        ("force.g1.waveform", "sin(t)"),
        ("solver.points_per_period", "40"),
    ]))
    .report;
    let (s0, s5) = (report.fits["slope_rho_0"], report.fits["slope_rho_0.5"]);
    check(
        (s0 - 1.0).abs() <= 0.15 && (s5 - 0.5).abs() <= 0.15,
        format!("slope {s0:.4} at rho=0, {s5:.4} at rho=0.5"),
    )
}

fn attractor_size() -> Outcome {
    let report = run_all(config(&[
        ("experiment.name", "attractor_size"),
        ("experiment.epsilons", "0.2, 0.1, 0.05"),
        ("force.rho", "0.5"),
        ("force.g0.profile", "1"),
        ("force.g0.waveform", "sin(t)"),
        ("force.g1.waveform", "sin(t)"),
    ]))
    .report;
    let factor = report.fits["zero_mean_factor"];
    let grows = report.checks["biased_grows"];
    let sups: Vec<String> = report
        .points
        .iter()
        .filter(|p| p.key.starts_with("biased"))
        .map(|p| format!("{:.2}", p.values["tail_sup"]))
        .collect();
    check(factor < 3.0 && grows, format!("zero-mean factor {factor:.3}, biased sups {}", sups.join(" < ")))
}

/// Stopping index by iterating `rho kappa^n` directly.
fn stopping_index(p: f64, rho: f64) -> usize {
    let kappa = 2.0 * (p - 1.0) / (p + 1.0) - (1.0 - rho) / rho;
    let gamma_star = (1.0 - rho) * (p + 1.0) / (2.0 * (p - 1.0));
    let mut n = 0;
    while rho * kappa.powi(n as i32) > gamma_star {
        n += 1;
    }
    n
}

fn bootstrap_arithmetic() -> Outcome {
    let mut checked = 0;
    for p in [1.0, 1.5, 2.0, 2.5] {
        for i in 1..=9 {
            let rho = i as f64 / 10.0;
            let r = bootstrap(p, rho).map_err(|e| e.to_string())?;
            if p == 1.0 {
                if r.verdict != BootstrapVerdict::UniformBound {
                    return Err(format!("p = 1, rho = {rho}: {:?}", r.verdict));
                }
                continue;
            }
            let rho_star = (p + 1.0) / (3.0 * p - 1.0);
            if rho > rho_star {
                let kappa = r.kappa.ok_or("missing kappa")?;
                if !(kappa > 0.0 && kappa < 1.0) {
                    return Err(format!("p = {p}, rho = {rho}: kappa = {kappa}"));
                }
                let expect = stopping_index(p, rho);
                if r.n_stop != Some(expect) {
                    return Err(format!("p = {p}, rho = {rho}: n_stop {:?}, loop gives {expect}", r.n_stop));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} points with rho above the threshold agree with the direct loop"))
}

fn kernel_admissibility() -> Outcome {
    let ok = MemoryKernel::prony(&[(0.5, 1.0)]).validate().ok;
    let heavy = MemoryKernel::prony(&[(2.0, 1.0)]).validate();
    let heavy_ok = !heavy.ok && heavy.violations.iter().any(|v| v.condition == COND_MASS);
    let power_ok = MemoryKernel::power_law_exp(0.5, 0.5, 1.0).validate().ok;
    let kernels = [
        MemoryKernel::prony(&[(0.5, 1.0)]),
        MemoryKernel::prony(&[(0.25, 1.0), (0.5, 2.0)]),
        MemoryKernel::power_law_exp(0.5, 0.5, 1.0),
        MemoryKernel::power_law_exp(0.3, 0.2, 2.0),
    ];
    let mut worst: f64 = 0.0;
    for k in &kernels {
        let total = k.total_mass().unwrap();
        for dt in [1e-3, 1e-2, 0.1] {
            for n in [1usize, 10, 1000] {
                for mode in [TailMode::Truncate, TailMode::Lump] {
                    let w = quadrature_weights(k, dt, n, &TailPolicy { mode, max_tail_fraction: 1.0 }).unwrap();
                    let sum: f64 = w.mass.iter().sum::<f64>() + w.tail;
                    worst = worst.max((sum - total).abs() / total);
                }
            }
        }
    }
    check(
        ok && heavy_ok && power_ok && worst <= 1e-10,
        format!("examples ok/reject/ok = {ok}/{heavy_ok}/{power_ok}, partition error {worst:.2e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("oracle equivalence", oracle_equivalence, Duration::from_secs(1)),
        ("engine cross-validation", engine_cross_validation, Duration::from_secs(10)),
        ("energy identity order", energy_identity, Duration::from_secs(30)),
        ("dissipativity", dissipativity, Duration::from_secs(120)),
        ("dissipation equality at alpha = 0", equality_case, Duration::from_secs(1)),
        ("auxiliary linear scaling", aux_scaling, Duration::from_secs(120)),
        ("deviation rate", deviation_rate, Duration::from_secs(300)),
        ("attractor size", attractor_size, Duration::from_secs(600)),
        ("bootstrap arithmetic", bootstrap_arithmetic, Duration::from_secs(1)),
        ("kernel admissibility", kernel_admissibility, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (mut pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let slow = elapsed > *budget;
        pass &= !slow;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<34} {}  [{:.2}s{}] {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if slow { format!(" over {:.0}s budget", budget.as_secs_f64()) } else { String::new() },
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
