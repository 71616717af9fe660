//! Plain-text run configuration.
//!
//! One `section.key = value` assignment per line; `#` starts a comment.
//! Every key has a default, unknown keys are rejected with their line, and
//! [`Config::emit`] writes all keys back in a fixed order.
//!
//! ```text
//! # kernel.form = prony | power_law_exp
//! kernel.terms = 0.25:1, 0.5:2
//! force.g1.waveform = sin(t)
//! experiment.epsilons = 0.2, 0.1, 0.05
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dynamics::{EngineKind, Problem, Scheme, Stepper};
use crate::error::{Error, Result};
use crate::forcing::{ForceTerm, Forcing, Waveform};
use crate::kernels::{MemoryKernel, TailMode, TailPolicy};
use crate::spectral::{ModalBasis, ModalField};
use crate::state::NonlinearityModel;

/// Keys, defaults and one-line descriptions, in emission order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("basis.modes", "32", "Galerkin modes N"),
    ("kernel.form", "prony", "prony | power_law_exp"),
    ("kernel.terms", "0.25:1, 0.5:2", "Prony terms amplitude:rate"),
    ("kernel.C", "0.3", "power_law_exp amplitude C"),
    ("kernel.alpha", "0.5", "power_law_exp exponent alpha"),
    ("kernel.delta", "1", "power_law_exp rate delta"),
    ("kernel.tail", "1e-6", "allowed tail mass as a fraction of kappa0"),
    ("kernel.tail_mode", "truncate", "truncate | lump"),
    ("nonlinearity.form", "power_law", "power_law | sine_gordon | none"),
    ("nonlinearity.a", "1", "power_law coefficient"),
    ("nonlinearity.p", "2", "power_law order"),
    ("nonlinearity.b", "1", "sine_gordon coefficient"),
    ("force.g0.profile", "1", "modal coefficients of g0 (missing modes are 0)"),
    ("force.g0.waveform", "sin(t)", "time profile of g0"),
    ("force.g1.profile", "1", "modal coefficients of g1"),
    ("force.g1.waveform", "sin(t)", "fast time profile of g1"),
    ("force.rho", "0.5", "singular exponent"),
    ("force.epsilon", "0.1", "oscillation scale; 0 switches g1 off"),
    ("initial.u", "1", "modal coefficients of u at the initial time"),
    ("initial.v", "0", "modal coefficients of u_t at the initial time"),
    ("solver.dt", "1e-3", "largest time step"),
    ("solver.scheme", "central_difference", "central_difference | semi_implicit"),
    ("solver.engine", "auto", "auto | history | prony"),
    ("solver.safety", "0.9", "CFL safety factor"),
    ("solver.horizon", "20", "run length"),
    ("solver.sample_every", "10", "steps between samples"),
    ("solver.points_per_period", "20", "minimum steps per fast forcing period"),
    ("energy.c_e", "1", "energy shift"),
    ("energy.varpi", "0.05", "modified-kernel parameter"),
    ("energy.omega", "0.05", "weight of L in Lambda_omega"),
    ("experiment.name", "absorbing", "absorbing | attractor_size | aux_linear | averaging"),
    ("experiment.epsilons", "0.2, 0.1, 0.05, 0.025", "epsilon sweep"),
    ("experiment.rhos", "0, 0.5", "rho values for averaging"),
    ("experiment.ensemble", "8", "initial data per sweep point"),
    ("experiment.phi_min", "0.1", "smallest initial Phi"),
    ("experiment.phi_max", "100", "largest initial Phi"),
    ("experiment.horizon", "100", "trajectory length"),
    ("experiment.tail_start", "70", "start of the tail window"),
    ("experiment.margin", "1", "absorbing radius R = margin (1 + Q_eps)"),
    ("experiment.factor", "3", "bounded-factor threshold"),
    ("experiment.tolerance", "0.15", "slope tolerance"),
    ("experiment.sigma", "1", "regularity index of the auxiliary norm"),
    ("experiment.biased_waveform", "1 + sin(t)", "nonzero-mean fast profile"),
    ("experiment.warmup", "40", "time before the comparison starts"),
    ("experiment.compare", "5", "comparison horizon T"),
    ("experiment.tail_length", "10", "length of the tail sampled for the set-distance proxy"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    /// Line of each key in the parsed text.
    lines: BTreeMap<String, usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
            lines: BTreeMap::new(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("line {}", i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(&loc, format!("expected `section.key = value`, got `{line}`")))?;
            let key = key.trim();
            if !known(key) {
                return Err(Error::config(&loc, format!("unknown key `{key}`")));
            }
            if cfg.lines.insert(key.to_string(), i + 1).is_some() {
                return Err(Error::config(&loc, format!("duplicate key `{key}`")));
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { location, message } => Error::config(format!("{}:{location}", path.display()), message),
            other => other,
        })
    }

    /// All keys with their current values, one per line.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (key, _, doc) in KEYS {
            let _ = writeln!(out, "# {doc}");
            let _ = writeln!(out, "{key} = {}", self.values[*key]);
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !known(key) {
            return Err(Error::config("set", format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Same values; ignores where they were read from.
    pub fn same_values(&self, other: &Config) -> bool {
        self.values == other.values
    }

    fn location(&self, key: &str) -> String {
        match self.lines.get(key) {
            Some(l) => format!("line {l} ({key})"),
            None => format!("default ({key})"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.text(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::config(self.location(key), format!("expected a number, got `{v}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.text(key);
        v.parse::<usize>()
            .map_err(|_| Error::config(self.location(key), format!("expected a count, got `{v}`")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.text(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::config(self.location(key), format!("bad number `{s}`"))))
            .collect()
    }

    fn nonempty_list(&self, key: &str) -> Result<Vec<f64>> {
        let l = self.list(key)?;
        if l.is_empty() {
            return Err(Error::config(self.location(key), "list must not be empty"));
        }
        Ok(l)
    }

    pub fn basis(&self) -> Result<ModalBasis> {
        let n = self.usize("basis.modes")?;
        if n == 0 {
            return Err(Error::config(self.location("basis.modes"), "need at least one mode"));
        }
        ModalBasis::with_modes(n)
    }

    pub fn kernel(&self) -> Result<MemoryKernel> {
        match self.text("kernel.form") {
            "prony" => {
                let mut terms = Vec::new();
                for item in self.text("kernel.terms").split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let bad = || Error::config(self.location("kernel.terms"), format!("expected amplitude:rate, got `{item}`"));
                    let (c, d) = item.split_once(':').ok_or_else(bad)?;
                    let c = c.trim().parse::<f64>().map_err(|_| bad())?;
                    let d = d.trim().parse::<f64>().map_err(|_| bad())?;
                    terms.push((c, d));
                }
                if terms.is_empty() {
                    return Err(Error::config(self.location("kernel.terms"), "no Prony terms"));
                }
                Ok(MemoryKernel::prony(&terms))
            }
            "power_law_exp" => Ok(MemoryKernel::power_law_exp(
                self.f64("kernel.C")?,
                self.f64("kernel.alpha")?,
                self.f64("kernel.delta")?,
            )),
            other => Err(Error::config(self.location("kernel.form"), format!("unknown kernel form `{other}`"))),
        }
    }

    pub fn tail_policy(&self) -> Result<TailPolicy> {
        let mode = match self.text("kernel.tail_mode") {
            "truncate" => TailMode::Truncate,
            "lump" => TailMode::Lump,
            other => return Err(Error::config(self.location("kernel.tail_mode"), format!("unknown tail mode `{other}`"))),
        };
        Ok(TailPolicy { mode, max_tail_fraction: self.f64("kernel.tail")? })
    }

    pub fn nonlinearity(&self) -> Result<Option<NonlinearityModel>> {
        let n = match self.text("nonlinearity.form") {
            "power_law" => NonlinearityModel::PowerLaw { a: self.f64("nonlinearity.a")?, p: self.f64("nonlinearity.p")? },
            "sine_gordon" => NonlinearityModel::SineGordon { b: self.f64("nonlinearity.b")? },
            "none" => return Ok(None),
            other => {
                return Err(Error::config(self.location("nonlinearity.form"), format!("unknown nonlinearity `{other}`")))
            }
        };
        n.validate().map_err(|e| Error::config(self.location("nonlinearity.form"), e.to_string()))?;
        Ok(Some(n))
    }

    pub fn field(&self, key: &str, dim: usize) -> Result<ModalField> {
        let coeffs = self.list(key)?;
        if coeffs.len() > dim {
            return Err(Error::config(self.location(key), format!("{} coefficients for {dim} modes", coeffs.len())));
        }
        let mut f = ModalField::zeros(dim);
        f.0[..coeffs.len()].copy_from_slice(&coeffs);
        Ok(f)
    }

    pub fn waveform(&self, key: &str) -> Result<Waveform> {
        Waveform::parse(self.text(key)).map_err(|e| Error::config(self.location(key), e.to_string()))
    }

    pub fn forcing(&self, dim: usize) -> Result<Forcing> {
        let g0 = ForceTerm::new(self.field("force.g0.profile", dim)?, self.waveform("force.g0.waveform")?);
        let g1 = ForceTerm::new(self.field("force.g1.profile", dim)?, self.waveform("force.g1.waveform")?);
        Forcing::new(g0, g1, self.f64("force.rho")?, self.f64("force.epsilon")?)
            .map_err(|e| Error::config(self.location("force.rho"), e.to_string()))
    }

    pub fn problem(&self) -> Result<Problem> {
        let basis = self.basis()?;
        let forcing = self.forcing(basis.modes())?;
        Ok(Problem { kernel: self.kernel()?, nonlinearity: self.nonlinearity()?, forcing, basis })
    }

    pub fn engine(&self) -> Result<EngineKind> {
        match self.text("solver.engine") {
            "history" => Ok(EngineKind::History),
            "prony" => Ok(EngineKind::Prony),
            "auto" => Ok(if self.kernel()?.prony_terms().is_some() { EngineKind::Prony } else { EngineKind::History }),
            other => Err(Error::config(self.location("solver.engine"), format!("unknown engine `{other}`"))),
        }
    }

    /// Step for a forcing: the configured `dt`, tightened to resolve the
    /// fast oscillation with `points_per_period` steps.
    pub fn stepper_for(&self, forcing: &Forcing) -> Result<Stepper> {
        let mut dt = self.f64("solver.dt")?;
        if let Some(p) = forcing.shortest_period() {
            dt = dt.min(p / self.f64("solver.points_per_period")?);
        }
        let scheme = match self.text("solver.scheme") {
            "central_difference" => Scheme::CentralDifference,
            "semi_implicit" => Scheme::SemiImplicit,
            other => return Err(Error::config(self.location("solver.scheme"), format!("unknown scheme `{other}`"))),
        };
        Ok(Stepper { dt, scheme, safety: self.f64("solver.safety")? })
    }

    pub fn epsilons(&self) -> Result<Vec<f64>> {
        let e = self.nonempty_list("experiment.epsilons")?;
        if e.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            return Err(Error::config(self.location("experiment.epsilons"), "epsilons must lie in (0, 1]"));
        }
        Ok(e)
    }

    pub fn rhos(&self) -> Result<Vec<f64>> {
        let r = self.nonempty_list("experiment.rhos")?;
        if r.iter().any(|x| !(0.0..1.0).contains(x)) {
            return Err(Error::config(self.location("experiment.rhos"), "rho values must lie in [0, 1)"));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_a_problem() {
        let cfg = Config::default();
        let p = cfg.problem().unwrap();
        assert_eq!(p.basis.modes(), 32);
        assert_eq!(p.kernel.prony_terms().unwrap().len(), 2);
        assert_eq!(cfg.engine().unwrap(), EngineKind::Prony);
        // fast period 2 pi 0.1 over 20 points is above the default step
        assert_eq!(cfg.stepper_for(&p.forcing).unwrap().dt, 1e-3);
    }

    #[test]
    fn unknown_and_malformed_keys_report_lines() {
        let e = Config::parse("basis.modes = 4\n\nkernel.colour = red\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref location, .. } if location == "line 3"), "{e}");
        let e = Config::parse("basis.modes 4").unwrap_err();
        assert!(matches!(e, Error::Config { ref location, .. } if location == "line 1"));
        let cfg = Config::parse("# comment\nbasis.modes = four # trailing\n").unwrap();
        let e = cfg.basis().unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn emit_round_trips() {
        let text = "kernel.terms = 0.5:1\nforce.g1.waveform = 1 + sin(t)\nexperiment.epsilons = 0.2, 0.1\n";
        let cfg = Config::parse(text).unwrap();
        let again = Config::parse(&cfg.emit()).unwrap();
        assert!(cfg.same_values(&again));
        assert_eq!(again.problem().unwrap(), cfg.problem().unwrap());
    }

    #[test]
    fn short_profiles_are_padded() {
        let cfg = Config::parse("basis.modes = 3\ninitial.u = 1, 2").unwrap();
        assert_eq!(cfg.field("initial.u", 3).unwrap().0, vec![1.0, 2.0, 0.0]);
        assert!(cfg.field("initial.u", 1).is_err());
    }
}
