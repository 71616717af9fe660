//! External forcing `g^eps(t) = g0(t) + eps^(-rho) g1(t/eps)`.
//!
//! Each force term is a fixed spatial profile times a scalar waveform built
//! from constants and sinusoids. Waveforms have the text form
//! `1 + 0.5*sin(2*t+0.3) - cos(t)`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::spectral::{ModalBasis, ModalField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Waveform {
    Constant,
    Sin { frequency: f64, phase: f64 },
    Cos { frequency: f64, phase: f64 },
    Sum(Vec<(f64, Waveform)>),
}

impl Waveform {
    pub fn sin(frequency: f64) -> Self {
        Waveform::Sin { frequency, phase: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant => 1.0,
            Waveform::Sin { frequency, phase } => (frequency * t + phase).sin(),
            Waveform::Cos { frequency, phase } => (frequency * t + phase).cos(),
            Waveform::Sum(parts) => parts.iter().map(|(c, w)| c * w.value(t)).sum(),
        }
    }

    /// A primitive of the waveform.
    pub fn primitive(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant => t,
            Waveform::Sin { frequency, phase } => -(frequency * t + phase).cos() / frequency,
            Waveform::Cos { frequency, phase } => (frequency * t + phase).sin() / frequency,
            Waveform::Sum(parts) => parts.iter().map(|(c, w)| c * w.primitive(t)).sum(),
        }
    }

    /// Long-time average.
    pub fn mean(&self) -> f64 {
        match self {
            Waveform::Constant => 1.0,
            Waveform::Sin { .. } | Waveform::Cos { .. } => 0.0,
            Waveform::Sum(parts) => parts.iter().map(|(c, w)| c * w.mean()).sum(),
        }
    }

    fn frequencies(&self, out: &mut Vec<f64>) {
        match self {
            Waveform::Constant => {}
            Waveform::Sin { frequency, .. } | Waveform::Cos { frequency, .. } => out.push(*frequency),
            Waveform::Sum(parts) => parts.iter().for_each(|(_, w)| w.frequencies(out)),
        }
    }

    pub fn max_frequency(&self) -> Option<f64> {
        let mut f = Vec::new();
        self.frequencies(&mut f);
        f.into_iter().reduce(f64::max)
    }

    pub fn shortest_period(&self) -> Option<f64> {
        self.max_frequency().map(|w| 2.0 * PI / w)
    }

    pub fn longest_period(&self) -> Option<f64> {
        let mut f = Vec::new();
        self.frequencies(&mut f);
        f.into_iter().reduce(f64::min).map(|w| 2.0 * PI / w)
    }

    /// The same waveform moved ahead by `shift`: `w(t + shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        match self {
            Waveform::Constant => Waveform::Constant,
            Waveform::Sin { frequency, phase } => Waveform::Sin {
                frequency: *frequency,
                phase: phase + frequency * shift,
            },
            Waveform::Cos { frequency, phase } => Waveform::Cos {
                frequency: *frequency,
                phase: phase + frequency * shift,
            },
            Waveform::Sum(parts) => Waveform::Sum(parts.iter().map(|(c, w)| (*c, w.shifted(shift))).collect()),
        }
    }

    /// `sup_t int_t^{t+1} w^2` in closed form, for a single sinusoid.
    pub fn tb_closed_form(&self) -> Option<f64> {
        match self {
            Waveform::Constant => Some(1.0),
            Waveform::Sin { frequency, .. } | Waveform::Cos { frequency, .. } => {
                Some(0.5 + frequency.sin().abs() / (2.0 * frequency))
            }
            Waveform::Sum(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Waveform::Constant => Ok(()),
            Waveform::Sin { frequency, phase } | Waveform::Cos { frequency, phase } => {
                if *frequency > 0.0 && frequency.is_finite() && phase.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("waveform frequency must be positive, got {frequency}")))
                }
            }
            Waveform::Sum(parts) => {
                for (c, w) in parts {
                    if !c.is_finite() {
                        return Err(Error::InvalidArgument("non-finite waveform coefficient".into()));
                    }
                    w.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Parses `[c*]atom (+|-) [c*]atom ...` with atoms `sin(w*t+phi)`,
    /// `cos(w*t+phi)`, `sin(t)` or a bare number.
    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(parse_error(text, "empty waveform"));
        }
        let mut parts = Vec::new();
        let mut rest = s.as_str();
        let mut sign = 1.0;
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1.0;
            rest = r;
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r;
        }
        loop {
            let end = term_end(rest);
            let (term, tail) = rest.split_at(end);
            let (c, w) = parse_term(term).map_err(|m| parse_error(text, &m))?;
            parts.push((sign * c, w));
            if tail.is_empty() {
                break;
            }
            sign = if tail.starts_with('-') { -1.0 } else { 1.0 };
            rest = &tail[1..];
        }
        let wave = if parts.len() == 1 && parts[0].0 == 1.0 {
            parts.pop().expect("one part").1
        } else {
            Waveform::Sum(parts)
        };
        wave.validate()?;
        Ok(wave)
    }
}

fn parse_error(text: &str, msg: &str) -> Error {
    Error::InvalidArgument(format!("waveform '{text}': {msg}"))
}

// End of the first top-level term: a '+'/'-' outside parentheses that is not
// an exponent sign.
fn term_end(s: &str) -> usize {
    let b = s.as_bytes();
    let mut depth = 0i32;
    for i in 0..b.len() {
        match b[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'+' | b'-' if depth == 0 && i > 0 && !matches!(b[i - 1], b'e' | b'E' | b'*') => return i,
            _ => {}
        }
    }
    b.len()
}

fn parse_term(term: &str) -> std::result::Result<(f64, Waveform), String> {
    let (coef, atom) = match term.find('*').map(|i| (i, term[..i].parse::<f64>())) {
        Some((i, Ok(c))) => (c, &term[i + 1..]),
        _ => (1.0, term),
    };
    if let Ok(x) = atom.parse::<f64>() {
        return Ok((coef * x, Waveform::Constant));
    }
    let (kind, inner) = if let Some(r) = atom.strip_prefix("sin(") {
        ("sin", r)
    } else if let Some(r) = atom.strip_prefix("cos(") {
        ("cos", r)
    } else {
        return Err(format!("unknown term '{term}'"));
    };
    let inner = inner.strip_suffix(')').ok_or_else(|| format!("unbalanced '{term}'"))?;
    let tpos = inner.find('t').ok_or_else(|| format!("'{term}' lacks t"))?;
    let freq_txt = inner[..tpos].trim_end_matches('*');
    let frequency = if freq_txt.is_empty() {
        1.0
    } else {
        freq_txt.parse::<f64>().map_err(|e| format!("{term}: {e}"))?
    };
    let phase_txt = inner[tpos + 1..].trim_start_matches('+');
    let phase = if phase_txt.is_empty() {
        0.0
    } else {
        phase_txt.parse::<f64>().map_err(|e| format!("{term}: {e}"))?
    };
    let w = if kind == "sin" {
        Waveform::Sin { frequency, phase }
    } else {
        Waveform::Cos { frequency, phase }
    };
    Ok((coef, w))
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Waveform::Constant => write!(f, "1"),
            Waveform::Sin { frequency, phase } => write!(f, "sin({frequency:?}*t+{phase:?})"),
            Waveform::Cos { frequency, phase } => write!(f, "cos({frequency:?}*t+{phase:?})"),
            Waveform::Sum(parts) => {
                for (i, (c, w)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    match w {
                        Waveform::Constant => write!(f, "{c:?}")?,
                        _ => write!(f, "{c:?}*{w}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

/// Spatial profile times waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceTerm {
    pub profile: ModalField,
    pub waveform: Waveform,
}

impl ForceTerm {
    pub fn new(profile: ModalField, waveform: Waveform) -> Self {
        ForceTerm { profile, waveform }
    }

    pub fn zero(dim: usize) -> Self {
        ForceTerm::new(ModalField::zeros(dim), Waveform::Constant)
    }

    pub fn is_zero(&self) -> bool {
        self.profile.0.iter().all(|x| *x == 0.0)
    }

    pub fn eval(&self, t: f64) -> ModalField {
        self.profile.scaled(self.waveform.value(t))
    }

    pub fn scaled(&self, c: f64) -> Self {
        ForceTerm::new(self.profile.scaled(c), self.waveform.clone())
    }

    pub fn shifted(&self, shift: f64) -> Self {
        ForceTerm::new(self.profile.clone(), self.waveform.shifted(shift))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub g0: ForceTerm,
    pub g1: ForceTerm,
    pub rho: f64,
    pub epsilon: f64,
}

impl Forcing {
    pub fn new(g0: ForceTerm, g1: ForceTerm, rho: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "need rho, epsilon in [0, 1] (rho = {rho}, epsilon = {epsilon})"
            )));
        }
        g0.waveform.validate()?;
        g1.waveform.validate()?;
        Ok(Forcing { g0, g1, rho, epsilon })
    }

    pub fn none(dim: usize) -> Self {
        Forcing {
            g0: ForceTerm::zero(dim),
            g1: ForceTerm::zero(dim),
            rho: 0.0,
            epsilon: 0.0,
        }
    }

    /// Same forcing with another `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Forcing { epsilon, ..self.clone() }
    }

    /// The averaged forcing: `g0` only.
    pub fn averaged(&self) -> Self {
        self.with_epsilon(0.0)
    }

    /// `eps^(-rho)`, or 0 when `g1` is switched off (`eps = 0`).
    pub fn fast_amplitude(&self) -> f64 {
        if self.epsilon == 0.0 {
            0.0
        } else {
            self.epsilon.powf(-self.rho)
        }
    }

    pub fn evaluate(&self, t: f64) -> ModalField {
        let mut out = vec![0.0; self.g0.profile.dim()];
        self.evaluate_into(t, &mut out);
        ModalField(out)
    }

    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) {
        let w0 = self.g0.waveform.value(t);
        for (o, p) in out.iter_mut().zip(self.g0.profile.as_slice()) {
            *o = w0 * p;
        }
        if self.epsilon > 0.0 {
            let w1 = self.fast_amplitude() * self.g1.waveform.value(t / self.epsilon);
            for (o, p) in out.iter_mut().zip(self.g1.profile.as_slice()) {
                *o += w1 * p;
            }
        }
    }

    /// Shortest time scale present, for step-size guards.
    pub fn shortest_period(&self) -> Option<f64> {
        let slow = if self.g0.is_zero() { None } else { self.g0.waveform.shortest_period() };
        let fast = if self.epsilon > 0.0 && !self.g1.is_zero() {
            self.g1.waveform.shortest_period().map(|p| p * self.epsilon)
        } else {
            None
        };
        match (slow, fast) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Squared translation-bounded norm of `g^eps`, by window scan.
    pub fn tb_norm(&self, horizon: f64) -> f64 {
        let step = self.shortest_period().map_or(0.5, |p| p / 50.0);
        let max_freq = self.shortest_period().map_or(1.0, |p| 2.0 * PI / p);
        let pieces = 4 + max_freq.ceil() as usize;
        let window = |t: f64| {
            quad::composite(
                |y| {
                    let g = self.evaluate(y);
                    g.dot(&g)
                },
                t,
                t + 1.0,
                pieces,
            )
        };
        scan_sup(window, 0.0, horizon, step)
    }
}

/// Maximum of `f` on `[lo, hi]`: dense scan with spacing `step`, then a
/// local refinement around the best sample.
fn scan_sup(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let t = (lo + i as f64 * step).min(hi);
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    // golden-section on the bracket around the best sample
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a < 1e-12 {
            break;
        }
    }
    best.1.max(fc).max(fd)
}

/// Squared translation-bounded norm `sup_t int_t^{t+1} ||g(y)||^2 dy` of a term.
pub fn tb_norm(term: &ForceTerm, horizon: f64) -> f64 {
    let p2 = term.profile.dot(&term.profile);
    let step = term.waveform.shortest_period().map_or(0.5, |p| p / 50.0);
    let pieces = 4 + term.waveform.max_frequency().unwrap_or(1.0).ceil() as usize;
    let w = &term.waveform;
    let sup = scan_sup(
        |t| quad::composite(|y| w.value(y).powi(2), t, t + 1.0, pieces),
        0.0,
        horizon,
        step,
    );
    p2 * sup
}

/// `Q_eps = 2 M0 + 4 M1 eps^(-2 rho)`, or `M0` at `eps = 0`.
pub fn q_epsilon(m0: f64, m1: f64, rho: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        m0
    } else {
        2.0 * m0 + 4.0 * m1 * epsilon.powf(-2.0 * rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntiderivativeBound {
    /// Scanned value of `l^2`.
    pub ell_sq: f64,
    /// The windowed sup kept growing over the scan.
    pub diverging: bool,
}

/// Scans `||K(t,tau)||_{sigma-1}^2 + int_t^{t+1} ||K(y,tau)||_sigma^2 dy`
/// with `K(t,tau) = int_tau^t g`, over `tau` in one period and
/// `t in [tau, tau + horizon]`.
pub fn antiderivative_bound(term: &ForceTerm, basis: &ModalBasis, sigma: f64, horizon: f64) -> Result<AntiderivativeBound> {
    let w = &term.waveform;
    let period = w.longest_period().unwrap_or(1.0);
    let step = w.shortest_period().map_or(0.05, |p| p / 50.0);
    if horizon < 2.0 * period {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must cover at least two periods ({period})"
        )));
    }
    let low = basis.norm_sigma_sq(term.profile.as_slice(), sigma - 1.0);
    let high = basis.norm_sigma_sq(term.profile.as_slice(), sigma);
    let pieces = 4 + w.max_frequency().unwrap_or(1.0).ceil() as usize;
    let value = |tau: f64, t: f64| {
        let base = w.primitive(tau);
        let k = w.primitive(t) - base;
        let window = quad::composite(|y| (w.primitive(y) - base).powi(2), t, t + 1.0, pieces);
        low * k * k + high * window
    };
    let n_tau = (period / step).ceil() as usize;
    let n_t = (horizon / step).ceil() as usize;
    let mut sup_half = 0.0f64;
    let mut sup_full = 0.0f64;
    let mut best = (0.0, 0.0);
    for i in 0..n_tau {
        let tau = i as f64 * step;
        for j in 0..=n_t {
            let t = tau + j as f64 * step;
            let v = value(tau, t);
            if j <= n_t / 2 {
                sup_half = sup_half.max(v);
            }
            if v > sup_full {
                sup_full = v;
                best = (tau, t);
            }
        }
    }
    let diverging = sup_full > 1.5 * sup_half + 1e-12;
    if !diverging {
        // two rounds of local grid refinement around the best pair
        let mut h = step;
        for _ in 0..3 {
            h /= 10.0;
            let center = best;
            for a in -10..=10 {
                for b in -10..=10 {
                    let tau = center.0 + a as f64 * h;
                    let t = (center.1 + b as f64 * h).max(tau);
                    let v = value(tau, t);
                    if v > sup_full {
                        sup_full = v;
                        best = (tau, t);
                    }
                }
            }
        }
    }
    Ok(AntiderivativeBound { ell_sq: sup_full, diverging })
}

/// Index `theta = 1` for `p <= 2`, `3(p-1)/(p+1)` for `p > 2`.
pub fn theta_index(p: f64) -> Result<f64> {
    if !(1.0..3.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [1, 3)")));
    }
    Ok(if p <= 2.0 { 1.0 } else { 3.0 * (p - 1.0) / (p + 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e1(n: usize) -> ModalField {
        ModalField::unit(n, 1)
    }

    #[test]
    fn evaluate_examples() {
        let g0 = ForceTerm::new(ModalField(vec![0.3, 0.0]), Waveform::Cos { frequency: 2.0, phase: 0.1 });
        let g1 = ForceTerm::new(e1(2), Waveform::sin(1.0));
        let f = Forcing::new(g0.clone(), g1.clone(), 0.7, 0.0).unwrap();
        assert_eq!(f.evaluate(1.3), g0.eval(1.3));
        let f = Forcing::new(g0.clone(), g1.clone(), 0.4, 1.0).unwrap();
        let expected = &g0.eval(1.3) + &g1.eval(1.3);
        for (a, b) in f.evaluate(1.3).0.iter().zip(&expected.0) {
            assert!((a - b).abs() < 1e-15);
        }
        let f = Forcing::new(ForceTerm::zero(2), g1, 0.5, 0.1).unwrap();
        for t in [0.0, 0.37, 2.0] {
            let v = f.evaluate(t);
            assert!((v[0] - 10f64.sqrt() * (10.0 * t).sin()).abs() < 1e-12);
            assert_eq!(v[1], 0.0);
        }
        assert!(Forcing::new(ForceTerm::zero(1), ForceTerm::zero(1), 1.5, 0.1).is_err());
    }

    #[test]
    fn tb_norm_examples() {
        let c = ForceTerm::new(ModalField(vec![1.0, 2.0]), Waveform::Constant);
        assert!((tb_norm(&c, 5.0) - 5.0).abs() < 1e-13);
        let s = ForceTerm::new(e1(2), Waveform::sin(1.0));
        let expected = 0.5 + 0.5 * 1f64.sin();
        assert!((tb_norm(&s, 20.0) - expected).abs() < 1e-8);
        assert!((expected - 0.9207).abs() < 1e-4);
        assert!((tb_norm(&s.scaled(2.0), 20.0) - 4.0 * tb_norm(&s, 20.0)).abs() < 1e-8);
    }

    #[test]
    fn tb_norm_matches_closed_form_for_sinusoids() {
        for w in [
            Waveform::Sin { frequency: 0.7, phase: 0.3 },
            Waveform::Cos { frequency: 3.0, phase: -1.0 },
            Waveform::sin(10.0),
            Waveform::sin(40.0),
        ] {
            let term = ForceTerm::new(e1(1), w.clone());
            let numeric = tb_norm(&term, 4.0 * w.longest_period().unwrap().max(1.0));
            let exact = w.tb_closed_form().unwrap();
            assert!((numeric - exact).abs() < 1e-8, "{w}: {numeric} vs {exact}");
        }
    }

    #[test]
    fn q_epsilon_examples() {
        assert_eq!(q_epsilon(3.0, 7.0, 0.5, 0.0), 3.0);
        assert_eq!(q_epsilon(3.0, 7.0, 0.5, 1.0), 34.0);
        assert!((q_epsilon(1.0, 1.0, 0.5, 0.01) - 402.0).abs() < 1e-10);
    }

    #[test]
    fn forcing_tb_norm_below_q_epsilon() {
        let basis_dim = 3;
        let g0 = ForceTerm::new(ModalField(vec![1.0, 0.5, 0.0]), Waveform::sin(1.0));
        for g1w in [Waveform::sin(1.0), Waveform::parse("1 + sin(t)").unwrap(), Waveform::parse("cos(2*t+0.4) - 0.5*sin(t)").unwrap()] {
            let g1 = ForceTerm::new(ModalField(vec![0.0, 1.0, 0.3]), g1w);
            let m0 = tb_norm(&g0, 20.0);
            let m1 = tb_norm(&g1, 20.0);
            for (rho, eps) in [(0.0, 1.0), (0.5, 0.5), (0.5, 0.1), (1.0, 0.2), (0.3, 0.05)] {
                let f = Forcing::new(g0.clone(), g1.clone(), rho, eps).unwrap();
                let n = f.tb_norm(15.0);
                assert!(n <= q_epsilon(m0, m1, rho, eps), "rho {rho} eps {eps}: {n}");
            }
            assert_eq!(g0.profile.dim(), basis_dim);
        }
    }

    #[test]
    fn antiderivative_bound_examples() {
        let basis = ModalBasis::with_modes(3).unwrap();
        let s = ForceTerm::new(e1(3), Waveform::sin(1.0));
        let r = antiderivative_bound(&s, &basis, 1.0, 20.0).unwrap();
        assert!(!r.diverging);
        // independent fine-grid sup of (cos tau - cos t)^2 + int_t^{t+1} (cos tau - cos y)^2
        let window = |tau: f64, t: f64| {
            let c = tau.cos();
            // int (c - cos y)^2 = c^2 - 2c(sin(t+1) - sin t) + 1/2 + (sin(2t+2) - sin(2t))/4
            c * c - 2.0 * c * ((t + 1.0).sin() - t.sin()) + 0.5 + ((2.0 * t + 2.0).sin() - (2.0 * t).sin()) / 4.0
        };
        let mut exact = 0.0f64;
        let n = 1500;
        for i in 0..n {
            let tau = 2.0 * PI * i as f64 / n as f64;
            for j in 0..n {
                let t = tau + 2.0 * PI * j as f64 / n as f64;
                exact = exact.max((tau.cos() - t.cos()).powi(2) + window(tau, t));
            }
        }
        assert!(r.ell_sq <= 8.0);
        assert!(r.ell_sq >= exact - 1e-6, "{} vs {exact}", r.ell_sq);
        assert!(r.ell_sq <= exact + 1e-4, "{} vs {exact}", r.ell_sq);

        let c = ForceTerm::new(e1(3), Waveform::Constant);
        assert!(antiderivative_bound(&c, &basis, 1.0, 20.0).unwrap().diverging);
        let biased = ForceTerm::new(e1(3), Waveform::parse("1 + sin(t)").unwrap());
        assert!(antiderivative_bound(&biased, &basis, 1.0, 40.0).unwrap().diverging);
        let zero_mean = ForceTerm::new(ModalField(vec![1.0, 0.0, 0.5]), Waveform::parse("sin(t) + 0.5*cos(3*t+1)").unwrap());
        let r = antiderivative_bound(&zero_mean, &basis, 1.0, 40.0).unwrap();
        assert!(!r.diverging && r.ell_sq.is_finite());
    }

    #[test]
    fn antiderivative_bound_is_phase_invariant() {
        let basis = ModalBasis::with_modes(2).unwrap();
        let s = ForceTerm::new(e1(2), Waveform::sin(1.0));
        let a = antiderivative_bound(&s, &basis, 1.0, 20.0).unwrap().ell_sq;
        for shift in [0.3, 1.7, 4.0] {
            let b = antiderivative_bound(&s.shifted(shift), &basis, 1.0, 20.0).unwrap().ell_sq;
            assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta_index(1.0).unwrap(), 1.0);
        assert_eq!(theta_index(2.0).unwrap(), 1.0);
        assert!((theta_index(2.5).unwrap() - 4.5 / 3.5).abs() < 1e-15);
        assert!((theta_index(2.5).unwrap() - 1.2857).abs() < 1e-4);
        assert!(theta_index(3.0).is_err());
    }

    #[test]
    fn waveform_grammar() {
        let w = Waveform::parse("sin(2*t+0.3)").unwrap();
        assert_eq!(w, Waveform::Sin { frequency: 2.0, phase: 0.3 });
        let w = Waveform::parse("1 + 0.5*sin(2*t+0.3) - cos(t)").unwrap();
        assert!((w.value(0.7) - (1.0 + 0.5 * (1.7f64).sin() - 0.7f64.cos())).abs() < 1e-15);
        assert_eq!(w.mean(), 1.0);
        assert_eq!(Waveform::parse("1").unwrap(), Waveform::Constant);
        assert_eq!(Waveform::parse("cos(t-1e-1)").unwrap(), Waveform::Cos { frequency: 1.0, phase: -0.1 });
        assert!(Waveform::parse("tan(t)").is_err());
        assert!(Waveform::parse("sin(0*t)").is_err());
        assert!(Waveform::parse("").is_err());
    }

    fn waveform() -> impl Strategy<Value = Waveform> {
        let atom = prop_oneof![
            Just(Waveform::Constant),
            (0.1f64..5.0, -3.0f64..3.0).prop_map(|(frequency, phase)| Waveform::Sin { frequency, phase }),
            (0.1f64..5.0, -3.0f64..3.0).prop_map(|(frequency, phase)| Waveform::Cos { frequency, phase }),
        ];
        prop::collection::vec((-2.0f64..2.0, atom), 1..4).prop_map(Waveform::Sum)
    }

    proptest! {
        #[test]
        fn waveform_text_round_trip(w in waveform(), t in -5.0f64..5.0) {
            let back = Waveform::parse(&w.to_string()).unwrap();
            prop_assert!((back.value(t) - w.value(t)).abs() < 1e-12);
        }

        #[test]
        fn primitive_differentiates_back(w in waveform(), t in -5.0f64..5.0) {
            let h = 1e-5;
            let d = (w.primitive(t + h) - w.primitive(t - h)) / (2.0 * h);
            prop_assert!((d - w.value(t)).abs() < 1e-6);
        }
    }
}
