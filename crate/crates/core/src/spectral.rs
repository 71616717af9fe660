//! Dirichlet sine basis of `A = -d^2/dx^2` on `(0, pi)`.
//!
//! Eigenpairs are `phi_n(x) = sqrt(2/pi) sin(n x)`, `lambda_n = n^2`. Fields
//! are coefficient vectors on this orthonormal basis; nonlinear terms are
//! evaluated by collocation on the interior points `x_j = j pi / (M+1)`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients `a_1..a_N` of a field on the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalField(pub Vec<f64>);

impl ModalField {
    pub fn zeros(dim: usize) -> Self {
        ModalField(vec![0.0; dim])
    }

    /// Unit vector `e_k`, with `k` counted from 1.
    pub fn unit(dim: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= dim, "mode {k} outside 1..={dim}");
        let mut f = Self::zeros(dim);
        f.0[k - 1] = 1.0;
        f
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        ModalField(self.0.iter().map(|x| c * x).collect())
    }

    /// Euclidean inner product of coefficients (the `L^2` inner product).
    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn axpy(&mut self, c: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }
}

impl Index<usize> for ModalField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ModalField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &ModalField {
    type Output = ModalField;
    fn add(self, rhs: &ModalField) -> ModalField {
        ModalField(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ModalField {
    type Output = ModalField;
    fn sub(self, rhs: &ModalField) -> ModalField {
        ModalField(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl AddAssign<&ModalField> for ModalField {
    fn add_assign(&mut self, rhs: &ModalField) {
        self.axpy(1.0, rhs);
    }
}

impl Mul<&ModalField> for f64 {
    type Output = ModalField;
    fn mul(self, rhs: &ModalField) -> ModalField {
        rhs.scaled(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    eigenvalues: Vec<f64>,
    points: Vec<f64>,
    weight: f64,
    // synthesis[j * n + k] = phi_{k+1}(x_j)
    synthesis: Vec<f64>,
}

impl ModalBasis {
    /// `modes` eigenfunctions on `grid` collocation points; needs `grid >= modes`.
    pub fn new(modes: usize, grid: usize) -> Result<Self> {
        if modes == 0 || grid < modes {
            return Err(Error::InvalidArgument(format!(
                "basis needs 1 <= N <= M (N = {modes}, M = {grid})"
            )));
        }
        let h = PI / (grid as f64 + 1.0);
        let points: Vec<f64> = (1..=grid).map(|j| j as f64 * h).collect();
        let scale = (2.0 / PI).sqrt();
        let mut synthesis = Vec::with_capacity(grid * modes);
        for &x in &points {
            for k in 1..=modes {
                synthesis.push(scale * (k as f64 * x).sin());
            }
        }
        Ok(ModalBasis {
            eigenvalues: (1..=modes).map(|k| (k * k) as f64).collect(),
            points,
            weight: h,
            synthesis,
        })
    }

    /// Basis with the dealiasing grid `M = 2N + 1`.
    pub fn with_modes(modes: usize) -> Result<Self> {
        Self::new(modes, 2 * modes + 1)
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid_len(&self) -> usize {
        self.points.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Uniform quadrature weight of every collocation point.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    fn check(&self, len: usize, expected: usize) -> Result<()> {
        if len != expected {
            return Err(Error::DimensionMismatch { expected, got: len });
        }
        Ok(())
    }

    /// `||a||_sigma = (sum lambda_n^sigma a_n^2)^(1/2)`.
    pub fn norm_sigma(&self, field: &ModalField, sigma: f64) -> f64 {
        self.norm_sigma_sq(field.as_slice(), sigma).sqrt()
    }

    pub fn norm_sigma_sq(&self, coeffs: &[f64], sigma: f64) -> f64 {
        if sigma == 0.0 {
            return coeffs.iter().map(|a| a * a).sum();
        }
        coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(a, l)| l.powf(sigma) * a * a)
            .sum()
    }

    pub fn inner_sigma(&self, a: &ModalField, b: &ModalField, sigma: f64) -> f64 {
        a.0.iter()
            .zip(&b.0)
            .zip(&self.eigenvalues)
            .map(|((x, y), l)| l.powf(sigma) * x * y)
            .sum()
    }

    pub fn to_grid(&self, field: &ModalField) -> Result<Vec<f64>> {
        self.check(field.dim(), self.modes())?;
        let mut out = vec![0.0; self.grid_len()];
        self.synthesize(field.as_slice(), &mut out);
        Ok(out)
    }

    pub fn from_grid(&self, values: &[f64]) -> Result<ModalField> {
        self.check(values.len(), self.grid_len())?;
        let mut out = vec![0.0; self.modes()];
        self.analyze(values, &mut out);
        Ok(ModalField(out))
    }

    /// Grid values of the coefficient vector `coeffs` into `out`.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.modes();
        for (row, o) in self.synthesis.chunks_exact(n).zip(out.iter_mut()) {
            *o = row.iter().zip(coeffs).map(|(p, a)| p * a).sum();
        }
    }

    /// Discrete projection of grid values onto the modes, into `out`.
    pub fn analyze(&self, values: &[f64], out: &mut [f64]) {
        let n = self.modes();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &v) in self.synthesis.chunks_exact(n).zip(values) {
            let hv = self.weight * v;
            for (o, p) in out.iter_mut().zip(row) {
                *o += hv * p;
            }
        }
    }

    /// `(int |u|^q dx)^(1/q)` by collocation.
    pub fn lp_norm(&self, field: &ModalField, q: f64) -> f64 {
        assert!(q >= 1.0, "lp_norm needs q >= 1");
        let grid = self.to_grid(field).expect("field matches basis");
        let s: f64 = grid.iter().map(|u| u.abs().powf(q)).sum::<f64>() * self.weight;
        s.powf(1.0 / q)
    }

    /// `int F(u(x)) dx` by collocation.
    pub fn integrate_pointwise(&self, field: &ModalField, f: impl Fn(f64) -> f64) -> f64 {
        let grid = self.to_grid(field).expect("field matches basis");
        grid.iter().map(|&u| f(u)).sum::<f64>() * self.weight
    }

    /// Projection of the pointwise image `f(u(x))` onto the modes.
    pub fn project_pointwise(&self, field: &ModalField, f: impl Fn(f64) -> f64) -> ModalField {
        let mut grid = self.to_grid(field).expect("field matches basis");
        grid.iter_mut().for_each(|u| *u = f(*u));
        self.from_grid(&grid).expect("grid matches basis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        let b = ModalBasis::with_modes(8).unwrap();
        for sigma in [-1.0, 0.0, 0.5, 1.0, 3.0] {
            assert!((b.norm_sigma(&ModalField::unit(8, 1), sigma) - 1.0).abs() < 1e-15);
        }
        assert!((b.norm_sigma(&ModalField::unit(8, 2), 1.0) - 2.0).abs() < 1e-15);
        let a = &ModalField::unit(8, 1) + &ModalField::unit(8, 2);
        assert!((b.norm_sigma(&a, 2.0) - 17f64.sqrt()).abs() < 1e-14);
        assert!((b.norm_sigma(&a, 2.0) - 4.1231).abs() < 1e-4);
    }

    #[test]
    fn first_mode_samples() {
        let b = ModalBasis::with_modes(4).unwrap();
        let g = b.to_grid(&ModalField::unit(4, 1)).unwrap();
        for (x, v) in b.points().iter().zip(&g) {
            assert!((v - (2.0 / PI).sqrt() * x.sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_of_third_mode() {
        let b = ModalBasis::with_modes(6).unwrap();
        let samples: Vec<f64> = b.points().iter().map(|x| (2.0 / PI).sqrt() * (3.0 * x).sin()).collect();
        let f = b.from_grid(&samples).unwrap();
        for (k, a) in f.0.iter().enumerate() {
            let expected = if k == 2 { 1.0 } else { 0.0 };
            assert!((a - expected).abs() < 1e-13, "mode {}: {a}", k + 1);
        }
    }

    #[test]
    fn lp_norm_examples() {
        let b = ModalBasis::with_modes(8).unwrap();
        assert_eq!(b.lp_norm(&ModalField::zeros(8), 3.0), 0.0);
        assert!((b.lp_norm(&ModalField::unit(8, 1), 2.0) - 1.0).abs() < 1e-13);
        // int (2/pi)^2 sin^4 = (4/pi^2)(3 pi / 8) = 3/(2 pi)
        let expected = (3.0 / (2.0 * PI)).powf(0.25);
        assert!((b.lp_norm(&ModalField::unit(8, 1), 4.0) - expected).abs() < 1e-13);
        assert!((expected - 0.8313).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = ModalBasis::with_modes(4).unwrap();
        assert!(matches!(b.to_grid(&ModalField::zeros(5)), Err(Error::DimensionMismatch { .. })));
        assert!(b.from_grid(&[0.0; 3]).is_err());
        assert!(ModalBasis::new(5, 4).is_err());
    }

    fn field(n: usize) -> impl Strategy<Value = ModalField> {
        prop::collection::vec(-3.0f64..3.0, n).prop_map(ModalField)
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(a in field(12)) {
            let b = ModalBasis::with_modes(12).unwrap();
            let back = b.from_grid(&b.to_grid(&a).unwrap()).unwrap();
            let scale = b.norm_sigma(&a, 0.0).max(1.0);
            for (x, y) in a.0.iter().zip(&back.0) {
                prop_assert!((x - y).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn parseval_and_l2_quadrature(a in field(10)) {
            let b = ModalBasis::with_modes(10).unwrap();
            let parseval: f64 = a.0.iter().map(|x| x * x).sum();
            prop_assert_eq!(b.norm_sigma_sq(a.as_slice(), 0.0), parseval);
            let l2 = b.lp_norm(&a, 2.0);
            prop_assert!((l2 - parseval.sqrt()).abs() <= 1e-10 * parseval.sqrt().max(1.0));
        }

        #[test]
        fn norms_nest(a in field(10), s1 in -2.0f64..2.0, ds in 0.0f64..2.0) {
            let b = ModalBasis::with_modes(10).unwrap();
            prop_assert!(b.norm_sigma(&a, s1) <= b.norm_sigma(&a, s1 + ds) * (1.0 + 1e-14));
        }
    }
}
