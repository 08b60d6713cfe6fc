//! Finite-dimensional Hilbert space in real coordinates.
//!
//! A state `c = x + i p` is kept as the pair of real vectors `(x, p)`; an
//! operator `H = A + i B` as a real symmetric part `A` and a real
//! antisymmetric part `B`. In these coordinates the energy expectation is the
//! real quadratic form `xᵀAx + pᵀAp + 2 pᵀBx`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Normalized state vector `c = x + i p`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    x: DVector<f64>,
    p: DVector<f64>,
}

impl StateVector {
    /// Builds a state from real and imaginary parts, normalizing it.
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if x.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: p.len(),
            });
        }
        if x.len() < 2 {
            return Err(invalid("dimension", "a state needs N >= 2"));
        }
        let mut s = StateVector {
            x: DVector::from_vec(x),
            p: DVector::from_vec(p),
        };
        let n2 = s.norm_sqr();
        if !n2.is_finite() || n2 == 0.0 {
            return Err(invalid("state", "zero or non-finite norm"));
        }
        s.scale(1.0 / n2.sqrt());
        Ok(s)
    }

    pub fn from_complex(c: &[C64]) -> Result<Self> {
        Self::new(c.iter().map(|z| z.re).collect(), c.iter().map(|z| z.im).collect())
    }

    /// Basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(invalid("basis index", format!("{k} >= {dim}")));
        }
        let mut x = vec![0.0; dim];
        x[k] = 1.0;
        Self::new(x, vec![0.0; dim])
    }

    /// Wraps amplitudes that are already normalized to round-off.
    pub(crate) fn from_amplitudes(c: &DVector<C64>) -> Self {
        StateVector {
            x: c.map(|z| z.re),
            p: c.map(|z| z.im),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x.norm_squared() + self.p.norm_squared()
    }

    pub fn amplitudes(&self) -> DVector<C64> {
        DVector::from_fn(self.dim(), |k, _| C64::new(self.x[k], self.p[k]))
    }

    /// Complex conjugate, `p → −p`.
    pub fn conj(&self) -> Self {
        StateVector {
            x: self.x.clone(),
            p: -&self.p,
        }
    }

    /// Multiplies by the global phase `e^{iθ}`.
    pub fn with_phase(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        StateVector {
            x: &self.x * c - &self.p * s,
            p: &self.x * s + &self.p * c,
        }
    }

    /// Squared overlap `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        let re = self.x.dot(&other.x) + self.p.dot(&other.p);
        let im = self.x.dot(&other.p) - self.p.dot(&other.x);
        re * re + im * im
    }

    /// Renormalizes when the norm drifted by more than `tol`; reports whether it did.
    pub fn renormalize_if_drifted(&mut self, tol: f64) -> bool {
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() > tol {
            self.scale(1.0 / n2.sqrt());
            true
        } else {
            false
        }
    }

    fn scale(&mut self, f: f64) {
        self.x *= f;
        self.p *= f;
    }
}

/// Hermitian operator `A + iB` with `A = Aᵀ`, `B = −Bᵀ`.
#[derive(Clone, PartialEq)]
pub struct HermitianOperator {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HermitianOperator")
            .field("dim", &self.dim())
            .field("re", &self.re.as_slice())
            .field("im", &self.im.as_slice())
            .finish()
    }
}

impl HermitianOperator {
    /// Symmetrizes `re` and antisymmetrizes `im`.
    pub fn new(re: DMatrix<f64>, im: DMatrix<f64>) -> Result<Self> {
        if !re.is_square() || re.shape() != im.shape() {
            return Err(invalid("operator", "parts must be square and of equal shape"));
        }
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("operator", "non-finite entry"));
        }
        let re = (&re + re.transpose()) * 0.5;
        let im = (&im - im.transpose()) * 0.5;
        Ok(HermitianOperator { re, im })
    }

    pub fn real_symmetric(re: DMatrix<f64>) -> Result<Self> {
        let n = re.nrows();
        Self::new(re, DMatrix::zeros(n, n))
    }

    /// Hermitian part `(M + M†)/2` of a complex matrix.
    pub fn from_complex(m: &DMatrix<C64>) -> Result<Self> {
        Self::new(m.map(|z| z.re), m.map(|z| z.im))
    }

    /// Dense operator from row-major real and imaginary entries.
    pub fn from_rows(dim: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != dim * dim || im.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: re.len().max(im.len()),
            });
        }
        Self::new(
            DMatrix::from_row_slice(dim, dim, re),
            DMatrix::from_row_slice(dim, dim, im),
        )
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator {
            re: DMatrix::zeros(dim, dim),
            im: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator {
            re: DMatrix::identity(dim, dim),
            im: DMatrix::zeros(dim, dim),
        }
    }

    pub fn pauli_x() -> Self {
        Self::from_rows(2, &[0.0, 1.0, 1.0, 0.0], &[0.0; 4]).unwrap()
    }

    pub fn pauli_y() -> Self {
        Self::from_rows(2, &[0.0; 4], &[0.0, -1.0, 1.0, 0.0]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::from_rows(2, &[1.0, 0.0, 0.0, -1.0], &[0.0; 4]).unwrap()
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        HermitianOperator {
            re: DMatrix::from_diagonal(&DVector::from_column_slice(values)),
            im: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.re.nrows()
    }

    pub fn real_part(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn imag_part(&self) -> &DMatrix<f64> {
        &self.im
    }

    /// True when `B = 0`, i.e. the operator is invariant under complex conjugation.
    pub fn is_real(&self) -> bool {
        self.im.iter().all(|v| *v == 0.0)
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        self.re.zip_map(&self.im, C64::new)
    }

    pub fn scaled(&self, f: f64) -> Self {
        HermitianOperator {
            re: &self.re * f,
            im: &self.im * f,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(HermitianOperator {
            re: &self.re + &other.re,
            im: &self.im + &other.im,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// Adds `f · other` in place.
    pub fn axpy(&mut self, f: f64, other: &Self) -> Result<()> {
        self.check_dim(other.dim())?;
        self.re += &other.re * f;
        self.im += &other.im * f;
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let dr = (&self.re - &other.re).amax();
        let di = (&self.im - &other.im).amax();
        dr.max(di)
    }

    /// Eigenvalues in ascending order and the matching orthonormal eigenvectors (columns).
    pub fn eigh(&self) -> Result<Spectrum> {
        let n = self.dim();
        if n == 2 {
            return Ok(two_level_spectrum(self));
        }
        let eig = nalgebra::SymmetricEigen::try_new(self.to_complex(), f64::EPSILON, 0)
            .ok_or(Error::Eigen)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Spectrum { values, vectors })
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: n,
            });
        }
        Ok(())
    }
}

/// Eigen-decomposition of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn eigenstate(&self, k: usize) -> StateVector {
        StateVector::from_amplitudes(&self.vectors.column(k).into_owned())
    }
}

/// Pauli coordinates `(h0, hx, hy, hz)` of a 2×2 Hermitian operator.
pub(crate) fn pauli_coordinates(h: &HermitianOperator) -> [f64; 4] {
    let a = h.real_part();
    let b = h.imag_part();
    [
        0.5 * (a[(0, 0)] + a[(1, 1)]),
        a[(0, 1)],
        -b[(0, 1)],
        0.5 * (a[(0, 0)] - a[(1, 1)]),
    ]
}

fn two_level_spectrum(h: &HermitianOperator) -> Spectrum {
    let [h0, hx, hy, hz] = pauli_coordinates(h);
    let r = (hx * hx + hy * hy + hz * hz).sqrt();
    let values = vec![h0 - r, h0 + r];
    if r == 0.0 {
        return Spectrum {
            values,
            vectors: DMatrix::identity(2, 2),
        };
    }
    // eigenvectors of n·σ for n = (sinθ cosφ, sinθ sinφ, cosθ)
    let theta = (hz / r).clamp(-1.0, 1.0).acos();
    let phi = hy.atan2(hx);
    let (s, c) = (0.5 * theta).sin_cos();
    let e = C64::from_polar(1.0, phi);
    let up = [C64::new(c, 0.0), e * s];
    let down = [C64::new(-s, 0.0), e * c];
    let vectors = DMatrix::from_row_slice(2, 2, &[down[0], up[0], down[1], up[1]]);
    Spectrum { values, vectors }
}

/// Energy expectation `⟨s|O|s⟩`.
pub fn expectation(s: &StateVector, o: &HermitianOperator) -> Result<f64> {
    if s.dim() != o.dim() {
        return Err(Error::DimensionMismatch {
            expected: o.dim(),
            got: s.dim(),
        });
    }
    let (x, p) = (s.x(), s.p());
    let ax = o.real_part() * x;
    let bx = o.imag_part() * x;
    let ap = o.real_part() * p;
    let value = x.dot(&ax) + p.dot(&ap) + 2.0 * p.dot(&bx);
    debug_assert!({
        let residue = x.dot(&ap) - p.dot(&ax) + x.dot(&bx) + p.dot(&(o.imag_part() * p));
        residue.abs() < 1e-12 * (1.0 + o.real_part().amax() + o.imag_part().amax())
    });
    Ok(value)
}

/// Hermitian operator valued function of a parameter vector.
pub trait ParameterizedHamiltonian: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn n_params(&self) -> usize;

    /// Whether `lambda` lies in the declared parameter domain.
    fn in_domain(&self, lambda: &[f64]) -> bool {
        lambda.len() == self.n_params() && lambda.iter().all(|v| v.is_finite())
    }

    /// `H(λ)` without domain checks.
    fn build(&self, lambda: &[f64]) -> HermitianOperator;

    /// `∂H/∂λ_i` for every parameter, without domain checks.
    fn build_gradient(&self, lambda: &[f64]) -> Vec<HermitianOperator>;

    fn hamiltonian(&self, lambda: &[f64]) -> Result<HermitianOperator> {
        if !self.in_domain(lambda) {
            return Err(Error::OutsideDomain(lambda.to_vec()));
        }
        Ok(self.build(lambda))
    }

    fn gradient(&self, lambda: &[f64]) -> Result<Vec<HermitianOperator>> {
        if !self.in_domain(lambda) {
            return Err(Error::OutsideDomain(lambda.to_vec()));
        }
        Ok(self.build_gradient(lambda))
    }
}

/// `H(λ) = H₀ + Σᵢ λᵢ Hᵢ`.
#[derive(Debug, Clone)]
pub struct LinearHamiltonian {
    base: HermitianOperator,
    terms: Vec<HermitianOperator>,
}

impl LinearHamiltonian {
    pub fn new(base: HermitianOperator, terms: Vec<HermitianOperator>) -> Result<Self> {
        for t in &terms {
            if t.dim() != base.dim() {
                return Err(Error::DimensionMismatch {
                    expected: base.dim(),
                    got: t.dim(),
                });
            }
        }
        if base.dim() < 2 {
            return Err(invalid("dimension", "N >= 2 required"));
        }
        Ok(LinearHamiltonian { base, terms })
    }

    pub fn base(&self) -> &HermitianOperator {
        &self.base
    }

    pub fn terms(&self) -> &[HermitianOperator] {
        &self.terms
    }
}

impl ParameterizedHamiltonian for LinearHamiltonian {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn n_params(&self) -> usize {
        self.terms.len()
    }

    fn build(&self, lambda: &[f64]) -> HermitianOperator {
        let mut h = self.base.clone();
        for (l, t) in lambda.iter().zip(&self.terms) {
            h.axpy(*l, t).expect("dimensions checked at construction");
        }
        h
    }

    fn build_gradient(&self, _lambda: &[f64]) -> Vec<HermitianOperator> {
        self.terms.clone()
    }
}

/// Generalized forces `−⟨∂H/∂λᵢ⟩`.
pub fn generalized_force_expectation(
    s: &StateVector,
    ham: &dyn ParameterizedHamiltonian,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    ham.gradient(lambda)?
        .iter()
        .map(|d| expectation(s, d).map(|v| -v))
        .collect()
}

/// Point on the Bloch sphere: polar angle `γ ∈ [0, π]`, azimuth `δ ∈ [0, 2π)`.
///
/// The chart is fixed by `⟨σz⟩ = cos γ`, `⟨σx⟩ = sin γ sin δ`,
/// `⟨σy⟩ = −sin γ cos δ`, so that `λσz + Δσx` has expectation
/// `λ cos γ + Δ sin δ sin γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochPoint {
    pub polar: f64,
    pub azimuth: f64,
}

impl BlochPoint {
    /// Unit Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` in this chart.
    pub fn vector(&self) -> [f64; 3] {
        let (sg, cg) = self.polar.sin_cos();
        let (sd, cd) = self.azimuth.sin_cos();
        [sg * sd, -sg * cd, cg]
    }
}

/// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of a normalized two-level state.
pub fn bloch_vector(s: &StateVector) -> Result<[f64; 3]> {
    if s.dim() != 2 {
        return Err(Error::NotTwoLevel(s.dim()));
    }
    let c = s.amplitudes();
    let cross = c[0].conj() * c[1];
    Ok([
        2.0 * cross.re,
        2.0 * cross.im,
        c[0].norm_sqr() - c[1].norm_sqr(),
    ])
}

pub fn bloch_from_state(s: &StateVector) -> Result<BlochPoint> {
    let [rx, ry, rz] = bloch_vector(s)?;
    let polar = rz.clamp(-1.0, 1.0).acos();
    let transverse = (rx * rx + ry * ry).sqrt();
    let azimuth = if transverse < 1e-15 {
        0.0
    } else {
        rx.atan2(-ry).rem_euclid(2.0 * PI)
    };
    Ok(BlochPoint { polar, azimuth })
}

pub fn state_from_bloch(bp: BlochPoint) -> StateVector {
    let (s, c) = (0.5 * bp.polar).sin_cos();
    let b = C64::from_polar(s, bp.azimuth - FRAC_PI_2);
    StateVector::from_amplitudes(&DVector::from_vec(vec![C64::new(c, 0.0), b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn lz(delta: f64) -> LinearHamiltonian {
        LinearHamiltonian::new(
            HermitianOperator::pauli_x().scaled(delta),
            vec![HermitianOperator::pauli_z()],
        )
        .unwrap()
    }

    fn plus() -> StateVector {
        StateVector::new(vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2], vec![0.0; 2]).unwrap()
    }

    #[test]
    fn expectation_examples() {
        let h = lz(1.0).hamiltonian(&[0.7]).unwrap();
        let up = StateVector::basis(2, 0).unwrap();
        assert!((expectation(&up, &h).unwrap() - 0.7).abs() < 1e-14);
        assert!((expectation(&plus(), &h).unwrap() - 1.0).abs() < 1e-14);

        let s = StateVector::new(vec![0.6, 0.0], vec![0.0, 0.8]).unwrap();
        let z = HermitianOperator::pauli_z();
        // element-wise oracle: Σ_jk conj(c_j) H_jk c_k
        let c = s.amplitudes();
        let hm = z.to_complex();
        let mut oracle = C64::new(0.0, 0.0);
        for j in 0..2 {
            for k in 0..2 {
                oracle += c[j].conj() * hm[(j, k)] * c[k];
            }
        }
        assert!((oracle.re + 0.28).abs() < 1e-14);
        assert!((expectation(&s, &z).unwrap() + 0.28).abs() < 1e-14);
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let s = StateVector::basis(3, 0).unwrap();
        let err = expectation(&s, &HermitianOperator::pauli_z()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn state_construction_rejects_bad_input() {
        assert!(StateVector::new(vec![1.0], vec![0.0]).is_err());
        assert!(StateVector::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(StateVector::new(vec![1.0, 0.0], vec![0.0]).is_err());
        let s = StateVector::new(vec![3.0, 0.0], vec![0.0, 4.0]).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn operator_is_symmetrized() {
        let h = HermitianOperator::from_rows(2, &[1.0, 2.0, 0.0, 3.0], &[0.0, 1.0, 0.0, 0.0])
            .unwrap();
        let a = h.real_part();
        let b = h.imag_part();
        assert_eq!(a[(0, 1)], a[(1, 0)]);
        assert_eq!(b[(0, 1)], -b[(1, 0)]);
        assert_eq!(b[(0, 0)], 0.0);
    }

    #[test]
    fn generalized_force_examples() {
        let h = LinearHamiltonian::new(HermitianOperator::zeros(2), vec![HermitianOperator::pauli_z()])
            .unwrap();
        let up = StateVector::basis(2, 0).unwrap();
        let down = StateVector::basis(2, 1).unwrap();
        assert_eq!(generalized_force_expectation(&up, &h, &[0.3]).unwrap(), vec![-1.0]);
        assert_eq!(generalized_force_expectation(&down, &h, &[0.3]).unwrap(), vec![1.0]);
        let f = generalized_force_expectation(&plus(), &lz(1.0), &[0.3]).unwrap();
        assert!(f[0].abs() < 1e-15);
        assert!(matches!(
            generalized_force_expectation(&up, &h, &[f64::NAN]),
            Err(Error::OutsideDomain(_))
        ));
        assert!(generalized_force_expectation(&up, &h, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let h = LinearHamiltonian::new(
            HermitianOperator::pauli_y(),
            vec![HermitianOperator::pauli_z(), HermitianOperator::pauli_x()],
        )
        .unwrap();
        let lambda = [0.4, -1.3];
        let d = 1e-5;
        let grad = h.gradient(&lambda).unwrap();
        for i in 0..2 {
            let mut lp = lambda;
            let mut lm = lambda;
            lp[i] += d;
            lm[i] -= d;
            let fd = h.build(&lp).sub(&h.build(&lm)).unwrap().scaled(0.5 / d);
            assert!(fd.max_abs_diff(&grad[i]) < 1e-9);
        }
    }

    #[test]
    fn bloch_examples() {
        let north = bloch_from_state(&StateVector::basis(2, 0).unwrap()).unwrap();
        assert_eq!(north.polar, 0.0);
        assert_eq!(north.azimuth, 0.0);
        let south = bloch_from_state(&StateVector::basis(2, 1).unwrap()).unwrap();
        assert!((south.polar - PI).abs() < 1e-15);
        let eq = state_from_bloch(BlochPoint {
            polar: FRAC_PI_2,
            azimuth: FRAC_PI_2,
        });
        assert!((eq.fidelity(&plus()) - 1.0).abs() < 1e-14);
        assert!(bloch_from_state(&StateVector::basis(3, 0).unwrap()).is_err());
    }

    #[test]
    fn bloch_chart_reproduces_lz_energy_form() {
        // h(γ, δ; λ) = λ cos γ + Δ sin δ sin γ
        let (lambda, delta) = (0.8, 1.7);
        let h = lz(delta).hamiltonian(&[lambda]).unwrap();
        for i in 0..20 {
            let bp = BlochPoint {
                polar: 0.15 * i as f64,
                azimuth: 0.31 * i as f64,
            };
            let s = state_from_bloch(bp);
            let direct = expectation(&s, &h).unwrap();
            let chart = lambda * bp.polar.cos() + delta * bp.azimuth.sin() * bp.polar.sin();
            assert!((direct - chart).abs() < 1e-13);
        }
    }

    #[test]
    fn two_level_spectrum_matches_general_solver() {
        let h = HermitianOperator::from_rows(2, &[0.3, -1.1, -1.1, 2.0], &[0.0, 0.7, -0.7, 0.0])
            .unwrap();
        let spec = h.eigh().unwrap();
        let general = nalgebra::SymmetricEigen::new(h.to_complex());
        let mut ev: Vec<f64> = general.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for k in 0..2 {
            assert!((spec.values[k] - ev[k]).abs() < 1e-13);
            let v = spec.eigenstate(k);
            assert!((expectation(&v, &h).unwrap() - spec.values[k]).abs() < 1e-13);
        }
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector> {
        (
            proptest::collection::vec(-1.0f64..1.0, n),
            proptest::collection::vec(-1.0f64..1.0, n),
        )
            .prop_filter_map("nonzero", |(x, p)| StateVector::new(x, p).ok())
    }

    fn arb_operator(n: usize) -> impl Strategy<Value = HermitianOperator> {
        (
            proptest::collection::vec(-2.0f64..2.0, n * n),
            proptest::collection::vec(-2.0f64..2.0, n * n),
        )
            .prop_map(move |(re, im)| HermitianOperator::from_rows(n, &re, &im).unwrap())
    }

    proptest! {
        #[test]
        fn expectation_invariant_under_global_phase(
            (s, o) in (2usize..6).prop_flat_map(|n| (arb_state(n), arb_operator(n))),
            theta in 0.0f64..(2.0 * PI),
        ) {
            let a = expectation(&s, &o).unwrap();
            let b = expectation(&s.with_phase(theta), &o).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn expectation_is_real_and_linear(
            (s, o1, o2) in (2usize..6).prop_flat_map(|n| (arb_state(n), arb_operator(n), arb_operator(n))),
            a in -3.0f64..3.0,
        ) {
            // imaginary part of c†Oc through the complex route
            let c = s.amplitudes();
            let q = (c.adjoint() * o1.to_complex() * &c)[(0, 0)];
            prop_assert!(q.im.abs() < 1e-12);
            prop_assert!((q.re - expectation(&s, &o1).unwrap()).abs() < 1e-12);
            let mut comb = o1.clone();
            comb.axpy(a, &o2).unwrap();
            let lhs = expectation(&s, &comb).unwrap();
            let rhs = expectation(&s, &o1).unwrap() + a * expectation(&s, &o2).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-11);
            let id = expectation(&s, &HermitianOperator::identity(s.dim())).unwrap();
            prop_assert!((id - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bloch_round_trip_and_axes(s in arb_state(2)) {
            let bp = bloch_from_state(&s).unwrap();
            prop_assert!((0.0..=PI).contains(&bp.polar));
            prop_assert!((0.0..2.0 * PI).contains(&bp.azimuth));
            let back = state_from_bloch(bp);
            prop_assert!(back.fidelity(&s) >= 1.0 - 1e-12);
            let n = bp.vector();
            let axes = [HermitianOperator::pauli_x(), HermitianOperator::pauli_y(), HermitianOperator::pauli_z()];
            for (k, axis) in axes.iter().enumerate() {
                prop_assert!((expectation(&s, axis).unwrap() - n[k]).abs() < 1e-10);
            }
        }
    }
}
