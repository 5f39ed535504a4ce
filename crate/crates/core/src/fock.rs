//! Truncated multi-mode Fock spaces with dense operators and states.
//!
//! Basis ordering is frozen: mode 0 is the slowest-varying tensor index, so
//! `|k_0, k_1, ..., k_{K-1}>` sits at `((k_0 * N_1 + k_1) * N_2 + ...)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockSpace {
    cutoffs: Vec<usize>,
    dim: usize,
}

impl FockSpace {
    /// Space with `cutoffs[j]` levels (0..N_j-1) in mode j.
    pub fn new(cutoffs: &[usize]) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::InvalidSpace("at least one mode is required".into()));
        }
        if let Some(n) = cutoffs.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidSpace(format!("cutoff {n} < 2")));
        }
        let dim = cutoffs
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidSpace("dimension overflows".into()))?;
        Ok(Self { cutoffs: cutoffs.to_vec(), dim })
    }

    pub fn uniform(n_modes: usize, cutoff: usize) -> Result<Self> {
        Self::new(&vec![cutoff; n_modes])
    }

    pub fn n_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::ModeOutOfRange { mode, n_modes: self.n_modes() });
        }
        Ok(())
    }

    /// Index distance between neighbouring occupations of `mode`.
    fn stride(&self, mode: usize) -> usize {
        self.cutoffs[mode + 1..].iter().product()
    }

    pub fn index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.n_modes() {
            return Err(Error::InvalidSpace(format!(
                "expected {} occupations, got {}",
                self.n_modes(),
                occupations.len()
            )));
        }
        let mut idx = 0;
        for (&k, &n) in occupations.iter().zip(&self.cutoffs) {
            if k >= n {
                return Err(Error::OutOfRange(format!("occupation {k} >= cutoff {n}")));
            }
            idx = idx * n + k;
        }
        Ok(idx)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.n_modes()];
        for (slot, &n) in occ.iter_mut().zip(&self.cutoffs).rev() {
            *slot = index % n;
            index /= n;
        }
        occ
    }

    pub fn total_photons(&self, index: usize) -> usize {
        self.occupations(index).iter().sum()
    }

    /// Parity (+1 or -1) of the total photon number of a basis state.
    pub fn parity_of(&self, index: usize) -> i32 {
        if self.total_photons(index) % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Lift a single-mode matrix to the full space with identities elsewhere.
    pub(crate) fn embed(&self, mode: usize, local: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.cutoffs[mode];
        let stride = self.stride(mode);
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let k = (i / stride) % n;
            for l in 0..n {
                let v = local[(k, l)];
                if v != C64::new(0.0, 0.0) {
                    let j = i + l * stride - k * stride;
                    out[(i, j)] = v;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Operator {
    space: FockSpace,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn new(space: FockSpace, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::InvalidSpace(format!(
                "matrix is {}x{}, space dimension is {}",
                matrix.nrows(),
                matrix.ncols(),
                space.dim()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: &FockSpace) -> Self {
        Self { matrix: DMatrix::zeros(space.dim(), space.dim()), space: space.clone() }
    }

    pub fn identity(space: &FockSpace) -> Self {
        Self { matrix: DMatrix::identity(space.dim(), space.dim()), space: space.clone() }
    }

    /// Lowering operator of `mode`, with `<k-1|a|k> = sqrt(k)`.
    pub fn annihilation(space: &FockSpace, mode: usize) -> Result<Self> {
        space.check_mode(mode)?;
        let n = space.cutoffs()[mode];
        let mut local = DMatrix::zeros(n, n);
        for k in 1..n {
            local[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
        }
        Ok(Self { matrix: space.embed(mode, &local), space: space.clone() })
    }

    pub fn creation(space: &FockSpace, mode: usize) -> Result<Self> {
        Ok(Self::annihilation(space, mode)?.adjoint())
    }

    pub fn number(space: &FockSpace, mode: usize) -> Result<Self> {
        space.check_mode(mode)?;
        let n = space.cutoffs()[mode];
        let local = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(i as f64, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(Self { matrix: space.embed(mode, &local), space: space.clone() })
    }

    /// Total photon number summed over all modes.
    pub fn total_number(space: &FockSpace) -> Self {
        let diag = DVector::from_fn(space.dim(), |i, _| C64::new(space.total_photons(i) as f64, 0.0));
        Self { matrix: DMatrix::from_diagonal(&diag), space: space.clone() }
    }

    /// `x = a + a^dagger`.
    pub fn quad_x(space: &FockSpace, mode: usize) -> Result<Self> {
        let a = Self::annihilation(space, mode)?;
        let m = &a.matrix + a.matrix.adjoint();
        Ok(Self { matrix: m, space: space.clone() })
    }

    /// `p = -i (a^dagger - a)`.
    pub fn quad_p(space: &FockSpace, mode: usize) -> Result<Self> {
        let a = Self::annihilation(space, mode)?;
        let m = (a.matrix.adjoint() - &a.matrix) * C64::new(0.0, -1.0);
        Ok(Self { matrix: m, space: space.clone() })
    }

    /// `exp(i pi sum_j n_j)`, diagonal with entries `(-1)^(sum_j k_j)`.
    pub fn parity_total(space: &FockSpace) -> Self {
        let diag = DVector::from_fn(space.dim(), |i, _| C64::new(space.parity_of(i) as f64, 0.0));
        Self { matrix: DMatrix::from_diagonal(&diag), space: space.clone() }
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), space: self.space.clone() }
    }

    /// `max |M - M^dagger|` over all entries.
    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, space: self.space.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { matrix: &self.matrix - &other.matrix, space: self.space.clone() })
    }

    /// Operator product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { matrix: &self.matrix * &other.matrix, space: self.space.clone() })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        let m = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Self { matrix: m, space: self.space.clone() })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { matrix: &self.matrix * C64::new(c, 0.0), space: self.space.clone() }
    }

    pub fn scale_complex(&self, c: C64) -> Self {
        Self { matrix: &self.matrix * c, space: self.space.clone() }
    }

    /// Largest absolute eigenvalue of a Hermitian operator.
    pub fn spectral_norm(&self) -> f64 {
        hermitian_spectral_radius(&self.matrix)
    }

    /// Largest singular value, suitable for any operator.
    pub fn operator_norm(&self) -> f64 {
        let gram = self.matrix.adjoint() * &self.matrix;
        hermitian_spectral_radius(&gram).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.space != psi.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(StateVector { amplitudes: &self.matrix * &psi.amplitudes, space: self.space.clone() })
    }
}

pub(crate) fn hermitian_spectral_radius(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    ev.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()))
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub(crate) fn hermitian_extremes(m: &DMatrix<C64>) -> (f64, f64) {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[derive(Clone, Debug)]
pub struct StateVector {
    space: FockSpace,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(space: FockSpace, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::InvalidSpace(format!(
                "vector length {} does not match dimension {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        Ok(Self { space, amplitudes })
    }

    /// Fock basis state `|k_0, ..., k_{K-1}>`.
    pub fn fock(space: &FockSpace, occupations: &[usize]) -> Result<Self> {
        let idx = space.index(occupations)?;
        let mut v = DVector::zeros(space.dim());
        v[idx] = C64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), amplitudes: v })
    }

    pub fn vacuum(space: &FockSpace) -> Self {
        let mut v = DVector::zeros(space.dim());
        v[0] = C64::new(1.0, 0.0);
        Self { space: space.clone(), amplitudes: v }
    }

    /// Truncated product of coherent states, renormalized after truncation.
    pub fn coherent(space: &FockSpace, alphas: &[C64]) -> Result<Self> {
        if alphas.len() != space.n_modes() {
            return Err(Error::InvalidSpace(format!(
                "expected {} amplitudes, got {}",
                space.n_modes(),
                alphas.len()
            )));
        }
        let mut factors = Vec::with_capacity(alphas.len());
        for (&alpha, &n) in alphas.iter().zip(space.cutoffs()) {
            let tail = coherent_tail_weight(alpha, n);
            if tail > 1e-3 {
                return Err(Error::TruncationTail { tail });
            }
            let mut c = Vec::with_capacity(n);
            let mut term = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
            for k in 0..n {
                if k > 0 {
                    term = term * alpha / (k as f64).sqrt();
                }
                c.push(term);
            }
            factors.push(c);
        }
        let amps = DVector::from_fn(space.dim(), |i, _| {
            space
                .occupations(i)
                .iter()
                .zip(&factors)
                .fold(C64::new(1.0, 0.0), |acc, (&k, f)| acc * f[k])
        });
        let mut psi = Self { space: space.clone(), amplitudes: amps };
        psi.normalize();
        Ok(psi)
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes /= C64::new(n, 0.0);
        }
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.overlap(other)?.norm_sqr())
    }
}

/// Probability weight of a coherent state above the truncation `n`.
pub fn coherent_tail_weight(alpha: C64, n: usize) -> f64 {
    let x = alpha.norm_sqr();
    let mut p = (-x).exp();
    let mut kept = 0.0;
    for k in 0..n {
        if k > 0 {
            p *= x / k as f64;
        }
        kept += p;
    }
    (1.0 - kept).max(0.0)
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: FockSpace,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(space: FockSpace, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::InvalidSpace("density matrix shape mismatch".into()));
        }
        Ok(Self { space, matrix })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let v = psi.amplitudes();
        Self { space: psi.space.clone(), matrix: v * v.adjoint() }
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_extremes(&self.matrix).0
    }

    /// `<psi|rho|psi>`.
    pub fn fidelity_with_pure(&self, psi: &StateVector) -> Result<f64> {
        if self.space != psi.space {
            return Err(Error::SpaceMismatch);
        }
        let v = psi.amplitudes();
        Ok(v.dotc(&(&self.matrix * v)).re)
    }
}

/// States on which operator expectations can be taken.
pub trait QuantumState {
    fn space(&self) -> &FockSpace;
    fn expect_matrix(&self, op: &DMatrix<C64>) -> C64;
}

impl QuantumState for StateVector {
    fn space(&self) -> &FockSpace {
        &self.space
    }

    fn expect_matrix(&self, op: &DMatrix<C64>) -> C64 {
        self.amplitudes.dotc(&(op * &self.amplitudes))
    }
}

impl QuantumState for DensityMatrix {
    fn space(&self) -> &FockSpace {
        &self.space
    }

    fn expect_matrix(&self, op: &DMatrix<C64>) -> C64 {
        trace_product(op, &self.matrix)
    }
}

/// `Tr(a b)` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += a[(j, i)] * b[(i, j)];
        }
    }
    acc
}

/// `<psi|O|psi>` or `Tr(O rho)`.
pub fn expectation<S: QuantumState>(op: &Operator, state: &S) -> Result<C64> {
    if op.space() != state.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(state.expect_matrix(op.matrix()))
}
