//! Exact-diagonalization references: spectra, the adiabatic-condition value,
//! analytic Rabi lines and consistency checks.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{propagate_vector, Generator, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fock::{FockSpace, Operator, StateVector};
use crate::model::{build_labframe_hamiltonian, rotating_frame_hamiltonian, KpoHamiltonians, KpoParams, LabFrameParams, Schedule};
use crate::C64;

/// Ascending spectrum with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<C64>,
    space: FockSpace,
}

impl EigenSystem {
    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn state(&self, m: usize) -> StateVector {
        StateVector::new(self.space.clone(), self.vectors.column(m).into_owned()).expect("dimension matches")
    }

    /// `<m|op|n>`.
    pub fn element(&self, op: &Operator, m: usize, n: usize) -> C64 {
        let vm = self.vectors.column(m);
        let vn = self.vectors.column(n);
        vm.dotc(&(op.matrix() * vn))
    }

    fn check_level(&self, m: usize) -> Result<()> {
        if m >= self.len() {
            return Err(Error::OutOfRange(format!("level {m} >= {}", self.len())));
        }
        Ok(())
    }
}

/// Index of the largest-magnitude entry; exact ties go to the lowest index.
fn dominant_index(v: &DVector<C64>) -> usize {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let mag = z.norm();
        if mag > best_mag * (1.0 + 1e-10) {
            best = i;
            best_mag = mag;
        }
    }
    best
}

fn fix_phase(v: &mut DVector<C64>) -> usize {
    let i = dominant_index(v);
    let z = v[i];
    if z.norm() > 0.0 {
        *v *= z.conj() / z.norm();
    }
    v[i] = C64::new(v[i].re, 0.0);
    i
}

/// Deterministic orthonormal basis of a degenerate subspace: pivoted
/// projection of Fock basis vectors.
fn canonical_block(block: &DMatrix<C64>) -> Vec<DVector<C64>> {
    let k = block.ncols();
    let mut w = block.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = (0, -1.0);
        for i in 0..w.nrows() {
            let rn = w.row(i).norm();
            if rn > best.1 * (1.0 + 1e-10) {
                best = (i, rn);
            }
        }
        let row = w.row(best.0).adjoint();
        let mut u = &w * row;
        let nrm = u.norm();
        u /= C64::new(nrm, 0.0);
        let proj = u.adjoint() * &w;
        w -= &u * proj;
        out.push(u);
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, using the real symmetric solver
/// when every entry is real.
fn hermitian_eigen(m: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    if m.iter().all(|z| z.im == 0.0) {
        let eig = m.map(|z| z.re).symmetric_eigen();
        (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = m.symmetric_eigen();
        (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
    }
}

/// Full spectrum of a Hermitian operator.
///
/// Parity-conserving operators are diagonalized sector by sector, which makes
/// every eigenvector parity-pure. Degenerate levels are orthonormalized
/// deterministically and phases are fixed so the dominant amplitude is real
/// positive. Degenerate vectors are ordered even parity first (for
/// parity-conserving operators), then by the Fock index of that amplitude.
pub fn eigensystem(h: &Operator) -> Result<EigenSystem> {
    let scale = h.max_abs().max(1.0);
    let herm = h.hermiticity_error();
    if herm > 1e-10 * scale {
        return Err(Error::NonHermitian(herm));
    }
    let space = h.space().clone();
    let dim = space.dim();
    let m = h.matrix();
    let parity: Vec<i32> = (0..dim).map(|i| space.parity_of(i)).collect();
    let mut cross: f64 = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            if parity[i] != parity[j] {
                cross = cross.max(m[(i, j)].norm());
            }
        }
    }
    let split = cross <= 1e-13 * scale;
    let sectors: Vec<Vec<usize>> = if split {
        [1, -1].iter().map(|&p| (0..dim).filter(|&i| parity[i] == p).collect::<Vec<_>>()).filter(|s| !s.is_empty()).collect()
    } else {
        vec![(0..dim).collect()]
    };

    let mut pairs: Vec<(f64, DVector<C64>)> = Vec::with_capacity(dim);
    for idx in &sectors {
        let n = idx.len();
        let sub = DMatrix::from_fn(n, n, |i, j| m[(idx[i], idx[j])]);
        let sub = (&sub + sub.adjoint()) * C64::new(0.5, 0.0);
        let (values, vecs) = hermitian_eigen(sub);
        for c in 0..n {
            let mut v = DVector::zeros(dim);
            for (r, &gi) in idx.iter().enumerate() {
                v[gi] = vecs[(r, c)];
            }
            pairs.push((values[c], v));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite eigenvalues"));

    let tol = 1e-9 * scale;
    let mut energies = Vec::with_capacity(dim);
    let mut vectors = DMatrix::zeros(dim, dim);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && pairs[end].0 - pairs[end - 1].0 <= tol {
            end += 1;
        }
        let mut cluster: Vec<(usize, DVector<C64>)> = if end - start == 1 {
            let mut v = pairs[start].1.clone();
            let i = fix_phase(&mut v);
            vec![(i, v)]
        } else {
            let block = DMatrix::from_columns(&pairs[start..end].iter().map(|p| p.1.clone()).collect::<Vec<_>>());
            canonical_block(&block)
                .into_iter()
                .map(|mut v| {
                    let i = fix_phase(&mut v);
                    (i, v)
                })
                .collect()
        };
        if split {
            cluster.sort_by_key(|(i, _)| (space.parity_of(*i) < 0, *i));
        } else {
            cluster.sort_by_key(|(i, _)| *i);
        }
        // Rayleigh quotients inside a cluster differ only at the clustering
        // tolerance; sorting them keeps the spectrum ascending.
        let mut values: Vec<f64> = cluster.iter().map(|(_, v)| v.dotc(&(m * v)).re).collect();
        values.sort_by(f64::total_cmp);
        for ((_, v), e) in cluster.into_iter().zip(values) {
            vectors.set_column(energies.len(), &v);
            energies.push(e);
        }
        start = end;
    }
    Ok(EigenSystem { energies, vectors, space })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdiabaticMetric {
    /// `|<m|(H_P - H_D)|0>|`.
    pub numerator: f64,
    /// `E_m - E_0`.
    pub gap: f64,
    /// `numerator / gap^2`.
    pub value: f64,
    pub level: usize,
    pub s1: f64,
}

/// Metric from a precomputed spectrum and `dH/df = H_P - H_D`.
pub fn adiabatic_metric_from(eig: &EigenSystem, hdot: &Operator, m: usize, s1: f64) -> Result<AdiabaticMetric> {
    eig.check_level(m)?;
    if m == 0 {
        return Err(Error::OutOfRange("level must be an excited state".into()));
    }
    let gap = eig.energies[m] - eig.energies[0];
    if gap <= 1e-10 {
        return Err(Error::VanishingGap(gap));
    }
    let numerator = eig.element(hdot, m, 0).norm();
    Ok(AdiabaticMetric { numerator, gap, value: numerator / (gap * gap), level: m, s1 })
}

/// `|<m|(H_P - H_D)|0>| / (E_m - E_0)^2` at `H_QA(s1)`.
pub fn adiabatic_metric_exact(params: &KpoParams, space: &FockSpace, schedule: &Schedule, m: usize) -> Result<AdiabaticMetric> {
    let h = KpoHamiltonians::build(params, space)?;
    let eig = eigensystem(&h.interpolate(schedule.a_of_s(schedule.s1)))?;
    adiabatic_metric_from(&eig, &h.conventional_derivative(), m, schedule.s1)
}

/// `sqrt((lambda |M|)^2 + (omega - gap)^2)`.
pub fn rabi_frequency_analytic(omega: f64, lambda: f64, matrix_element: f64, gap: f64) -> f64 {
    (lambda * matrix_element).hypot(omega - gap)
}

/// Line `sqrt((lambda |<m|Hdot|n>|)^2 + (omega - (E_m - E_0))^2)` attributed to
/// Rabi oscillation between excited levels `n` and `m`.
pub fn rabi_frequency_excited_pair(omega: f64, lambda: f64, eig: &EigenSystem, hdot: &Operator, levels: (usize, usize)) -> Result<f64> {
    let (n, m) = levels;
    eig.check_level(n)?;
    eig.check_level(m)?;
    let el = eig.element(hdot, m, n).norm();
    Ok(rabi_frequency_analytic(omega, lambda, el, eig.energies[m] - eig.energies[0]))
}

/// Second-order two-photon coupling between `n` and `k` at one drive setting.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnusLine {
    pub n: usize,
    pub k: usize,
    pub element: C64,
    /// Frame factor `2 omega / (E_k - E_n)`.
    pub alpha_b: f64,
    pub g: f64,
    pub frequency: f64,
}

/// Omega-independent part of the two-photon coupling, reusable across a drive sweep.
#[derive(Clone, Debug)]
pub struct TwoPhotonLine {
    n: usize,
    k: usize,
    splitting: f64,
    /// `sum_m <n|H'|m><m|H'|k> / (2E_m - E_n - E_k)`.
    sum: C64,
}

impl TwoPhotonLine {
    pub fn new(eig: &EigenSystem, hprime: &Operator, levels: (usize, usize)) -> Result<Self> {
        let (n, k) = levels;
        eig.check_level(n)?;
        eig.check_level(k)?;
        let en = eig.energies[n];
        let ek = eig.energies[k];
        if (ek - en).abs() < 1e-12 {
            return Err(Error::Singular(format!("levels {n} and {k} are degenerate")));
        }
        let vecs = &eig.vectors;
        let hn = vecs.adjoint() * (hprime.matrix() * vecs.column(n));
        let hk = vecs.adjoint() * (hprime.matrix() * vecs.column(k));
        let mut sum = C64::new(0.0, 0.0);
        for m in 0..eig.len() {
            // <n|H'|m> = conj(<m|H'|n>) for Hermitian H'.
            let num = hn[m].conj() * hk[m];
            let den = 2.0 * eig.energies[m] - en - ek;
            if num.norm() <= 1e-14 {
                continue;
            }
            if den.abs() < 1e-8 {
                return Err(Error::Singular(format!("intermediate level {m} has 2E_m - E_n - E_k = {den:.3e}")));
            }
            sum += num / den;
        }
        Ok(Self { n, k, splitting: ek - en, sum })
    }

    pub fn at(&self, g: f64, omega: f64) -> Result<MagnusLine> {
        let alpha_b = 2.0 * omega / self.splitting;
        if alpha_b == 0.0 {
            return Err(Error::Singular("frame factor vanishes at omega = 0".into()));
        }
        let element = -(g * g / 2.0) * self.sum / alpha_b;
        let frequency = (self.splitting - 2.0 * omega).hypot(element.norm());
        Ok(MagnusLine { n: self.n, k: self.k, element, alpha_b, g, frequency })
    }
}

/// Two-photon Rabi line of `H0 + g H' cos(omega t)` between levels `n` and `k`.
pub fn two_photon_rabi(h0: &Operator, hprime: &Operator, g: f64, omega: f64, levels: (usize, usize)) -> Result<MagnusLine> {
    if h0.space() != hprime.space() {
        return Err(Error::SpaceMismatch);
    }
    let eig = eigensystem(h0)?;
    TwoPhotonLine::new(&eig, hprime, levels)?.at(g, omega)
}

/// Total-parity eigenvalue (+1 or -1) of every eigenvector.
pub fn parity_sector_labels(h: &Operator) -> Result<Vec<i32>> {
    let pi = Operator::parity_total(h.space());
    let comm = h.commutator(&pi)?.max_abs();
    if comm > 1e-8 {
        return Err(Error::ParityBroken(comm));
    }
    let eig = eigensystem(h)?;
    parity_labels_of(&eig)
}

pub fn parity_labels_of(eig: &EigenSystem) -> Result<Vec<i32>> {
    let pi = Operator::parity_total(eig.space());
    (0..eig.len())
        .map(|m| {
            let p = eig.element(&pi, m, m).re;
            let label = if p >= 0.0 { 1 } else { -1 };
            if (p - label as f64).abs() > 1e-6 {
                return Err(Error::ParityBroken((p - label as f64).abs()));
            }
            Ok(label)
        })
        .collect()
}

/// Lowest excited level sharing the ground level's parity (when given) with a
/// non-negligible transition element from the ground level.
pub fn suggest_level(eig: &EigenSystem, hdot: &Operator, parity: Option<&[i32]>) -> Option<usize> {
    let tol = 1e-8 * hdot.max_abs().max(1.0);
    (1..eig.len()).find(|&m| parity.map_or(true, |p| p[m] == p[0]) && eig.element(hdot, m, 0).norm() > tol)
}

/// Evolves the vacuum under the lab-frame Hamiltonian and under its
/// rotating-wave counterpart; returns `1 - |<psi_rot|U psi_lab>|^2` with
/// `U = exp(i (w'/2) t n)`.
pub fn rwa_equivalence_check(lp: &LabFrameParams, t_final: f64, cutoff: usize, cfg: &IntegratorConfig) -> Result<f64> {
    let space = FockSpace::new(&[cutoff])?;
    let lab = build_labframe_hamiltonian(lp, &space)?;
    let rot = rotating_frame_hamiltonian(lp, &space)?;
    let run = |h: &crate::model::TimeDependentHamiltonian| -> Result<DVector<C64>> {
        let gen = Generator::new(
            h.constant_part().matrix().clone(),
            h.terms().iter().map(|(c, op)| (c.clone(), op.matrix().clone())).collect(),
        );
        let mut psi = StateVector::vacuum(&space).amplitudes().clone();
        propagate_vector(&gen, &mut psi, 0.0, t_final, &cfg.with_samples(1), |_, _, _| Ok(()))?;
        Ok(psi)
    };
    let mut lab_psi = run(&lab)?;
    let rot_psi = run(&rot)?;
    let theta = lp.omega_pump / 2.0 * t_final;
    for (k, z) in lab_psi.iter_mut().enumerate() {
        *z *= C64::from_polar(1.0, theta * k as f64);
    }
    Ok(1.0 - rot_psi.dotc(&lab_psi).norm_sqr())
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityReport {
    /// `<0|O|0> - <m|O|m>`.
    pub d: f64,
    /// `<m|O|0>`.
    pub c: C64,
    pub visible: bool,
}

/// The driven transition leaves no trace in `<O>` when both `d` and `Im c` vanish.
pub fn visibility_check(op: &Operator, ground: &StateVector, excited: &StateVector) -> Result<VisibilityReport> {
    let tol = 1e-8;
    let g = op.apply(ground)?;
    let e = op.apply(excited)?;
    let d = ground.overlap(&g)?.re - excited.overlap(&e)?.re;
    let c = excited.overlap(&g)?;
    Ok(VisibilityReport { d, c, visible: !(d.abs() <= tol && c.im.abs() <= tol) })
}
