//! Truncated multi-oscillator Fock space and dense operators on it.
//!
//! The basis enumerates occupation tuples (photon modes first, phonon last)
//! in lexicographic order, so the index of a tuple is a mixed-radix number
//! with the phonon occupation as the fastest digit. Every operator is a dense
//! complex matrix tagged with the basis it was built on; matrices are
//! immutable after construction and safe to share across threads.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Hard default ceiling on the product dimension before building anything.
pub const DEFAULT_DIMENSION_LIMIT: usize = 20_000;

/// One oscillator of the model: a photon mode (by index) or the mirror.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Photon(usize),
    Phonon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Lower,
    Raise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Cutoffs are maximum occupations, inclusive: cutoff 30 keeps 31 levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisSpec {
    pub photon_cutoffs: Vec<usize>,
    pub phonon_cutoff: usize,
    pub dimension_limit: usize,
}

impl BasisSpec {
    pub fn single_mode(cutoff_photon: usize, cutoff_phonon: usize) -> Self {
        BasisSpec {
            photon_cutoffs: vec![cutoff_photon],
            phonon_cutoff: cutoff_phonon,
            dimension_limit: DEFAULT_DIMENSION_LIMIT,
        }
    }

    /// Levels per oscillator, photon modes first, phonon last.
    fn radices(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.photon_cutoffs.iter().map(|c| c + 1).collect();
        r.push(self.phonon_cutoff + 1);
        r
    }

    pub fn dimension(&self) -> usize {
        self.radices().iter().product()
    }
}

struct BasisInner {
    spec: BasisSpec,
    states: Vec<Vec<u32>>,
    // strides[k]: index step when occupation k increases by one
    strides: Vec<usize>,
}

/// Shared, immutable enumeration of the truncated product space.
#[derive(Clone)]
pub struct FockBasis(Arc<BasisInner>);

pub fn build_basis(spec: BasisSpec) -> Result<FockBasis> {
    if spec.photon_cutoffs.is_empty() {
        return Err(Error::Validation("at least one photon mode required".into()));
    }
    let dim = spec.dimension();
    if dim > spec.dimension_limit {
        return Err(Error::Capacity {
            requested: dim,
            limit: spec.dimension_limit,
        });
    }

    let radices = spec.radices();
    let n_osc = radices.len();
    let mut strides = vec![1usize; n_osc];
    for k in (0..n_osc - 1).rev() {
        strides[k] = strides[k + 1] * radices[k + 1];
    }

    let mut states = Vec::with_capacity(dim);
    let mut occ = vec![0u32; n_osc];
    loop {
        states.push(occ.clone());
        // lexicographic increment, phonon digit fastest
        let mut k = n_osc;
        loop {
            if k == 0 {
                return Ok(FockBasis(Arc::new(BasisInner { spec, states, strides })));
            }
            k -= 1;
            occ[k] += 1;
            if (occ[k] as usize) < radices[k] {
                break;
            }
            occ[k] = 0;
        }
    }
}

impl FockBasis {
    pub fn spec(&self) -> &BasisSpec {
        &self.0.spec
    }

    pub fn dim(&self) -> usize {
        self.0.states.len()
    }

    pub fn photon_modes(&self) -> usize {
        self.0.spec.photon_cutoffs.len()
    }

    /// Oscillator slot of `mode` within an occupation tuple.
    pub fn slot(&self, mode: Mode) -> Result<usize> {
        match mode {
            Mode::Photon(i) if i < self.photon_modes() => Ok(i),
            Mode::Photon(i) => Err(Error::Validation(format!(
                "photon mode {i} out of range ({} modes)",
                self.photon_modes()
            ))),
            Mode::Phonon => Ok(self.photon_modes()),
        }
    }

    pub fn cutoff(&self, mode: Mode) -> Result<usize> {
        Ok(match mode {
            Mode::Phonon => self.0.spec.phonon_cutoff,
            Mode::Photon(_) => self.0.spec.photon_cutoffs[self.slot(mode)?],
        })
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.0.states
    }

    pub fn state(&self, index: usize) -> &[u32] {
        &self.0.states[index]
    }

    /// Contiguous index of an occupation tuple, None when out of range.
    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        if occ.len() != self.0.strides.len() {
            return None;
        }
        let radices = self.0.spec.radices();
        let mut idx = 0usize;
        for (k, (&n, stride)) in occ.iter().zip(&self.0.strides).enumerate() {
            if n as usize >= radices[k] {
                return None;
            }
            idx += n as usize * stride;
        }
        Some(idx)
    }

    /// Unit vector for one occupation tuple.
    pub fn basis_vector(&self, occ: &[u32]) -> Result<DVector<Complex64>> {
        let idx = self.index_of(occ).ok_or_else(|| {
            Error::Validation(format!("occupation {occ:?} outside the basis"))
        })?;
        let mut v = DVector::zeros(self.dim());
        v[idx] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn same_space(&self, other: &FockBasis) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

impl std::fmt::Debug for FockBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FockBasis")
            .field("spec", &self.0.spec)
            .field("dim", &self.dim())
            .finish()
    }
}

/// Dense complex operator tagged with its basis.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    basis: FockBasis,
    mat: DMatrix<Complex64>,
}

impl OperatorMatrix {
    pub fn from_matrix(basis: FockBasis, mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() != basis.dim() || mat.ncols() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "matrix is {}x{}, basis dimension {}",
                mat.nrows(),
                mat.ncols(),
                basis.dim()
            )));
        }
        Ok(OperatorMatrix { basis, mat })
    }

    pub fn zeros(basis: &FockBasis) -> Self {
        OperatorMatrix {
            basis: basis.clone(),
            mat: DMatrix::zeros(basis.dim(), basis.dim()),
        }
    }

    pub fn identity(basis: &FockBasis) -> Self {
        OperatorMatrix {
            basis: basis.clone(),
            mat: DMatrix::identity(basis.dim(), basis.dim()),
        }
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn element(&self, bra: &[u32], ket: &[u32]) -> Result<Complex64> {
        let r = self.basis.index_of(bra).ok_or_else(|| {
            Error::Validation(format!("bra {bra:?} outside the basis"))
        })?;
        let c = self.basis.index_of(ket).ok_or_else(|| {
            Error::Validation(format!("ket {ket:?} outside the basis"))
        })?;
        Ok(self.mat[(r, c)])
    }

    fn check_same(&self, other: &OperatorMatrix) -> Result<()> {
        if self.basis.same_space(&other.basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch("operators built on different bases".into()))
        }
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same(other)?;
        Ok(OperatorMatrix {
            basis: self.basis.clone(),
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same(other)?;
        Ok(OperatorMatrix {
            basis: self.basis.clone(),
            mat: &self.mat - &other.mat,
        })
    }

    pub fn mul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same(other)?;
        Ok(OperatorMatrix {
            basis: self.basis.clone(),
            mat: &self.mat * &other.mat,
        })
    }

    pub fn scale(&self, c: Complex64) -> OperatorMatrix {
        OperatorMatrix {
            basis: self.basis.clone(),
            mat: self.mat.map(|x| x * c),
        }
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            basis: self.basis.clone(),
            mat: self.mat.adjoint(),
        }
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.mat * v
    }

    pub fn expectation(&self, v: &DVector<Complex64>) -> Complex64 {
        v.dotc(&(&self.mat * v))
    }

    /// Largest |A - A^dagger| element.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.mat.nrows() {
            for c in r..self.mat.ncols() {
                let d = (self.mat[(r, c)] - self.mat[(c, r)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Matrix of the lowering or raising operator for one oscillator:
/// <n-1|a|n> = sqrt(n), truncated at the cutoff; raising is the adjoint.
pub fn ladder_matrix(basis: &FockBasis, mode: Mode, kind: Ladder) -> Result<OperatorMatrix> {
    let slot = basis.slot(mode)?;
    let mut mat = DMatrix::<Complex64>::zeros(basis.dim(), basis.dim());
    let mut occ = Vec::new();
    for (col, state) in basis.states().iter().enumerate() {
        let n = state[slot];
        if n == 0 {
            continue;
        }
        occ.clear();
        occ.extend_from_slice(state);
        occ[slot] = n - 1;
        let row = basis.index_of(&occ).expect("lowered state stays inside the basis");
        mat[(row, col)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let op = OperatorMatrix { basis: basis.clone(), mat };
    Ok(match kind {
        Ladder::Lower => op,
        Ladder::Raise => op.adjoint(),
    })
}

/// Diagonal occupation-number operator for one oscillator.
pub fn number_operator(basis: &FockBasis, mode: Mode) -> Result<OperatorMatrix> {
    let slot = basis.slot(mode)?;
    let mut mat = DMatrix::<Complex64>::zeros(basis.dim(), basis.dim());
    for (i, state) in basis.states().iter().enumerate() {
        mat[(i, i)] = Complex64::new(state[slot] as f64, 0.0);
    }
    Ok(OperatorMatrix { basis: basis.clone(), mat })
}

/// Projector onto even or odd occupation of one oscillator.
pub fn number_parity_projector(
    basis: &FockBasis,
    mode: Mode,
    parity: Parity,
) -> Result<OperatorMatrix> {
    let slot = basis.slot(mode)?;
    let want = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let mut mat = DMatrix::<Complex64>::zeros(basis.dim(), basis.dim());
    for (i, state) in basis.states().iter().enumerate() {
        if state[slot] % 2 == want {
            mat[(i, i)] = Complex64::new(1.0, 0.0);
        }
    }
    Ok(OperatorMatrix { basis: basis.clone(), mat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let basis = build_basis(BasisSpec::single_mode(1, 1)).unwrap();
        let expect: Vec<Vec<u32>> = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        assert_eq!(basis.states(), expect.as_slice());
        assert_eq!(basis.dim(), 4);
    }

    #[test]
    fn dimension_is_product_of_levels() {
        let basis = build_basis(BasisSpec::single_mode(30, 30)).unwrap();
        assert_eq!(basis.dim(), 961);
        let spec = BasisSpec {
            photon_cutoffs: vec![2, 3],
            phonon_cutoff: 4,
            dimension_limit: DEFAULT_DIMENSION_LIMIT,
        };
        assert_eq!(build_basis(spec).unwrap().dim(), 3 * 4 * 5);
    }

    #[test]
    fn index_roundtrip() {
        let spec = BasisSpec {
            photon_cutoffs: vec![3, 2],
            phonon_cutoff: 4,
            dimension_limit: DEFAULT_DIMENSION_LIMIT,
        };
        let basis = build_basis(spec).unwrap();
        for (i, state) in basis.states().iter().enumerate() {
            assert_eq!(basis.index_of(state), Some(i));
        }
        assert_eq!(basis.index_of(&[4, 0, 0]), None);
        assert_eq!(basis.index_of(&[0, 0]), None);
    }

    #[test]
    fn capacity_limit_enforced() {
        let spec = BasisSpec {
            photon_cutoffs: vec![200],
            phonon_cutoff: 200,
            dimension_limit: DEFAULT_DIMENSION_LIMIT,
        };
        match build_basis(spec) {
            Err(Error::Capacity { requested, limit }) => {
                assert_eq!(requested, 201 * 201);
                assert_eq!(limit, DEFAULT_DIMENSION_LIMIT);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn lowering_elements_are_sqrt_n() {
        let basis = build_basis(BasisSpec::single_mode(3, 0)).unwrap();
        let a = ladder_matrix(&basis, Mode::Photon(0), Ladder::Lower).unwrap();
        for n in 1..=3u32 {
            let el = a.element(&[n - 1, 0], &[n, 0]).unwrap();
            assert_relative_eq!(el.re, (n as f64).sqrt(), max_relative = 1e-15);
            assert_eq!(el.im, 0.0);
        }
        // annihilating the vacuum gives a zero column
        for row in 0..basis.dim() {
            assert_eq!(a.matrix()[(row, 0)], c(0.0));
        }
    }

    #[test]
    fn raising_is_adjoint_of_lowering() {
        let basis = build_basis(BasisSpec::single_mode(4, 3)).unwrap();
        let a = ladder_matrix(&basis, Mode::Phonon, Ladder::Lower).unwrap();
        let adag = ladder_matrix(&basis, Mode::Phonon, Ladder::Raise).unwrap();
        assert_eq!(a.adjoint().matrix(), adag.matrix());
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let basis = build_basis(BasisSpec::single_mode(5, 4)).unwrap();
        let a = ladder_matrix(&basis, Mode::Photon(0), Ladder::Lower).unwrap();
        let adag = ladder_matrix(&basis, Mode::Photon(0), Ladder::Raise).unwrap();
        let comm = a.mul(&adag).unwrap().sub(&adag.mul(&a).unwrap()).unwrap();
        let cutoff = 5u32;
        for (i, state) in basis.states().iter().enumerate() {
            for (j, _) in basis.states().iter().enumerate() {
                let el = comm.matrix()[(i, j)];
                if i != j {
                    assert_eq!(el, c(0.0));
                } else if state[0] < cutoff {
                    assert_relative_eq!(el.re, 1.0, max_relative = 1e-14);
                } else {
                    // the top level absorbs the truncation: [a, a^dag] = -cutoff there
                    assert_relative_eq!(el.re, -(cutoff as f64), max_relative = 1e-14);
                }
            }
        }
    }

    #[test]
    fn cross_mode_operators_commute() {
        let basis = build_basis(BasisSpec::single_mode(3, 3)).unwrap();
        let a = ladder_matrix(&basis, Mode::Photon(0), Ladder::Lower).unwrap();
        let bdag = ladder_matrix(&basis, Mode::Phonon, Ladder::Raise).unwrap();
        let lhs = a.mul(&bdag).unwrap();
        let rhs = bdag.mul(&a).unwrap();
        assert_eq!(lhs.sub(&rhs).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn number_operator_matches_ladder_product() {
        let basis = build_basis(BasisSpec::single_mode(4, 4)).unwrap();
        let n = number_operator(&basis, Mode::Phonon).unwrap();
        let b = ladder_matrix(&basis, Mode::Phonon, Ladder::Lower).unwrap();
        let bdag = ladder_matrix(&basis, Mode::Phonon, Ladder::Raise).unwrap();
        let prod = bdag.mul(&b).unwrap();
        assert!(n.sub(&prod).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn parity_projectors_are_idempotent_and_complete() {
        let basis = build_basis(BasisSpec::single_mode(4, 3)).unwrap();
        let pe = number_parity_projector(&basis, Mode::Photon(0), Parity::Even).unwrap();
        let po = number_parity_projector(&basis, Mode::Photon(0), Parity::Odd).unwrap();
        assert_eq!(pe.mul(&pe).unwrap().sub(&pe).unwrap().max_abs(), 0.0);
        assert_eq!(po.mul(&po).unwrap().sub(&po).unwrap().max_abs(), 0.0);
        let sum = pe.add(&po).unwrap();
        assert_eq!(sum.sub(&OperatorMatrix::identity(&basis)).unwrap().max_abs(), 0.0);
        // orthogonal sectors
        assert_eq!(pe.mul(&po).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn hermiticity_defect_detects_asymmetry() {
        let basis = build_basis(BasisSpec::single_mode(1, 0)).unwrap();
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = c(1.0);
        let op = OperatorMatrix::from_matrix(basis, m).unwrap();
        assert_relative_eq!(op.hermiticity_defect(), 1.0);
    }

    proptest! {
        #[test]
        fn roundtrip_random_specs(cp in 1usize..6, cm in 1usize..6, extra in 0usize..3) {
            let mut photon_cutoffs = vec![cp];
            for k in 0..extra {
                photon_cutoffs.push(1 + (cp + k) % 4);
            }
            let spec = BasisSpec {
                photon_cutoffs,
                phonon_cutoff: cm,
                dimension_limit: DEFAULT_DIMENSION_LIMIT,
            };
            let basis = build_basis(spec).unwrap();
            for (i, state) in basis.states().iter().enumerate() {
                prop_assert_eq!(basis.index_of(state), Some(i));
            }
            // lexicographic order is strictly increasing
            for w in basis.states().windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
