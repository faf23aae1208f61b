//! Exact-diagonalization oracle: dressed levels, overlap Z-factors, shift
//! extraction by coupling sweeps, and cutoff convergence studies.
//!
//! Dressed states are tracked by maximum overlap with the bare label; an
//! overlap square above 0.5 is unique by completeness, anything at or below
//! is reported as strong mixing rather than a number, since the closed-form
//! shifts are meaningless there.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::fockspace::{build_basis, BasisSpec, FockBasis, OperatorMatrix};
use crate::model::{build_hamiltonian_with, ModelParams};
use crate::{Error, Result};

/// Reject eigensolve inputs whose Hermiticity defect exceeds this times
/// max(1, largest element).
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Accept an eigenpair when |H v - (v' H v) v| stays below this times
/// max(1, largest element). The solver leaves residuals around 1e-8 on
/// clustered spectra; a mispaired vector shows up at the level-gap scale.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Tracking threshold: overlap^2 must exceed this for a unique dressed state.
pub const TRACK_THRESHOLD: f64 = 0.5;

/// Guard band above the threshold. At an exact degeneracy the 50/50 pair is
/// tilted by O(g) level repulsion from spectator states, leaving one overlap
/// marginally above 0.5; anything inside the band still counts as mixed.
pub const TRACK_MARGIN: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct Eigensystem {
    basis: FockBasis,
    /// Ascending.
    eigenvalues: Vec<f64>,
    /// Column k pairs with eigenvalues[k].
    eigenvectors: DMatrix<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DressedState {
    pub label: Vec<u32>,
    pub energy: f64,
    /// Oracle Z-factor: |<bare|dressed>|^2.
    pub overlap_sq: f64,
    pub eigen_index: usize,
}

/// Least-squares fit of shift(g) = c2 g^2 + c4 g^4.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFit {
    pub c2: f64,
    pub c4: f64,
    /// Root-mean-square misfit over the sweep.
    pub residual: f64,
    pub g_values: Vec<f64>,
    pub shifts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSeries {
    pub cutoffs: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    /// |values[n-1] - values[n-2]|, the convergence estimate.
    pub last_delta: f64,
}

/// Dense Hermitian eigensolve, eigenvalues ascending.
///
/// Real-valued inputs (every Hamiltonian this workbench builds) take a real
/// symmetric path, which is several times faster than the complex solver.
pub fn eigensystem(h: &OperatorMatrix) -> Result<Eigensystem> {
    let defect = h.hermiticity_defect();
    let scale = h.max_abs().max(1.0);
    if defect > HERMITICITY_TOL * scale {
        return Err(Error::NonHermitian { defect });
    }

    let dim = h.dim();
    let m = h.matrix();
    // The QR solver can hand back eigenvalues paired with the wrong
    // vectors when levels are close, so ignore its value list entirely:
    // each vector's eigenvalue is its own Rayleigh quotient, and the
    // residual against that quotient certifies the pair.
    let (vals, resids, vecs): (Vec<f64>, Vec<f64>, DMatrix<Complex64>) =
        if m.iter().all(|z| z.im == 0.0) {
            let real = DMatrix::<f64>::from_fn(dim, dim, |r, c| m[(r, c)].re);
            let se = nalgebra::SymmetricEigen::new(real.clone());
            let hv = &real * &se.eigenvectors;
            let mut vals = Vec::with_capacity(dim);
            let mut resids = Vec::with_capacity(dim);
            for k in 0..dim {
                let v = se.eigenvectors.column(k);
                let r = v.dot(&hv.column(k));
                vals.push(r);
                resids.push((hv.column(k) - v * r).norm());
            }
            let vecs = se.eigenvectors.map(|x| Complex64::new(x, 0.0));
            (vals, resids, vecs)
        } else {
            let se = nalgebra::SymmetricEigen::new(m.clone());
            let hv = m * &se.eigenvectors;
            let mut vals = Vec::with_capacity(dim);
            let mut resids = Vec::with_capacity(dim);
            for k in 0..dim {
                let v = se.eigenvectors.column(k);
                let r = v.dotc(&hv.column(k)).re;
                vals.push(r);
                resids.push((hv.column(k) - v * Complex64::new(r, 0.0)).norm());
            }
            (vals, resids, se.eigenvectors)
        };

    let (mut vals, mut resids, mut vecs) = (vals, resids, vecs);
    let tol = RESIDUAL_TOL * scale;
    let worst = resids.iter().fold(0.0f64, |a, &b| a.max(b));
    if worst > tol {
        // The QR iteration can leave individual vectors semi-converged
        // inside a near-degenerate cluster even though the cluster subspace
        // itself is accurate; a Rayleigh-Ritz rotation within each suspect
        // cluster restores certifiable pairs. Anything it cannot fix still
        // fails the recheck below.
        refine_clusters(m, &mut vals, &mut resids, &mut vecs, worst, tol);
    }
    let worst = resids.iter().fold(0.0f64, |a, &b| a.max(b));
    if worst > tol {
        return Err(Error::Convergence(format!(
            "eigensolve residual {worst:e} exceeds {tol:e}"
        )));
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let sorted_vecs = DMatrix::from_fn(dim, dim, |r, c| vecs[(r, order[c])]);
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();

    Ok(Eigensystem {
        basis: h.basis().clone(),
        eigenvalues: sorted_vals,
        eigenvectors: sorted_vecs,
    })
}

/// Rediagonalize within clusters of close Rayleigh values. A misconverged
/// vector moves its quotient by at most the residual, so the members of one
/// invariant cluster sit within a few residuals of each other; rotating the
/// cluster columns into the Ritz basis of the projected Hamiltonian fixes
/// them without touching converged pairs. Only clusters holding a vector
/// over the certification tolerance are treated.
fn refine_clusters(
    h: &DMatrix<Complex64>,
    vals: &mut [f64],
    resids: &mut [f64],
    vecs: &mut DMatrix<Complex64>,
    worst: f64,
    tol: f64,
) {
    let dim = vals.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let tau = 10.0 * worst;

    let mut start = 0usize;
    while start < dim {
        let mut end = start + 1;
        while end < dim && vals[order[end]] - vals[order[end - 1]] <= tau {
            end += 1;
        }
        let members = &order[start..end];
        start = end;
        if members.len() < 2 || members.iter().all(|&k| resids[k] <= tol) {
            continue;
        }

        // orthonormal cluster basis (the solver's columns are orthogonal to
        // machine precision; Gram-Schmidt just scrubs roundoff)
        let mut basis: Vec<DVector<Complex64>> =
            members.iter().map(|&k| vecs.column(k).into_owned()).collect();
        for c in 0..basis.len() {
            for p in 0..c {
                let proj = basis[p].dotc(&basis[c]);
                let prev = basis[p].clone();
                basis[c] -= prev * proj;
            }
            let norm = basis[c].norm();
            if norm > 0.0 {
                basis[c] /= Complex64::new(norm, 0.0);
            }
        }

        let images: Vec<DVector<Complex64>> = basis.iter().map(|v| h * v).collect();
        let k = members.len();
        let mut b = DMatrix::<Complex64>::zeros(k, k);
        for p in 0..k {
            for q in 0..k {
                b[(p, q)] = basis[p].dotc(&images[q]);
            }
        }
        let b = (b.adjoint() + b) * Complex64::new(0.5, 0.0);
        let se = nalgebra::SymmetricEigen::new(b);

        for (j, &col) in members.iter().enumerate() {
            let mut v = DVector::<Complex64>::zeros(dim);
            let mut hv = DVector::<Complex64>::zeros(dim);
            for p in 0..k {
                let w = se.eigenvectors[(p, j)];
                v += &basis[p] * w;
                hv += &images[p] * w;
            }
            let val = v.dotc(&hv).re;
            resids[col] = (&hv - &v * Complex64::new(val, 0.0)).norm();
            vals[col] = val;
            vecs.set_column(col, &v);
        }
    }
}

impl Eigensystem {
    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> DVector<Complex64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// Eigenvectors as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    /// Largest deviation of the eigenvector Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.eigenvectors.adjoint() * &self.eigenvectors;
        let mut worst = 0.0f64;
        for r in 0..gram.nrows() {
            for c in 0..gram.ncols() {
                let want = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((gram[(r, c)] - Complex64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    /// Sum over eigenstates of overlap^2 with one bare state; 1 by
    /// completeness.
    pub fn completeness_sum(&self, label: &[u32]) -> Result<f64> {
        let idx = self.basis.index_of(label).ok_or_else(|| {
            Error::Validation(format!("label {label:?} outside the basis"))
        })?;
        Ok((0..self.dim())
            .map(|k| self.eigenvectors[(idx, k)].norm_sqr())
            .sum())
    }
}

/// Eigenpair maximizing overlap with the bare label.
pub fn track_dressed_state(es: &Eigensystem, label: &[u32]) -> Result<DressedState> {
    let idx = es.basis.index_of(label).ok_or_else(|| {
        Error::Validation(format!("label {label:?} outside the basis"))
    })?;
    let mut best = 0usize;
    let mut best_sq = -1.0f64;
    for k in 0..es.dim() {
        let sq = es.eigenvectors[(idx, k)].norm_sqr();
        if sq > best_sq {
            best_sq = sq;
            best = k;
        }
    }
    if best_sq <= TRACK_THRESHOLD + TRACK_MARGIN {
        return Err(Error::StrongMixing {
            label: format!("{label:?}"),
            overlap: best_sq,
        });
    }
    Ok(DressedState {
        label: label.to_vec(),
        energy: es.eigenvalues[best],
        overlap_sq: best_sq,
        eigen_index: best,
    })
}

/// Dressed-state gap between two tracked labels.
pub fn transition_frequency(es: &Eigensystem, upper: &[u32], lower: &[u32]) -> Result<f64> {
    let up = track_dressed_state(es, upper)?;
    let lo = track_dressed_state(es, lower)?;
    Ok(up.energy - lo.energy)
}

/// Build the single-mode Hamiltonian at the given cutoffs and diagonalize.
pub fn solve_single_mode(
    params: &ModelParams,
    cutoffs: (usize, usize),
    include_pair_channel: bool,
) -> Result<Eigensystem> {
    if params.mode_count() != 1 {
        return Err(Error::Validation(
            "single-mode solve called with multi-mode params".into(),
        ));
    }
    let basis = build_basis(BasisSpec::single_mode(cutoffs.0, cutoffs.1))?;
    let h = build_hamiltonian_with(&basis, params, include_pair_channel)?;
    eigensystem(&h)
}

/// General solve for any basis layout.
pub fn solve(
    params: &ModelParams,
    spec: BasisSpec,
    include_pair_channel: bool,
) -> Result<Eigensystem> {
    let basis = build_basis(spec)?;
    let h = build_hamiltonian_with(&basis, params, include_pair_channel)?;
    eigensystem(&h)
}

fn bare_energy(params: &ModelParams, label: &[u32]) -> f64 {
    let mut e = params.omega_m * label[label.len() - 1] as f64;
    for (k, &w) in params.omega_modes.iter().enumerate() {
        e += w * label[k] as f64;
    }
    e
}

/// Quadratic coefficient of the level shift in g, from a coupling sweep.
///
/// Each sweep point replaces g, solves, tracks the label, and records
/// E(g) - E_bare; the sweep is fit to c2 g^2 + c4 g^4 so the returned c2 is
/// insulated from quartic contamination. Sweep points run concurrently.
pub fn level_shift_oracle(
    params: &ModelParams,
    cutoffs: (usize, usize),
    include_pair_channel: bool,
    label: &[u32],
    g_sweep: &[f64],
) -> Result<QuadraticFit> {
    let mut fits = level_shift_oracles(params, cutoffs, include_pair_channel, &[label], g_sweep)?;
    Ok(fits.pop().expect("one fit per label"))
}

/// Same sweep, several labels at once. The eigensolve dominates at large
/// cutoffs and is shared across labels, so this costs one label's sweep.
pub fn level_shift_oracles(
    params: &ModelParams,
    cutoffs: (usize, usize),
    include_pair_channel: bool,
    labels: &[&[u32]],
    g_sweep: &[f64],
) -> Result<Vec<QuadraticFit>> {
    if params.mode_count() != 1 {
        return Err(Error::Validation("level shifts are single-mode".into()));
    }
    if labels.is_empty() {
        return Err(Error::Validation("need at least one label".into()));
    }
    if g_sweep.len() < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 sweep points, got {}",
            g_sweep.len()
        )));
    }
    let freq_floor = params.omega_c().min(params.omega_m);
    for &g in g_sweep {
        if !g.is_finite() || g == 0.0 {
            return Err(Error::Validation(format!("bad sweep coupling {g}")));
        }
        if g.abs() * crate::model::WEAK_COUPLING_RATIO > freq_floor {
            return Err(Error::Validation(format!(
                "sweep coupling {g} is outside the weak regime for these frequencies"
            )));
        }
    }

    let bare: Vec<f64> = labels.iter().map(|l| bare_energy(params, l)).collect();
    // rows: one vec of per-label shifts per sweep point
    let rows: Vec<Vec<f64>> = g_sweep
        .par_iter()
        .map(|&g| -> Result<Vec<f64>> {
            let mut p = params.clone();
            p.g = g;
            let es = solve_single_mode(&p, cutoffs, include_pair_channel)?;
            labels
                .iter()
                .zip(&bare)
                .map(|(label, &e0)| Ok(track_dressed_state(&es, label)?.energy - e0))
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(labels
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let shifts: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (c2, c4, residual) = fit_even_quartic(g_sweep, &shifts);
            QuadraticFit {
                c2,
                c4,
                residual,
                g_values: g_sweep.to_vec(),
                shifts,
            }
        })
        .collect())
}

/// Least squares for y = c2 x + c4 x^2 with x = g^2, conditioned by scaling
/// x to [0, 1] before solving the 2x2 normal equations.
pub(crate) fn fit_even_quartic(g_values: &[f64], shifts: &[f64]) -> (f64, f64, f64) {
    let xs: Vec<f64> = g_values.iter().map(|g| g * g).collect();
    let x_max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let us: Vec<f64> = xs.iter().map(|x| x / x_max).collect();

    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&u, &y) in us.iter().zip(shifts) {
        s11 += u * u;
        s12 += u * u * u;
        s22 += u * u * u * u;
        b1 += u * y;
        b2 += u * u * y;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (b1 * s22 - b2 * s12) / det;
    let b = (s11 * b2 - s12 * b1) / det;

    let mut sq = 0.0;
    for (&u, &y) in us.iter().zip(shifts) {
        let r = a * u + b * u * u - y;
        sq += r * r;
    }
    let residual = (sq / shifts.len() as f64).sqrt();
    (a / x_max, b / (x_max * x_max), residual)
}

/// Tracked value of one label across a ladder of cutoffs.
pub fn cutoff_convergence(
    params: &ModelParams,
    include_pair_channel: bool,
    label: &[u32],
    cutoff_ladder: &[(usize, usize)],
) -> Result<ConvergenceSeries> {
    if cutoff_ladder.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 cutoff rungs, got {}",
            cutoff_ladder.len()
        )));
    }
    for pair in cutoff_ladder.windows(2) {
        let ((p0, m0), (p1, m1)) = (pair[0], pair[1]);
        if p1 < p0 || m1 < m0 || (p1, m1) == (p0, m0) {
            return Err(Error::Validation("cutoff ladder must ascend".into()));
        }
    }
    let values: Vec<f64> = cutoff_ladder
        .par_iter()
        .map(|&cut| -> Result<f64> {
            let es = solve_single_mode(params, cut, include_pair_channel)?;
            Ok(track_dressed_state(&es, label)?.energy)
        })
        .collect::<Result<_>>()?;
    let n = values.len();
    let last_delta = (values[n - 1] - values[n - 2]).abs();
    Ok(ConvergenceSeries {
        cutoffs: cutoff_ladder.to_vec(),
        values,
        last_delta,
    })
}
