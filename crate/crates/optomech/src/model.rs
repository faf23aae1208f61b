//! Physical parameters and operator assembly: the free cavity + mirror
//! Hamiltonian, the two interaction channels, and the radiation-pressure
//! operator on the mirror.
//!
//! Everything is expressed in units of a reference frequency (hbar = c = 1);
//! no absolute scale enters. Parameters come either from hardware numbers
//! (mirror mass, spring constant, cavity length, mode numbers) or directly as
//! frequencies, since the perturbative formulas only ever see (omega_c,
//! omega_m, g).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fockspace::{
    ladder_matrix, number_operator, FockBasis, Ladder, Mode, OperatorMatrix,
};
use crate::{Error, Result};

/// |g| must stay below frequency / WEAK_COUPLING_RATIO or reports carry a
/// warning; the closed forms are second order in g and degrade fast past it.
pub const WEAK_COUPLING_RATIO: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalInputs {
    pub mass: f64,
    pub spring_constant: f64,
    pub cavity_length: f64,
    pub mode_numbers: Vec<u32>,
}

/// Frequencies and couplings the rest of the workbench consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Photon mode frequencies, ascending mode number.
    pub omega_modes: Vec<f64>,
    pub omega_m: f64,
    /// Single-mode vertex strength.
    pub g: f64,
    /// Pairwise couplings g[i][j] for the multi-mode interaction; only
    /// available when built from hardware numbers.
    pub g_matrix: Option<Vec<Vec<f64>>>,
    pub physical: Option<PhysicalInputs>,
}

/// Photon-number-conserving channel, the pair-creating channel, and their sum.
#[derive(Clone, Debug)]
pub struct InteractionParts {
    pub v_om: OperatorMatrix,
    pub v_dce: OperatorMatrix,
    pub v_total: OperatorMatrix,
}

fn require_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Derive frequencies and couplings from hardware numbers.
///
/// omega_n = n pi / L, omega_m = sqrt(k/m), and the single-mode vertex
/// g = -sqrt(1/(2 m omega_m)) omega_c / L built from the lowest listed mode.
/// The pairwise couplings carry an extra factor relative to the single-mode
/// convention: g[0][0] / g = -1/2. Both are kept as written; reports surface
/// the ratio rather than reconciling it.
pub fn derive_params(
    mass: f64,
    spring_constant: f64,
    cavity_length: f64,
    mode_numbers: &[u32],
) -> Result<ModelParams> {
    require_positive("mass", mass)?;
    require_positive("spring constant", spring_constant)?;
    require_positive("cavity length", cavity_length)?;
    if mode_numbers.is_empty() {
        return Err(Error::Validation("at least one mode number required".into()));
    }
    let mut numbers = mode_numbers.to_vec();
    numbers.sort_unstable();
    for pair in numbers.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::Validation(format!("duplicate mode number {}", pair[0])));
        }
    }
    if numbers[0] == 0 {
        return Err(Error::Validation("mode numbers start at 1".into()));
    }

    let omega_m = (spring_constant / mass).sqrt();
    let omega_modes: Vec<f64> =
        numbers.iter().map(|&n| n as f64 * PI / cavity_length).collect();
    let omega_c = omega_modes[0];
    let g = -(1.0 / (2.0 * mass * omega_m)).sqrt() * omega_c / cavity_length;

    let pref = 0.5f64.powf(1.5) / (cavity_length * mass.sqrt());
    let g_matrix: Vec<Vec<f64>> = numbers
        .iter()
        .zip(&omega_modes)
        .map(|(&ni, &wi)| {
            numbers
                .iter()
                .zip(&omega_modes)
                .map(|(&nj, &wj)| {
                    let sign = if (ni + nj) % 2 == 0 { 1.0 } else { -1.0 };
                    pref * sign * (wi * wj / omega_m).sqrt()
                })
                .collect()
        })
        .collect();

    Ok(ModelParams {
        omega_modes,
        omega_m,
        g,
        g_matrix: Some(g_matrix),
        physical: Some(PhysicalInputs {
            mass,
            spring_constant,
            cavity_length,
            mode_numbers: numbers,
        }),
    })
}

/// Single-mode constructor from the three frequencies the formulas depend on.
pub fn direct_params(omega_c: f64, omega_m: f64, g: f64) -> Result<ModelParams> {
    require_positive("omega_c", omega_c)?;
    require_positive("omega_m", omega_m)?;
    if !g.is_finite() {
        return Err(Error::Validation(format!("g must be finite, got {g}")));
    }
    Ok(ModelParams {
        omega_modes: vec![omega_c],
        omega_m,
        g,
        g_matrix: None,
        physical: None,
    })
}

/// Multi-mode constructor from explicit frequencies and a coupling matrix.
pub fn multimode_params(
    omega_modes: Vec<f64>,
    omega_m: f64,
    g_matrix: Vec<Vec<f64>>,
) -> Result<ModelParams> {
    if omega_modes.is_empty() {
        return Err(Error::Validation("need at least one photon mode".into()));
    }
    for (k, &w) in omega_modes.iter().enumerate() {
        require_positive(&format!("omega_modes[{k}]"), w)?;
    }
    require_positive("omega_m", omega_m)?;
    let n = omega_modes.len();
    if g_matrix.len() != n || g_matrix.iter().any(|row| row.len() != n) {
        return Err(Error::Validation(format!(
            "coupling matrix must be {n}x{n} to match the mode list"
        )));
    }
    for (i, row) in g_matrix.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::Validation(format!("g_matrix[{i}][{j}] must be finite")));
            }
            if (x - g_matrix[j][i]).abs() > 1e-12 * x.abs().max(1.0) {
                return Err(Error::Validation("coupling matrix must be symmetric".into()));
            }
        }
    }
    Ok(ModelParams {
        g: g_matrix[0][0],
        omega_modes,
        omega_m,
        g_matrix: Some(g_matrix),
        physical: None,
    })
}

impl ModelParams {
    pub fn omega_c(&self) -> f64 {
        self.omega_modes[0]
    }

    pub fn mode_count(&self) -> usize {
        self.omega_modes.len()
    }

    /// All couplings multiplied by `s`; used for response-in-coupling scans.
    pub fn with_coupling_scale(&self, s: f64) -> ModelParams {
        let mut p = self.clone();
        p.g *= s;
        if let Some(gm) = &mut p.g_matrix {
            for row in gm {
                for x in row {
                    *x *= s;
                }
            }
        }
        p
    }

    /// Warning text when |g| is not small against every mode frequency.
    pub fn weak_coupling_warning(&self) -> Option<String> {
        let bound = WEAK_COUPLING_RATIO * self.g.abs();
        let mut offenders: Vec<String> = Vec::new();
        for (k, &w) in self.omega_modes.iter().enumerate() {
            if w < bound {
                offenders.push(format!("omega[{k}]={w}"));
            }
        }
        if self.omega_m < bound {
            offenders.push(format!("omega_m={}", self.omega_m));
        }
        if offenders.is_empty() {
            None
        } else {
            Some(format!(
                "coupling g={} is not weak against {} (want frequency >= {} |g|)",
                self.g,
                offenders.join(", "),
                WEAK_COUPLING_RATIO
            ))
        }
    }

    /// g[0][0] / g, the documented gap between the two coupling conventions.
    pub fn coupling_convention_ratio(&self) -> Option<f64> {
        let gm = self.g_matrix.as_ref()?;
        if self.g == 0.0 {
            return None;
        }
        Some(gm[0][0] / self.g)
    }
}

fn check_modes(basis: &FockBasis, params: &ModelParams) -> Result<()> {
    if basis.photon_modes() == params.mode_count() {
        Ok(())
    } else {
        Err(Error::BasisMismatch(format!(
            "basis has {} photon modes, params describe {}",
            basis.photon_modes(),
            params.mode_count()
        )))
    }
}

/// Diagonal free part: sum_i omega_i n_i + omega_m n_b.
pub fn free_hamiltonian(basis: &FockBasis, params: &ModelParams) -> Result<OperatorMatrix> {
    check_modes(basis, params)?;
    let phonon_slot = basis.photon_modes();
    let mut h = OperatorMatrix::zeros(basis);
    for (i, state) in basis.states().iter().enumerate() {
        let mut e = params.omega_m * state[phonon_slot] as f64;
        for (k, &w) in params.omega_modes.iter().enumerate() {
            e += w * state[k] as f64;
        }
        h.matrix_mut()[(i, i)] = Complex64::new(e, 0.0);
    }
    Ok(h)
}

/// Interaction split into the photon-conserving and pair-creating channels.
///
/// Single mode: V_om = g a'a (b + b'), V_DCE = (g/2)(a^2 + a'^2)(b + b').
/// Multi mode: the double sum over pairs with g[i][j], the conserving part
/// carrying a'_i a_j and the pair part (1/2)(a_i a_j + a'_i a'_j).
pub fn split_interaction(basis: &FockBasis, params: &ModelParams) -> Result<InteractionParts> {
    check_modes(basis, params)?;
    let b = ladder_matrix(basis, Mode::Phonon, Ladder::Lower)?;
    let xb = b.add(&b.adjoint())?;

    let (v_om, v_dce) = if params.mode_count() == 1 {
        let a = ladder_matrix(basis, Mode::Photon(0), Ladder::Lower)?;
        let adag = a.adjoint();
        let g = Complex64::new(params.g, 0.0);
        let v_om = adag.mul(&a)?.mul(&xb)?.scale(g);
        let pair = a.mul(&a)?.add(&adag.mul(&adag)?)?;
        let v_dce = pair.mul(&xb)?.scale(g * 0.5);
        (v_om, v_dce)
    } else {
        let gm = params.g_matrix.as_ref().ok_or_else(|| {
            Error::Validation("multi-mode interaction needs pairwise couplings".into())
        })?;
        let lowers: Vec<OperatorMatrix> = (0..params.mode_count())
            .map(|k| ladder_matrix(basis, Mode::Photon(k), Ladder::Lower))
            .collect::<Result<_>>()?;
        let mut v_om = OperatorMatrix::zeros(basis);
        let mut v_dce = OperatorMatrix::zeros(basis);
        for (i, ai) in lowers.iter().enumerate() {
            for (j, aj) in lowers.iter().enumerate() {
                let gij = Complex64::new(gm[i][j], 0.0);
                v_om = v_om.add(&ai.adjoint().mul(aj)?.scale(gij))?;
                let pair = ai.mul(aj)?.add(&ai.adjoint().mul(&aj.adjoint())?)?;
                v_dce = v_dce.add(&pair.scale(gij * 0.5))?;
            }
        }
        (v_om.mul(&xb)?, v_dce.mul(&xb)?)
    };

    let v_total = v_om.add(&v_dce)?;
    Ok(InteractionParts { v_om, v_dce, v_total })
}

/// Full Hamiltonian; `include_pair_channel: false` drops the pair-creating
/// channel (rotating-wave truncation of the interaction).
pub fn build_hamiltonian_with(
    basis: &FockBasis,
    params: &ModelParams,
    include_pair_channel: bool,
) -> Result<OperatorMatrix> {
    let h0 = free_hamiltonian(basis, params)?;
    let parts = split_interaction(basis, params)?;
    if include_pair_channel {
        h0.add(&parts.v_total)
    } else {
        h0.add(&parts.v_om)
    }
}

pub fn build_hamiltonian(basis: &FockBasis, params: &ModelParams) -> Result<OperatorMatrix> {
    build_hamiltonian_with(basis, params, true)
}

/// Radiation pressure on the mirror, (omega_c / 2L)(a + a')^2.
///
/// `normal_ordered` replaces a a' by a'a, removing the vacuum expectation.
/// Without hardware numbers the cavity length defaults to 1, so the prefactor
/// is omega_c / 2 in reference units.
pub fn radiation_pressure_operator(
    basis: &FockBasis,
    params: &ModelParams,
    normal_ordered: bool,
) -> Result<OperatorMatrix> {
    let length = params
        .physical
        .as_ref()
        .map(|p| p.cavity_length)
        .unwrap_or(1.0);
    radiation_pressure_with_length(basis, params, normal_ordered, length)
}

/// Same operator at an explicit cavity length, decoupled from the length
/// baked into the frequencies. Lets the L^-2 prefactor scaling be probed at
/// fixed omega_c.
pub fn radiation_pressure_with_length(
    basis: &FockBasis,
    params: &ModelParams,
    normal_ordered: bool,
    length: f64,
) -> Result<OperatorMatrix> {
    check_modes(basis, params)?;
    if params.mode_count() != 1 {
        return Err(Error::Validation(
            "radiation pressure operator is defined for the single-mode model".into(),
        ));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::Validation(format!(
            "cavity length must be positive, got {length}"
        )));
    }
    let f0 = Complex64::new(params.omega_c() / (2.0 * length), 0.0);

    let a = ladder_matrix(basis, Mode::Photon(0), Ladder::Lower)?;
    let adag = a.adjoint();
    let op = if normal_ordered {
        // a^2 + a'^2 + 2 a'a
        a.mul(&a)?
            .add(&adag.mul(&adag)?)?
            .add(&adag.mul(&a)?.scale(Complex64::new(2.0, 0.0)))?
    } else {
        let x = a.add(&adag)?;
        x.mul(&x)?
    };
    Ok(op.scale(f0))
}

/// Convenience: total photon number across all modes.
pub fn total_photon_number(basis: &FockBasis) -> Result<OperatorMatrix> {
    let mut n = OperatorMatrix::zeros(basis);
    for k in 0..basis.photon_modes() {
        n = n.add(&number_operator(basis, Mode::Photon(k))?)?;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{build_basis, number_parity_projector, BasisSpec, Parity};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p0() -> ModelParams {
        direct_params(1.0, 0.3, 0.01).unwrap()
    }

    #[test]
    fn hardware_numbers_example() {
        let p = derive_params(5e5, 4.5e4, 1.0, &[1]).unwrap();
        assert_relative_eq!(p.omega_m, 0.3, max_relative = 1e-15);
        assert_relative_eq!(p.omega_c(), PI, max_relative = 1e-15);
        // g = -sqrt(1/(2 m omega_m)) omega_c / L = -pi / sqrt(3e5)
        assert_relative_eq!(p.g, -PI / 3e5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p.g, -5.736e-3, max_relative = 1e-4);
        // independent route through the zero-point amplitude of the mirror
        let x_zpf = (1.0 / (2.0 * 5e5 * p.omega_m)).sqrt();
        assert_relative_eq!(p.g, -x_zpf * p.omega_c() / 1.0, max_relative = 1e-15);
        assert!(p.g < 0.0);
    }

    #[test]
    fn equal_mass_and_spring_give_unit_mirror_frequency() {
        for m in [0.5, 1.0, 7.25e3] {
            let p = derive_params(m, m, 1.0, &[1]).unwrap();
            assert_relative_eq!(p.omega_m, 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn pairwise_coupling_signs_follow_mode_parity() {
        let p = derive_params(5e5, 4.5e4, 1.0, &[1, 2]).unwrap();
        let gm = p.g_matrix.as_ref().unwrap();
        assert!(gm[0][0] > 0.0);
        assert!(gm[0][1] < 0.0);
        assert!(gm[1][0] < 0.0);
        assert!(gm[1][1] > 0.0);
        assert_relative_eq!(gm[0][1], gm[1][0], max_relative = 1e-15);
    }

    #[test]
    fn coupling_conventions_differ_by_minus_half() {
        let p = derive_params(5e5, 4.5e4, 1.0, &[1]).unwrap();
        assert_relative_eq!(p.coupling_convention_ratio().unwrap(), -0.5, max_relative = 1e-14);
    }

    #[test]
    fn nonpositive_inputs_rejected() {
        assert!(derive_params(-1.0, 1.0, 1.0, &[1]).is_err());
        assert!(derive_params(1.0, 0.0, 1.0, &[1]).is_err());
        assert!(derive_params(1.0, 1.0, f64::NAN, &[1]).is_err());
        assert!(derive_params(1.0, 1.0, 1.0, &[]).is_err());
        assert!(derive_params(1.0, 1.0, 1.0, &[0]).is_err());
        assert!(derive_params(1.0, 1.0, 1.0, &[2, 2]).is_err());
        assert!(direct_params(0.0, 0.3, 0.01).is_err());
    }

    #[test]
    fn free_theory_is_diagonal() {
        let basis = build_basis(BasisSpec::single_mode(3, 3)).unwrap();
        let p = direct_params(1.0, 0.3, 0.0).unwrap();
        let h = build_hamiltonian(&basis, &p).unwrap();
        for (i, si) in basis.states().iter().enumerate() {
            for j in 0..basis.dim() {
                let el = h.matrix()[(i, j)];
                if i == j {
                    let want = si[0] as f64 * 1.0 + si[1] as f64 * 0.3;
                    assert_relative_eq!(el.re, want, max_relative = 1e-15);
                } else {
                    assert_eq!(el, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn key_matrix_elements() {
        let basis = build_basis(BasisSpec::single_mode(3, 3)).unwrap();
        let p = p0();
        let h = build_hamiltonian(&basis, &p).unwrap();
        // pair creation out of one phonon: (g/2) sqrt(2)
        let el = h.element(&[2, 0], &[0, 1]).unwrap();
        assert_relative_eq!(el.re, p.g / 2.0 * 2f64.sqrt(), max_relative = 1e-14);
        // photon-conserving channel raising the phonon
        let el = h.element(&[1, 1], &[1, 0]).unwrap();
        assert_relative_eq!(el.re, p.g, max_relative = 1e-14);
    }

    #[test]
    fn interaction_split_selection_rules() {
        let basis = build_basis(BasisSpec::single_mode(4, 4)).unwrap();
        let p = p0();
        let parts = split_interaction(&basis, &p).unwrap();
        let n = total_photon_number(&basis).unwrap();

        let comm = parts.v_om.mul(&n).unwrap().sub(&n.mul(&parts.v_om).unwrap()).unwrap();
        assert_eq!(comm.max_abs(), 0.0);

        assert!(parts.v_dce.element(&[0, 1], &[2, 0]).unwrap().norm() > 0.0);
        assert_eq!(parts.v_om.element(&[0, 1], &[2, 0]).unwrap().norm(), 0.0);

        let resum = parts.v_om.add(&parts.v_dce).unwrap();
        assert_eq!(resum.sub(&parts.v_total).unwrap().max_abs(), 0.0);

        let h = build_hamiltonian(&basis, &p).unwrap();
        let h0 = free_hamiltonian(&basis, &p).unwrap();
        let v = h.sub(&h0).unwrap();
        assert_eq!(v.sub(&parts.v_total).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn photon_parity_sectors_do_not_mix() {
        let basis = build_basis(BasisSpec::single_mode(5, 4)).unwrap();
        let h = build_hamiltonian(&basis, &p0()).unwrap();
        let pe = number_parity_projector(&basis, crate::fockspace::Mode::Photon(0), Parity::Even)
            .unwrap();
        let po = number_parity_projector(&basis, crate::fockspace::Mode::Photon(0), Parity::Odd)
            .unwrap();
        let cross = pe.mul(&h).unwrap().mul(&po).unwrap();
        assert_eq!(cross.max_abs(), 0.0);
    }

    #[test]
    fn rotating_wave_drops_pair_channel() {
        let basis = build_basis(BasisSpec::single_mode(4, 4)).unwrap();
        let p = p0();
        let h_rwa = build_hamiltonian_with(&basis, &p, false).unwrap();
        let h0 = free_hamiltonian(&basis, &p).unwrap();
        let parts = split_interaction(&basis, &p).unwrap();
        let diff = h_rwa.sub(&h0).unwrap().sub(&parts.v_om).unwrap();
        assert_eq!(diff.max_abs(), 0.0);
    }

    #[test]
    fn radiation_pressure_elements() {
        let basis = build_basis(BasisSpec::single_mode(4, 2)).unwrap();
        let p = p0();
        let f = radiation_pressure_operator(&basis, &p, false).unwrap();
        let f_no = radiation_pressure_operator(&basis, &p, true).unwrap();
        let f0 = p.omega_c() / 2.0;

        assert_relative_eq!(f.element(&[0, 0], &[0, 0]).unwrap().re, f0, max_relative = 1e-15);
        assert_eq!(f_no.element(&[0, 0], &[0, 0]).unwrap(), Complex64::new(0.0, 0.0));
        for op in [&f, &f_no] {
            let el = op.element(&[2, 0], &[0, 0]).unwrap();
            assert_relative_eq!(el.re, f0 * 2f64.sqrt(), max_relative = 1e-15);
        }
        assert!(f.hermiticity_defect() < 1e-12);
        assert!(f_no.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn multimode_hamiltonian_is_hermitian_and_couples_modes() {
        let p = derive_params(5e5, 4.5e4, 1.0, &[1, 2]).unwrap();
        let spec = BasisSpec {
            photon_cutoffs: vec![3, 3],
            phonon_cutoff: 3,
            dimension_limit: crate::fockspace::DEFAULT_DIMENSION_LIMIT,
        };
        let basis = build_basis(spec).unwrap();
        let h = build_hamiltonian(&basis, &p).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        // cross-mode pair creation out of one phonon via g[0][1]
        let el = h.element(&[1, 1, 0], &[0, 0, 1]).unwrap();
        let gm = p.g_matrix.as_ref().unwrap();
        assert_relative_eq!(el.re, gm[0][1], max_relative = 1e-13);
    }

    #[test]
    fn weak_coupling_warning_fires_only_when_strong() {
        assert!(p0().weak_coupling_warning().is_none());
        let strong = direct_params(1.0, 0.05, 0.01).unwrap();
        assert!(strong.weak_coupling_warning().is_some());
    }

    #[test]
    fn mode_count_mismatch_rejected() {
        let basis = build_basis(BasisSpec::single_mode(3, 3)).unwrap();
        let p = derive_params(5e5, 4.5e4, 1.0, &[1, 2]).unwrap();
        assert!(matches!(build_hamiltonian(&basis, &p), Err(Error::BasisMismatch(_))));
    }

    proptest! {
        #[test]
        fn hamiltonian_hermitian_and_linear_in_g(
            wc in 0.5f64..3.0,
            wm in 0.1f64..1.0,
            g in -0.05f64..0.05,
        ) {
            let basis = build_basis(BasisSpec::single_mode(3, 3)).unwrap();
            let p = direct_params(wc, wm, g).unwrap();
            let h = build_hamiltonian(&basis, &p).unwrap();
            prop_assert!(h.hermiticity_defect() < 1e-12);

            let doubled = split_interaction(&basis, &p.with_coupling_scale(2.0)).unwrap();
            let single = split_interaction(&basis, &p).unwrap();
            let diff = doubled
                .v_total
                .sub(&single.v_total.scale(Complex64::new(2.0, 0.0)))
                .unwrap();
            prop_assert!(diff.max_abs() < 1e-14);
        }
    }
}
