//! Unitary dynamics in the truncated basis: resonant phonon to photon-pair
//! conversion, time-ordered correlation functions in the dressed ground
//! state, and force-statistics cumulants.
//!
//! Everything evolves through the exact eigendecomposition; the published
//! closed forms (two-level oscillation, the force-force correlator) are
//! comparison targets, never the computation path. The force correlator
//! carries a known factor-2 question: the quoted coefficient is
//! omega_c^2/4L^2 while the Wick pairing of the same connected correlator
//! gives omega_c^2/2L^2. Both numbers ride along in `ForceStudy` and the
//! measurement decides; nothing here reconciles them silently.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::fockspace::{build_basis, BasisSpec, FockBasis, OperatorMatrix};
use crate::model::{self, ModelParams};
use crate::spectra::{self, Eigensystem};
use crate::{Error, Result};

/// Evolution must preserve norms to this tolerance; inputs are required
/// normalized to the same bar.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Relative detuning allowed by the resonant-conversion entry point.
pub const RESONANCE_TOL_REL: f64 = 1e-9;

/// Default time grid: this many uniform samples...
pub const GRID_POINTS: usize = 400;

/// ...spread over this many periods of the reference frequency.
pub const GRID_PERIODS: f64 = 4.0;

/// Uniform time grid on [0, span), `points` samples.
pub fn uniform_times(span: f64, points: usize) -> Vec<f64> {
    let step = span / points as f64;
    (0..points).map(|j| j as f64 * step).collect()
}

/// Grid covering `GRID_PERIODS` cycles of an angular frequency.
pub fn default_grid(omega: f64) -> Vec<f64> {
    uniform_times(GRID_PERIODS * std::f64::consts::TAU / omega, GRID_POINTS)
}

/// A Hamiltonian together with its eigendecomposition and a time grid.
/// U(t) = V exp(-i diag(E) t) V' is exact up to the eigensolve itself, so
/// arbitrary times cost one basis change each.
pub struct EvolutionPlan {
    h: OperatorMatrix,
    es: Eigensystem,
    times: Vec<f64>,
}

impl EvolutionPlan {
    pub fn new(h: OperatorMatrix, times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("time grid must be finite".into()));
        }
        let es = spectra::eigensystem(&h)?;
        Ok(EvolutionPlan { h, es, times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.h
    }

    pub fn basis(&self) -> &FockBasis {
        self.h.basis()
    }

    pub fn eigensystem(&self) -> &Eigensystem {
        &self.es
    }

    /// exp(-iHt) applied to a state, no norm precondition. Linear, so safe
    /// on the unnormalized intermediates of correlation functions.
    fn propagate(&self, state: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        let mut amps = self.es.eigenvectors().adjoint() * state;
        for (k, a) in amps.iter_mut().enumerate() {
            let phase = -self.es.eigenvalues()[k] * t;
            *a *= Complex64::from_polar(1.0, phase);
        }
        self.es.eigenvectors() * amps
    }

    /// U(t) on a normalized state.
    pub fn evolve(&self, state: &DVector<Complex64>, t: f64) -> Result<DVector<Complex64>> {
        if state.len() != self.h.dim() {
            return Err(Error::BasisMismatch(format!(
                "state length {} vs dimension {}",
                state.len(),
                self.h.dim()
            )));
        }
        if (state.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!(
                "evolve expects a normalized state, got norm {}",
                state.norm()
            )));
        }
        if !t.is_finite() {
            return Err(Error::Validation("evolution time must be finite".into()));
        }
        Ok(self.propagate(state, t))
    }

    /// The dressed eigenstate tracked from the bare vacuum label.
    pub fn tracked_ground(&self) -> Result<DVector<Complex64>> {
        let label = vec![0u32; self.basis().photon_modes() + 1];
        let d = spectra::track_dressed_state(&self.es, &label)?;
        Ok(self.es.eigenvector(d.eigen_index))
    }
}

/// Populations of the initial state and of the photon-pair state along a
/// time grid, for the phonon -> two-photon conversion process.
#[derive(Clone, Debug)]
pub struct ConversionSeries {
    pub times: Vec<f64>,
    /// |<initial|psi(t)>|^2
    pub survival: Vec<f64>,
    /// |<pair|psi(t)>|^2 with pair = |2,0>
    pub conversion: Vec<f64>,
    pub max_conversion: f64,
}

/// `ConversionSeries` plus the fitted oscillation frequency of the
/// survival probability.
#[derive(Clone, Debug)]
pub struct ResonantConversion {
    pub series: ConversionSeries,
    /// Dominant angular frequency of the survival series; the two-level
    /// picture predicts sqrt(2)|g|.
    pub frequency: f64,
}

/// Evolve |0,1> under the full Hamiltonian and record where it goes. No
/// resonance requirement; detuned runs measure suppressed conversion.
pub fn conversion_series(
    params: &ModelParams,
    cutoffs: (usize, usize),
    times: Vec<f64>,
) -> Result<ConversionSeries> {
    if params.mode_count() != 1 {
        return Err(Error::Validation("conversion is single-mode".into()));
    }
    let basis = build_basis(BasisSpec::single_mode(cutoffs.0, cutoffs.1))?;
    let h = model::build_hamiltonian(&basis, params)?;
    let initial = basis.basis_vector(&[0, 1])?;
    let pair = basis.basis_vector(&[2, 0])?;
    let plan = EvolutionPlan::new(h, times)?;

    let pops: Vec<(f64, f64)> = plan
        .times
        .par_iter()
        .map(|&t| {
            let psi = plan.propagate(&initial, t);
            (initial.dotc(&psi).norm_sqr(), pair.dotc(&psi).norm_sqr())
        })
        .collect();
    let survival: Vec<f64> = pops.iter().map(|p| p.0).collect();
    let conversion: Vec<f64> = pops.iter().map(|p| p.1).collect();
    let max_conversion = conversion.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(ConversionSeries {
        times: plan.times,
        survival,
        conversion,
        max_conversion,
    })
}

/// Resonant (omega_m = 2 omega_c) conversion with the oscillation
/// frequency extracted from the survival series. The grid spans two full
/// conversion periods of the expected sqrt(2)|g| splitting.
pub fn resonant_survival(params: &ModelParams, cutoffs: (usize, usize)) -> Result<ResonantConversion> {
    let wc = params.omega_c();
    let detuning = params.omega_m - 2.0 * wc;
    if detuning.abs() > RESONANCE_TOL_REL * wc.max(params.omega_m) {
        return Err(Error::ResonanceRequired(format!(
            "conversion needs omega_m = 2 omega_c, detuning {detuning:e}"
        )));
    }
    if params.g == 0.0 {
        return Err(Error::Validation(
            "free theory does not convert; nothing to fit".into(),
        ));
    }
    let splitting = std::f64::consts::SQRT_2 * params.g.abs();
    let times = uniform_times(2.0 * std::f64::consts::TAU / splitting, GRID_POINTS);
    let series = conversion_series(params, cutoffs, times)?;
    let frequency = dominant_frequency(&series.times, &series.survival)?;
    Ok(ResonantConversion { series, frequency })
}

/// Angular frequency of the single dominant oscillation in a real series on
/// a uniform grid, by least squares on the three-term recurrence
/// q(t+h) + q(t-h) = 2 cos(wh) q(t) + d. The affine term absorbs any
/// constant offset, so the fit is exact for A cos(wt + phi) + B;
/// contamination from a second, weaker line enters at the squared
/// amplitude ratio.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    let n = times.len();
    if n < 8 || values.len() != n {
        return Err(Error::Validation(format!(
            "need matching series of at least 8 points, got {n}/{}",
            values.len()
        )));
    }
    let h = times[1] - times[0];
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Validation("grid must be increasing".into()));
    }
    for j in 1..n {
        if ((times[j] - times[j - 1]) - h).abs() > 1e-9 * h {
            return Err(Error::Validation("grid must be uniform".into()));
        }
    }
    // mean subtraction is not needed for correctness, only conditioning
    let mean = values.iter().sum::<f64>() / n as f64;
    let q: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m = (n - 2) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for j in 1..n - 1 {
        let x = q[j];
        let y = q[j + 1] + q[j - 1];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let den = m * sxx - sx * sx;
    let scale = values.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    if den <= 1e-24 * m * m * scale * scale {
        return Err(Error::Validation(
            "series carries no oscillation to fit".into(),
        ));
    }
    let c = ((m * sxy - sx * sy) / (2.0 * den)).clamp(-1.0, 1.0);
    Ok(c.acos() / h)
}

/// One time-ordered two-point function in a fixed state.
#[derive(Clone, Debug)]
pub struct CorrelationResult {
    pub t1: f64,
    pub t2: f64,
    /// <s| T A(t1) B(t2) |s> with Heisenberg operators under the full H.
    pub value: Complex64,
    /// value minus <s|A|s><s|B|s>.
    pub connected: Complex64,
    pub time_ordered: bool,
}

/// Heisenberg-picture T[A(t1) B(t2)] expectation by three propagations:
/// later operator applied last, U factors folded into the state.
pub fn time_ordered_correlation(
    plan: &EvolutionPlan,
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    t1: f64,
    t2: f64,
    state: &DVector<Complex64>,
) -> Result<CorrelationResult> {
    if !a.basis().same_space(plan.basis()) || !b.basis().same_space(plan.basis()) {
        return Err(Error::BasisMismatch(
            "correlation operators live in a different basis than the plan".into(),
        ));
    }
    if state.len() != plan.h.dim() {
        return Err(Error::BasisMismatch(format!(
            "state length {} vs dimension {}",
            state.len(),
            plan.h.dim()
        )));
    }
    if (state.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Validation(format!(
            "correlation state must be normalized, got norm {}",
            state.norm()
        )));
    }
    // T puts the later time to the left; for t1 < t2 compute B(t2) A(t1)
    let (late_op, late_t, early_op, early_t) = if t1 >= t2 {
        (a, t1, b, t2)
    } else {
        (b, t2, a, t1)
    };
    let left = plan.propagate(state, late_t);
    let mut right = plan.propagate(state, early_t);
    right = early_op.apply(&right);
    right = plan.propagate(&right, late_t - early_t);
    right = late_op.apply(&right);
    let value = left.dotc(&right);
    let connected = value - a.expectation(state) * b.expectation(state);
    Ok(CorrelationResult {
        t1,
        t2,
        value,
        connected,
        time_ordered: true,
    })
}

/// Connected force-force correlator swept over a time grid, with the fitted
/// phase slope and the two candidate coefficients it discriminates.
#[derive(Clone, Debug)]
pub struct ForceStudy {
    pub normal_ordered: bool,
    pub length: f64,
    /// t1 - t2 along the grid (t2 = 0).
    pub dts: Vec<f64>,
    /// Connected T-ordered correlator at each separation.
    pub values: Vec<Complex64>,
    /// Fitted d(arg)/d(dt); the correlator predicts -2 omega_c.
    pub phase_slope: f64,
    /// Mean |connected| over the grid.
    pub measured_coefficient: f64,
    /// omega_c^2 / 4L^2, the quoted closed-form coefficient.
    pub quoted_coefficient: f64,
    /// 2 (omega_c/2L)^2 from Wick pairing of the connected part.
    pub wick_coefficient: f64,
}

/// Sweep the connected <T F(dt) F(0)> correlator in the dressed ground
/// state over `GRID_PERIODS` photon periods. The fitted phase slope is
/// checked against -2 omega_c at the percent level (weak-coupling
/// precondition); the precise tolerance assertions live in tests.
pub fn force_force_study(
    params: &ModelParams,
    cutoffs: (usize, usize),
    normal_ordered: bool,
    length: Option<f64>,
) -> Result<ForceStudy> {
    if params.mode_count() != 1 {
        return Err(Error::Validation("force study is single-mode".into()));
    }
    let wc = params.omega_c();
    let length = length.unwrap_or_else(|| {
        params
            .physical
            .as_ref()
            .map(|p| p.cavity_length)
            .unwrap_or(1.0)
    });
    let basis = build_basis(BasisSpec::single_mode(cutoffs.0, cutoffs.1))?;
    let h = model::build_hamiltonian(&basis, params)?;
    let f = model::radiation_pressure_with_length(&basis, params, normal_ordered, length)?;
    let plan = EvolutionPlan::new(h, default_grid(wc))?;
    let ground = plan.tracked_ground()?;

    let values: Vec<Complex64> = plan
        .times
        .par_iter()
        .map(|&dt| Ok(time_ordered_correlation(&plan, &f, &f, dt, 0.0, &ground)?.connected))
        .collect::<Result<_>>()?;

    let phase_slope = phase_slope(&plan.times, &values)?;
    let expected = -2.0 * wc;
    if (phase_slope - expected).abs() > 0.01 * wc {
        return Err(Error::Convergence(format!(
            "force correlator phase slope {phase_slope} is far from {expected}; \
             coupling too strong for the two-point picture"
        )));
    }
    let measured_coefficient =
        values.iter().map(|v| v.norm()).sum::<f64>() / values.len() as f64;
    let scale = wc / (2.0 * length);
    Ok(ForceStudy {
        normal_ordered,
        length,
        dts: plan.times,
        values,
        phase_slope,
        measured_coefficient,
        quoted_coefficient: wc * wc / (4.0 * length * length),
        wick_coefficient: 2.0 * scale * scale,
    })
}

/// Least-squares slope of the unwrapped phase of a complex series against
/// time. Steps must stay under pi per sample for the unwrap to be faithful.
pub fn phase_slope(times: &[f64], values: &[Complex64]) -> Result<f64> {
    let n = times.len();
    if n < 2 || values.len() != n {
        return Err(Error::Validation(format!(
            "need matching series of at least 2 points, got {n}/{}",
            values.len()
        )));
    }
    let floor = values.iter().map(|v| v.norm()).fold(0.0f64, f64::max) * 1e-12;
    let mut phases = Vec::with_capacity(n);
    let mut prev = 0.0f64;
    let mut offset = 0.0f64;
    for (j, v) in values.iter().enumerate() {
        if v.norm() <= floor {
            return Err(Error::Validation(format!(
                "series magnitude vanishes at sample {j}; phase undefined"
            )));
        }
        let raw = v.arg();
        if j > 0 {
            let mut d = raw + offset - prev;
            while d > std::f64::consts::PI {
                offset -= std::f64::consts::TAU;
                d -= std::f64::consts::TAU;
            }
            while d < -std::f64::consts::PI {
                offset += std::f64::consts::TAU;
                d += std::f64::consts::TAU;
            }
        }
        prev = raw + offset;
        phases.push(prev);
    }
    let nf = n as f64;
    let sx: f64 = times.iter().sum();
    let sy: f64 = phases.iter().sum();
    let sxx: f64 = times.iter().map(|t| t * t).sum();
    let sxy: f64 = times.iter().zip(&phases).map(|(t, p)| t * p).sum();
    let den = nf * sxx - sx * sx;
    if den == 0.0 {
        return Err(Error::Validation("degenerate time grid".into()));
    }
    Ok((nf * sxy - sx * sy) / den)
}

/// Central moments 2..4 of a Hermitian operator in a fixed state, plus the
/// excess kurtosis that exposes non-Gaussian statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cumulants {
    pub mean: f64,
    pub variance: f64,
    /// Third central moment; 0 for any Gaussian distribution.
    pub third: f64,
    /// Fourth central moment.
    pub fourth: f64,
    /// fourth/variance^2 - 3; 0 for Gaussian statistics.
    pub excess_kurtosis: f64,
}

pub fn operator_cumulants(op: &OperatorMatrix, state: &DVector<Complex64>) -> Result<Cumulants> {
    let scale = op.max_abs().max(1.0);
    let defect = op.hermiticity_defect();
    if defect > 1e-10 * scale {
        return Err(Error::NonHermitian { defect });
    }
    if state.len() != op.dim() {
        return Err(Error::BasisMismatch(format!(
            "state length {} vs dimension {}",
            state.len(),
            op.dim()
        )));
    }
    if (state.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Validation(format!(
            "cumulants need a normalized state, got norm {}",
            state.norm()
        )));
    }
    let mean = op.expectation(state).re;
    let centered = state * Complex64::new(mean, 0.0);
    let phi1 = op.apply(state) - centered;
    let variance = phi1.norm_squared();
    let phi2 = op.apply(&phi1) - &phi1 * Complex64::new(mean, 0.0);
    let third = phi1.dotc(&phi2).re;
    let fourth = phi2.norm_squared();
    let excess_kurtosis = if variance > 0.0 {
        fourth / (variance * variance) - 3.0
    } else {
        0.0
    };
    Ok(Cumulants {
        mean,
        variance,
        third,
        fourth,
        excess_kurtosis,
    })
}

/// Cumulants of the radiation-pressure operator in the dressed ground
/// state. The truncated fourth power is exact as long as the photon cutoff
/// leaves 4 quanta of headroom above the state's support.
pub fn force_cumulants(
    params: &ModelParams,
    cutoffs: (usize, usize),
    normal_ordered: bool,
) -> Result<Cumulants> {
    if params.mode_count() != 1 {
        return Err(Error::Validation("force cumulants are single-mode".into()));
    }
    let basis = build_basis(BasisSpec::single_mode(cutoffs.0, cutoffs.1))?;
    let h = model::build_hamiltonian(&basis, params)?;
    let f = model::radiation_pressure_operator(&basis, params, normal_ordered)?;
    let plan = EvolutionPlan::new(h, Vec::new())?;
    let ground = plan.tracked_ground()?;
    operator_cumulants(&f, &ground)
}

/// Render a time series as CSV with a one-line JSON header comment. The
/// output is deterministic: shortest round-trip float formatting, no
/// locale, no timestamps.
pub fn render_time_series(
    header: &impl Serialize,
    times: &[f64],
    values: &[Complex64],
) -> Result<String> {
    if times.len() != values.len() {
        return Err(Error::Validation(format!(
            "series length mismatch: {} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(
        &serde_json::to_string(header)
            .map_err(|e| Error::Validation(format!("header does not serialize: {e}")))?,
    );
    out.push('\n');
    out.push_str("t,re,im\n");
    for (t, v) in times.iter().zip(values) {
        out.push_str(&format!("{},{},{}\n", t, v.re, v.im));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{number_parity_projector, Mode, Parity};
    use approx::assert_relative_eq;

    fn bench() -> ModelParams {
        model::direct_params(1.0, 0.3, 0.01).unwrap()
    }

    fn bench_plan(params: &ModelParams, cutoffs: (usize, usize), times: Vec<f64>) -> EvolutionPlan {
        let basis = build_basis(BasisSpec::single_mode(cutoffs.0, cutoffs.1)).unwrap();
        let h = model::build_hamiltonian(&basis, params).unwrap();
        EvolutionPlan::new(h, times).unwrap()
    }

    #[test]
    fn evolve_at_zero_time_is_identity() {
        let plan = bench_plan(&bench(), (4, 4), vec![0.0]);
        let psi = plan.basis().basis_vector(&[1, 2]).unwrap();
        let out = plan.evolve(&psi, 0.0).unwrap();
        assert!((out - psi).norm() < 1e-10);
    }

    #[test]
    fn free_evolution_is_a_phase() {
        let free = model::direct_params(1.0, 0.3, 0.0).unwrap();
        let plan = bench_plan(&free, (4, 4), vec![]);
        let psi = plan.basis().basis_vector(&[1, 0]).unwrap();
        for t in [0.3, 1.0, 7.5] {
            let out = plan.evolve(&psi, t).unwrap();
            let amp = psi.dotc(&out);
            let expect = Complex64::from_polar(1.0, -t);
            assert!((amp - expect).norm() < 1e-10, "t={t}: {amp}");
            // nothing leaks anywhere else
            assert!((out.norm_squared() - amp.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn unitarity_and_composition() {
        let plan = bench_plan(&bench(), (5, 5), uniform_times(40.0, 16));
        // fixed superposition with irrational-ish weights
        let mut psi = plan.basis().basis_vector(&[0, 0]).unwrap();
        psi += plan.basis().basis_vector(&[2, 1]).unwrap() * Complex64::new(0.5, 0.25);
        psi += plan.basis().basis_vector(&[1, 3]).unwrap() * Complex64::new(-0.3, 0.6);
        psi /= Complex64::new(psi.norm(), 0.0);

        for &t in plan.times() {
            let out = plan.evolve(&psi, t).unwrap();
            assert!((out.norm() - 1.0).abs() < UNITARITY_TOL, "t={t}");
        }
        let t1 = 3.7;
        let t2 = 11.9;
        let two_step = plan.evolve(&plan.evolve(&psi, t2).unwrap(), t1).unwrap();
        let one_step = plan.evolve(&psi, t1 + t2).unwrap();
        assert!((two_step - one_step).norm() < UNITARITY_TOL);
    }

    #[test]
    fn evolve_rejects_bad_inputs() {
        let plan = bench_plan(&bench(), (3, 3), vec![]);
        let psi = plan.basis().basis_vector(&[0, 0]).unwrap();
        let double = &psi * Complex64::new(2.0, 0.0);
        assert!(matches!(
            plan.evolve(&double, 1.0).unwrap_err(),
            Error::Validation(_)
        ));
        assert!(matches!(
            plan.evolve(&psi, f64::NAN).unwrap_err(),
            Error::Validation(_)
        ));
        let short = DVector::zeros(3);
        assert!(matches!(
            plan.evolve(&short, 1.0).unwrap_err(),
            Error::BasisMismatch(_)
        ));
    }

    #[test]
    fn plan_rejects_non_hermitian() {
        let basis = build_basis(BasisSpec::single_mode(2, 2)).unwrap();
        let raising = crate::fockspace::ladder_matrix(&basis, Mode::Photon(0), crate::fockspace::Ladder::Raise).unwrap();
        match EvolutionPlan::new(raising, vec![]) {
            Err(Error::NonHermitian { .. }) => {}
            Err(e) => panic!("wrong error: {e}"),
            Ok(_) => panic!("accepted a non-Hermitian generator"),
        }
    }

    #[test]
    fn resonant_conversion_oscillates_at_the_split() {
        let p = model::direct_params(2.0, 4.0, 0.01).unwrap();
        let run = resonant_survival(&p, (6, 5)).unwrap();
        assert_relative_eq!(run.series.survival[0], 1.0, epsilon = 1e-12);
        let expected = std::f64::consts::SQRT_2 * 0.01;
        assert!(
            (run.frequency - expected).abs() < 1e-4,
            "frequency {} vs {expected}",
            run.frequency
        );
        assert!(run.series.max_conversion > 0.9);
        let min = run.series.survival.iter().cloned().fold(1.0f64, f64::min);
        assert!(min < 0.05, "survival floor {min}");
    }

    #[test]
    fn resonant_conversion_conserves_energy_and_parity() {
        let p = model::direct_params(2.0, 4.0, 0.01).unwrap();
        let plan = bench_plan(&p, (6, 5), uniform_times(500.0, 11));
        let psi0 = plan.basis().basis_vector(&[0, 1]).unwrap();
        let even = number_parity_projector(plan.basis(), Mode::Photon(0), Parity::Even).unwrap();
        let e0 = plan.hamiltonian().expectation(&psi0).re;
        let scale = plan.hamiltonian().max_abs();
        for &t in plan.times() {
            let psi = plan.evolve(&psi0, t).unwrap();
            let e = plan.hamiltonian().expectation(&psi).re;
            assert!((e - e0).abs() < 1e-10 * scale, "t={t}: energy drift {}", e - e0);
            let p_even = even.expectation(&psi).re;
            assert!((p_even - 1.0).abs() < 1e-10, "t={t}: parity leak {p_even}");
        }
    }

    #[test]
    fn detuned_conversion_is_suppressed() {
        // ten couplings of detuning push the two-level peak to
        // delta^2/(delta^2+split^2) ~ 0.02
        let g = 0.01;
        let p = model::direct_params(2.0, 4.0 + 10.0 * g, g).unwrap();
        let split = std::f64::consts::SQRT_2 * g;
        let rabi = (split * split + 100.0 * g * g).sqrt();
        let series = conversion_series(
            &p,
            (6, 5),
            uniform_times(2.0 * std::f64::consts::TAU / rabi, GRID_POINTS),
        )
        .unwrap();
        assert!(series.max_conversion < 0.1, "max {}", series.max_conversion);
        assert!(series.max_conversion > 0.005, "max {}", series.max_conversion);
        assert!(matches!(
            resonant_survival(&p, (6, 5)).unwrap_err(),
            Error::ResonanceRequired(_)
        ));
    }

    #[test]
    fn dominant_frequency_recovers_synthetic_lines() {
        let times = uniform_times(70.0, 400);
        let w = 0.8123;
        let vals: Vec<f64> = times.iter().map(|t| 0.4 + 0.3 * (w * t + 0.7).cos()).collect();
        let got = dominant_frequency(&times, &vals).unwrap();
        assert_relative_eq!(got, w, max_relative = 1e-10);

        let flat: Vec<f64> = times.iter().map(|_| 0.25).collect();
        assert!(dominant_frequency(&times, &flat).is_err());

        let mut bad = times.clone();
        bad[17] += 0.01;
        assert!(dominant_frequency(&bad, &vals).is_err());
    }

    #[test]
    fn correlation_identity_and_equal_times() {
        let p = bench();
        let plan = bench_plan(&p, (6, 6), vec![]);
        let ground = plan.tracked_ground().unwrap();
        let id = OperatorMatrix::identity(plan.basis());
        let r = time_ordered_correlation(&plan, &id, &id, 1.3, 0.2, &ground).unwrap();
        assert!((r.value - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(r.connected.norm() < 1e-12);

        let f = model::radiation_pressure_operator(plan.basis(), &p, false).unwrap();
        let r = time_ordered_correlation(&plan, &f, &f, 0.7, 0.7, &ground).unwrap();
        let f_ground = f.apply(&ground);
        assert_relative_eq!(r.value.re, f_ground.norm_squared(), max_relative = 1e-12);
        assert!(r.value.im.abs() < 1e-12);
    }

    #[test]
    fn free_two_point_function() {
        let free = model::direct_params(1.0, 0.3, 0.0).unwrap();
        let plan = bench_plan(&free, (5, 5), vec![]);
        let vac = plan.basis().basis_vector(&[0, 0]).unwrap();
        let a = crate::fockspace::ladder_matrix(plan.basis(), Mode::Photon(0), crate::fockspace::Ladder::Lower).unwrap();
        let x = a.add(&a.adjoint()).unwrap();
        for (t1, t2) in [(2.0, 0.5), (0.5, 2.0), (4.0, 4.0)] {
            let r = time_ordered_correlation(&plan, &x, &x, t1, t2, &vac).unwrap();
            let expect = Complex64::from_polar(1.0, -(t1 - t2).abs());
            assert!((r.value - expect).norm() < 1e-10, "t1={t1} t2={t2}: {}", r.value);
            // connected equals value: <x> = 0 in the vacuum
            assert!((r.connected - r.value).norm() < 1e-12);
        }
        // swap symmetry of the time-ordered product
        let ab = time_ordered_correlation(&plan, &x, &x, 2.0, 0.5, &vac).unwrap();
        let ba = time_ordered_correlation(&plan, &x, &x, 0.5, 2.0, &vac).unwrap();
        assert_eq!(ab.value, ba.value);
    }

    #[test]
    fn correlation_is_translation_invariant_at_g0() {
        let free = model::direct_params(1.0, 0.3, 0.0).unwrap();
        let plan = bench_plan(&free, (5, 5), vec![]);
        let vac = plan.basis().basis_vector(&[0, 0]).unwrap();
        let f = model::radiation_pressure_operator(plan.basis(), &free, false).unwrap();
        let base = time_ordered_correlation(&plan, &f, &f, 1.1, 0.4, &vac).unwrap();
        for shift in [0.9, 3.3, -2.0] {
            let moved =
                time_ordered_correlation(&plan, &f, &f, 1.1 + shift, 0.4 + shift, &vac).unwrap();
            assert!(
                (moved.connected - base.connected).norm() < 1e-10,
                "shift {shift}: {} vs {}",
                moved.connected,
                base.connected
            );
        }
    }

    #[test]
    fn force_study_free_theory() {
        let free = model::direct_params(1.0, 0.3, 0.0).unwrap();
        for flag in [false, true] {
            let study = force_force_study(&free, (6, 4), flag, None).unwrap();
            // connected coefficient 2 (wc/2L)^2 = 0.5 either way; the
            // quoted closed form says 0.25
            assert_relative_eq!(study.measured_coefficient, 0.5, max_relative = 1e-10);
            assert_relative_eq!(study.wick_coefficient, 0.5, max_relative = 1e-15);
            assert_relative_eq!(study.quoted_coefficient, 0.25, max_relative = 1e-15);
            assert!(
                (study.phase_slope + 2.0).abs() < 1e-6,
                "slope {}",
                study.phase_slope
            );
            for (dt, v) in study.dts.iter().zip(&study.values) {
                let expect = Complex64::from_polar(0.5, -2.0 * dt);
                assert!((v - expect).norm() < 1e-10, "dt={dt}");
            }
        }
    }

    #[test]
    fn force_study_weak_coupling_stays_close() {
        // phonon sidebands carry relative weight (2g/omega_m)^2 ~ 4e-3 and
        // drag the fitted slope by about that times omega_m
        let study = force_force_study(&bench(), (8, 8), false, None).unwrap();
        assert!((study.phase_slope + 2.0).abs() < 5e-3, "slope {}", study.phase_slope);
        assert_relative_eq!(study.measured_coefficient, 0.5, max_relative = 1e-2);
    }

    #[test]
    fn force_coefficient_scales_inverse_square_in_length() {
        let free = model::direct_params(1.0, 0.3, 0.0).unwrap();
        let unit = force_force_study(&free, (6, 4), false, Some(1.0)).unwrap();
        let double = force_force_study(&free, (6, 4), false, Some(2.0)).unwrap();
        assert_relative_eq!(
            unit.measured_coefficient / double.measured_coefficient,
            4.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            unit.quoted_coefficient / double.quoted_coefficient,
            4.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn force_cumulants_free_theory() {
        let free = model::direct_params(1.0, 0.3, 0.0).unwrap();
        let c = 0.5; // omega_c / 2L at L = 1
        for flag in [false, true] {
            let k = force_cumulants(&free, (6, 4), flag).unwrap();
            let mean = if flag { 0.0 } else { c };
            assert_relative_eq!(k.mean, mean, epsilon = 1e-12);
            assert_relative_eq!(k.variance, 2.0 * c * c, max_relative = 1e-12);
            assert_relative_eq!(k.third, 8.0 * c * c * c, max_relative = 1e-12);
            assert_relative_eq!(k.fourth, 60.0 * c * c * c * c, max_relative = 1e-12);
            assert_relative_eq!(k.excess_kurtosis, 12.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadrature_is_gaussian_in_the_vacuum() {
        let basis = build_basis(BasisSpec::single_mode(6, 2)).unwrap();
        let a = crate::fockspace::ladder_matrix(&basis, Mode::Photon(0), crate::fockspace::Ladder::Lower).unwrap();
        let x = a.add(&a.adjoint()).unwrap();
        let vac = basis.basis_vector(&[0, 0]).unwrap();
        let k = operator_cumulants(&x, &vac).unwrap();
        assert!(k.mean.abs() < 1e-12);
        assert_relative_eq!(k.variance, 1.0, max_relative = 1e-12);
        assert!(k.third.abs() < 1e-8);
        assert!((k.fourth - 3.0).abs() < 1e-8);
        assert!(k.excess_kurtosis.abs() < 1e-8);

        assert!(matches!(
            operator_cumulants(&a, &vac).unwrap_err(),
            Error::NonHermitian { .. }
        ));
    }

    #[test]
    fn weak_coupling_cumulants_stay_non_gaussian() {
        let k = force_cumulants(&bench(), (8, 8), false).unwrap();
        assert_relative_eq!(k.excess_kurtosis, 12.0, max_relative = 1e-2);
        assert!(k.third > 0.0);
    }

    #[test]
    fn csv_rendering_is_pinned_and_deterministic() {
        #[derive(Serialize)]
        struct Header {
            omega_c: f64,
            flag: bool,
        }
        let header = Header {
            omega_c: 1.0,
            flag: false,
        };
        let times = [0.0, 0.5];
        let values = [Complex64::new(1.0, 0.0), Complex64::new(0.25, -0.125)];
        let got = render_time_series(&header, &times, &values).unwrap();
        let expect = "# {\"omega_c\":1.0,\"flag\":false}\nt,re,im\n0,1,0\n0.5,0.25,-0.125\n";
        assert_eq!(got, expect);
        assert_eq!(got, render_time_series(&header, &times, &values).unwrap());

        assert!(render_time_series(&header, &times, &values[..1]).is_err());
    }
}
