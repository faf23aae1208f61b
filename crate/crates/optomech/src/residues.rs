//! Exact residue evaluation of loop-energy integrals: products of single
//! retarded poles over linear combinations of loop energies, with delta
//! constraints. Everything inside this module is rational arithmetic; floats
//! exist only at the reporting edge (`to_f64`).
//!
//! Conventions. A propagator factor is i/(form + i*eps) where eps is an
//! orientation tag, never a number; each factor gets its own tag, and
//! residue substitutions combine tags as formal sums so later contour
//! decisions stay exact. Each integration carries dE/2pi and each delta a
//! 2pi; resolving a delta cancels one pair, so no pi ever reaches the value.
//! Contours close in the lower half-plane (forward-only propagation), which
//! makes an integrand whose poles all sit in one half-plane vanish, since
//! either the contour is empty or the residues sum to zero. An integral over
//! a variable held by a single factor is taken as zero as well: the one-pole
//! arc is the equal-time edge case of the step function, and the vanishing
//! convention extends to it.
//!
//! Pinched poles (coinciding positions pushed from opposite half-planes) are
//! errors carrying the pinch location, not large numbers. Coinciding
//! positions from the same half-plane would need a higher-order residue and
//! are rejected.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{One, Signed, Zero};
use num_complex::{Complex, Complex64};

use crate::{Error, Result};

pub type Rat = Ratio<BigInt>;
pub type CRat = Complex<Rat>;

pub fn rat(num: i64, den: i64) -> Rat {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}

pub fn crat(re: Rat, im: Rat) -> CRat {
    Complex::new(re, im)
}

/// Purely imaginary rational, im * i.
pub fn imag(im: Rat) -> CRat {
    Complex::new(Rat::zero(), im)
}

pub fn to_f64(z: &CRat) -> Complex64 {
    use num::ToPrimitive;
    Complex64::new(
        z.re.to_f64().unwrap_or(f64::NAN),
        z.im.to_f64().unwrap_or(f64::NAN),
    )
}

/// Exact rational with the same value as the float. Every finite f64 is a
/// dyadic rational, so nothing is lost crossing in this direction.
pub fn rat_from_f64(x: f64) -> Result<Rat> {
    Ratio::from_float(x).ok_or_else(|| Error::Validation(format!("not a finite number: {x}")))
}

fn crat_scale(z: &CRat, c: &Rat) -> CRat {
    Complex::new(&z.re * c, &z.im * c)
}

/// Rational linear combination of named energies plus an offset.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinearForm {
    terms: BTreeMap<String, Rat>,
    offset: Rat,
}

impl LinearForm {
    pub fn zero() -> Self {
        LinearForm::default()
    }

    pub fn var(name: &str) -> Self {
        let mut f = LinearForm::default();
        f.add_term(name, Rat::one());
        f
    }

    pub fn cst(offset: Rat) -> Self {
        LinearForm { terms: BTreeMap::new(), offset }
    }

    pub fn coeff(&self, var: &str) -> Rat {
        self.terms.get(var).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn offset(&self) -> &Rat {
        &self.offset
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(|s| s.as_str())
    }

    fn add_term(&mut self, var: &str, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(var.to_string()).or_insert_with(Rat::zero);
        *entry = &*entry + c;
        if entry.is_zero() {
            self.terms.remove(var);
        }
    }

    fn scaled(&self, c: &Rat) -> LinearForm {
        if c.is_zero() {
            return LinearForm::zero();
        }
        LinearForm {
            terms: self.terms.iter().map(|(v, x)| (v.clone(), x * c)).collect(),
            offset: &self.offset * c,
        }
    }

    /// Form with `var` removed and `replacement` scaled in by var's
    /// coefficient.
    fn substitute(&self, var: &str, replacement: &LinearForm) -> LinearForm {
        let c = self.coeff(var);
        if c.is_zero() {
            return self.clone();
        }
        let mut out = self.clone();
        out.terms.remove(var);
        for (v, x) in &replacement.terms {
            out.add_term(v, x * &c);
        }
        out.offset = &out.offset + &replacement.offset * &c;
        out
    }
}

impl std::ops::Add for LinearForm {
    type Output = LinearForm;
    fn add(mut self, rhs: LinearForm) -> LinearForm {
        for (v, c) in rhs.terms {
            self.add_term(&v, c);
        }
        self.offset = &self.offset + rhs.offset;
        self
    }
}

impl std::ops::Sub for LinearForm {
    type Output = LinearForm;
    fn sub(self, rhs: LinearForm) -> LinearForm {
        self + rhs.scaled(&rat(-1, 1))
    }
}

impl std::ops::Neg for LinearForm {
    type Output = LinearForm;
    fn neg(self) -> LinearForm {
        self.scaled(&rat(-1, 1))
    }
}

impl fmt::Display for LinearForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut tokens: Vec<String> = Vec::new();
        for (v, c) in &self.terms {
            if c == &Rat::one() {
                tokens.push(v.clone());
            } else if c == &rat(-1, 1) {
                tokens.push(format!("-{v}"));
            } else {
                tokens.push(format!("{c}*{v}"));
            }
        }
        if !self.offset.is_zero() || tokens.is_empty() {
            tokens.push(format!("{}", self.offset));
        }
        write!(f, "{}", tokens.join(" + "))
    }
}

/// Sign of the infinitesimal at construction: i/(form - omega + i eps) is
/// the forward (retarded) line; Advanced flips the half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Retarded,
    Advanced,
}

/// One propagator line: i / (denom + i * sum of tagged infinitesimals).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PoleFactor {
    denom: LinearForm,
    eps: BTreeMap<usize, Rat>,
}

impl PoleFactor {
    fn eps_substituted(&self, scale_eps: &BTreeMap<usize, Rat>, c: &Rat) -> BTreeMap<usize, Rat> {
        let mut out = self.eps.clone();
        for (id, x) in scale_eps {
            let entry = out.entry(*id).or_insert_with(Rat::zero);
            *entry = &*entry + x * c;
            if entry.is_zero() {
                out.remove(id);
            }
        }
        out
    }
}

impl fmt::Display for PoleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let eps = LinearForm {
            terms: self.eps.iter().map(|(id, c)| (format!("e{id}"), c.clone())).collect(),
            offset: Rat::zero(),
        };
        write!(f, "i/({} + i*({}))", self.denom, eps)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// A loop-energy integral: prefactor times pole factors times 2pi-tagged
/// deltas, integrated dv/2pi over each loop variable in order.
///
/// External parameters enter as exact rational numbers inside the forms;
/// only loop variables are symbolic.
#[derive(Clone, Debug)]
pub struct Integrand {
    prefactor: CRat,
    factors: Vec<PoleFactor>,
    deltas: Vec<LinearForm>,
    loop_vars: Vec<String>,
    next_eps: usize,
}

impl Integrand {
    pub fn new(prefactor: CRat) -> Self {
        Integrand {
            prefactor,
            factors: Vec::new(),
            deltas: Vec::new(),
            loop_vars: Vec::new(),
            next_eps: 0,
        }
    }

    pub fn loop_var(mut self, name: &str) -> Self {
        self.loop_vars.push(name.to_string());
        self
    }

    /// Forward line i/(form - omega + i eps).
    pub fn pole(self, form: LinearForm, omega: Rat) -> Self {
        self.pole_oriented(form, omega, Orientation::Retarded)
    }

    pub fn pole_oriented(mut self, form: LinearForm, omega: Rat, o: Orientation) -> Self {
        let sign = match o {
            Orientation::Retarded => Rat::one(),
            Orientation::Advanced => rat(-1, 1),
        };
        let mut eps = BTreeMap::new();
        eps.insert(self.next_eps, sign);
        self.next_eps += 1;
        self.factors.push(PoleFactor {
            denom: form - LinearForm::cst(omega),
            eps,
        });
        self
    }

    /// 2pi delta(form).
    pub fn delta(mut self, form: LinearForm) -> Self {
        self.deltas.push(form);
        self
    }

    pub fn scale(mut self, c: CRat) -> Self {
        self.prefactor = self.prefactor * c;
        self
    }

    pub fn prefactor(&self) -> &CRat {
        &self.prefactor
    }

    pub fn loop_vars(&self) -> &[String] {
        &self.loop_vars
    }

    pub fn is_settled(&self) -> bool {
        self.loop_vars.is_empty() && self.factors.is_empty() && self.deltas.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.loop_vars {
            if !seen.insert(v.as_str()) {
                return Err(Error::Validation(format!("duplicate loop variable {v}")));
            }
        }
        let forms = self.factors.iter().map(|f| &f.denom).chain(self.deltas.iter());
        for form in forms {
            for v in form.vars() {
                if !seen.contains(v) {
                    return Err(Error::Validation(format!(
                        "variable {v} is not declared as a loop variable"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Turns every variable-free factor into a prefactor multiple i/offset.
    fn fold_constants(mut self) -> Result<Self> {
        let mut kept = Vec::with_capacity(self.factors.len());
        for f in self.factors {
            if f.denom.is_constant() {
                if f.denom.offset().is_zero() {
                    return Err(Error::SingularIntegral(format!(
                        "propagator on shell after reduction: {f}"
                    )));
                }
                self.prefactor = self.prefactor * imag(f.denom.offset().recip());
            } else {
                kept.push(f);
            }
        }
        self.factors = kept;
        Ok(self)
    }
}

impl fmt::Display for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.loop_vars {
            write!(f, "int d{v}/2pi ")?;
        }
        write!(f, "[{} + {} i]", self.prefactor.re, self.prefactor.im)?;
        let mut deltas = self.deltas.clone();
        deltas.sort();
        for d in &deltas {
            write!(f, " * 2pi*delta({d})")?;
        }
        let mut factors = self.factors.clone();
        factors.sort();
        for p in &factors {
            write!(f, " * {p}")?;
        }
        Ok(())
    }
}

/// Substitutes every delta away, consuming one loop variable each; the 2pi
/// of the delta cancels the 1/2pi of the consumed integration, and the
/// Jacobian 1/|c| multiplies the prefactor.
pub fn resolve_deltas(input: &Integrand) -> Result<Integrand> {
    let mut cur = input.clone();
    while !cur.deltas.is_empty() {
        let delta = cur.deltas.remove(0);
        if delta.is_constant() {
            return Err(if delta.offset().is_zero() {
                Error::Constraint("redundant delta constraint delta(0)".into())
            } else {
                Error::Constraint(format!(
                    "inconsistent delta constraint delta({})",
                    delta.offset()
                ))
            });
        }
        // eliminate the delta variable latest in the declared order
        let var = cur
            .loop_vars
            .iter()
            .rev()
            .find(|v| !delta.coeff(v).is_zero())
            .cloned()
            .expect("delta variables are loop variables");
        let c = delta.coeff(&var);
        let mut rest = delta.clone();
        rest.terms.remove(&var);
        let replacement = rest.scaled(&(-c.recip()));

        for f in &mut cur.factors {
            f.denom = f.denom.substitute(&var, &replacement);
        }
        for d in &mut cur.deltas {
            *d = d.substitute(&var, &replacement);
        }
        cur.prefactor = crat_scale(&cur.prefactor, &c.abs().recip());
        cur.loop_vars.retain(|v| v != &var);
    }
    cur.fold_constants()
}

struct ClassifiedPole {
    factor_idx: usize,
    /// Real position of the pole as a form over the remaining variables.
    position: LinearForm,
    /// Imaginary drift of the pole: var = position + i * drift.
    drift: BTreeMap<usize, Rat>,
    coeff: Rat,
    side: Side,
}

fn classify(f: &PoleFactor, idx: usize, var: &str) -> Result<ClassifiedPole> {
    let c = f.denom.coeff(var);
    let mut rest = f.denom.clone();
    rest.terms.remove(var);
    let position = rest.scaled(&(-c.clone().recip()));

    if f.eps.is_empty() {
        return Err(Error::Validation(format!(
            "pole without orientation tag in {var}: {f}"
        )));
    }
    let mut pos = false;
    let mut neg = false;
    for x in f.eps.values() {
        if x.is_positive() {
            pos = true;
        } else {
            neg = true;
        }
    }
    if pos && neg {
        return Err(Error::Validation(format!(
            "ambiguous pole orientation (mixed infinitesimals) in {var}: {f}"
        )));
    }
    // var = position - i*eps/c: below the axis iff eps-sign/c > 0
    let eps_positive = pos;
    let side = if eps_positive == c.is_positive() {
        Side::Lower
    } else {
        Side::Upper
    };
    let neg_inv_c = -c.clone().recip();
    let drift: BTreeMap<usize, Rat> =
        f.eps.iter().map(|(id, x)| (*id, x * &neg_inv_c)).collect();
    Ok(ClassifiedPole {
        factor_idx: idx,
        position,
        drift,
        coeff: c,
        side,
    })
}

/// One residue reduction: integrates dvar/2pi by closing below, returning
/// one integrand per enclosed pole (empty when the integral vanishes).
pub fn integrate_loop(input: &Integrand, var: &str) -> Result<Vec<Integrand>> {
    if !input.deltas.is_empty() {
        return Err(Error::Validation("resolve deltas before integrating".into()));
    }
    if !input.loop_vars.iter().any(|v| v == var) {
        return Err(Error::Validation(format!("{var} is not a loop variable")));
    }

    let holders: Vec<usize> = input
        .factors
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.denom.coeff(var).is_zero())
        .map(|(i, _)| i)
        .collect();
    if holders.is_empty() {
        return Err(Error::Validation(format!(
            "loop variable {var} appears in no factor"
        )));
    }
    if holders.len() == 1 {
        // single line: equal-time step-function edge, taken as zero
        return Ok(Vec::new());
    }

    let poles: Vec<ClassifiedPole> = holders
        .iter()
        .map(|&i| classify(&input.factors[i], i, var))
        .collect::<Result<_>>()?;

    let lower: Vec<&ClassifiedPole> = poles.iter().filter(|p| p.side == Side::Lower).collect();
    let upper: Vec<&ClassifiedPole> = poles.iter().filter(|p| p.side == Side::Upper).collect();

    for lo in &lower {
        for up in &upper {
            if lo.position == up.position {
                return Err(Error::SingularIntegral(format!(
                    "pinched poles in {var} at {}",
                    lo.position
                )));
            }
        }
    }
    for (a, pa) in lower.iter().enumerate() {
        for pb in lower.iter().skip(a + 1) {
            if pa.position == pb.position {
                return Err(Error::Validation(format!(
                    "higher-order pole in {var} at {}: not supported",
                    pa.position
                )));
            }
        }
    }

    let mut out = Vec::with_capacity(lower.len());
    for pole in lower {
        // -i * residue: (-i) * (i/c) * remaining factors at the pole
        let mut next = Integrand {
            prefactor: crat_scale(&input.prefactor, &pole.coeff.clone().recip()),
            factors: Vec::with_capacity(input.factors.len() - 1),
            deltas: Vec::new(),
            loop_vars: input.loop_vars.iter().filter(|v| *v != var).cloned().collect(),
            next_eps: input.next_eps,
        };
        for (idx, f) in input.factors.iter().enumerate() {
            if idx == pole.factor_idx {
                continue;
            }
            let cj = f.denom.coeff(var);
            if cj.is_zero() {
                next.factors.push(f.clone());
            } else {
                next.factors.push(PoleFactor {
                    denom: f.denom.substitute(var, &pole.position),
                    eps: f.eps_substituted(&pole.drift, &cj),
                });
            }
        }
        out.push(next.fold_constants()?);
    }
    Ok(out)
}

/// Full evaluation: deltas first, then residue reduction in declared order.
pub fn evaluate(input: &Integrand) -> Result<CRat> {
    input.validate()?;
    let start = resolve_deltas(input)?;
    let mut pending = vec![start];
    let mut total = crat(Rat::zero(), Rat::zero());
    while let Some(cur) = pending.pop() {
        match cur.loop_vars.first().cloned() {
            None => {
                debug_assert!(cur.factors.is_empty(), "constants fold before settling");
                total = total + cur.prefactor;
            }
            Some(v) => pending.extend(integrate_loop(&cur, &v)?),
        }
    }
    Ok(total)
}

/// Evaluation with an explicit elimination order over the loop variables
/// that survive delta resolution.
pub fn evaluate_with_order(input: &Integrand, order: &[&str]) -> Result<CRat> {
    input.validate()?;
    let mut start = resolve_deltas(input)?;
    let mut want: Vec<&str> = order.to_vec();
    want.sort_unstable();
    let mut have: Vec<&str> = start.loop_vars.iter().map(|s| s.as_str()).collect();
    have.sort_unstable();
    if want != have {
        return Err(Error::Validation(format!(
            "order {order:?} does not match remaining loop variables {:?}",
            start.loop_vars
        )));
    }
    start.loop_vars = order.iter().map(|s| s.to_string()).collect();
    let mut pending = vec![start];
    let mut total = crat(Rat::zero(), Rat::zero());
    while let Some(cur) = pending.pop() {
        match cur.loop_vars.first().cloned() {
            None => total = total + cur.prefactor,
            Some(v) => pending.extend(integrate_loop(&cur, &v)?),
        }
    }
    Ok(total)
}

/// n-quantum propagator by convolution: n single poles at omega constrained
/// to total energy e, reduced to i/(e - n*omega).
pub fn multiparticle_propagator(n: usize, e: Rat, omega: Rat) -> Result<CRat> {
    if n == 0 {
        return Err(Error::Validation("need at least one line".into()));
    }
    let mut integrand = Integrand::new(crat(Rat::one(), Rat::zero()));
    let mut total = LinearForm::cst(-e);
    for k in 1..=n {
        let v = format!("E{k}");
        integrand = integrand.loop_var(&v).pole(LinearForm::var(&v), omega.clone());
        total = total + LinearForm::var(&v);
    }
    evaluate(&integrand.delta(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one() -> CRat {
        crat(rat(1, 1), rat(0, 1))
    }

    // two forward lines sharing the loop energy, total energy c
    fn convolution(a: Rat, b: Rat, c: Rat) -> Integrand {
        Integrand::new(one())
            .loop_var("E")
            .pole(LinearForm::var("E"), a)
            .pole(LinearForm::cst(c) - LinearForm::var("E"), b)
    }

    #[test]
    fn single_residue_convolution() {
        // int dE/2pi i/(E-1+ie) i/(0.3-E-1+ie) = i/(0.3-2)
        let v = evaluate(&convolution(rat(1, 1), rat(1, 1), rat(3, 10))).unwrap();
        assert_eq!(v, imag(rat(-10, 17)));
    }

    #[test]
    fn same_half_plane_vanishes() {
        let i = Integrand::new(one())
            .loop_var("E")
            .pole(LinearForm::var("E"), rat(1, 1))
            .pole(LinearForm::var("E"), rat(2, 1));
        assert_eq!(evaluate(&i).unwrap(), crat(rat(0, 1), rat(0, 1)));
    }

    #[test]
    fn single_factor_vanishes() {
        let i = Integrand::new(one()).loop_var("E").pole(LinearForm::var("E"), rat(1, 1));
        assert_eq!(evaluate(&i).unwrap(), crat(rat(0, 1), rat(0, 1)));
    }

    #[test]
    fn pinch_is_an_error() {
        // omega_m = 2 omega_c pinches the two-photon loop
        let err = evaluate(&convolution(rat(1, 1), rat(1, 1), rat(2, 1))).unwrap_err();
        assert!(matches!(err, Error::SingularIntegral(_)), "{err:?}");
    }

    #[test]
    fn higher_order_pole_rejected() {
        let i = Integrand::new(one())
            .loop_var("E")
            .pole(LinearForm::var("E"), rat(1, 1))
            .pole(LinearForm::var("E"), rat(1, 1));
        let err = evaluate(&i).unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("higher-order")), "{err:?}");
    }

    #[test]
    fn mixed_orientation_pair() {
        // forward against backward line: poles straddle the axis
        let i = Integrand::new(one())
            .loop_var("E")
            .pole(LinearForm::var("E"), rat(2, 1))
            .pole_oriented(LinearForm::var("E"), rat(1, 1), Orientation::Advanced);
        assert_eq!(evaluate(&i).unwrap(), imag(rat(1, 1)));
    }

    #[test]
    fn variable_bookkeeping_errors() {
        let i = Integrand::new(one()).loop_var("E");
        assert!(matches!(evaluate(&i), Err(Error::Validation(_))));

        let i = Integrand::new(one()).loop_var("E").pole(LinearForm::var("X"), rat(1, 1));
        assert!(matches!(evaluate(&i), Err(Error::Validation(_))));
    }

    #[test]
    fn delta_substitution() {
        // delta(E1+E2-3/10) eliminates E2, shifting the second line
        let i = Integrand::new(one())
            .loop_var("E1")
            .loop_var("E2")
            .pole(LinearForm::var("E1"), rat(1, 1))
            .pole(LinearForm::var("E2"), rat(1, 1))
            .delta(LinearForm::var("E1") + LinearForm::var("E2") - LinearForm::cst(rat(3, 10)));
        let r = resolve_deltas(&i).unwrap();
        assert_eq!(r.loop_vars(), ["E1".to_string()]);
        let v = evaluate(&i).unwrap();
        assert_eq!(v, imag(rat(-10, 17)));
    }

    #[test]
    fn two_deltas_leave_two_loops() {
        let i = Integrand::new(one())
            .loop_var("E1")
            .loop_var("E2")
            .loop_var("E3")
            .loop_var("E4")
            .pole(LinearForm::var("E1"), rat(1, 1))
            .pole(LinearForm::var("E2"), rat(1, 1))
            .pole(LinearForm::var("E3"), rat(1, 1))
            .pole(LinearForm::var("E4"), rat(1, 1))
            .delta(LinearForm::var("E3") + LinearForm::var("E4") - LinearForm::cst(rat(2, 1)))
            .delta(LinearForm::var("E1") + LinearForm::var("E2") - LinearForm::cst(rat(2, 1)));
        let r = resolve_deltas(&i).unwrap();
        assert_eq!(r.loop_vars(), ["E1".to_string(), "E3".to_string()]);
    }

    #[test]
    fn redundant_and_inconsistent_deltas() {
        let base = || {
            Integrand::new(one())
                .loop_var("E1")
                .loop_var("E2")
                .pole(LinearForm::var("E1"), rat(1, 1))
                .pole(LinearForm::var("E2"), rat(1, 1))
        };
        let i = base()
            .delta(LinearForm::var("E1") - LinearForm::var("E2"))
            .delta(LinearForm::var("E2") - LinearForm::var("E1"));
        assert!(matches!(resolve_deltas(&i), Err(Error::Constraint(m)) if m.contains("redundant")));

        let i = base()
            .delta(LinearForm::var("E1") - LinearForm::var("E2"))
            .delta(LinearForm::var("E2") - LinearForm::var("E1") + LinearForm::cst(rat(1, 1)));
        assert!(
            matches!(resolve_deltas(&i), Err(Error::Constraint(m)) if m.contains("inconsistent"))
        );
    }

    // the two-photon phonon loop: prefactor -g^2/2, lines at omega_c,
    // constrained to the external energy
    fn phonon_two_photon_loop(g2_over_2: Rat, wc: Rat, external: Rat) -> Integrand {
        Integrand::new(crat(-g2_over_2, rat(0, 1)))
            .loop_var("E1")
            .loop_var("E2")
            .pole(LinearForm::var("E1"), wc.clone())
            .pole(LinearForm::var("E2"), wc)
            .delta(LinearForm::var("E1") + LinearForm::var("E2") - LinearForm::cst(external))
    }

    #[test]
    fn two_photon_loop_value() {
        // i (g^2/2) / (2 omega_c - omega_m) = i/34000 at the bench point
        let v = evaluate(&phonon_two_photon_loop(rat(1, 20000), rat(1, 1), rat(3, 10))).unwrap();
        assert_eq!(v, imag(rat(1, 34000)));
    }

    #[test]
    fn vacuum_loop_value() {
        // two photons and a phonon out of nothing: i (g^2/2)/(2wc+wm) = i/46000
        let i = Integrand::new(crat(rat(-1, 20000), rat(0, 1)))
            .loop_var("E1")
            .loop_var("E2")
            .loop_var("E3")
            .pole(LinearForm::var("E1"), rat(1, 1))
            .pole(LinearForm::var("E2"), rat(1, 1))
            .pole(LinearForm::var("E3"), rat(3, 10))
            .delta(LinearForm::var("E1") + LinearForm::var("E2") + LinearForm::var("E3"));
        assert_eq!(evaluate(&i).unwrap(), imag(rat(1, 46000)));
    }

    #[test]
    fn triangle_loop_value() {
        // phonon line plus two photon lines pinned to external energy 1,
        // prefactor i g^3/4 with g = 1/100
        let e1 = rat(1, 1);
        let i = Integrand::new(imag(rat(1, 4000000)))
            .loop_var("E")
            .pole(LinearForm::var("E"), rat(3, 10))
            .pole(LinearForm::cst(e1.clone()) - LinearForm::var("E"), rat(1, 1))
            .pole(
                LinearForm::var("E") + LinearForm::cst(rat(3, 10) - e1),
                rat(1, 1),
            );
        assert_eq!(evaluate(&i).unwrap(), imag(rat(-1, 2040000)));
    }

    #[test]
    fn elimination_order_is_irrelevant() {
        // four lines, one delta, three surviving loops
        let build = || {
            Integrand::new(crat(rat(-1, 10000), rat(0, 1)))
                .loop_var("E1")
                .loop_var("E2")
                .loop_var("E3")
                .loop_var("E4")
                .pole(LinearForm::var("E1"), rat(1, 1))
                .pole(LinearForm::var("E2"), rat(1, 1))
                .pole(LinearForm::var("E3"), rat(3, 10))
                .pole(LinearForm::var("E4"), rat(3, 10))
                .delta(
                    LinearForm::var("E1") + LinearForm::var("E2") + LinearForm::var("E3")
                        + LinearForm::var("E4")
                        - LinearForm::cst(rat(3, 10)),
                )
        };
        let want = imag(rat(1, 23000));
        assert_eq!(evaluate(&build()).unwrap(), want);
        let orders: [[&str; 3]; 6] = [
            ["E1", "E2", "E3"],
            ["E1", "E3", "E2"],
            ["E2", "E1", "E3"],
            ["E2", "E3", "E1"],
            ["E3", "E1", "E2"],
            ["E3", "E2", "E1"],
        ];
        for order in orders {
            assert_eq!(evaluate_with_order(&build(), &order).unwrap(), want, "{order:?}");
        }
    }

    #[test]
    fn linearity_in_the_prefactor() {
        let i = convolution(rat(1, 1), rat(1, 1), rat(3, 10));
        let base = evaluate(&i).unwrap();
        let scaled = evaluate(&i.clone().scale(crat(rat(3, 7), rat(2, 5)))).unwrap();
        assert_eq!(scaled, base * crat(rat(3, 7), rat(2, 5)));
    }

    #[test]
    fn multiparticle_values() {
        assert_eq!(
            multiparticle_propagator(1, rat(2, 1), rat(1, 1)).unwrap(),
            imag(rat(1, 1))
        );
        assert_eq!(
            multiparticle_propagator(2, rat(3, 1), rat(1, 1)).unwrap(),
            imag(rat(1, 1))
        );
        assert_eq!(
            multiparticle_propagator(4, rat(5, 1), rat(1, 1)).unwrap(),
            imag(rat(1, 1))
        );
        for n in 1..=5usize {
            let v = multiparticle_propagator(n, rat(11, 2), rat(1, 1)).unwrap();
            assert_eq!(v, imag(rat(2, 11 - 2 * n as i64)));
        }
    }

    #[test]
    fn multiparticle_on_shell_is_singular() {
        let err = multiparticle_propagator(3, rat(3, 1), rat(1, 1)).unwrap_err();
        assert!(matches!(err, Error::SingularIntegral(_)));
    }

    #[test]
    fn canonical_dump_is_stable() {
        let i = phonon_two_photon_loop(rat(1, 20000), rat(1, 1), rat(3, 10));
        assert_eq!(
            i.to_string(),
            "int dE1/2pi int dE2/2pi [-1/20000 + 0 i] * 2pi*delta(E1 + E2 + -3/10) \
             * i/(E1 + -1 + i*(e0)) * i/(E2 + -1 + i*(e1))"
        );
        let reduced = resolve_deltas(&i).unwrap();
        assert_eq!(
            reduced.to_string(),
            "int dE1/2pi [-1/20000 + 0 i] * i/(-E1 + -7/10 + i*(e1)) * i/(E1 + -1 + i*(e0))"
        );
    }

    proptest! {
        #[test]
        fn convolution_closed_form(
            an in -20i64..20, ad in 1i64..8,
            bn in -20i64..20, bd in 1i64..8,
            cn in -20i64..20, cd in 1i64..8,
        ) {
            let (a, b, c) = (rat(an, ad), rat(bn, bd), rat(cn, cd));
            let gap = c.clone() - a.clone() - b.clone();
            prop_assume!(!gap.is_zero());
            let v = evaluate(&convolution(a, b, c)).unwrap();
            prop_assert_eq!(v, imag(gap.recip()));
        }

        #[test]
        fn chain_matches_closed_form(n in 1usize..6, en in -30i64..30, ed in 1i64..6) {
            let e = rat(en, ed);
            let omega = rat(1, 3);
            let gap = e.clone() - rat(n as i64, 3);
            prop_assume!(!gap.is_zero());
            let v = multiparticle_propagator(n, e, omega).unwrap();
            prop_assert_eq!(v, imag(gap.recip()));
        }
    }
}
