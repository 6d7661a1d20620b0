//! Exact rational exponent algebra.
//!
//! Every quantity here is a [`BigRational`]; no floating point enters any
//! comparison. Floats appear only in [`to_f64`] for reporting.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

pub type Q = BigRational;

/// Integer as an exact rational.
pub fn int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// `n / d` as an exact rational.
pub fn ratio(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"3"`, `"-3/19"`, `"0.01"` or `"1e-2"`-free decimals into an exact rational.
pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{whole}{frac}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let d = num_traits::pow(BigInt::from(10), frac.len());
    let v = Q::new(n, d);
    Some(if neg { -v } else { v })
}

/// Inclusive arithmetic progression `start, start+step, ..., <= end`.
pub fn rational_range(start: &Q, end: &Q, step: &Q) -> Vec<Q> {
    let mut out = Vec::new();
    if !step.is_positive() {
        return out;
    }
    let mut x = start.clone();
    while &x <= end {
        out.push(x.clone());
        x += step;
    }
    out
}

/// Exponent pair with the ranges 0 <= delta <= 1 and alpha >= 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentParams {
    pub delta: Q,
    pub alpha: Q,
}

impl ExponentParams {
    pub fn new(delta: Q, alpha: Q) -> Result<Self> {
        check_delta(&delta)?;
        if alpha.is_negative() {
            return Err(Error::ConfigInvalid {
                field: "alpha".into(),
                message: format!("alpha = {alpha} must be nonnegative"),
            });
        }
        Ok(Self { delta, alpha })
    }
}

fn check_delta(delta: &Q) -> Result<()> {
    if delta.is_negative() || delta > &int(1) {
        Err(Error::DeltaOutOfRange(delta.to_string()))
    } else {
        Ok(())
    }
}

/// `q(delta) = (3 - delta) / (1 - delta/6)`.
pub fn q_of_delta(delta: &Q) -> Result<Q> {
    check_delta(delta)?;
    Ok((int(3) - delta) / (int(1) - delta / int(6)))
}

/// Candidate terms and derived exponents for one parameter pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentValues {
    pub q: Q,
    /// Whole/half-space terms: the dropped first term and the two retained ones.
    pub beta_terms: [Q; 3],
    pub beta: Q,
    /// Periodic-slab analogues with `2 - alpha` numerators.
    pub beta_ps_terms: [Q; 3],
    pub beta_ps: Q,
    pub r1: Q,
    pub r2: Q,
}

fn max_q(a: &Q, b: &Q) -> Q {
    if a >= b { a.clone() } else { b.clone() }
}

impl ExponentValues {
    pub fn compute(p: &ExponentParams) -> Self {
        let (d, a) = (&p.delta, &p.alpha);
        let q = q_of_delta(d).expect("params validated on construction");
        let one = int(1);
        let two = int(2);
        let three = int(3);
        let third_term = (-&one + &two * a) / (&three - d);

        let b1 = (&one + a) / &two + (a - &three) / &q;
        let b2 = ((&three - a) / &q - &two + &three * a) / (&two - d);
        let beta = max_q(&b2, &third_term);

        let p1 = a / &two + (a - &two) / &q;
        let p2 = ((&two - a) / &q - &two + &three * a) / (&two - d);
        let beta_ps = max_q(&p2, &third_term);

        let (r1, r2) = r_pair(d);
        Self {
            q,
            beta_terms: [b1, b2, third_term.clone()],
            beta,
            beta_ps_terms: [p1, p2, third_term],
            beta_ps,
            r1,
            r2,
        }
    }

    /// The dropped first whole-space term never exceeds the second.
    pub fn whole_drop_holds(&self) -> bool {
        self.beta_terms[0] <= self.beta_terms[1]
    }

    /// The dropped first periodic term never exceeds the retained maximum.
    pub fn periodic_drop_holds(&self) -> bool {
        self.beta_ps_terms[0] <= self.beta_ps
    }
}

/// Whole/half-space exponent `beta = max(beta2, beta3)`.
pub fn beta(p: &ExponentParams) -> Q {
    ExponentValues::compute(p).beta
}

/// Periodic-slab exponent.
pub fn beta_ps(p: &ExponentParams) -> Q {
    ExponentValues::compute(p).beta_ps
}

/// The polynomial `5 alpha delta - 24 alpha - 3 delta + 6`.
pub fn branch_polynomial(p: &ExponentParams) -> Q {
    int(5) * &p.alpha * &p.delta - int(24) * &p.alpha - int(3) * &p.delta + int(6)
}

/// True iff `beta` is attained by the third term.
pub fn branch_condition(p: &ExponentParams) -> bool {
    !branch_polynomial(p).is_negative()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Whole,
    Periodic,
}

/// Growth exponent of the criterion quantity on a constant field.
pub fn constant_field_exponent(p: &ExponentParams, variant: Variant) -> Q {
    let v = ExponentValues::compute(p);
    match variant {
        Variant::Whole => v.beta + (int(3) - &p.alpha) / v.q,
        Variant::Periodic => v.beta_ps + (int(2) - &p.alpha) / v.q,
    }
}

/// Exact sign test of the constant-field exclusion exponent.
pub fn positivity_check(p: &ExponentParams, variant: Variant) -> bool {
    constant_field_exponent(p, variant).is_positive()
}

fn r_pair(delta: &Q) -> (Q, Q) {
    let six_minus = int(6) - delta;
    (
        int(3) * (int(3) - delta) / &six_minus,
        int(6) * (int(2) - delta) / six_minus,
    )
}

/// Admissible integrability range `[r1(delta), r2(delta)]` of the zero-BC slab.
pub fn slab_r_range(delta: &Q) -> Result<(Q, Q)> {
    check_delta(delta)?;
    Ok(r_pair(delta))
}

/// R-power in `||grad u||_q <= C R^s ||u||_m`; `m = None` means infinity.
pub fn scaling_exponent(q: &Q, m: Option<&Q>) -> Q {
    let inv_m = m.map(|m| int(3) / m).unwrap_or_else(Q::zero);
    int(3) / q - inv_m - int(1)
}

/// Homogeneity degree of `||D^k u||_{L^q(B_R)}` under `u_R(x) = R^a u(Rx)`,
/// i.e. the exponent `e` with `||D^k u_R||_{L^q(B_1)} = R^e ||D^k u||_{L^q(B_R)}`.
fn norm_weight(amplitude: &Q, derivatives: i64, q: Option<&Q>) -> Q {
    let volume = q.map(|q| int(3) / q).unwrap_or_else(Q::zero);
    amplitude + int(derivatives) - volume
}

#[derive(Debug, Clone)]
pub struct ScalingCheck {
    pub q: Q,
    pub m: Option<Q>,
    /// Exponent obtained from homogeneity bookkeeping.
    pub derived: Q,
    /// Closed form `3/q - 3/m - 1`.
    pub stated: Q,
    /// R-power in front of the forcing term; zero when the scaling is consistent.
    pub forcing_power: Q,
    /// R-power in front of the pressure oscillation term; zero when consistent.
    pub pressure_power: Q,
}

impl ScalingCheck {
    pub fn holds(&self) -> bool {
        self.derived == self.stated && self.forcing_power.is_zero() && self.pressure_power.is_zero()
    }
}

/// Dimensional bookkeeping for one `(q, m)` pair.
///
/// The Stokes system is invariant under `u_R = u(Rx)`, `p_R = R p(Rx)`,
/// `F_R = R F(Rx)`. A unit-scale estimate `A(u_R) <= C B(u_R)` then reads
/// `A(u) <= C R^{wB - wA} B(u)` at scale `R`.
pub fn scaling_check(q: &Q, m: Option<&Q>) -> ScalingCheck {
    let zero = Q::zero();
    let one = int(1);
    let grad_u = norm_weight(&zero, 1, Some(q));
    let u_m = norm_weight(&zero, 0, m);
    let forcing = norm_weight(&one, 0, Some(q));
    let pressure = norm_weight(&one, 0, Some(q));
    ScalingCheck {
        q: q.clone(),
        m: m.cloned(),
        derived: &u_m - &grad_u,
        stated: scaling_exponent(q, m),
        forcing_power: &forcing - &grad_u,
        pressure_power: &pressure - &grad_u,
    }
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub checks: Vec<ScalingCheck>,
}

impl ScalingReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(ScalingCheck::holds)
    }
}

/// Runs [`scaling_check`] over `q, m in {1, 11/10, ..., 6}` plus `m = infinity`.
pub fn scaling_exponent_check() -> ScalingReport {
    let grid = rational_range(&int(1), &int(6), &ratio(1, 10));
    let mut checks = Vec::new();
    for q in &grid {
        checks.push(scaling_check(q, None));
        for m in &grid {
            checks.push(scaling_check(q, Some(m)));
        }
    }
    ScalingReport { checks }
}

/// One row of the exponent table.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub params: ExponentParams,
    pub values: ExponentValues,
    pub branch: bool,
}

/// Evaluates every `(delta, alpha)` pair of the product grid in row-major order.
pub fn exponent_table(deltas: &[Q], alphas: &[Q]) -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(deltas.len() * alphas.len());
    for d in deltas {
        for a in alphas {
            let params = ExponentParams::new(d.clone(), a.clone())?;
            let values = ExponentValues::compute(&params);
            let branch = branch_condition(&params);
            rows.push(TableRow { params, values, branch });
        }
    }
    Ok(rows)
}

/// Outcome of certifying an inequality `lhs <= rhs` on a grid.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub points: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen (exact), with its location.
    pub tightest: Option<(Q, ExponentParams)>,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.points > 0 && self.violations == 0
    }

    fn record(&mut self, margin: Q, at: &ExponentParams) {
        self.points += 1;
        if margin.is_negative() {
            self.violations += 1;
        }
        let tighter = match &self.tightest {
            Some((m, _)) => &margin < m,
            None => true,
        };
        if tighter {
            self.tightest = Some((margin, at.clone()));
        }
    }
}

/// Certifies `lhs(values) <= rhs(values)` over the product grid.
pub fn certify<F>(deltas: &[Q], alphas: &[Q], margin: F) -> Result<Certificate>
where
    F: Fn(&ExponentParams, &ExponentValues) -> Q,
{
    let mut cert = Certificate { points: 0, violations: 0, tightest: None };
    for d in deltas {
        for a in alphas {
            let p = ExponentParams::new(d.clone(), a.clone())?;
            let v = ExponentValues::compute(&p);
            cert.record(margin(&p, &v), &p);
        }
    }
    Ok(cert)
}

/// Counts grid points where the branch polynomial disagrees with `beta == beta3`.
pub fn branch_equivalence_mismatches(deltas: &[Q], alphas: &[Q]) -> Result<usize> {
    let mut bad = 0;
    for d in deltas {
        for a in alphas {
            let p = ExponentParams::new(d.clone(), a.clone())?;
            let v = ExponentValues::compute(&p);
            let attained_by_third = v.beta_terms[1] <= v.beta_terms[2];
            if attained_by_third != branch_condition(&p) {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

/// Whether every `r` in `rs` lies in `[r1(delta), r2(delta)]` for some grid `delta`.
pub fn r_range_covers(rs: &[Q], deltas: &[Q]) -> Result<bool> {
    let pairs: Vec<(Q, Q)> = deltas.iter().map(slab_r_range).collect::<Result<_>>()?;
    Ok(rs.iter().all(|r| pairs.iter().any(|(lo, hi)| lo <= r && r <= hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: Q, a: Q) -> ExponentParams {
        ExponentParams::new(d, a).unwrap()
    }

    #[test]
    fn q_endpoints_and_midpoint() {
        assert_eq!(q_of_delta(&int(0)).unwrap(), int(3));
        assert_eq!(q_of_delta(&int(1)).unwrap(), ratio(12, 5));
        assert_eq!(q_of_delta(&ratio(1, 2)).unwrap(), ratio(30, 11));
        assert!(matches!(q_of_delta(&ratio(11, 10)), Err(Error::DeltaOutOfRange(_))));
        assert!(matches!(q_of_delta(&ratio(-1, 10)), Err(Error::DeltaOutOfRange(_))));
    }

    #[test]
    fn beta_at_alpha_zero() {
        for d in rational_range(&int(0), &int(1), &ratio(1, 20)) {
            let expected = -int(1) / (int(3) - &d);
            assert_eq!(beta(&p(d.clone(), int(0))), expected);
            assert_eq!(beta_ps(&p(d, int(0))), expected);
        }
        assert_eq!(beta(&p(int(0), int(0))), ratio(-1, 3));
    }

    #[test]
    fn branch_boundary_point() {
        let params = p(int(1), ratio(3, 19));
        assert!(branch_polynomial(&params).is_zero());
        let v = ExponentValues::compute(&params);
        assert_eq!(v.beta_terms[1], v.beta_terms[2]);
    }

    #[test]
    fn branch_examples() {
        assert!(branch_condition(&p(int(0), ratio(1, 4))));
        assert!(branch_polynomial(&p(int(0), ratio(1, 4))).is_zero());
        assert!(!branch_condition(&p(int(0), int(1))));
        for d in rational_range(&int(0), &int(1), &ratio(1, 10)) {
            for a in rational_range(&int(0), &ratio(3, 19), &ratio(1, 100)) {
                assert!(branch_condition(&p(d.clone(), a)));
            }
            assert!(branch_condition(&p(d.clone(), ratio(3, 19))));
        }
    }

    #[test]
    fn positivity_examples() {
        assert_eq!(constant_field_exponent(&p(int(0), int(0)), Variant::Whole), ratio(2, 3));
        assert_eq!(constant_field_exponent(&p(int(1), int(0)), Variant::Whole), ratio(3, 4));
        assert!(positivity_check(&p(int(1), int(0)), Variant::Periodic));
    }

    #[test]
    fn r_range_examples() {
        assert_eq!(slab_r_range(&int(0)).unwrap(), (ratio(3, 2), int(2)));
        assert_eq!(slab_r_range(&int(1)).unwrap(), (ratio(6, 5), ratio(6, 5)));
        let deltas = rational_range(&int(0), &int(1), &ratio(1, 1000));
        let rs = rational_range(&ratio(6, 5), &int(2), &ratio(1, 10));
        assert!(r_range_covers(&rs, &deltas).unwrap());
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scaling_exponent(&int(2), Some(&int(2))), int(-1));
        assert_eq!(scaling_exponent(&int(2), None), ratio(1, 2));
        assert!(scaling_exponent_check().all_hold());
    }

    #[test]
    fn parse_decimal_and_fraction() {
        assert_eq!(parse_rational("0.01"), Some(ratio(1, 100)));
        assert_eq!(parse_rational("-3/19"), Some(ratio(-3, 19)));
        assert_eq!(parse_rational("2"), Some(int(2)));
        assert_eq!(parse_rational(".5"), Some(ratio(1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(rational_range(&int(0), &int(1), &ratio(1, 100)).len(), 101);
    }
}
