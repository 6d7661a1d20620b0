//! Sparse polynomials in three variables with exact rational coefficients,
//! and quotients of them. Used to certify closed-form identities exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

/// Exact rational value of a finite float.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<[u32; 3], BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Self::zero();
        p.push([0; 3], c);
        p
    }

    pub fn int(c: i64) -> Self {
        Self::constant(BigRational::from_integer(BigInt::from(c)))
    }

    /// The coordinate `x_i`.
    pub fn var(i: usize) -> Self {
        let mut e = [0; 3];
        e[i] = 1;
        let mut p = Self::zero();
        p.push(e, BigRational::one());
        p
    }

    fn push(&mut self, e: [u32; 3], c: BigRational) {
        let slot = self.terms.entry(e).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            out.push(*e, c * s);
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = *e;
                d[i] -= 1;
                out.push(d, c * BigRational::from_integer(BigInt::from(e[i])));
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        (0..3).fold(Self::zero(), |acc, i| &acc + &self.derivative(i).derivative(i))
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c.to_f64().unwrap_or(f64::NAN) * (0..3).map(|i| x[i].powi(e[i] as i32)).product::<f64>())
            .sum()
    }

    pub fn eval_exact(&self, x: &[BigRational; 3]) -> BigRational {
        let mut s = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for i in 0..3 {
                for _ in 0..e[i] {
                    t *= &x[i];
                }
            }
            s += t;
        }
        s
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.push(*e, c.clone());
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&-BigRational::one())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                out.push([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]], ca * cb);
            }
        }
        out
    }
}

/// Quotient `num / den` of polynomials; equality is decided by cross-multiplication.
#[derive(Debug, Clone)]
pub struct RationalFn {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFn {
    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Self { num, den }
    }

    pub fn poly(p: Poly) -> Self {
        Self::new(p, Poly::int(1))
    }

    pub fn derivative(&self, i: usize) -> Self {
        let top = &(&self.num.derivative(i) * &self.den) - &(&self.num * &self.den.derivative(i));
        Self::new(top, &self.den * &self.den)
    }

    pub fn same_as(&self, other: &Self) -> bool {
        (&(&self.num * &other.den) - &(&other.num * &self.den)).is_zero()
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.num.eval(x) / self.den.eval(x)
    }
}

impl Add for &RationalFn {
    type Output = RationalFn;
    fn add(self, rhs: &RationalFn) -> RationalFn {
        RationalFn::new(&(&self.num * &rhs.den) + &(&rhs.num * &self.den), &self.den * &rhs.den)
    }
}

impl Mul for &RationalFn {
    type Output = RationalFn;
    fn mul(self, rhs: &RationalFn) -> RationalFn {
        RationalFn::new(&self.num * &rhs.num, &self.den * &rhs.den)
    }
}
