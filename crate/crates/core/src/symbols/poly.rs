use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exponent tuple (e₁, e₂, e₃) of s₁^e₁ s₂^e₂ s₃^e₃.
pub type Exponent = [u32; 3];

/// Exact polynomial in s₁, s₂, s₃ (standing for iξ₁, iξ₂, iξ₃) with rational
/// coefficients. Zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Exponent, BigRational>,
}

pub fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact rational value of a finite float.
pub fn rat_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite parameter")
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        Self::monomial([0, 0, 0], c)
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    pub fn monomial(e: Exponent, c: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(e, c);
        }
        Self { terms }
    }

    /// sᵢ for i ∈ {0, 1, 2}.
    pub fn var(i: usize) -> Self {
        let mut e = [0; 3];
        e[i] = 1;
        Self::monomial(e, BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, e: Exponent) -> BigRational {
        self.terms.get(&e).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Total degree; −1 for the zero polynomial.
    pub fn degree(&self) -> i32 {
        self.terms.keys().map(|e| (e[0] + e[1] + e[2]) as i32).max().unwrap_or(-1)
    }

    /// Lowest total degree of a nonzero term; −1 for zero.
    pub fn order(&self) -> i32 {
        self.terms.keys().map(|e| (e[0] + e[1] + e[2]) as i32).min().unwrap_or(-1)
    }

    /// Terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: i32) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| (e[0] + e[1] + e[2]) as i32 == d)
                .map(|(e, c)| (*e, c.clone()))
                .collect(),
        }
    }

    /// Leading coefficient in graded lexicographic order.
    pub fn leading_coefficient(&self) -> Option<&BigRational> {
        self.terms
            .iter()
            .max_by(|(a, _), (b, _)| (a[0] + a[1] + a[2], *a).cmp(&(b[0] + b[1] + b[2], *b)))
            .map(|(_, c)| c)
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(e, c)| (*e, c * k)).collect() }
    }

    pub fn eval_rational(&self, s: &[BigRational; 3]) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for i in 0..3 {
                for _ in 0..e[i] {
                    t *= &s[i];
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_complex(&self, s: [Complex64; 3]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut t = Complex64::new(c.to_f64().unwrap_or(f64::NAN), 0.0);
            for i in 0..3 {
                t *= s[i].powu(e[i]);
            }
            acc += t;
        }
        acc
    }

    /// Value at s = iξ.
    pub fn eval_at_xi(&self, xi: [f64; 3]) -> Complex64 {
        self.eval_complex(xi.map(|x| Complex64::new(0.0, x)))
    }

    /// ∂/∂sᵢ.
    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                out.insert(f, c * rat(e[i] as i64));
            }
        }
        Poly { terms: out }
    }

    fn add_term(&mut self, e: Exponent, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&e);
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(*e, c.clone());
        }
        r
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(*e, -c.clone());
        }
        r
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        let mut r = Poly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                r.add_term([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]], ca * cb);
            }
        }
        r
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { terms: self.terms.iter().map(|(e, c)| (*e, -c.clone())).collect() }
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        let mut keys: Vec<_> = self.terms.iter().collect();
        keys.sort_by(|(a, _), (b, _)| (b[0] + b[1] + b[2], *b).cmp(&(a[0] + a[1] + a[2], *a)));
        for (e, c) in keys {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            first = false;
            let is_const = e.iter().all(|&k| k == 0);
            if !mag.is_one() || is_const {
                write!(f, "{mag}")?;
            }
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "s{}", i + 1)?,
                    _ => write!(f, "s{}^{}", i + 1, k)?,
                }
            }
        }
        Ok(())
    }
}
