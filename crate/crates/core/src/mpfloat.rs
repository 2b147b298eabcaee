//! Binary floating point with a caller-chosen significand width:
//! `mant · 2^exp` with `|mant| < 2^bits`, rounded to nearest after every
//! operation.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MpFloat {
    mant: BigInt,
    exp: i64,
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    const STEP: i64 = 1000;
    while e > STEP {
        x *= 2f64.powi(STEP as i32);
        e -= STEP;
    }
    while e < -STEP {
        x *= 2f64.powi(-STEP as i32);
        e += STEP;
    }
    x * 2f64.powi(e as i32)
}

impl MpFloat {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    /// Exact conversion; non-finite inputs map to zero.
    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 || !v.is_finite() {
            return Self::zero();
        }
        let bits = v.to_bits();
        let field = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, exp) = if field == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), field - 1075)
        };
        let mant = BigInt::from(m);
        Self {
            mant: if v < 0.0 { -mant } else { mant },
            exp,
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let mag = self.mant.magnitude();
        let shift = mag.bits().saturating_sub(64);
        let top: BigUint = mag >> shift;
        let top = top.iter_u64_digits().next().unwrap_or(0) as f64;
        let v = ldexp(top, self.exp + shift as i64);
        if self.mant.is_negative() {
            -v
        } else {
            v
        }
    }

    pub fn is_positive(&self) -> bool {
        self.mant.is_positive()
    }
}

impl std::ops::Neg for MpFloat {
    type Output = MpFloat;
    fn neg(self) -> MpFloat {
        MpFloat {
            mant: -self.mant,
            exp: self.exp,
        }
    }
}

/// Arithmetic at a fixed significand width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MpContext {
    bits: u64,
}

impl MpContext {
    pub const MIN_BITS: u64 = 64;

    /// `bits` is clamped below at [`MpContext::MIN_BITS`].
    pub fn new(bits: u64) -> Self {
        Self {
            bits: bits.max(Self::MIN_BITS),
        }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    fn round(self, mant: BigInt, exp: i64) -> MpFloat {
        let n = mant.bits();
        if n <= self.bits {
            return MpFloat { mant, exp };
        }
        let shift = n - self.bits;
        let (sign, mag) = mant.into_parts();
        let half = BigUint::one() << (shift - 1);
        let q = (mag + half) >> shift;
        MpFloat {
            mant: BigInt::from_biguint(if q.is_zero() { Sign::NoSign } else { sign }, q),
            exp: exp + shift as i64,
        }
    }

    pub fn add(self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        if a.is_zero() {
            return self.round(b.mant.clone(), b.exp);
        }
        if b.is_zero() {
            return self.round(a.mant.clone(), a.exp);
        }
        let (hi, lo) = if a.exp >= b.exp { (a, b) } else { (b, a) };
        let top = |x: &MpFloat| x.exp + x.mant.bits() as i64;
        if top(hi) - top(lo) > self.bits as i64 + 2 {
            return self.round(hi.mant.clone(), hi.exp);
        }
        let shift = (hi.exp - lo.exp) as usize;
        self.round((&hi.mant << shift) + &lo.mant, lo.exp)
    }

    pub fn sub(self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        self.add(a, &-b.clone())
    }

    pub fn mul(self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        self.round(&a.mant * &b.mant, a.exp + b.exp)
    }

    /// `a / b`; division by zero yields zero.
    pub fn div(self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        if b.is_zero() || a.is_zero() {
            return MpFloat::zero();
        }
        let want = self.bits as i64 + 2 + b.mant.bits() as i64 - a.mant.bits() as i64;
        let shift = want.max(0);
        let q = (&a.mant << shift as usize) / &b.mant;
        self.round(q, a.exp - shift - b.exp)
    }

    /// `Σ aᵢbᵢ` accumulated exactly and rounded once. Terms more than
    /// `bits + 64` binary places below the largest are dropped.
    pub fn dot(self, a: &[MpFloat], b: &[MpFloat]) -> MpFloat {
        let terms: Vec<(BigInt, i64)> = a
            .iter()
            .zip(b)
            .filter(|(x, y)| !x.is_zero() && !y.is_zero())
            .map(|(x, y)| (&x.mant * &y.mant, x.exp + y.exp))
            .collect();
        let top = |(m, e): &(BigInt, i64)| e + m.bits() as i64;
        let Some(max_top) = terms.iter().map(top).max() else {
            return MpFloat::zero();
        };
        let cutoff = max_top - self.bits as i64 - 64;
        let kept: Vec<&(BigInt, i64)> = terms.iter().filter(|t| top(t) >= cutoff).collect();
        let base = kept.iter().map(|(_, e)| *e).min().unwrap_or(0);
        let mut acc = BigInt::zero();
        for (m, e) in kept {
            acc += m << (e - base) as usize;
        }
        self.round(acc, base)
    }

    pub fn lift(self, v: f64) -> MpFloat {
        let v = MpFloat::from_f64(v);
        self.round(v.mant, v.exp)
    }
}
