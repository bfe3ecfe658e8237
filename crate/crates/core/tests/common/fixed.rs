//! Binary fixed-point reals on big integers: value = n / 2^PREC.

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

pub const PREC: u32 = 256;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fx(pub BigInt);

impl Fx {
    pub fn zero() -> Fx {
        Fx(BigInt::zero())
    }

    pub fn one() -> Fx {
        Fx(BigInt::one() << PREC)
    }

    pub fn int(i: i64) -> Fx {
        Fx(BigInt::from(i) << PREC)
    }

    /// Exact for every finite f64 above 2^-PREC in magnitude.
    pub fn from_f64(x: f64) -> Fx {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fx::zero();
        }
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let mut n = BigInt::from(mant);
        let shift = e + PREC as i64;
        n = if shift >= 0 {
            n << shift as usize
        } else {
            n >> (-shift) as usize
        };
        if x < 0.0 {
            n = -n;
        }
        Fx(n)
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 64 significant bits, then scale by a power of two.
        let bits = self.0.bits() as i64;
        let drop = (bits - 64).max(0);
        let top = (&self.0 >> drop as usize).to_f64().unwrap();
        top * 2f64.powi((drop - PREC as i64) as i32)
    }

    pub fn add(&self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fx) -> Fx {
        Fx(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fx) -> Fx {
        Fx((&self.0 * &o.0) >> PREC)
    }

    pub fn div(&self, o: &Fx) -> Fx {
        Fx((&self.0 << PREC) / &o.0)
    }

    pub fn neg(&self) -> Fx {
        Fx(-&self.0)
    }

    pub fn is_negative(&self) -> bool {
        self.0.sign() == Sign::Minus
    }

    pub fn sqrt(&self) -> Fx {
        assert!(!self.is_negative());
        Fx((&self.0 << PREC).sqrt())
    }

    pub fn exp(&self) -> Fx {
        // exp(x) = exp(x / 2^m)^(2^m) with a Taylor series for the small part.
        let mag = self.0.abs().bits() as i64 - PREC as i64;
        let m = (mag + 12).max(0) as usize;
        let r = Fx(&self.0 >> m);
        let mut sum = Fx::one();
        let mut term = Fx::one();
        for k in 1u64.. {
            term = Fx(term.mul(&r).0 / k);
            if term.0.is_zero() {
                break;
            }
            sum = sum.add(&term);
        }
        for _ in 0..m {
            sum = sum.mul(&sum);
        }
        sum
    }

    fn atanh_series(t: &Fx) -> Fx {
        let t2 = t.mul(t);
        let mut power = t.clone();
        let mut sum = Fx::zero();
        for k in 0u64.. {
            let term = Fx(&power.0 / (2 * k + 1));
            if term.0.is_zero() {
                break;
            }
            sum = sum.add(&term);
            power = power.mul(&t2);
        }
        sum
    }

    pub fn ln2() -> Fx {
        let third = Fx::one().div(&Fx::int(3));
        let a = Fx::atanh_series(&third);
        a.add(&a)
    }

    pub fn ln(&self) -> Fx {
        assert!(self.0.sign() == Sign::Plus, "ln of non-positive value");
        // self = m * 2^k with m in [1, 2).
        let k = self.0.bits() as i64 - 1 - PREC as i64;
        let m = if k >= 0 {
            Fx(&self.0 >> k as usize)
        } else {
            Fx(&self.0 << (-k) as usize)
        };
        let t = m.sub(&Fx::one()).div(&m.add(&Fx::one()));
        let a = Fx::atanh_series(&t);
        let ln2 = Fx::ln2();
        a.add(&a).add(&Fx(&ln2.0 * BigInt::from(k)))
    }
}

/// Softmax cross-entropy over `scores / tau` with target `target`:
/// loss and d loss / d score.
pub fn softmax_ce(scores: &[f64], target: usize, tau: f64) -> (f64, Vec<f64>) {
    let tau = Fx::from_f64(tau);
    let st = Fx::from_f64(scores[target]);
    let weights: Vec<Fx> = scores
        .iter()
        .map(|&s| Fx::from_f64(s).sub(&st).div(&tau).exp())
        .collect();
    let total = weights.iter().fold(Fx::zero(), |a, w| a.add(w));
    let loss = total.ln().to_f64();
    let grads = weights
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let mut p = w.div(&total);
            if j == target {
                p = p.sub(&Fx::one());
            }
            p.div(&tau).to_f64()
        })
        .collect();
    (loss, grads)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| {
        x.iter().zip(y).fold(Fx::zero(), |acc, (p, q)| {
            acc.add(&Fx::from_f64(*p).mul(&Fx::from_f64(*q)))
        })
    };
    dot(a, b).div(&dot(a, a).mul(&dot(b, b)).sqrt()).to_f64()
}
