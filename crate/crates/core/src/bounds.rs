//! Closed-form rate bounds and constants.
//!
//! Bounds larger than 1 are returned unchanged; callers decide whether a
//! regime is vacuous.

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::special::abs_normal_moment;

/// Constant of the classical functional estimate and of the corollary rate.
pub const C3: f64 = 4.7;
pub const C4: f64 = 42.0;
pub const C5: f64 = 12.0;
pub const C2_CAP: f64 = 184.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("p = {0} outside [2, 3]")]
    Exponent(f64),
    #[error("{name} must be {requirement}, got {value}")]
    Argument {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<(), BoundsError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Argument {
            name,
            requirement: "positive and finite",
            value: v.as_f64(),
        })
    }
}

fn nonnegative<T: Real>(name: &'static str, v: T) -> Result<(), BoundsError> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Argument {
            name,
            requirement: "nonnegative and finite",
            value: v.as_f64(),
        })
    }
}

fn exponent<T: Real>(p: T) -> Result<(), BoundsError> {
    if p >= T::lit(2.0) && p <= T::lit(3.0) {
        Ok(())
    } else {
        Err(BoundsError::Exponent(p.as_f64()))
    }
}

fn count<T: Real>(n: usize) -> Result<T, BoundsError> {
    if n == 0 {
        return Err(BoundsError::Argument {
            name: "n",
            requirement: "positive",
            value: 0.0,
        });
    }
    Ok(T::from_usize_lossy(n))
}

/// `(n, ε, p, γ)` plus the optional functional constants `K`, `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs<T> {
    pub n: usize,
    pub eps: T,
    pub p: T,
    pub gamma: T,
    pub k: Option<T>,
    pub l: Option<T>,
}

impl<T: Real> BoundInputs<T> {
    pub fn new(n: usize, eps: T, p: T, gamma: T) -> Result<Self, BoundsError> {
        count::<T>(n)?;
        positive("eps", eps)?;
        exponent(p)?;
        nonnegative("gamma", gamma)?;
        Ok(Self {
            n,
            eps,
            p,
            gamma,
            k: None,
            l: None,
        })
    }

    pub fn with_lipschitz(mut self, k: T, l: T) -> Result<Self, BoundsError> {
        nonnegative("K", k)?;
        nonnegative("L", l)?;
        self.k = Some(k);
        self.l = Some(l);
        Ok(self)
    }

    /// `n^{(p−2)/2} ε^p`.
    fn rate_denominator(&self) -> T {
        let two = T::lit(2.0);
        T::from_usize_lossy(self.n).powf((self.p - two) / two) * self.eps.powf(self.p)
    }
}

/// `C₂(p) = min{184, 4.7^{p+1}}`.
pub fn c2<T: Real>(p: T) -> Result<T, BoundsError> {
    exponent(p)?;
    Ok(T::lit(C2_CAP).min(T::lit(C3).powf(p + T::one())))
}

/// `C₂(p)·γ / (n^{(p−2)/2} ε^p)`.
pub fn thm2_bound<T: Real>(inp: &BoundInputs<T>) -> Result<T, BoundsError> {
    Ok(c2(inp.p)? * inp.gamma / inp.rate_denominator())
}

/// `4.7·γ^{1/(p+1)} / n^{(p−2)/(2p+2)}`.
pub fn cor1_bound<T: Real>(n: usize, p: T, gamma: T) -> Result<T, BoundsError> {
    let nf = count::<T>(n)?;
    exponent(p)?;
    nonnegative("gamma", gamma)?;
    let one = T::one();
    let two = T::lit(2.0);
    Ok(T::lit(C3) * gamma.powf(one / (p + one)) / nf.powf((p - two) / (two * p + two)))
}

/// `(K·L + 1)·π̃`.
pub fn cor2_bound<T: Real>(k: T, l: T, pi_tilde: T) -> Result<T, BoundsError> {
    nonnegative("K", k)?;
    nonnegative("L", l)?;
    nonnegative("pi_tilde", pi_tilde)?;
    Ok((k * l + T::one()) * pi_tilde)
}

/// `C·γ / (n^{(p−2)/2} ε^p)` with an explicit leading constant.
pub fn thm1_bound_with<T: Real>(constant: T, inp: &BoundInputs<T>) -> Result<T, BoundsError> {
    positive("constant", constant)?;
    Ok(constant * inp.gamma / inp.rate_denominator())
}

/// `42·γ / (n^{(p−2)/2} ε^p)`.
pub fn thm1_bound<T: Real>(inp: &BoundInputs<T>) -> Result<T, BoundsError> {
    thm1_bound_with(T::lit(C4), inp)
}

/// `C·γ₃ / (ε√n)` with an explicit leading constant.
pub fn thm1_b22_bound_with<T: Real>(constant: T, n: usize, eps: T, gamma3: T) -> Result<T, BoundsError> {
    let nf = count::<T>(n)?;
    positive("constant", constant)?;
    positive("eps", eps)?;
    nonnegative("gamma3", gamma3)?;
    Ok(constant * gamma3 / (eps * nf.sqrt()))
}

/// `12·γ₃ / (ε√n)`.
pub fn thm1_b22_bound<T: Real>(n: usize, eps: T, gamma3: T) -> Result<T, BoundsError> {
    thm1_b22_bound_with(T::lit(C5), n, eps, gamma3)
}

/// `√(12·γ₃) / n^{1/4}`.
pub fn pi_bar_bound<T: Real>(n: usize, gamma3: T) -> Result<T, BoundsError> {
    let nf = count::<T>(n)?;
    nonnegative("gamma3", gamma3)?;
    Ok((T::lit(C5) * gamma3).sqrt() / nf.sqrt().sqrt())
}

/// `K_p(C) = min{1, 2C^{p−2}/p}`.
pub fn kp_lower<T: Real>(c: T, p: T) -> Result<T, BoundsError> {
    positive("C", c)?;
    if !(p >= T::lit(2.0)) || !p.is_finite() {
        return Err(BoundsError::Exponent(p.as_f64()));
    }
    let two = T::lit(2.0);
    Ok(T::one().min(two * c.powf(p - two) / p))
}

/// `4.7·(E min{|ξ|^p, √n ξ²})^{1/(p+1)} / n^{(p−2)/(2p+2)}`.
pub fn classical_fclt_bound<T: Real>(n: usize, p: T, truncated_moment: T) -> Result<T, BoundsError> {
    cor1_bound(n, p, truncated_moment)
}

/// `n·E|Z|^p / (√n·b)^p`.
pub fn maximal_ineq_bound<T: Real>(n: usize, b: T, p: T) -> Result<T, BoundsError> {
    let nf = count::<T>(n)?;
    positive("b", b)?;
    if !(p >= T::lit(2.0)) || !p.is_finite() {
        return Err(BoundsError::Exponent(p.as_f64()));
    }
    Ok(nf * abs_normal_moment(p) / (nf.sqrt() * b).powf(p))
}

/// All bound values for one input set, as emitted by the `bounds` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub n: usize,
    pub eps: f64,
    pub p: f64,
    pub gamma: f64,
    pub c2: f64,
    pub thm2: f64,
    pub cor1: f64,
    pub thm1: f64,
    pub thm1_b22: f64,
    pub pi_bar: f64,
    pub classical_fclt: f64,
    pub cor2: Option<f64>,
}

/// `gamma` feeds every bound; `gamma3` the `p = 3` forms.
pub fn bound_table(inp: &BoundInputs<f64>, gamma3: f64) -> Result<BoundTable, BoundsError> {
    let cor1 = cor1_bound(inp.n, inp.p, inp.gamma)?;
    let cor2 = match (inp.k, inp.l) {
        (Some(k), Some(l)) => Some(cor2_bound(k, l, cor1)?),
        _ => None,
    };
    Ok(BoundTable {
        n: inp.n,
        eps: inp.eps,
        p: inp.p,
        gamma: inp.gamma,
        c2: c2(inp.p)?,
        thm2: thm2_bound(inp)?,
        cor1,
        thm1: thm1_bound(inp)?,
        thm1_b22: thm1_b22_bound(inp.n, inp.eps, gamma3)?,
        pi_bar: pi_bar_bound(inp.n, gamma3)?,
        classical_fclt: classical_fclt_bound(inp.n, inp.p, inp.gamma)?,
        cor2,
    })
}
