//! Directional kernel profiles `L : [0, ∞) → [0, ∞)`.
//!
//! Both kernels here are non-increasing, convex and satisfy `0 < L(0) < ∞`,
//! which is what the ascent and convergence guarantees of mean shift need.
//!
//! | kernel | `L(r)` | support |
//! |--------|--------|---------|
//! | von Mises | `e^{−r}` | `[0, ∞)` |
//! | truncated convex (`p ≥ 1`) | `(1 − r)^p` | `[0, 1]` |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Kernel {
    VonMises,
    Truncated { p: u32 },
}

impl Kernel {
    pub fn truncated(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::DomainError("truncated kernel exponent must be >= 1".into()));
        }
        Ok(Kernel::Truncated { p })
    }

    /// The `r` beyond which `L ≡ 0`, or `+∞`.
    pub fn support_bound(&self) -> f64 {
        match self {
            Kernel::VonMises => f64::INFINITY,
            Kernel::Truncated { .. } => 1.0,
        }
    }

    /// Whether `L''` exists (almost everywhere) in a form usable for Hessians.
    pub fn twice_differentiable(&self) -> bool {
        !matches!(self, Kernel::Truncated { p: 1 })
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        check(r)?;
        Ok(self.value(r))
    }

    pub fn deriv(&self, r: f64) -> Result<f64> {
        check(r)?;
        Ok(self.slope(r))
    }

    pub fn deriv2(&self, r: f64) -> Result<f64> {
        check(r)?;
        Ok(self.curvature(r))
    }

    /// `L(r)`. Negative round-off in `r` is treated as 0.
    #[inline]
    pub(crate) fn value(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Kernel::VonMises => (-r).exp(),
            Kernel::Truncated { p } => {
                if r <= 1.0 {
                    (1.0 - r).powi(p as i32)
                } else {
                    0.0
                }
            }
        }
    }

    /// `log L(r)`, `−∞` outside the support.
    #[inline]
    pub(crate) fn log_value(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Kernel::VonMises => -r,
            Kernel::Truncated { p } => {
                if r < 1.0 {
                    p as f64 * (1.0 - r).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `L'(r)`. At the truncated kernel's kink `r = 1` this is the
    /// subgradient 0, so points on the support boundary exert no pull.
    #[inline]
    pub(crate) fn slope(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Kernel::VonMises => -(-r).exp(),
            Kernel::Truncated { p } => {
                if r < 1.0 {
                    -(p as f64) * (1.0 - r).powi(p as i32 - 1)
                } else {
                    0.0
                }
            }
        }
    }

    /// `log(−L'(r))`, `−∞` where the slope vanishes.
    #[inline]
    pub(crate) fn log_neg_slope(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Kernel::VonMises => -r,
            Kernel::Truncated { p: 1 } => {
                if r < 1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kernel::Truncated { p } => {
                if r < 1.0 {
                    (p as f64).ln() + (p as f64 - 1.0) * (1.0 - r).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `L''(r)`; identically 0 for `p = 1` (undefined at the kink, reported as 0).
    #[inline]
    pub(crate) fn curvature(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Kernel::VonMises => (-r).exp(),
            Kernel::Truncated { p: 1 } => 0.0,
            Kernel::Truncated { p } => {
                if r <= 1.0 {
                    (p as f64) * (p as f64 - 1.0) * (1.0 - r).powi(p as i32 - 2)
                } else {
                    0.0
                }
            }
        }
    }
}

fn check(r: f64) -> Result<()> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::NegativeArgument(r));
    }
    Ok(())
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::VonMises => write!(f, "von_mises"),
            Kernel::Truncated { p } => write!(f, "truncated:p={p}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "von_mises" {
            return Ok(Kernel::VonMises);
        }
        if let Some(rest) = s.strip_prefix("truncated:p=") {
            let p: u32 = rest
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad truncated kernel exponent {rest:?}")))?;
            return Kernel::truncated(p);
        }
        Err(Error::InvalidConfig(format!(
            "unknown kernel {s:?}; expected \"von_mises\" or \"truncated:p=<int>\""
        )))
    }
}

impl From<Kernel> for String {
    fn from(k: Kernel) -> Self {
        k.to_string()
    }
}

impl TryFrom<String> for Kernel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const KERNELS: [Kernel; 4] = [
        Kernel::VonMises,
        Kernel::Truncated { p: 1 },
        Kernel::Truncated { p: 2 },
        Kernel::Truncated { p: 3 },
    ];

    #[test]
    fn von_mises_at_zero() {
        let k = Kernel::VonMises;
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        assert_eq!(k.deriv(0.0).unwrap(), -1.0);
        assert_eq!(k.deriv2(0.0).unwrap(), 1.0);
    }

    #[test]
    fn truncated_quadratic_values() {
        let k = Kernel::Truncated { p: 2 };
        assert_eq!(k.eval(0.5).unwrap(), 0.25);
        assert_eq!(k.deriv(0.5).unwrap(), -1.0);
        assert_eq!(k.deriv2(0.5).unwrap(), 2.0);
    }

    #[test]
    fn truncated_outside_support() {
        let k = Kernel::Truncated { p: 1 };
        assert_eq!(k.eval(1.5).unwrap(), 0.0);
        assert_eq!(k.deriv(1.5).unwrap(), 0.0);
        assert_eq!(k.deriv(1.0).unwrap(), 0.0);
        assert_eq!(k.deriv2(0.3).unwrap(), 0.0);
    }

    #[test]
    fn negative_argument_rejected() {
        for k in KERNELS {
            assert_eq!(k.eval(-0.1), Err(Error::NegativeArgument(-0.1)));
            assert!(k.deriv(-1.0).is_err());
            assert!(k.deriv2(-1.0).is_err());
        }
    }

    #[test]
    fn parse_round_trip() {
        for k in KERNELS {
            assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
        }
        assert!("truncated:p=0".parse::<Kernel>().is_err());
        assert!("gaussian".parse::<Kernel>().is_err());
    }

    #[test]
    fn condition_c2_on_grid() {
        for k in KERNELS {
            assert!(k.eval(0.0).unwrap() > 0.0);
            let mut prev = f64::INFINITY;
            for i in 0..=400 {
                let r = i as f64 * 0.01;
                let v = k.eval(r).unwrap();
                assert!(v >= 0.0 && v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn convexity_inequality() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for k in KERNELS {
            for _ in 0..10_000 {
                let x: f64 = rng.random_range(0.0..4.0);
                let y: f64 = rng.random_range(0.0..4.0);
                let lhs = k.value(y) - k.value(x);
                let rhs = k.slope(x) * (y - x);
                assert!(lhs >= rhs - 1e-14, "{k}: x={x} y={y} lhs={lhs} rhs={rhs}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-6;
        for k in KERNELS {
            for i in 1..40 {
                let r = 0.05 + i as f64 * 0.0987;
                if k.support_bound().is_finite() && (r - 1.0).abs() < 1e-3 {
                    continue;
                }
                let fd = (k.value(r + step) - k.value(r - step)) / (2.0 * step);
                let d = k.slope(r);
                let scale = d.abs().max(1e-300);
                if d == 0.0 {
                    assert!(fd.abs() < 1e-9);
                } else {
                    assert!(((fd - d) / scale).abs() < 1e-6, "{k} r={r}: {fd} vs {d}");
                }
                if k.twice_differentiable() {
                    let fd2 = (k.slope(r + step) - k.slope(r - step)) / (2.0 * step);
                    let d2 = k.curvature(r);
                    if d2 != 0.0 {
                        assert!(((fd2 - d2) / d2).abs() < 1e-5, "{k} r={r}: {fd2} vs {d2}");
                    }
                }
            }
        }
    }
}
