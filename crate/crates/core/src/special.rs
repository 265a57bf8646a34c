//! Modified Bessel functions of the first kind, sphere surface areas, and the
//! normalizing constants of vMF densities and directional kernels.
//!
//! Everything that can overflow has a log-space twin; the linear-space
//! functions are thin `exp` wrappers that report [`Error::Overflow`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quadrature::{integrate, QuadOptions};

/// Concentrations below this are treated as exactly uniform.
pub const KAPPA_UNIFORM: f64 = 1e-12;

/// Relative tolerance used for kernel normalizing-constant quadrature.
pub const NORM_CONST_REL_TOL: f64 = 1e-11;

const LN_MAX: f64 = 709.78;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `log I_ν(x)` for `ν ≥ 0`, `x ≥ 0`.
///
/// Large arguments use the Hankel expansion when it converges to full
/// precision (it terminates exactly for half-integer orders); everything else
/// sums the power series with running rescaling, which involves only positive
/// terms and therefore loses no precision to cancellation.
pub fn log_bessel_i(order: f64, x: f64) -> Result<f64> {
    if !(order >= 0.0) || !order.is_finite() {
        return Err(Error::DomainError(format!("Bessel order {order} must be finite and >= 0")));
    }
    if !(x >= 0.0) || x.is_infinite() {
        return Err(Error::DomainError(format!("Bessel argument {x} must be finite and >= 0")));
    }
    Ok(log_bessel_i_unchecked(order, x))
}

pub(crate) fn log_bessel_i_unchecked(order: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if let Some(v) = log_bessel_hankel(order, x) {
        return v;
    }
    log_bessel_series(order, x)
}

fn log_bessel_hankel(order: f64, x: f64) -> Option<f64> {
    if x < 25.0 {
        return None;
    }
    let mu = 4.0 * order * order;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next == 0.0 {
            break;
        }
        if next.abs() > term.abs() {
            return None;
        }
        sum += next;
        term = next;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        if k == 199 {
            return None;
        }
    }
    if !(sum > 0.0) {
        return None;
    }
    Some(x - 0.5 * (2.0 * PI * x).ln() + sum.ln())
}

fn log_bessel_series(order: f64, x: f64) -> f64 {
    let log_lead = order * (0.5 * x).ln() - ln_gamma(order + 1.0);
    let quarter_sq = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 1.0f64;
    loop {
        term *= quarter_sq / (k * (k + order));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        if sum > 1e250 {
            sum *= 1e-250;
            term *= 1e-250;
            log_scale += 250.0 * std::f64::consts::LN_10;
        }
        k += 1.0;
    }
    log_lead + log_scale + sum.ln()
}

/// `I_ν(x)`; use [`log_bessel_i`] when the result may exceed `f64::MAX`.
pub fn bessel_i(order: f64, x: f64) -> Result<f64> {
    let l = log_bessel_i(order, x)?;
    if l > LN_MAX {
        return Err(Error::Overflow("bessel_i"));
    }
    Ok(l.exp())
}

/// Surface area `ω_q = 2π^{(q+1)/2} / Γ((q+1)/2)` of Ω_q.
pub fn surface_area(q: usize) -> f64 {
    log_surface_area(q).exp()
}

pub fn log_surface_area(q: usize) -> f64 {
    let a = 0.5 * (q as f64 + 1.0);
    std::f64::consts::LN_2 + a * PI.ln() - ln_gamma(a)
}

/// `log C_q(κ)` for the vMF density `C_q(κ) e^{κ μᵀx}` on Ω_q.
pub fn log_vmf_norm_const(q: usize, kappa: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::DomainError("sphere dimension q must be >= 1".into()));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::DomainError(format!("concentration {kappa} must be finite and >= 0")));
    }
    if kappa < KAPPA_UNIFORM {
        return Ok(-log_surface_area(q));
    }
    let nu = 0.5 * (q as f64 - 1.0);
    Ok(nu * kappa.ln() - 0.5 * (q as f64 + 1.0) * (2.0 * PI).ln() - log_bessel_i_unchecked(nu, kappa))
}

pub fn vmf_norm_const(q: usize, kappa: f64) -> Result<f64> {
    let l = log_vmf_norm_const(q, kappa)?;
    if l > LN_MAX {
        return Err(Error::Overflow("vmf_norm_const"));
    }
    Ok(l.exp())
}

/// `log ∫_{Ω_q} L(κ(1 − yᵀν)) ω_q(dy)` by quadrature.
///
/// With `t = cos θ` the integral becomes
/// `ω_{q−1} ∫_0^{θ_max} L(κ(1 − cos θ)) sin^{q−1}θ dθ`, which is smooth at both
/// ends for every q (the `(1 − t²)^{q/2−1}` endpoint singularity at q = 1
/// disappears). `θ_max` is the edge of the kernel support.
pub fn log_kernel_sphere_integral(kernel: Kernel, kappa: f64, q: usize) -> Result<f64> {
    if q == 0 {
        return Err(Error::DomainError("sphere dimension q must be >= 1".into()));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::DomainError(format!("concentration {kappa} must be finite and > 0")));
    }
    let bound = kernel.support_bound();
    let theta_max = if bound.is_finite() && bound / kappa < 2.0 {
        (1.0 - bound / kappa).acos()
    } else {
        PI
    };
    let power = q as i32 - 1;
    // 1 − cos θ = 2 sin²(θ/2) keeps precision near θ = 0.
    let integrand = |theta: f64| {
        let s = (0.5 * theta).sin();
        kernel.value(kappa * 2.0 * s * s) * theta.sin().powi(power)
    };
    // A breakpoint near the bulk of the mass helps strongly peaked kernels.
    let width = (2.0 / kappa).sqrt() * 8.0;
    let breaks = if width < theta_max { vec![width] } else { vec![] };
    let opts = QuadOptions { rel_tol: NORM_CONST_REL_TOL, abs_tol: 0.0, max_segments: 4000 };
    let (v, _) = integrate(integrand, 0.0, theta_max, &breaks, opts)?;
    if !(v > 0.0) {
        return Err(Error::QuadratureFailure { tol: opts.rel_tol, estimate: v, error: f64::NAN });
    }
    Ok(log_surface_area(q - 1) + v.ln())
}

/// `log c_{h,q,L}`, the KDE normalizing constant on Ω_q.
///
/// The von Mises kernel uses the closed form `c = e^{1/h²} C_q(1/h²)`; other
/// kernels go through [`log_kernel_sphere_integral`].
pub fn log_kernel_norm_const(kernel: Kernel, h: f64, q: usize) -> Result<f64> {
    check_bandwidth(h)?;
    let kappa = 1.0 / (h * h);
    log_component_norm_const(kernel, kappa, q)
}

pub fn kernel_norm_const(kernel: Kernel, h: f64, q: usize) -> Result<f64> {
    let l = log_kernel_norm_const(kernel, h, q)?;
    if l > LN_MAX {
        return Err(Error::Overflow("kernel_norm_const"));
    }
    Ok(l.exp())
}

/// Quadrature-only route to `c_{h,q,L}`, independent of the Bessel closed form.
pub fn kernel_norm_const_quadrature(kernel: Kernel, h: f64, q: usize) -> Result<f64> {
    check_bandwidth(h)?;
    let l = -log_kernel_sphere_integral(kernel, 1.0 / (h * h), q)?;
    Ok(l.exp())
}

/// `log C_{κ,q+1,L}`, the normalizing constant of one component
/// `L(κ(1 − yᵀν))` of the lifted mixture on Ω_{q+1}.
pub fn log_mixture_norm_const(kernel: Kernel, kappa: f64, q: usize) -> Result<f64> {
    log_component_norm_const(kernel, kappa, q + 1)
}

pub fn mixture_norm_const(kernel: Kernel, kappa: f64, q: usize) -> Result<f64> {
    let l = log_mixture_norm_const(kernel, kappa, q)?;
    if l > LN_MAX {
        return Err(Error::Overflow("mixture_norm_const"));
    }
    Ok(l.exp())
}

/// Quadrature-only route to `C_{κ,q+1,L}`.
pub fn mixture_norm_const_quadrature(kernel: Kernel, kappa: f64, q: usize) -> Result<f64> {
    Ok((-log_kernel_sphere_integral(kernel, kappa, q + 1)?).exp())
}

/// Normalizing constant of `L(κ(1 − xᵀν))` on the sphere of dimension `dim`.
pub(crate) fn log_component_norm_const(kernel: Kernel, kappa: f64, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::DomainError("sphere dimension q must be >= 1".into()));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::DomainError(format!("concentration {kappa} must be finite and > 0")));
    }
    match kernel {
        Kernel::VonMises => {
            if kappa < KAPPA_UNIFORM {
                Ok(-log_surface_area(dim))
            } else {
                Ok(kappa + log_vmf_norm_const(dim, kappa)?)
            }
        }
        _ => Ok(-log_kernel_sphere_integral(kernel, kappa, dim)?),
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::DomainError(format!("bandwidth {h} must be finite and > 0")));
    }
    Ok(())
}

/// Cached constants of a KDE with bandwidth `h` on Ω_q.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NormalizingConstants {
    /// `c_{h,q,L}`; may be `+∞` for tiny `h`, in which case use the log field.
    pub c_hql: f64,
    /// `C_{1/h²,q+1,L}` of the lifted mixture component on Ω_{q+1}.
    pub c_mix: f64,
    pub log_c_hql: f64,
    pub log_c_mix: f64,
    pub q: usize,
    pub h: f64,
}

impl NormalizingConstants {
    pub fn new(kernel: Kernel, h: f64, q: usize) -> Result<Self> {
        let log_c_hql = log_kernel_norm_const(kernel, h, q)?;
        let log_c_mix = log_mixture_norm_const(kernel, 1.0 / (h * h), q)?;
        Ok(Self { c_hql: log_c_hql.exp(), c_mix: log_c_mix.exp(), log_c_hql, log_c_mix, q, h })
    }
}

/// `A_q(κ) = I_{(q+1)/2}(κ) / I_{(q−1)/2}(κ)`, the expected mean resultant
/// length of a vMF(κ) sample on Ω_q.
pub fn bessel_ratio_a(q: usize, kappa: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::DomainError("sphere dimension q must be >= 1".into()));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::DomainError(format!("concentration {kappa} must be finite and >= 0")));
    }
    if kappa == 0.0 {
        return Ok(0.0);
    }
    let nu = 0.5 * (q as f64 - 1.0);
    let r = (log_bessel_i_unchecked(nu + 1.0, kappa) - log_bessel_i_unchecked(nu, kappa)).exp();
    Ok(r.min(1.0 - f64::EPSILON))
}

/// Approximate inverse of [`bessel_ratio_a`]:
/// `κ̂ = ((q+1)A − A³) / (1 − A²)`.
pub fn kappa_from_a(q: usize, a: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::DomainError(format!(
            "mean resultant length {a} must lie in [0, 1); data may be numerically coincident"
        )));
    }
    let d = q as f64 + 1.0;
    Ok((d * a - a * a * a) / (1.0 - a * a))
}

/// Newton refinement of `A_q(κ) = target`, started from [`kappa_from_a`].
pub fn kappa_from_a_newton(q: usize, a: f64) -> Result<f64> {
    let mut kappa = kappa_from_a(q, a)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..50 {
        let ak = bessel_ratio_a(q, kappa)?;
        // A'(κ) = 1 − A² − (q/κ) A
        let deriv = 1.0 - ak * ak - (q as f64 / kappa) * ak;
        if !(deriv > 0.0) {
            break;
        }
        let next = (kappa - (ak - a) / deriv).max(0.5 * kappa);
        if (next - kappa).abs() <= 1e-14 * kappa {
            kappa = next;
            break;
        }
        kappa = next;
    }
    Ok(kappa)
}
