//! Mean shift as (generalized) EM.
//!
//! A single pseudo-observation `Y₁ = (0, …, 0, 1)` on Ω_{q+1} is modelled as a
//! mixture of components `C_{κ_i,q+1,L} L(κ_i(1 − ν_i(μ)ᵀY₁))` with weights
//! `α_i`. Because `ν_i(μ)ᵀY₁ = μᵀX_i`, the lifted vectors never have to be
//! formed: every quantity below is written in terms of `μᵀX_i`.

use serde::Serialize;

use crate::dms::mean_shift_map;
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::kernel::Kernel;
use crate::sphere::{chord, UnitVector};
use crate::sum::{log_sum_exp, pairwise_accumulate, pairwise_sum};

/// Log component terms `log α_i + log C_i + log L(κ_i(1 − X_iᵀμ))`.
fn component_logs(model: &KdeModel, mu: &UnitVector) -> Vec<f64> {
    let kernel = model.kernel();
    model
        .kernel_args(mu.as_slice())
        .iter()
        .enumerate()
        .map(|(i, u)| model.log_mix_coef(i) + kernel.log_value(*u))
        .collect()
}

/// Posterior probabilities `P(Z₁ = i | Y₁, μ_t)`.
pub fn responsibilities(model: &KdeModel, mu_t: &UnitVector) -> Result<Vec<f64>> {
    model.check_dim(mu_t)?;
    let logs = component_logs(model, mu_t);
    let total = log_sum_exp(&logs);
    if total == f64::NEG_INFINITY {
        return Err(Error::AllZero);
    }
    Ok(logs.iter().map(|l| (l - total).exp()).collect())
}

/// `Q(μ | μ_t) = Σ_i p_i [log α_i + log C_i + log L(κ_i(1 − X_iᵀμ))]`.
///
/// Terms with `p_i = 0` are skipped. If some `p_i > 0` has `L = 0` at `μ` the
/// value is `−∞`.
pub fn q_function(model: &KdeModel, mu: &UnitVector, mu_t: &UnitVector) -> Result<f64> {
    model.check_dim(mu)?;
    let p = responsibilities(model, mu_t)?;
    Ok(q_with(model, mu, &p))
}

fn q_with(model: &KdeModel, mu: &UnitVector, p: &[f64]) -> f64 {
    let logs = component_logs(model, mu);
    let mut terms = Vec::with_capacity(p.len());
    for (pi, li) in p.iter().zip(&logs) {
        if *pi > 0.0 {
            if *li == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            terms.push(pi * li);
        }
    }
    pairwise_sum(&terms)
}

/// `log P(Y₁ | μ) = log Σ_ℓ α_ℓ C_ℓ L(κ_ℓ(1 − X_ℓᵀμ))`, possibly `−∞`.
pub fn observed_loglik(model: &KdeModel, mu: &UnitVector) -> Result<f64> {
    model.check_dim(mu)?;
    Ok(log_sum_exp(&component_logs(model, mu)))
}

/// `log(C_{1/h²,q+1,L} / c_{h,q,L})`, the constant gap between the observed
/// log-likelihood and `log f̂` for a homogeneous model.
pub fn loglik_offset(model: &KdeModel) -> f64 {
    let c = model.constants();
    c.log_c_mix - c.log_c_hql
}

#[derive(Debug, Clone, Serialize)]
pub struct EmState {
    pub mu_t: UnitVector,
    pub responsibilities: Vec<f64>,
    pub q_value: f64,
    pub obs_loglik: f64,
}

pub fn em_state(model: &KdeModel, mu_t: &UnitVector) -> Result<EmState> {
    let p = responsibilities(model, mu_t)?;
    let q_value = q_with(model, mu_t, &p);
    let obs_loglik = observed_loglik(model, mu_t)?;
    Ok(EmState { mu_t: mu_t.clone(), responsibilities: p, q_value, obs_loglik })
}

/// One GEM step: the first inner M-step iterate started at `μ_t`. This is the
/// mean-shift update itself, evaluated by the same code.
pub fn gem_step(model: &KdeModel, mu_t: &UnitVector) -> Result<UnitVector> {
    model.check_dim(mu_t)?;
    mean_shift_map(model, mu_t)
}

#[derive(Debug, Clone, Serialize)]
pub struct MStepOutcome {
    pub mu: UnitVector,
    pub inner_iterations: usize,
    /// The inner loop stopped because some `L(κ_i(1 − X_iᵀμ̂)) = 0` with `p_i > 0`.
    pub zero_denominator: bool,
    /// The inner loop stopped because an iterate would have lowered `Q`.
    pub stalled: bool,
}

/// Exact M-step: iterates
///
/// ```text
/// μ̂ ∝ −Σ κ_i α_i C_i X_i L'(κ_i(1 − X_iᵀμ̂)) L(κ_i(1 − X_iᵀμ_t)) / L(κ_i(1 − X_iᵀμ̂))
/// ```
///
/// from `μ̂ = μ_t` until the displacement drops below `inner_tol`.
///
/// The first iterate is the GEM step. Later iterates are accepted only while
/// they do not lower `Q(·|μ_t)`, so the result never does worse than
/// [`gem_step`]. With the von Mises kernel `L'/L ≡ −1` and the iteration is
/// stationary after one step, so the GEM step is returned as is.
pub fn exact_m_step(model: &KdeModel, mu_t: &UnitVector, inner_tol: f64, max_inner: usize) -> Result<MStepOutcome> {
    let first = gem_step(model, mu_t)?;
    if model.kernel() == Kernel::VonMises {
        return Ok(MStepOutcome { mu: first, inner_iterations: 1, zero_denominator: false, stalled: false });
    }
    let kernel = model.kernel();
    let p = responsibilities(model, mu_t)?;
    let kappas = model.concentrations();
    let mut cur = first;
    let mut q_cur = q_with(model, &cur, &p);
    let mut moved = chord(cur.as_slice(), mu_t.as_slice());
    let mut k = 1;
    while moved >= inner_tol {
        if k >= max_inner {
            return Err(Error::InnerDivergence(max_inner));
        }
        let u = model.kernel_args(cur.as_slice());
        if p.iter().zip(&u).any(|(pi, ui)| *pi > 0.0 && kernel.value(*ui) == 0.0) {
            return Ok(MStepOutcome { mu: cur, inner_iterations: k, zero_denominator: true, stalled: false });
        }
        // weight_i = p_i κ_i (−L'/L)(u_i); positive scale factors cancel on normalizing.
        let num = pairwise_accumulate(model.n(), model.ambient_dim(), &|i, acc: &mut [f64]| {
            if p[i] > 0.0 {
                let w = p[i] * kappas[i] * (kernel.log_neg_slope(u[i]) - kernel.log_value(u[i])).exp();
                for (a, xi) in acc.iter_mut().zip(model.coords(i)) {
                    *a += w * xi;
                }
            }
        });
        let next = match UnitVector::normalize(&num) {
            Ok(v) => v,
            Err(_) => return Ok(MStepOutcome { mu: cur, inner_iterations: k, zero_denominator: false, stalled: true }),
        };
        let q_next = q_with(model, &next, &p);
        k += 1;
        if !(q_next >= q_cur) {
            return Ok(MStepOutcome { mu: cur, inner_iterations: k, zero_denominator: false, stalled: true });
        }
        moved = chord(cur.as_slice(), next.as_slice());
        cur = next;
        q_cur = q_next;
    }
    Ok(MStepOutcome { mu: cur, inner_iterations: k, zero_denominator: false, stalled: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::lonlat_to_unit;

    fn pts() -> Vec<UnitVector> {
        [(0.0, 0.0), (20.0, 10.0), (-15.0, 30.0)].iter().map(|&(a, b)| lonlat_to_unit(a, b).unwrap()).collect()
    }

    #[test]
    fn single_point_responsibility() {
        let m = KdeModel::new(vec![UnitVector::basis(2, 0)], Kernel::VonMises, 0.5).unwrap();
        assert_eq!(responsibilities(&m, &UnitVector::basis(2, 1)).unwrap(), vec![1.0]);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let a = lonlat_to_unit(10.0, 0.0).unwrap();
        let b = lonlat_to_unit(-10.0, 0.0).unwrap();
        let m = KdeModel::new(vec![a, b], Kernel::Truncated { p: 2 }, 0.5).unwrap();
        let p = responsibilities(&m, &UnitVector::basis(2, 0)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn von_mises_responsibilities_are_softmax() {
        let h = 0.4;
        let data = pts();
        let m = KdeModel::new(data.clone(), Kernel::VonMises, h).unwrap();
        let mu = lonlat_to_unit(5.0, 5.0).unwrap();
        let s: Vec<f64> = data.iter().map(|x| (x.dot(&mu) / (h * h)).exp()).collect();
        let z: f64 = s.iter().sum();
        let p = responsibilities(&m, &mu).unwrap();
        for (a, b) in p.iter().zip(&s) {
            assert!((a - b / z).abs() < 1e-14);
        }
    }

    #[test]
    fn all_zero_for_isolated_truncated_point() {
        let m = KdeModel::new(pts(), Kernel::Truncated { p: 2 }, 0.2).unwrap();
        let far = lonlat_to_unit(180.0, -80.0).unwrap();
        assert_eq!(responsibilities(&m, &far), Err(Error::AllZero));
        assert_eq!(observed_loglik(&m, &far).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_point_loglik_closed_form() {
        let x1 = lonlat_to_unit(40.0, -10.0).unwrap();
        let h = 0.6;
        let m = KdeModel::new(vec![x1.clone()], Kernel::VonMises, h).unwrap();
        let mu = lonlat_to_unit(0.0, 0.0).unwrap();
        let kappa = 1.0 / (h * h);
        let expect = crate::special::log_vmf_norm_const(3, kappa).unwrap() + kappa * x1.dot(&mu);
        assert!((observed_loglik(&m, &mu).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn exact_m_step_equals_gem_step_for_von_mises() {
        let m = KdeModel::new(pts(), Kernel::VonMises, 0.5).unwrap();
        let mu = lonlat_to_unit(30.0, 40.0).unwrap();
        let ex = exact_m_step(&m, &mu, 1e-10, 500).unwrap();
        assert_eq!(ex.mu, gem_step(&m, &mu).unwrap());
    }

    #[test]
    fn exact_m_step_single_point() {
        let x1 = lonlat_to_unit(40.0, -10.0).unwrap();
        let m = KdeModel::new(vec![x1.clone()], Kernel::Truncated { p: 3 }, 1.0).unwrap();
        let ex = exact_m_step(&m, &lonlat_to_unit(20.0, 0.0).unwrap(), 1e-10, 500).unwrap();
        assert!(chord(ex.mu.as_slice(), x1.as_slice()) < 1e-12);
    }

    #[test]
    fn exact_m_step_does_not_lose_to_gem_step() {
        let m = KdeModel::new(pts(), Kernel::Truncated { p: 2 }, 0.8).unwrap();
        let mu = lonlat_to_unit(10.0, 25.0).unwrap();
        let ex = exact_m_step(&m, &mu, 1e-10, 500).unwrap();
        let qe = q_function(&m, &ex.mu, &mu).unwrap();
        let qs = q_function(&m, &gem_step(&m, &mu).unwrap(), &mu).unwrap();
        let q0 = q_function(&m, &mu, &mu).unwrap();
        assert!(qe >= qs - 1e-12 * qs.abs());
        assert!(qs >= q0 - 1e-12 * q0.abs());
    }
}
