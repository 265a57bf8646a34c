//! Directional kernel density estimation on Ω_q.
//!
//! The estimator is
//!
//! ```text
//! f̂(x) = Σ_i α_i c_{κ_i,q,L} L(κ_i (1 − xᵀX_i))
//! ```
//!
//! which reduces to `(c_{h,q,L}/n) Σ L((1 − xᵀX_i)/h²)` with the default
//! weights `α_i = 1/n` and concentrations `κ_i = 1/h²`.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::special::{log_component_norm_const, NormalizingConstants};
use crate::sphere::{dot, norm, UnitVector};
use crate::sum::{log_sum_exp, pairwise_accumulate, pairwise_sum};

#[derive(Debug, Clone)]
pub struct KdeModel {
    points: Vec<UnitVector>,
    flat: Vec<f64>,
    dim: usize,
    kernel: Kernel,
    h: f64,
    weights: Vec<f64>,
    kappas: Vec<f64>,
    uniform: bool,
    consts: NormalizingConstants,
    // ln α_i + ln c_{κ_i,q,L}
    log_dens_coef: Vec<f64>,
    // ln α_i + ln C_{κ_i,q+1,L}
    log_mix_coef: Vec<f64>,
    // ln κ_i + ln α_i + ln C_{κ_i,q+1,L}
    log_step_coef: Vec<f64>,
}

/// Everything one mean-shift iteration needs at a point, from a single pass
/// over the data.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub log_density: f64,
    /// Log of the quantity the mean-shift step provably increases. Equal to
    /// `log_density` unless weights or concentrations vary across points.
    pub log_objective: f64,
    /// `F(x)`, or `None` when the step numerator vanishes.
    pub next: Option<UnitVector>,
}

impl KdeModel {
    /// Equal weights `1/n` and common concentration `1/h²`.
    pub fn new(data: Vec<UnitVector>, kernel: Kernel, h: f64) -> Result<Self> {
        Self::with_params(data, kernel, h, None, None)
    }

    /// Per-point weights (summing to 1) and concentrations override the defaults.
    pub fn with_params(
        data: Vec<UnitVector>,
        kernel: Kernel,
        h: f64,
        weights: Option<Vec<f64>>,
        concentrations: Option<Vec<f64>>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::DomainError("KDE needs at least one data point".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::DomainError(format!("bandwidth {h} must be finite and > 0")));
        }
        let dim = data[0].ambient_dim();
        for p in &data {
            if p.ambient_dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.ambient_dim() });
            }
        }
        let n = data.len();
        let q = dim - 1;
        let default_kappa = 1.0 / (h * h);
        let custom = weights.is_some() || concentrations.is_some();

        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: w.len() });
                }
                if w.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
                    return Err(Error::DomainError("weights must be finite and non-negative".into()));
                }
                let total = pairwise_sum(&w);
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::DomainError(format!("weights sum to {total}, expected 1")));
                }
                w.iter().map(|a| a / total).collect()
            }
        };
        let kappas = match concentrations {
            None => vec![default_kappa; n],
            Some(k) => {
                if k.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: k.len() });
                }
                if k.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return Err(Error::DomainError("concentrations must be finite and > 0".into()));
                }
                k
            }
        };
        let uniform = !custom
            || (weights.iter().all(|a| *a == weights[0]) && kappas.iter().all(|k| *k == kappas[0]));

        let consts = NormalizingConstants::new(kernel, h, q)?;
        let mut memo: HashMap<u64, (f64, f64)> = HashMap::new();
        memo.insert(default_kappa.to_bits(), (consts.log_c_hql, consts.log_c_mix));
        let mut log_dens_coef = Vec::with_capacity(n);
        let mut log_mix_coef = Vec::with_capacity(n);
        let mut log_step_coef = Vec::with_capacity(n);
        for (a, k) in weights.iter().zip(&kappas) {
            let (lc, lm) = match memo.get(&k.to_bits()) {
                Some(v) => *v,
                None => {
                    let v = (log_component_norm_const(kernel, *k, q)?, log_component_norm_const(kernel, *k, q + 1)?);
                    memo.insert(k.to_bits(), v);
                    v
                }
            };
            let la = a.ln();
            log_dens_coef.push(la + lc);
            log_mix_coef.push(la + lm);
            log_step_coef.push(k.ln() + la + lm);
        }
        let flat = data.iter().flat_map(|p| p.as_slice().iter().copied()).collect();
        Ok(Self {
            points: data,
            flat,
            dim,
            kernel,
            h,
            weights,
            kappas,
            uniform,
            consts,
            log_dens_coef,
            log_mix_coef,
            log_step_coef,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim_q(&self) -> usize {
        self.dim - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.kappas
    }

    pub fn constants(&self) -> &NormalizingConstants {
        &self.consts
    }

    /// True when all points share one weight and one concentration.
    pub fn is_homogeneous(&self) -> bool {
        self.uniform
    }

    #[inline]
    pub(crate) fn coords(&self, i: usize) -> &[f64] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn log_mix_coef(&self, i: usize) -> f64 {
        self.log_mix_coef[i]
    }

    pub(crate) fn check_dim(&self, x: &UnitVector) -> Result<()> {
        if x.ambient_dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.ambient_dim() });
        }
        Ok(())
    }

    /// Kernel arguments `κ_i (1 − xᵀX_i)`.
    pub(crate) fn kernel_args(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.kappas[i] * (1.0 - dot(x, self.coords(i))).max(0.0))
            .collect()
    }

    pub fn density(&self, x: &UnitVector) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// `log f̂(x)`, computed with log-sum-exp so it stays finite for small `h`.
    pub fn log_density(&self, x: &UnitVector) -> Result<f64> {
        self.log_density_ambient(x.as_slice())
    }

    /// The estimator formula evaluated at an arbitrary point of ℝ^{q+1}, the
    /// function whose ambient derivatives [`gradient`](Self::gradient) and
    /// [`hessian`](Self::hessian) return.
    pub fn log_density_ambient(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let u = self.kernel_args(v);
        let terms: Vec<f64> =
            u.iter().zip(&self.log_dens_coef).map(|(ui, c)| c + self.kernel.log_value(*ui)).collect();
        Ok(log_sum_exp(&terms))
    }

    /// Ambient gradient `−Σ α_i c_i κ_i X_i L'(κ_i(1 − xᵀX_i))`.
    pub fn gradient(&self, x: &UnitVector) -> Result<Vec<f64>> {
        self.gradient_ambient(x.as_slice())
    }

    pub fn gradient_ambient(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let u = self.kernel_args(v);
        let kernel = self.kernel;
        let g = pairwise_accumulate(self.n(), self.dim, &|i, acc: &mut [f64]| {
            let w = (self.log_dens_coef[i] + self.kappas[i].ln() + kernel.log_neg_slope(u[i])).exp();
            if w > 0.0 {
                for (a, xi) in acc.iter_mut().zip(self.coords(i)) {
                    *a += w * xi;
                }
            }
        });
        Ok(g)
    }

    /// Ambient Hessian `Σ α_i c_i κ_i² X_i X_iᵀ L''(κ_i(1 − xᵀX_i))`.
    pub fn hessian(&self, x: &UnitVector) -> Result<DMatrix<f64>> {
        self.hessian_ambient(x.as_slice())
    }

    pub fn hessian_ambient(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        if !self.kernel.twice_differentiable() {
            return Err(Error::UnsupportedKernel(format!("{} has no second derivative", self.kernel)));
        }
        let u = self.kernel_args(v);
        let d = self.dim;
        let kernel = self.kernel;
        let flat = pairwise_accumulate(self.n(), d * d, &|i, acc: &mut [f64]| {
            let base = self.log_dens_coef[i] + 2.0 * self.kappas[i].ln();
            let w = match kernel {
                Kernel::VonMises => (base - u[i]).exp(),
                _ => base.exp() * kernel.curvature(u[i]),
            };
            if w > 0.0 {
                let xi = self.coords(i);
                for r in 0..d {
                    let wr = w * xi[r];
                    for c in r..d {
                        acc[r * d + c] += wr * xi[c];
                    }
                }
            }
        });
        // Only the upper triangle was accumulated; mirroring makes H = Hᵀ exactly.
        Ok(DMatrix::from_fn(d, d, |r, c| if r <= c { flat[r * d + c] } else { flat[c * d + r] }))
    }

    /// Density, ascent objective and mean-shift update at `x` in one pass.
    pub(crate) fn evaluate(&self, x: &[f64]) -> Evaluation {
        let u = self.kernel_args(x);
        let n = self.n();
        let d = self.dim;

        if self.uniform && self.kernel == Kernel::VonMises {
            // Every log term is a constant minus u_i: one exponential per point
            // serves both the density and the step numerator.
            let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
            let e: Vec<f64> = u.iter().map(|ui| (umin - ui).exp()).collect();
            let mass = pairwise_sum(&e);
            let log_density = self.log_dens_coef[0] - umin + mass.ln();
            let num = pairwise_accumulate(n, d, &|i, acc: &mut [f64]| {
                for (a, xi) in acc.iter_mut().zip(self.coords(i)) {
                    *a += e[i] * xi;
                }
            });
            return Evaluation { log_density, log_objective: log_density, next: direction(num, mass) };
        }

        let kernel = self.kernel;
        let dens: Vec<f64> = u.iter().zip(&self.log_dens_coef).map(|(ui, c)| c + kernel.log_value(*ui)).collect();
        let log_density = log_sum_exp(&dens);
        let log_objective = if self.uniform {
            log_density
        } else {
            let obj: Vec<f64> =
                u.iter().zip(&self.log_mix_coef).map(|(ui, c)| c + kernel.log_value(*ui)).collect();
            log_sum_exp(&obj)
        };
        let next = self.step_from_args(&u);
        Evaluation { log_density, log_objective, next }
    }

    /// `F(x) = −Σ w_i X_i L'(u_i) / ‖·‖` with `w_i = κ_i α_i C_{κ_i,q+1,L}`,
    /// evaluated with a common log shift so no weight underflows.
    pub(crate) fn step_from_args(&self, u: &[f64]) -> Option<UnitVector> {
        let kernel = self.kernel;
        let ls: Vec<f64> = u.iter().zip(&self.log_step_coef).map(|(ui, c)| c + kernel.log_neg_slope(*ui)).collect();
        let shift = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return None;
        }
        let e: Vec<f64> = ls.iter().map(|l| (l - shift).exp()).collect();
        let mass = pairwise_sum(&e);
        let num = pairwise_accumulate(self.n(), self.dim, &|i, acc: &mut [f64]| {
            if e[i] > 0.0 {
                for (a, xi) in acc.iter_mut().zip(self.coords(i)) {
                    *a += e[i] * xi;
                }
            }
        });
        direction(num, mass)
    }
}

/// Normalizes a step numerator; `None` if it vanished or cancelled to
/// below rounding level relative to the total weight that went into it.
fn direction(num: Vec<f64>, mass: f64) -> Option<UnitVector> {
    let nrm = norm(&num);
    if !(nrm > 1e-300) || nrm <= 1e-14 * mass {
        return None;
    }
    UnitVector::normalize(&num).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{kernel_norm_const, log_vmf_norm_const};
    use crate::sphere::lonlat_to_unit;

    fn sample_points() -> Vec<UnitVector> {
        [(10.0, 20.0), (15.0, 25.0), (-40.0, 5.0), (100.0, -30.0), (12.0, 18.0)]
            .iter()
            .map(|&(a, b)| lonlat_to_unit(a, b).unwrap())
            .collect()
    }

    #[test]
    fn single_point_density_at_itself() {
        let x = lonlat_to_unit(30.0, 40.0).unwrap();
        let h = 0.5;
        let m = KdeModel::new(vec![x.clone()], Kernel::VonMises, h).unwrap();
        let expect = kernel_norm_const(Kernel::VonMises, h, 2).unwrap();
        assert!((m.density(&x).unwrap() / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn von_mises_matches_vmf_mixture_form() {
        let pts = sample_points();
        let h = 0.3;
        let m = KdeModel::new(pts.clone(), Kernel::VonMises, h).unwrap();
        let kappa = 1.0 / (h * h);
        let lc = log_vmf_norm_const(2, kappa).unwrap();
        for &(a, b) in &[(0.0, 0.0), (11.0, 21.0), (-170.0, 80.0)] {
            let x = lonlat_to_unit(a, b).unwrap();
            let direct: f64 = pts.iter().map(|p| (lc + kappa * x.dot(p)).exp()).sum::<f64>() / pts.len() as f64;
            let got = m.density(&x).unwrap();
            assert!((got / direct - 1.0).abs() < 1e-12, "{got} vs {direct}");
        }
    }

    #[test]
    fn truncated_outside_support_is_zero() {
        let pts = sample_points();
        let m = KdeModel::new(pts, Kernel::Truncated { p: 2 }, 0.2).unwrap();
        let far = lonlat_to_unit(-150.0, -60.0).unwrap();
        assert_eq!(m.density(&far).unwrap(), 0.0);
        assert!(m.gradient(&far).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn single_point_gradient_and_hessian() {
        let x1 = lonlat_to_unit(30.0, 40.0).unwrap();
        let h = 0.7;
        let m = KdeModel::new(vec![x1.clone()], Kernel::VonMises, h).unwrap();
        let x = lonlat_to_unit(50.0, 10.0).unwrap();
        let f = m.density(&x).unwrap();
        let g = m.gradient(&x).unwrap();
        let hess = m.hessian(&x).unwrap();
        for r in 0..3 {
            let e = f * x1.as_slice()[r] / (h * h);
            assert!((g[r] - e).abs() < 1e-13 * f / (h * h));
            for c in 0..3 {
                let e = f * x1.as_slice()[r] * x1.as_slice()[c] / h.powi(4);
                assert!((hess[(r, c)] - e).abs() < 1e-12 * f / h.powi(4));
                assert_eq!(hess[(r, c)], hess[(c, r)]);
            }
        }
    }

    #[test]
    fn hessian_unsupported_for_linear_kernel() {
        let m = KdeModel::new(sample_points(), Kernel::Truncated { p: 1 }, 0.5).unwrap();
        let x = lonlat_to_unit(10.0, 20.0).unwrap();
        assert!(matches!(m.hessian(&x), Err(Error::UnsupportedKernel(_))));
    }

    #[test]
    fn rejects_bad_parameters() {
        let pts = sample_points();
        assert!(KdeModel::new(vec![], Kernel::VonMises, 0.3).is_err());
        assert!(KdeModel::new(pts.clone(), Kernel::VonMises, 0.0).is_err());
        assert!(KdeModel::with_params(pts.clone(), Kernel::VonMises, 0.3, Some(vec![0.5; 5]), None).is_err());
        assert!(KdeModel::with_params(pts.clone(), Kernel::VonMises, 0.3, None, Some(vec![-1.0; 5])).is_err());
        let x = UnitVector::basis(3, 0);
        let m = KdeModel::new(pts, Kernel::VonMises, 0.3).unwrap();
        assert!(matches!(m.density(&x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn evaluate_agrees_with_public_density() {
        let pts = sample_points();
        for kernel in [Kernel::VonMises, Kernel::Truncated { p: 2 }] {
            let m = KdeModel::new(pts.clone(), kernel, 0.4).unwrap();
            let x = lonlat_to_unit(14.0, 19.0).unwrap();
            let ev = m.evaluate(x.as_slice());
            let ld = m.log_density(&x).unwrap();
            assert!((ev.log_density - ld).abs() < 1e-13 * ld.abs().max(1.0));
        }
    }
}
