//! Jacobian of the mean-shift map and linear convergence-rate diagnostics.
//!
//! Away from fixed points `∇F(x) = (I − ĝĝᵀ) ∇∇f̂(x) / ‖∇f̂(x)‖` with
//! `ĝ = ∇f̂/‖∇f̂‖`. This is a projection times a symmetric matrix and is not
//! itself symmetric in general, but its spectrum equals that of the symmetric
//! `(I − ĝĝᵀ) ∇∇f̂ (I − ĝĝᵀ) / ‖∇f̂‖`, which is what the eigenvalues are
//! computed from.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Serialize, Serializer};

use crate::dms::{self, DmsTrajectory, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::sphere::{chord, dot, norm, tangent_project, UnitVector};

#[derive(Debug, Clone, Serialize)]
pub struct JacobianReport {
    #[serde(serialize_with = "matrix_rows")]
    pub jac: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub max_abs_eig: f64,
    pub at_mode: bool,
    /// `‖J − Jᵀ‖_F / ‖J‖_F`.
    pub asymmetry: f64,
    pub gradient_norm: f64,
}

fn matrix_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    rows.serialize(s)
}

fn projector(v: &[f64]) -> DMatrix<f64> {
    let d = v.len();
    let mut p = DMatrix::<f64>::identity(d, d);
    for r in 0..d {
        for c in 0..d {
            p[(r, c)] -= v[r] * v[c];
        }
    }
    p
}

/// The fixed-point gate for the reduced Jacobian form.
pub fn is_verified_mode(model: &KdeModel, m: &UnitVector, eps: f64) -> Result<bool> {
    let g = model.gradient(m)?;
    let gn = norm(&g);
    if !(gn > 0.0) {
        return Ok(false);
    }
    let fm = match dms::step(model, m) {
        Ok(v) => v,
        Err(Error::DegenerateStep) => return Ok(false),
        Err(e) => return Err(e),
    };
    if chord(m.as_slice(), fm.as_slice()) >= 10.0 * eps {
        return Ok(false);
    }
    let tang = tangent_project(m, &g)?;
    Ok(norm(&tang) < 1e-8 * gn && dot(m.as_slice(), &g) > 0.0)
}

/// Jacobian of `F` at `x`; at a verified fixed point the reduced form
/// `(I − mmᵀ) ∇∇f̂(m) / ‖∇f̂(m)‖` is used and `at_mode` is set.
pub fn jacobian_f(model: &KdeModel, x: &UnitVector) -> Result<JacobianReport> {
    let at_mode = is_verified_mode(model, x, DEFAULT_EPS)?;
    jacobian_impl(model, x, at_mode)
}

/// The general (non-reduced) Jacobian form at any point.
pub fn jacobian_general(model: &KdeModel, x: &UnitVector) -> Result<JacobianReport> {
    jacobian_impl(model, x, false)
}

fn jacobian_impl(model: &KdeModel, x: &UnitVector, at_mode: bool) -> Result<JacobianReport> {
    let h = model.hessian(x)?;
    let g = model.gradient(x)?;
    let gn = norm(&g);
    if !(gn > 1e-300) {
        return Err(Error::ZeroGradient);
    }
    let axis: Vec<f64> = if at_mode { x.as_slice().to_vec() } else { g.iter().map(|v| v / gn).collect() };
    let p = projector(&axis);
    let jac = &p * &h / gn;
    let sym = &p * &h * &p / gn;
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let max_abs_eig = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let jn = jac.norm();
    let asymmetry = if jn > 0.0 { (&jac - jac.transpose()).norm() / jn } else { 0.0 };
    Ok(JacobianReport { jac, eigenvalues, max_abs_eig, at_mode, asymmetry, gradient_norm: gn })
}

/// `F(v) = ∇f̂(v)/‖∇f̂(v)‖` at an arbitrary ambient point `v`, which is the
/// function the Jacobian differentiates. Used for finite-difference checks.
pub fn map_f(model: &KdeModel, v: &[f64]) -> Result<UnitVector> {
    if v.len() != model.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: model.ambient_dim(), got: v.len() });
    }
    model.evaluate(v).next.ok_or(Error::DegenerateStep)
}

/// `max_i |Λ_i|` of `∇F` at a mode. `m` is first polished to rounding level so
/// the fixed-point gate can be checked.
pub fn rate_bound(model: &KdeModel, m: &UnitVector) -> Result<f64> {
    let pm = dms::polish(model, m)?;
    if !is_verified_mode(model, &pm, DEFAULT_EPS)? {
        return Err(Error::DomainError("point is not a verified fixed point of the mean-shift map".into()));
    }
    Ok(jacobian_impl(model, &pm, true)?.max_abs_eig)
}

/// Contraction ratios `‖x^{(t+1)} − m‖ / ‖x^{(t)} − m‖` over the steps whose
/// starting point is farther than `10 ε` from `m`.
pub fn empirical_rate(traj: &DmsTrajectory, m: &UnitVector) -> Result<Vec<f64>> {
    let cut = 10.0 * traj.eps;
    let dist: Vec<f64> = traj.points.iter().map(|p| chord(p.as_slice(), m.as_slice())).collect();
    let ratios: Vec<f64> = dist.windows(2).filter(|w| w[0] > cut).map(|w| w[1] / w[0]).collect();
    if ratios.len() < 3 {
        return Err(Error::InsufficientIterations(ratios.len()));
    }
    Ok(ratios)
}

/// Fits `log ‖F(x) − m − ∇F(m)(x − m)‖` against `log ‖x − m‖` for
/// perturbations `x` of a mode along random tangent directions and returns the
/// slope (≈ 2 when the first-order expansion is correct).
pub fn taylor_residual_exponent(model: &KdeModel, m: &UnitVector, seed: u64) -> Result<f64> {
    let pm = dms::polish(model, m)?;
    let rep = jacobian_impl(model, &pm, true)?;
    let d = pm.ambient_dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..4 {
        let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = tangent_project(&pm, &raw)?;
        let tn = norm(&t);
        let dir: Vec<f64> = t.iter().map(|v| v / tn).collect();
        for k in 0..8 {
            let delta = 0.05 * 0.5f64.powi(k);
            let v: Vec<f64> = pm.as_slice().iter().zip(&dir).map(|(a, b)| a + delta * b).collect();
            let x = UnitVector::normalize(&v)?;
            let fx = dms::step(model, &x)?;
            let dx: Vec<f64> = x.as_slice().iter().zip(pm.as_slice()).map(|(a, b)| a - b).collect();
            let lin = &rep.jac * nalgebra::DVector::from_column_slice(&dx);
            let resid: Vec<f64> =
                (0..d).map(|r| fx.as_slice()[r] - pm.as_slice()[r] - lin[r]).collect();
            let rn = norm(&resid);
            if rn > 0.0 {
                xs.push(norm(&dx).ln());
                ys.push(rn.ln());
            }
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientIterations(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::sphere::lonlat_to_unit;

    #[test]
    fn single_point_jacobian_vanishes_at_mode() {
        let x1 = lonlat_to_unit(30.0, 40.0).unwrap();
        let m = KdeModel::new(vec![x1.clone()], Kernel::VonMises, 0.5).unwrap();
        let rep = jacobian_f(&m, &x1).unwrap();
        assert!(rep.at_mode);
        assert!(rep.jac.iter().all(|v| v.abs() < 1e-12));
        assert!(rate_bound(&m, &x1).unwrap() < 1e-12);
    }

    #[test]
    fn general_form_is_not_symmetric_in_general() {
        // Two points with unequal weights: J = (I − ĝĝᵀ)H/‖g‖ has a nonzero
        // antisymmetric part away from fixed points.
        let e1 = UnitVector::basis(2, 0);
        let e2 = UnitVector::basis(2, 1);
        let m = KdeModel::with_params(vec![e1, e2], Kernel::VonMises, 0.8, Some(vec![0.7, 0.3]), None).unwrap();
        let x = UnitVector::normalize(&[0.6, 0.5, 0.3]).unwrap();
        let rep = jacobian_general(&m, &x).unwrap();
        assert!(rep.asymmetry > 1e-3);
    }

    #[test]
    fn linear_kernel_unsupported() {
        let m = KdeModel::new(vec![UnitVector::basis(2, 0)], Kernel::Truncated { p: 1 }, 0.5).unwrap();
        assert!(matches!(jacobian_f(&m, &UnitVector::basis(2, 0)), Err(Error::UnsupportedKernel(_))));
    }
}
