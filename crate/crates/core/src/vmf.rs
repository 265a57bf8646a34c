//! von Mises–Fisher mixtures: density, exact sampling, EM fitting and the
//! vMF-reference rule-of-thumb bandwidth.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    bessel_ratio_a, kappa_from_a, kappa_from_a_newton, log_bessel_i, log_vmf_norm_const, KAPPA_UNIFORM,
};
use crate::sphere::{dot, norm, UnitVector};
use crate::sum::{log_sum_exp, pairwise_accumulate, pairwise_sum};

/// Upper limit on fitted concentrations; the κ approximation diverges as the
/// mean resultant length approaches 1.
pub const KAPPA_CAP: f64 = 1e6;

/// Responsibility mass below which a component counts as empty.
pub const EMPTY_COMPONENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfMixture {
    pub weights: Vec<f64>,
    pub means: Vec<UnitVector>,
    pub concentrations: Vec<f64>,
}

impl VmfMixture {
    pub fn new(weights: Vec<f64>, means: Vec<UnitVector>, concentrations: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        if means.len() != m || concentrations.len() != m {
            return Err(Error::InvalidConfig(format!(
                "mixture has {m} weights, {} means and {} concentrations",
                means.len(),
                concentrations.len()
            )));
        }
        let dim = means[0].ambient_dim();
        if let Some(bad) = means.iter().find(|x| x.ambient_dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.ambient_dim() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("mixture weights must be finite and non-negative".into()));
        }
        let total = weights.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("mixture weights sum to {total}, expected 1")));
        }
        if concentrations.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
            return Err(Error::InvalidConfig("concentrations must be finite and non-negative".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { weights, means, concentrations })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim_q(&self) -> usize {
        self.means[0].dim_q()
    }

    fn log_component(&self, j: usize, y: &[f64]) -> f64 {
        let q = self.dim_q();
        let k = self.concentrations[j];
        // Constructor guarantees κ ≥ 0 and q ≥ 1, so this cannot fail.
        let lc = log_vmf_norm_const(q, k).unwrap_or(f64::NAN);
        self.weights[j].ln() + lc + k * dot(self.means[j].as_slice(), y)
    }

    pub fn log_density(&self, y: &UnitVector) -> Result<f64> {
        self.check(y)?;
        let terms: Vec<f64> = (0..self.components()).map(|j| self.log_component(j, y.as_slice())).collect();
        Ok(log_sum_exp(&terms))
    }

    /// `Σ_j α_j C_q(κ_j) exp(κ_j μ_jᵀy)`.
    pub fn density(&self, y: &UnitVector) -> Result<f64> {
        Ok(self.log_density(y)?.exp())
    }

    fn check(&self, y: &UnitVector) -> Result<()> {
        let d = self.means[0].ambient_dim();
        if y.ambient_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: y.ambient_dim() });
        }
        Ok(())
    }

    /// Posterior component probabilities for each data point (rows sum to 1).
    pub fn responsibilities(&self, data: &[UnitVector]) -> Result<Vec<Vec<f64>>> {
        data.iter()
            .map(|y| {
                self.check(y)?;
                let logs: Vec<f64> = (0..self.components()).map(|j| self.log_component(j, y.as_slice())).collect();
                let t = log_sum_exp(&logs);
                Ok(logs.iter().map(|l| (l - t).exp()).collect())
            })
            .collect()
    }

    /// i.i.d. draws; the generator is ChaCha20 seeded from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<UnitVector> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(&self.weights).expect("weights validated at construction");
        (0..n)
            .map(|_| {
                let j = pick.sample(&mut rng);
                sample_vmf(&self.means[j], self.concentrations[j], &mut rng)
            })
            .collect()
    }
}

/// One vMF(μ, κ) draw by Wood's rejection sampler for `t = μᵀy`, combined
/// with a uniform tangent direction.
pub fn sample_vmf<R: Rng + ?Sized>(mu: &UnitVector, kappa: f64, rng: &mut R) -> UnitVector {
    let d = mu.ambient_dim();
    if kappa < KAPPA_UNIFORM {
        return uniform_direction(d, rng);
    }
    let dm1 = (d - 1) as f64;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(0.5 * dm1, 0.5 * dm1).expect("positive shape");
    let t = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w.clamp(-1.0, 1.0);
        }
    };
    let m = mu.as_slice();
    let v = loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let proj = dot(&g, m);
        let tang: Vec<f64> = g.iter().zip(m).map(|(gi, mi)| gi - proj * mi).collect();
        let nt = norm(&tang);
        if nt > 1e-12 {
            break tang.iter().map(|x| x / nt).collect::<Vec<f64>>();
        }
    };
    let s = (1.0 - t * t).max(0.0).sqrt();
    let y: Vec<f64> = m.iter().zip(&v).map(|(mi, vi)| t * mi + s * vi).collect();
    UnitVector::normalize(&y).expect("unit combination")
}

fn uniform_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVector {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let Ok(u) = UnitVector::normalize(&g) {
            if norm(&g) > 1e-12 {
                return u;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmFitOptions {
    /// Stop when the relative log-likelihood gain drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Refine each κ̂ by Newton's method on `A_q(κ) = Ā` instead of using the
    /// closed-form approximation alone.
    pub newton_kappa: bool,
}

impl Default for EmFitOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, newton_kappa: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmFitReport {
    pub fitted: VmfMixture,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Component indices that hit [`KAPPA_CAP`].
    pub capped: Vec<usize>,
}

pub fn em_fit(data: &[UnitVector], m: usize, seed: u64, tol: f64, max_iter: usize) -> Result<EmFitReport> {
    em_fit_with(data, m, seed, EmFitOptions { tol, max_iter, ..Default::default() })
}

/// EM for a mixture of `m` vMF components.
///
/// The α and μ updates are exact maximizers of the Q-function. κ comes from
/// the closed-form approximation; since that is not an exact maximizer, each
/// κ update is kept only if it does not lower the component's part of Q (which
/// is concave in κ), so every iteration is a GEM step and the log-likelihood
/// cannot decrease.
pub fn em_fit_with(data: &[UnitVector], m: usize, seed: u64, opts: EmFitOptions) -> Result<EmFitReport> {
    let n = data.len();
    if m == 0 || n < m {
        return Err(Error::DomainError(format!("need 1 <= M <= n, got M = {m}, n = {n}")));
    }
    let d = data[0].ambient_dim();
    if let Some(bad) = data.iter().find(|y| y.ambient_dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.ambient_dim() });
    }
    let q = d - 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let init = farthest_point_init(data, m, rng.random_range(0..n));
    let mut mix = VmfMixture {
        weights: vec![1.0 / m as f64; m],
        means: init.iter().map(|&i| data[i].clone()).collect(),
        concentrations: vec![1.0; m],
    };
    let mut reinit = vec![false; m];
    let mut trace = Vec::new();
    let mut capped = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let (mut resp, mut ll) = e_step(&mix, data);
    trace.push(ll);
    while iterations < opts.max_iter {
        iterations += 1;
        capped.clear();
        for j in 0..m {
            let nj = pairwise_sum(&resp.iter().map(|r| r[j]).collect::<Vec<_>>());
            if nj < EMPTY_COMPONENT {
                if reinit[j] {
                    return Err(Error::EmptyComponent(j));
                }
                reinit[j] = true;
                // Restart the component at the worst-explained point.
                let worst = worst_point(&mix, data);
                mix.means[j] = data[worst].clone();
                mix.concentrations[j] = 1.0;
                mix.weights[j] = 1.0 / n as f64;
                continue;
            }
            let rj = pairwise_accumulate(n, d, &|i, acc: &mut [f64]| {
                let w = resp[i][j];
                for (a, yi) in acc.iter_mut().zip(data[i].as_slice()) {
                    *a += w * yi;
                }
            });
            let rnorm = norm(&rj);
            mix.weights[j] = nj / n as f64;
            mix.means[j] = UnitVector::normalize(&rj).map_err(|_| Error::EmptyComponent(j))?;
            let abar = rnorm / nj;
            if abar >= 1.0 - 1e-12 {
                return Err(Error::DomainError(format!(
                    "component {j} has mean resultant length {abar}; data are numerically coincident"
                )));
            }
            let mut kappa = if opts.newton_kappa { kappa_from_a_newton(q, abar)? } else { kappa_from_a(q, abar)? };
            if kappa > KAPPA_CAP {
                kappa = KAPPA_CAP;
                capped.push(j);
            }
            let old = mix.concentrations[j];
            let qj = |k: f64| nj * log_vmf_norm_const(q, k).unwrap_or(f64::NEG_INFINITY) + k * rnorm;
            if qj(kappa) >= qj(old) {
                mix.concentrations[j] = kappa;
            }
        }
        let total: f64 = mix.weights.iter().sum();
        for w in &mut mix.weights {
            *w /= total;
        }
        let (r, new_ll) = e_step(&mix, data);
        resp = r;
        let gain = new_ll - ll;
        trace.push(new_ll);
        ll = new_ll;
        if gain.abs() < opts.tol * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(EmFitReport { fitted: mix, loglik_trace: trace, iterations, converged, capped })
}

fn e_step(mix: &VmfMixture, data: &[UnitVector]) -> (Vec<Vec<f64>>, f64) {
    let m = mix.components();
    let lcs: Vec<f64> = (0..m)
        .map(|j| mix.weights[j].ln() + log_vmf_norm_const(mix.dim_q(), mix.concentrations[j]).unwrap_or(f64::NAN))
        .collect();
    let mut rows = Vec::with_capacity(data.len());
    let mut lls = Vec::with_capacity(data.len());
    for y in data {
        let logs: Vec<f64> =
            (0..m).map(|j| lcs[j] + mix.concentrations[j] * dot(mix.means[j].as_slice(), y.as_slice())).collect();
        let t = log_sum_exp(&logs);
        rows.push(logs.iter().map(|l| (l - t).exp()).collect());
        lls.push(t);
    }
    (rows, pairwise_sum(&lls))
}

fn worst_point(mix: &VmfMixture, data: &[UnitVector]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, y) in data.iter().enumerate() {
        let l = mix.log_density(y).unwrap_or(f64::NEG_INFINITY);
        if l < best.1 {
            best = (i, l);
        }
    }
    best.0
}

/// Greedy max-min sweep: start at `first`, then repeatedly take the point
/// farthest (in angle) from everything chosen so far.
fn farthest_point_init(data: &[UnitVector], m: usize, first: usize) -> Vec<usize> {
    let mut chosen = vec![first];
    let mut best_cos: Vec<f64> = data.iter().map(|y| y.dot(&data[first])).collect();
    while chosen.len() < m {
        let mut pick = 0;
        for i in 1..data.len() {
            if best_cos[i] < best_cos[pick] {
                pick = i;
            }
        }
        chosen.push(pick);
        for (i, y) in data.iter().enumerate() {
            best_cos[i] = best_cos[i].max(y.dot(&data[pick]));
        }
    }
    chosen
}

/// Fits one vMF by the closed-form κ approximation; returns `(mean, κ̂)`.
pub fn fit_single_vmf(data: &[UnitVector]) -> Result<(UnitVector, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyFile);
    }
    let d = data[0].ambient_dim();
    let n = data.len();
    let r = pairwise_accumulate(n, d, &|i, acc: &mut [f64]| {
        for (a, yi) in acc.iter_mut().zip(data[i].as_slice()) {
            *a += yi;
        }
    });
    let abar = norm(&r) / n as f64;
    if abar >= 1.0 - 1e-12 {
        return Err(Error::DomainError("data are numerically coincident".into()));
    }
    let mean = UnitVector::normalize(&r)?;
    Ok((mean, kappa_from_a(d - 1, abar)?.min(KAPPA_CAP)))
}

/// vMF-reference AMISE-optimal bandwidth for a sample of size `n` on Ω_q
/// whose single-vMF concentration is `kappa`.
pub fn rule_of_thumb_from_kappa(q: usize, kappa: f64, n: usize) -> Result<f64> {
    if !(kappa > KAPPA_UNIFORM) {
        return Err(Error::DomainError(format!(
            "rule-of-thumb bandwidth undefined for concentration {kappa} (data look uniform)"
        )));
    }
    if n < 2 {
        return Err(Error::DomainError("rule-of-thumb bandwidth needs n >= 2".into()));
    }
    let qf = q as f64;
    let nu = 0.5 * (qf - 1.0);
    let two_k = 2.0 * kappa;
    let denom = log_sum_exp(&[
        (2.0 * qf).ln() + log_bessel_i(nu + 1.0, two_k)?,
        (2.0 + qf).ln() + kappa.ln() + log_bessel_i(nu + 2.0, two_k)?,
    ]);
    let log_num = 4f64.ln() + 0.5 * std::f64::consts::PI.ln() + 2.0 * log_bessel_i(nu, kappa)?;
    let log_h = (log_num - 0.5 * (qf + 1.0) * kappa.ln() - (n as f64).ln() - denom) / (qf + 4.0);
    Ok(log_h.exp())
}

pub fn rule_of_thumb_bandwidth(data: &[UnitVector]) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::DomainError("rule-of-thumb bandwidth needs n >= 2".into()));
    }
    let (_, kappa) = fit_single_vmf(data)?;
    rule_of_thumb_from_kappa(data[0].dim_q(), kappa, data.len())
}

/// Expected mean resultant length of vMF(κ) samples on Ω_q.
pub fn expected_resultant(q: usize, kappa: f64) -> Result<f64> {
    bessel_ratio_a(q, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mean_resultant(ys: &[UnitVector]) -> f64 {
        let d = ys[0].ambient_dim();
        let mut s = vec![0.0; d];
        for y in ys {
            for (a, b) in s.iter_mut().zip(y.as_slice()) {
                *a += b;
            }
        }
        norm(&s) / ys.len() as f64
    }

    #[test]
    fn uniform_component_density() {
        let mix = VmfMixture::new(vec![1.0], vec![UnitVector::basis(2, 2)], vec![0.0]).unwrap();
        let y = UnitVector::normalize(&[0.3, -0.2, 0.9]).unwrap();
        assert!((mix.density(&y).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn q2_density_matches_closed_form() {
        let mu = UnitVector::basis(2, 0);
        let mix = VmfMixture::new(vec![1.0], vec![mu.clone()], vec![8.0]).unwrap();
        let y = UnitVector::normalize(&[0.5, 0.5, 0.1]).unwrap();
        let expect = 8.0 / (4.0 * PI * 8.0f64.sinh()) * (8.0 * y.dot(&mu)).exp();
        assert!((mix.density(&y).unwrap() / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn sampler_is_deterministic() {
        let mix = VmfMixture::new(vec![1.0], vec![UnitVector::basis(2, 1)], vec![3.0]).unwrap();
        assert_eq!(mix.sample(50, 9), mix.sample(50, 9));
        assert_ne!(mix.sample(50, 9), mix.sample(50, 10));
    }

    #[test]
    fn sampler_resultant_matches_bessel_ratio() {
        for (q, kappa) in [(1usize, 2.0), (2, 8.0), (3, 4.0)] {
            let mix = VmfMixture::new(vec![1.0], vec![UnitVector::basis(q, 0)], vec![kappa]).unwrap();
            let ys = mix.sample(20_000, 3);
            let r = mean_resultant(&ys);
            let a = bessel_ratio_a(q, kappa).unwrap();
            assert!((r - a).abs() < 0.01, "q={q} kappa={kappa}: {r} vs {a}");
        }
    }

    #[test]
    fn coincident_data_rejected() {
        let ys = vec![UnitVector::basis(2, 0); 10];
        assert!(matches!(em_fit(&ys, 1, 0, 1e-8, 100), Err(Error::DomainError(_))));
        assert!(rule_of_thumb_bandwidth(&ys).is_err());
    }

    #[test]
    fn bandwidth_scales_with_n() {
        let h1 = rule_of_thumb_from_kappa(2, 3.0, 1000).unwrap();
        let h2 = rule_of_thumb_from_kappa(2, 3.0, 2000).unwrap();
        assert!((h2 / h1 - 2f64.powf(-1.0 / 6.0)).abs() < 1e-12);
    }
}
