//! Points on the unit hypersphere Ω_q ⊂ ℝ^{q+1}.
//!
//! A [`UnitVector`] always carries `q + 1` coordinates with unit Euclidean norm
//! (to within `1e-12`). Construction renormalizes; it never rejects near-unit
//! input, since iterates drift from the sphere at the `1e-16` scale.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as exactly zero.
pub const ZERO_NORM: f64 = 1e-300;

/// Squared norms this close to one are already on the sphere up to rounding;
/// the coordinates are then kept bit-for-bit.
const UNIT_SLACK: f64 = 8.0 * f64::EPSILON;

/// A direction on Ω_q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct UnitVector {
    coords: Vec<f64>,
}

impl UnitVector {
    /// Returns `v / ‖v‖₂`, always dividing by the computed norm.
    pub fn normalize(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: v.len() });
        }
        let norm = norm(v);
        if !(norm > ZERO_NORM) || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self { coords: v.iter().map(|x| x / norm).collect() })
    }

    /// Builds a unit vector from coordinates that are expected to be (close to)
    /// unit norm. Input already on the sphere up to rounding is kept verbatim,
    /// anything else is renormalized.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: coords.len() });
        }
        let sq: f64 = coords.iter().map(|x| x * x).sum();
        if (sq - 1.0).abs() <= UNIT_SLACK {
            Ok(Self { coords })
        } else {
            Self::normalize(&coords)
        }
    }

    /// The `i`-th standard basis vector of ℝ^{q+1}.
    pub fn basis(dim_q: usize, i: usize) -> Self {
        assert!(i <= dim_q, "basis index {i} out of range for q = {dim_q}");
        let mut coords = vec![0.0; dim_q + 1];
        coords[i] = 1.0;
        Self { coords }
    }

    /// Sphere dimension q (the ambient dimension is `q + 1`).
    pub fn dim_q(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.coords, &other.coords)
    }

    /// Antipodal point.
    pub fn negate(&self) -> Self {
        Self { coords: self.coords.iter().map(|x| -x).collect() }
    }

    fn check_same_sphere(&self, other: &UnitVector) -> Result<()> {
        if self.coords.len() != other.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                got: other.coords.len(),
            });
        }
        Ok(())
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.coords
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    // Scale by the largest magnitude so that tiny numerators (truncated
    // kernels near the support edge) do not underflow when squared.
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

/// Euclidean distance between two coordinate slices.
pub(crate) fn chord(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Great-circle distance in radians, `arccos(clamp(xᵀy, −1, 1))`.
pub fn geodesic_distance(x: &UnitVector, y: &UnitVector) -> Result<f64> {
    x.check_same_sphere(y)?;
    Ok(x.dot(y).clamp(-1.0, 1.0).acos())
}

/// Maps spherical `[longitude, latitude]` in degrees to a point on Ω₂.
pub fn lonlat_to_unit(lon_deg: f64, lat_deg: f64) -> Result<UnitVector> {
    if !(-90.0..=90.0).contains(&lat_deg) {
        return Err(Error::DomainError(format!("latitude {lat_deg} outside [-90, 90]")));
    }
    let (lon, lat) = (lon_deg.to_radians(), lat_deg.to_radians());
    UnitVector::new(vec![lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()])
}

/// Inverse of [`lonlat_to_unit`]: longitude in (−180, 180], latitude in [−90, 90].
pub fn unit_to_lonlat(x: &UnitVector) -> Result<(f64, f64)> {
    if x.dim_q() != 2 {
        return Err(Error::UnsupportedDimension { supported: 2, got: x.dim_q() });
    }
    let c = x.as_slice();
    let lat = c[2].clamp(-1.0, 1.0).asin().to_degrees();
    let mut lon = c[1].atan2(c[0]).to_degrees();
    if lon <= -180.0 {
        lon += 360.0;
    }
    Ok((lon, lat))
}

/// Projection `(I − xxᵀ)v` onto the tangent space at `x`.
pub fn tangent_project(x: &UnitVector, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != x.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: x.ambient_dim(), got: v.len() });
    }
    let xs = x.as_slice();
    let radial = dot(xs, v);
    Ok(v.iter().zip(xs).map(|(vi, xi)| vi - radial * xi).collect())
}

/// Deterministic, roughly uniform point set on Ω_q.
///
/// q = 1 uses equally spaced angles and q = 2 the Fibonacci (golden-angle)
/// spiral. Higher dimensions fall back to normalized Gaussian draws from a
/// fixed-seed ChaCha20 stream.
pub fn sphere_lattice(dim_q: usize, count: usize) -> Vec<UnitVector> {
    match dim_q {
        0 => panic!("Ω_0 is not supported"),
        1 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                UnitVector { coords: vec![a.cos(), a.sin()] }
            })
            .collect(),
        2 => {
            let golden = PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    UnitVector::normalize(&[r * a.cos(), r * a.sin(), z]).expect("lattice point")
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_1a77);
            (0..count)
                .map(|_| loop {
                    let v: Vec<f64> = (0..=dim_q).map(|_| StandardNormal.sample(&mut rng)).collect();
                    if let Ok(u) = UnitVector::normalize(&v) {
                        break u;
                    }
                })
                .collect()
        }
    }
}

/// Longitude/latitude grid with the given step in degrees, longitudes in
/// (−180, 180] and latitudes in [−90, 90]. Returned row-major by latitude,
/// as `(lon, lat, point)`.
pub fn lonlat_grid(step_deg: f64) -> Result<Vec<(f64, f64, UnitVector)>> {
    if !(step_deg > 0.0) || step_deg > 180.0 {
        return Err(Error::InvalidConfig(format!("grid step {step_deg} must be in (0, 180]")));
    }
    let n_lon = (360.0 / step_deg).round() as usize;
    let n_lat = (180.0 / step_deg).round() as usize + 1;
    let mut out = Vec::with_capacity(n_lon * n_lat);
    for j in 0..n_lat {
        let lat = (-90.0 + j as f64 * step_deg).min(90.0);
        for i in 0..n_lon {
            let lon = 180.0 - (n_lon - 1 - i) as f64 * step_deg;
            out.push((lon, lat, lonlat_to_unit(lon, lat)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn normalize_examples() {
        let u = UnitVector::normalize(&[3.0, 4.0, 0.0]).unwrap();
        assert!(close(u.as_slice(), &[0.6, 0.8, 0.0], 1e-15));
        let u = UnitVector::normalize(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(u.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(UnitVector::normalize(&[0.0, 0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn new_keeps_unit_input_and_fixes_drift() {
        let u = UnitVector::normalize(&[1.0, 2.0, 3.0]).unwrap();
        let again = UnitVector::new(u.as_slice().to_vec()).unwrap();
        assert_eq!(u, again);
        let drifted = UnitVector::new(vec![0.0, 0.0, 1.0000001]).unwrap();
        assert_eq!(drifted.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn geodesic_examples() {
        let e1 = UnitVector::basis(2, 0);
        let e2 = UnitVector::basis(2, 1);
        assert_eq!(geodesic_distance(&e1, &e1).unwrap(), 0.0);
        assert!((geodesic_distance(&e1, &e1.negate()).unwrap() - PI).abs() < 1e-15);
        assert!((geodesic_distance(&e1, &e2).unwrap() - PI / 2.0).abs() < 1e-15);
        let circle = UnitVector::basis(1, 0);
        assert!(matches!(
            geodesic_distance(&e1, &circle),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lonlat_examples() {
        let np = lonlat_to_unit(0.0, 90.0).unwrap();
        assert!(close(np.as_slice(), &[0.0, 0.0, 1.0], 1e-15));
        let mu1 = lonlat_to_unit(-120.0, -45.0).unwrap();
        assert!(close(mu1.as_slice(), &[-0.35355339, -0.61237244, -0.70710678], 1e-8));
        let mu3 = lonlat_to_unit(150.0, 0.0).unwrap();
        assert!(close(mu3.as_slice(), &[-0.8660254, 0.5, 0.0], 1e-7));
        let circle = UnitVector::basis(1, 0);
        assert!(matches!(unit_to_lonlat(&circle), Err(Error::UnsupportedDimension { .. })));
        assert!(lonlat_to_unit(0.0, 91.0).is_err());
    }

    #[test]
    fn lonlat_longitude_range() {
        let x = lonlat_to_unit(-180.0, 10.0).unwrap();
        let (lon, lat) = unit_to_lonlat(&x).unwrap();
        assert!((lon - 180.0).abs() < 1e-10);
        assert!((lat - 10.0).abs() < 1e-10);
    }

    #[test]
    fn tangent_examples() {
        let e3 = UnitVector::basis(2, 2);
        assert!(close(&tangent_project(&e3, &[0.0, 0.0, 1.0]).unwrap(), &[0.0; 3], 0.0));
        assert_eq!(tangent_project(&e3, &[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(tangent_project(&e3, &[1.0, 0.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(tangent_project(&e3, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn lattice_is_on_sphere() {
        for q in 1..=4 {
            let pts = sphere_lattice(q, 50);
            assert_eq!(pts.len(), 50);
            for p in &pts {
                assert_eq!(p.dim_q(), q);
                assert!((norm(p.as_slice()) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_shape() {
        let g = lonlat_grid(2.0).unwrap();
        assert_eq!(g.len(), 180 * 91);
        assert_eq!(g[0].0, -178.0);
        assert_eq!(g[179].0, 180.0);
        assert_eq!(g[0].1, -90.0);
        assert_eq!(g.last().unwrap().1, 90.0);
    }
}
