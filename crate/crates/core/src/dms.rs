//! Directional mean shift: the fixed-point map, the convergence loop, mode
//! extraction and basin labelling.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::sphere::{chord, dot, sphere_lattice, UnitVector};

pub const DEFAULT_EPS: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_MERGE_TOL: f64 = 0.05;

/// Relative slack allowed in the monotone-density check.
pub const ASCENT_SLACK: f64 = 1e-12;

/// Tangent Hessian eigenvalues above this multiple of `|mᵀ∇f̂(m)|` mark a
/// limit point as a saddle or minimum rather than a mode.
pub const MODE_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct DmsTrajectory {
    pub points: Vec<UnitVector>,
    pub densities: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub eps: f64,
}

impl DmsTrajectory {
    pub fn endpoint(&self) -> &UnitVector {
        self.points.last().expect("trajectory holds its start")
    }

    pub fn final_density(&self) -> f64 {
        *self.densities.last().expect("trajectory holds its start")
    }

    /// `‖x^{(t+1)} − x^{(t)}‖₂` for every step taken.
    pub fn step_norms(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| chord(w[0].as_slice(), w[1].as_slice())).collect()
    }
}

/// One mean-shift update `F(x)`.
pub fn step(model: &KdeModel, x: &UnitVector) -> Result<UnitVector> {
    model.check_dim(x)?;
    mean_shift_map(model, x)
}

/// Shared by [`step`] and the EM view's GEM step so the two are the same
/// computation, not merely equal formulas.
pub(crate) fn mean_shift_map(model: &KdeModel, x: &UnitVector) -> Result<UnitVector> {
    model.evaluate(x.as_slice()).next.ok_or(Error::DegenerateStep)
}

/// Iterates `F` from `x0` until `‖x^{(t+1)} − x^{(t)}‖₂ < eps` or `max_iter`.
///
/// Every step is checked against the ascent property; a decrease beyond
/// [`ASCENT_SLACK`] is reported as [`Error::AscentViolation`]. A vanishing step
/// numerator ends the trajectory with [`Status::Degenerate`].
pub fn run(model: &KdeModel, x0: &UnitVector, eps: f64, max_iter: usize) -> Result<DmsTrajectory> {
    model.check_dim(x0)?;
    if !(eps > 0.0) {
        return Err(Error::DomainError(format!("eps must be > 0, got {eps}")));
    }
    let mut x = x0.clone();
    let mut ev = model.evaluate(x.as_slice());
    let mut points = vec![x.clone()];
    let mut densities = vec![ev.log_density.exp()];
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = match ev.next.take() {
            Some(v) => v,
            None => {
                status = Status::Degenerate;
                break;
            }
        };
        let next_ev = model.evaluate(next.as_slice());
        iterations += 1;
        // log f_new ≥ log f_old + log(1 − slack)
        if next_ev.log_objective < ev.log_objective - ASCENT_SLACK && ev.log_objective.is_finite() {
            return Err(Error::AscentViolation {
                iteration: iterations,
                before: ev.log_objective.exp(),
                after: next_ev.log_objective.exp(),
            });
        }
        let moved = chord(x.as_slice(), next.as_slice());
        points.push(next.clone());
        densities.push(next_ev.log_density.exp());
        x = next;
        ev = next_ev;
        if moved < eps {
            status = Status::Converged;
            break;
        }
    }
    Ok(DmsTrajectory { points, densities, status, iterations, eps })
}

/// Iterates from a point already close to a fixed point until the update is
/// at rounding level. Used to locate modes far more precisely than the
/// stopping rule does before Hessian-based checks.
pub fn polish(model: &KdeModel, x: &UnitVector) -> Result<UnitVector> {
    let mut cur = x.clone();
    for _ in 0..500 {
        let next = step(model, &cur)?;
        let moved = chord(cur.as_slice(), next.as_slice());
        cur = next;
        if moved < 1e-14 {
            break;
        }
    }
    Ok(cur)
}

/// Largest eigenvalue of the Riemannian Hessian `P(∇∇f̂ − (mᵀ∇f̂) I)P`
/// restricted to the tangent space at `m`, in units of `|mᵀ∇f̂(m)|`.
///
/// Negative values mean `m` is a strict local maximum of `f̂` on Ω_q.
/// Returns `None` when the kernel has no usable Hessian.
pub fn tangent_hessian_max_eig(model: &KdeModel, m: &UnitVector) -> Result<Option<f64>> {
    if !model.kernel().twice_differentiable() {
        return Ok(None);
    }
    let g = model.gradient(m)?;
    let h = model.hessian(m)?;
    let d = m.ambient_dim();
    let mv = m.as_slice();
    let radial = dot(mv, &g);
    if !(radial.abs() > 0.0) {
        return Ok(None);
    }
    let mut p = DMatrix::<f64>::identity(d, d);
    for r in 0..d {
        for c in 0..d {
            p[(r, c)] -= mv[r] * mv[c];
        }
    }
    let shifted = &h - DMatrix::<f64>::identity(d, d) * radial;
    let mut rh = &p * shifted * &p;
    rh = (&rh + rh.transpose()) * 0.5;
    let eig = SymmetricEigen::new(rh);
    // Drop the eigenpair belonging to the normal direction m (P m = 0).
    let normal = (0..d)
        .max_by(|&a, &b| {
            let pa: f64 = (0..d).map(|r| eig.eigenvectors[(r, a)] * mv[r]).sum();
            let pb: f64 = (0..d).map(|r| eig.eigenvectors[(r, b)] * mv[r]).sum();
            pa.abs().total_cmp(&pb.abs())
        })
        .expect("d >= 2");
    let max = (0..d).filter(|&k| k != normal).map(|k| eig.eigenvalues[k]).fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(max / radial.abs()))
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub point: UnitVector,
    pub density: f64,
    pub count: usize,
    /// Largest scaled tangent Hessian eigenvalue (see [`tangent_hessian_max_eig`]).
    pub max_tangent_eig: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSet {
    pub modes: Vec<UnitVector>,
    pub densities: Vec<f64>,
    pub counts: Vec<usize>,
    pub merge_tol: f64,
    /// Converged limits that failed the mode check.
    pub saddles: Vec<CriticalPoint>,
    /// For each start, the index of the mode it reached.
    pub assignment: Vec<Option<usize>>,
    pub non_converged: usize,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Data points plus a quasi-uniform lattice of `4(q+1)²` points.
pub fn default_starts(model: &KdeModel) -> Vec<UnitVector> {
    let q = model.dim_q();
    let mut s = model.points().to_vec();
    s.extend(sphere_lattice(q, 4 * (q + 1) * (q + 1)));
    s
}

/// Runs [`run`] from every start. Trajectories are computed in parallel;
/// the result order follows `starts`.
pub fn run_all(model: &KdeModel, starts: &[UnitVector], eps: f64, max_iter: usize) -> Result<Vec<DmsTrajectory>> {
    starts.par_iter().map(|s| run(model, s, eps, max_iter)).collect()
}

pub fn find_modes(
    model: &KdeModel,
    starts: &[UnitVector],
    eps: f64,
    max_iter: usize,
    merge_tol: f64,
) -> Result<ModeSet> {
    if starts.is_empty() {
        return Err(Error::DomainError("find_modes needs at least one start".into()));
    }
    let trajs = run_all(model, starts, eps, max_iter)?;
    modes_from_trajectories(model, &trajs, merge_tol)
}

/// Merges trajectory endpoints into modes by single linkage.
pub fn modes_from_trajectories(model: &KdeModel, trajs: &[DmsTrajectory], merge_tol: f64) -> Result<ModeSet> {
    if !(merge_tol > 0.0) {
        return Err(Error::DomainError(format!("merge_tol must be > 0, got {merge_tol}")));
    }
    let done: Vec<usize> = (0..trajs.len()).filter(|&i| trajs[i].status == Status::Converged).collect();
    if done.is_empty() {
        return Err(Error::NoConvergedTrajectory);
    }
    let cos_tol = merge_tol.cos();
    let mut uf = UnionFind::new(done.len());
    for a in 0..done.len() {
        let ea = trajs[done[a]].endpoint().as_slice();
        for b in (a + 1)..done.len() {
            if dot(ea, trajs[done[b]].endpoint().as_slice()) >= cos_tol {
                uf.union(a, b);
            }
        }
    }
    // Clusters keyed by root; representative = highest density, ties to the lower start index.
    let mut rep: Vec<Option<usize>> = vec![None; done.len()];
    let mut size = vec![0usize; done.len()];
    for a in 0..done.len() {
        let r = uf.find(a);
        size[r] += 1;
        let better = match rep[r] {
            None => true,
            Some(cur) => trajs[done[a]].final_density() > trajs[done[cur]].final_density(),
        };
        if better {
            rep[r] = Some(a);
        }
    }
    struct Cluster {
        root: usize,
        point: UnitVector,
        density: f64,
        count: usize,
        eig: Option<f64>,
        first: usize,
    }
    let roots: Vec<usize> = (0..done.len()).filter(|&a| uf.find(a) == a).collect();
    let clusters: Vec<Cluster> = roots
        .par_iter()
        .map(|&r| {
            let a = rep[r].expect("every root has a representative");
            let raw = trajs[done[a]].endpoint();
            let point = polish(model, raw).unwrap_or_else(|_| raw.clone());
            let density = model.density(&point)?;
            let eig = tangent_hessian_max_eig(model, &point)?;
            let first = (0..done.len()).find(|&b| uf.find_const(b) == r).unwrap_or(a);
            Ok(Cluster { root: r, point, density, count: size[r], eig, first })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mode_clusters = Vec::new();
    let mut saddles = Vec::new();
    for c in clusters {
        let is_mode = c.eig.map_or(true, |e| e <= MODE_EIG_TOL);
        if is_mode {
            mode_clusters.push(c);
        } else {
            saddles.push(CriticalPoint { point: c.point, density: c.density, count: c.count, max_tangent_eig: c.eig });
        }
    }
    mode_clusters.sort_by(|a, b| b.density.total_cmp(&a.density).then(a.first.cmp(&b.first)));
    let mut root_to_mode = std::collections::HashMap::new();
    for (k, c) in mode_clusters.iter().enumerate() {
        root_to_mode.insert(c.root, k);
    }
    let mut assignment = vec![None; trajs.len()];
    for (a, &i) in done.iter().enumerate() {
        assignment[i] = root_to_mode.get(&uf.find(a)).copied();
    }
    Ok(ModeSet {
        modes: mode_clusters.iter().map(|c| c.point.clone()).collect(),
        densities: mode_clusters.iter().map(|c| c.density).collect(),
        counts: mode_clusters.iter().map(|c| c.count).collect(),
        merge_tol,
        saddles,
        assignment,
        non_converged: trajs.len() - done.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinGrid {
    /// Mode index per cell, −1 where the trajectory did not reach a mode.
    pub labels: Vec<i64>,
    pub iterations: Vec<usize>,
    pub modes: ModeSet,
}

/// Labels each grid cell by the mode its trajectory reaches. The mode set is
/// computed from the grid trajectories themselves.
pub fn basin_grid(
    model: &KdeModel,
    grid: &[UnitVector],
    eps: f64,
    max_iter: usize,
    merge_tol: f64,
) -> Result<BasinGrid> {
    if grid.is_empty() {
        return Err(Error::DomainError("basin grid is empty".into()));
    }
    let trajs = run_all(model, grid, eps, max_iter)?;
    let modes = modes_from_trajectories(model, &trajs, merge_tol)?;
    let cos_tol = merge_tol.cos();
    let labels = trajs
        .iter()
        .zip(&modes.assignment)
        .map(|(t, a)| match a {
            Some(k) if dot(t.endpoint().as_slice(), modes.modes[*k].as_slice()) >= cos_tol => *k as i64,
            _ => -1,
        })
        .collect();
    let iterations = trajs.iter().map(|t| t.iterations).collect();
    Ok(BasinGrid { labels, iterations, modes })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn find_const(&self, mut a: usize) -> usize {
        while self.parent[a] != a {
            a = self.parent[a];
        }
        a
    }

    // The smaller index becomes the root so roots do not depend on merge order.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::sphere::lonlat_to_unit;

    #[test]
    fn single_point_converges_immediately() {
        let x1 = lonlat_to_unit(30.0, 40.0).unwrap();
        let m = KdeModel::new(vec![x1.clone()], Kernel::VonMises, 0.4).unwrap();
        let x0 = lonlat_to_unit(-20.0, 0.0).unwrap();
        let s = step(&m, &x0).unwrap();
        assert!(chord(s.as_slice(), x1.as_slice()) < 1e-15);
        let t = run(&m, &x0, DEFAULT_EPS, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(t.status, Status::Converged);
        assert!(t.iterations <= 2);
    }

    #[test]
    fn antipodal_pair_is_degenerate() {
        let e1 = UnitVector::basis(2, 0);
        let m = KdeModel::new(vec![e1.clone(), e1.negate()], Kernel::VonMises, 0.5).unwrap();
        let e2 = UnitVector::basis(2, 1);
        assert_eq!(step(&m, &e2), Err(Error::DegenerateStep));
        let t = run(&m, &e2, DEFAULT_EPS, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(t.status, Status::Degenerate);
        assert_eq!(t.iterations, 0);
    }

    #[test]
    fn isolated_start_with_truncated_kernel_is_degenerate() {
        let m = KdeModel::new(vec![UnitVector::basis(2, 0)], Kernel::Truncated { p: 2 }, 0.3).unwrap();
        assert_eq!(step(&m, &UnitVector::basis(2, 2)), Err(Error::DegenerateStep));
    }

    #[test]
    fn single_point_mode_set() {
        let x1 = lonlat_to_unit(30.0, 40.0).unwrap();
        let m = KdeModel::new(vec![x1.clone()], Kernel::VonMises, 0.4).unwrap();
        let starts = default_starts(&m);
        let ms = find_modes(&m, &starts, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL).unwrap();
        assert_eq!(ms.len(), 1);
        assert!(chord(ms.modes[0].as_slice(), x1.as_slice()) < 1e-12);
    }

    #[test]
    fn union_find_roots_are_smallest() {
        let mut uf = UnionFind::new(5);
        uf.union(4, 2);
        uf.union(2, 3);
        assert_eq!(uf.find(4), 2);
        assert_eq!(uf.find_const(3), 2);
    }
}
