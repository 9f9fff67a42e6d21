//! Convex-hull volume of a point cloud in moderate dimension.
//!
//! Exact answers are returned when the hull is recognisably a simplex or an
//! axis-aligned box, and in the plane. Otherwise the volume is estimated by
//! ray casting from the centroid in whitened coordinates:
//! `vol = |B^d| * E[r(u)^d]` for uniformly random unit directions `u`, where
//! `r(u)` is the distance to the hull boundary along `u` (one small LP per
//! direction). Plain hit-or-miss sampling of the bounding box is available
//! as [`HullMethod::BoxSampling`]; it is only practical in low dimension,
//! since the hull of a few hundred points fills a vanishing fraction of its
//! box once `d` approaches ten.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lp::{Lp, LpOutcome};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullMethod {
    /// Exact shortcuts where they apply, ray casting otherwise.
    Auto,
    RayCasting,
    /// Uniform hits in the bounding box. Only useful when the hull fills a
    /// fair share of that box; a 9-simplex fills 1/9! of it.
    BoxSampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullOptions {
    pub method: HullMethod,
    /// Stop once the relative standard error drops below this.
    pub rel_tol: f64,
    /// Ray casting: direction pairs drawn before the stopping rule applies,
    /// and the hard cap.
    pub min_rays: usize,
    pub max_rays: usize,
    /// Box sampling: points drawn before the stopping rule applies, and the
    /// hard cap.
    pub min_box_samples: usize,
    pub max_box_samples: usize,
    pub seed: u64,
}

impl Default for HullOptions {
    fn default() -> Self {
        HullOptions {
            method: HullMethod::Auto,
            rel_tol: 0.01,
            min_rays: 2_000,
            max_rays: 200_000,
            min_box_samples: 200_000,
            max_box_samples: 2_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullRoute {
    Degenerate,
    ExactSimplex,
    ExactBox,
    ExactPolygon,
    RayCasting,
    BoxSampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullEstimate {
    pub volume: f64,
    pub std_error: f64,
    pub samples: usize,
    pub route: HullRoute,
}

impl HullEstimate {
    fn exact(volume: f64, route: HullRoute) -> Self {
        HullEstimate {
            volume,
            std_error: 0.0,
            samples: 0,
            route,
        }
    }
}

/// Relative eigenvalue floor below which the cloud counts as flat.
const FLAT_TOL: f64 = 1e-12;

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    if d == 0 {
        return Err(Error::Usage("hull of an empty point set".into()));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points of mixed dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Usage("non-finite coordinate in hull input".into()));
    }
    Ok(d)
}

/// Centroid and whitening map `W` with `y = W (x - c)`; `None` when the cloud
/// spans fewer than `d` dimensions.
fn whitening(points: &[Vec<f64>], d: usize) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let n = points.len() as f64;
    let mut c = DVector::zeros(d);
    for p in points {
        c += DVector::from_column_slice(p);
    }
    c /= n;
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let v = DVector::from_column_slice(p) - &c;
        cov += &v * v.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.min() <= FLAT_TOL * max {
        return (c, None);
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    (c, Some(inv_sqrt * eig.eigenvectors.transpose()))
}

fn factorial(d: usize) -> f64 {
    (1..=d).map(|k| k as f64).product()
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = V_{d-2} * 2 pi / d
    let even = d.is_multiple_of(2);
    let mut v = if even { 1.0 } else { 2.0 };
    let mut k = if even { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// Exact area of the convex hull of planar points (monotone chain).
pub fn polygon_hull_area(points: &[[f64; 2]]) -> f64 {
    let mut p: Vec<[f64; 2]> = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return 0.0;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Point-in-hull test by LP feasibility, with the hull given as columns
/// `[p; 1]`.
pub struct HullMembership {
    d: usize,
    columns: Vec<f64>,
    /// Separating half-spaces `a.x + b > 0` found so far (outside side).
    cuts: Vec<Vec<f64>>,
}

const MAX_CUTS: usize = 256;

impl HullMembership {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let d = check_points(points)?;
        let columns = points.iter().flat_map(|p| p.iter().copied().chain([1.0])).collect();
        Ok(HullMembership {
            d,
            columns,
            cuts: Vec::new(),
        })
    }

    pub fn contains(&mut self, x: &[f64]) -> bool {
        let d = self.d;
        for cut in &self.cuts {
            let s: f64 = cut[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + cut[d];
            if s > 1e-12 {
                return false;
            }
        }
        let mut b = x.to_vec();
        b.push(1.0);
        match Lp::new(d + 1, &self.columns).feasible(&b) {
            LpOutcome::Optimal { .. } => true,
            LpOutcome::Infeasible { duals } => {
                if self.cuts.len() == MAX_CUTS {
                    self.cuts.remove(0);
                }
                self.cuts.push(duals);
                false
            }
            LpOutcome::Unbounded => false,
        }
    }
}

/// Greedy large simplex: start from the two farthest-apart points, then keep
/// adding the point farthest from the current affine hull.
fn greedy_simplex(points: &[Vec<f64>], d: usize) -> Vec<usize> {
    let vec = |i: usize| DVector::from_column_slice(&points[i]);
    let first = (0..points.len())
        .max_by(|&a, &b| (vec(a) - vec(0)).norm().total_cmp(&(vec(b) - vec(0)).norm()))
        .unwrap_or(0);
    let mut chosen = vec![first];
    // orthonormal basis of the current affine span
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while chosen.len() < d + 1 {
        let o = vec(chosen[0]);
        let resid = |i: usize| {
            let mut v = vec(i) - &o;
            for q in &basis {
                v -= q * q.dot(&v);
            }
            v
        };
        let next = (0..points.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| resid(a).norm().total_cmp(&resid(b).norm()));
        let Some(next) = next else { break };
        let r = resid(next);
        if r.norm() == 0.0 {
            break;
        }
        basis.push(r.normalize());
        chosen.push(next);
    }
    chosen
}

/// Exact volume when every point lies inside the simplex spanned by
/// `d + 1` of them.
fn try_exact_simplex(points: &[Vec<f64>], d: usize) -> Option<f64> {
    let idx = greedy_simplex(points, d);
    if idx.len() != d + 1 {
        return None;
    }
    let o = DVector::from_column_slice(&points[idx[0]]);
    let mut e = DMatrix::zeros(d, d);
    for (k, &i) in idx[1..].iter().enumerate() {
        e.set_column(k, &(DVector::from_column_slice(&points[i]) - &o));
    }
    let det = e.determinant();
    let lu = e.clone().lu();
    let scale = e.amax().max(1e-300);
    for p in points {
        let rhs = DVector::from_column_slice(p) - &o;
        let lam = lu.solve(&rhs)?;
        let tol = 1e-9 * (1.0 + rhs.amax() / scale);
        if lam.iter().any(|&l| l < -tol) || lam.sum() > 1.0 + tol {
            return None;
        }
    }
    Some(det.abs() / factorial(d))
}

/// Exact volume when all `2^d` corners of the bounding box are input points.
fn try_exact_box(points: &[Vec<f64>], d: usize) -> Option<f64> {
    if d > 20 || points.len() < (1usize << d) {
        return None;
    }
    let lo: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut seen = vec![false; 1 << d];
    for p in points {
        let mut code = 0usize;
        let mut corner = true;
        for k in 0..d {
            if p[k] == hi[k] {
                code |= 1 << k;
            } else if p[k] != lo[k] {
                corner = false;
                break;
            }
        }
        if corner {
            seen[code] = true;
        }
    }
    seen.iter().all(|&s| s).then(|| (0..d).map(|k| hi[k] - lo[k]).product())
}

fn ray_casting(points: &[Vec<f64>], d: usize, c: &DVector<f64>, w: &DMatrix<f64>, opts: &HullOptions) -> HullEstimate {
    let columns: Vec<f64> = points
        .iter()
        .flat_map(|p| (w * (DVector::from_column_slice(p) - c)).iter().copied().collect::<Vec<_>>())
        .collect();
    let lp = Lp::new(d, &columns);
    let ones = vec![1.0; points.len()];
    let mut rng = crate::seed::stream(opts.seed, "hull/rays");
    // r(u) = 1 / gauge(u), gauge(u) = min sum(mu) with sum(mu_i y_i) = u
    let radius_pow = |u: &[f64]| match lp.solve(u, &ones) {
        LpOutcome::Optimal { value, .. } if value > 0.0 => value.powi(-(d as i32)),
        _ => 0.0,
    };
    let scale = unit_ball_volume(d) / w.determinant().abs();
    let (mut sum, mut sum2, mut n) = (0.0, 0.0, 0usize);
    loop {
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        // antithetic pair
        let s = 0.5 * (radius_pow(&u) + radius_pow(&neg));
        sum += s;
        sum2 += s * s;
        n += 1;
        if n >= opts.min_rays && (n % 256 == 0 || n >= opts.max_rays) {
            let mean = sum / n as f64;
            let var = (sum2 / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            if se <= opts.rel_tol * mean || n >= opts.max_rays {
                return HullEstimate {
                    volume: mean * scale,
                    std_error: se * scale,
                    samples: 2 * n,
                    route: HullRoute::RayCasting,
                };
            }
        }
    }
}

fn box_sampling(points: &[Vec<f64>], d: usize, opts: &HullOptions) -> Result<HullEstimate> {
    let lo: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let box_vol: f64 = (0..d).map(|k| hi[k] - lo[k]).product();
    let mut member = HullMembership::new(points)?;
    let mut rng = crate::seed::stream(opts.seed, "hull/box");
    let (mut hits, mut n) = (0usize, 0usize);
    let mut x = vec![0.0; d];
    loop {
        for k in 0..d {
            x[k] = lo[k] + rng.random::<f64>() * (hi[k] - lo[k]);
        }
        if member.contains(&x) {
            hits += 1;
        }
        n += 1;
        if n >= opts.min_box_samples && (n % 4096 == 0 || n >= opts.max_box_samples) {
            let p = hits as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            if (hits > 0 && se <= opts.rel_tol * p) || n >= opts.max_box_samples {
                return Ok(HullEstimate {
                    volume: p * box_vol,
                    std_error: se * box_vol,
                    samples: n,
                    route: HullRoute::BoxSampling,
                });
            }
        }
    }
}

/// Volume of the convex hull of `points` (all of one dimension `d`).
/// Clouds spanning fewer than `d` dimensions have volume zero.
pub fn hull_volume(points: &[Vec<f64>], opts: &HullOptions) -> Result<HullEstimate> {
    let d = check_points(points)?;
    if points.len() < d + 1 {
        return Ok(HullEstimate::exact(0.0, HullRoute::Degenerate));
    }
    let (c, w) = whitening(points, d);
    let Some(w) = w else {
        return Ok(HullEstimate::exact(0.0, HullRoute::Degenerate));
    };
    match opts.method {
        HullMethod::BoxSampling => box_sampling(points, d, opts),
        HullMethod::RayCasting => Ok(ray_casting(points, d, &c, &w, opts)),
        HullMethod::Auto => {
            if d == 1 {
                let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                return Ok(HullEstimate::exact(hi - lo, HullRoute::ExactBox));
            }
            if d == 2 {
                let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
                return Ok(HullEstimate::exact(polygon_hull_area(&pts), HullRoute::ExactPolygon));
            }
            if let Some(v) = try_exact_box(points, d) {
                return Ok(HullEstimate::exact(v, HullRoute::ExactBox));
            }
            if let Some(v) = try_exact_simplex(points, d) {
                return Ok(HullEstimate::exact(v, HullRoute::ExactSimplex));
            }
            Ok(ray_casting(points, d, &c, &w, opts))
        }
    }
}
