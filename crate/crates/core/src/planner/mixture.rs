//! Weighted Gaussian mixture fit used to summarize a frame belief into a
//! few navigation targets. K is chosen by BIC over 1..=K_max.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::geometry::Point;
use crate::inference::ParticleSet;
use crate::rng;

/// Smallest covariance eigenvalue, m². Tight or collinear clusters are
/// widened to this instead of failing.
pub const COVARIANCE_FLOOR: f64 = 0.01;
pub const MAX_ITERATIONS: usize = 200;
pub const TOLERANCE: f64 = 1e-6;

const MIXTURE_STREAM: u64 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Point,
    /// Row-major, symmetric positive definite.
    pub covariance: [[f64; 2]; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<MixtureComponent>,
    /// The covariance floor was applied or a component collapsed.
    pub degenerate: bool,
    pub bic: f64,
}

impl GaussianMixture {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Weights sum to one and every covariance is symmetric positive
    /// definite.
    pub fn is_valid(&self) -> bool {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        !self.components.is_empty()
            && (total - 1.0).abs() <= 1e-6
            && self.components.iter().all(|c| {
                let m = c.covariance;
                c.weight >= 0.0
                    && c.mean.is_finite()
                    && m[0][1] == m[1][0]
                    && m[0][0] > 0.0
                    && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0
            })
    }

    pub fn density(&self, p: &Point) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let g = Gaussian::from_component(c);
                c.weight * g.log_pdf(&Vector2::new(p.x, p.y)).exp()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Gaussian {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    inv: Matrix2<f64>,
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        let det = cov.determinant();
        let inv = cov.try_inverse().expect("floored covariance is invertible");
        Gaussian {
            mean,
            cov,
            inv,
            log_norm: -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln(),
        }
    }

    fn from_component(c: &MixtureComponent) -> Self {
        let m = c.covariance;
        Gaussian::new(
            Vector2::new(c.mean.x, c.mean.y),
            Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]),
        )
    }

    fn log_pdf(&self, x: &Vector2<f64>) -> f64 {
        let d = x - self.mean;
        self.log_norm - 0.5 * (d.transpose() * self.inv * d)[(0, 0)]
    }
}

/// Symmetrizes and lifts eigenvalues to the floor. Returns whether the
/// floor was needed.
fn floor_covariance(cov: Matrix2<f64>) -> (Matrix2<f64>, bool) {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut floored = false;
    let vals = eig.eigenvalues.map(|v| {
        if v.is_finite() && v >= COVARIANCE_FLOOR {
            v
        } else {
            floored = true;
            COVARIANCE_FLOOR
        }
    });
    let out = eig.eigenvectors * Matrix2::from_diagonal(&vals) * eig.eigenvectors.transpose();
    // exact symmetry for the invariant check
    let off = 0.5 * (out[(0, 1)] + out[(1, 0)]);
    (Matrix2::new(out[(0, 0)], off, off, out[(1, 1)]), floored)
}

struct Fit {
    components: Vec<(f64, Gaussian)>,
    log_likelihood: f64,
    degenerate: bool,
}

/// Mixture over a particle set's weighted positions.
pub fn fit_mixture(set: &ParticleSet, k_max: usize, seed: u64) -> Result<GaussianMixture, PlannerError> {
    fit_weighted(set.positions(), set.weights(), k_max, seed)
}

/// Weighted EM for K = 1..=k_max, keeping the lowest BIC. Weights need not
/// be normalized; scaling them all by a positive constant leaves the
/// result unchanged.
pub fn fit_weighted(
    points: &[Point],
    weights: &[f64],
    k_max: usize,
    seed: u64,
) -> Result<GaussianMixture, PlannerError> {
    if k_max == 0 || points.len() < k_max {
        return Err(PlannerError::TooFewParticles {
            particles: points.len(),
            k_max,
        });
    }
    if points.len() != weights.len()
        || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        || points.iter().any(|p| !p.is_finite())
    {
        return Err(PlannerError::InvalidInput(
            "weights and positions must be finite, weights non-negative".into(),
        ));
    }
    let data = canonical_support(points, weights)
        .ok_or_else(|| PlannerError::InvalidInput("weights carry no mass".into()))?;
    let n = points.len() as f64;

    let mut best: Option<(f64, Fit)> = None;
    for k in 1..=k_max {
        if data.len() < k {
            break;
        }
        let mut rng = rng::stream(rng::mix(seed, k as u64), MIXTURE_STREAM);
        let fit = fit_k(&data, k, &mut rng);
        let params = (6 * fit.components.len() - 1) as f64;
        let bic = -2.0 * n * fit.log_likelihood + params * n.ln();
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fit));
        }
    }
    let (bic, fit) = best.expect("k = 1 always fits");
    Ok(GaussianMixture {
        components: fit
            .components
            .iter()
            .map(|(w, g)| MixtureComponent {
                mean: Point::new(g.mean.x, g.mean.y),
                covariance: [[g.cov[(0, 0)], g.cov[(0, 1)]], [g.cov[(1, 0)], g.cov[(1, 1)]]],
                weight: *w,
            })
            .collect(),
        degenerate: fit.degenerate,
        bic,
    })
}

/// Merges duplicate positions and normalizes weights. Weights are first
/// expressed relative to the largest and snapped to a 2^-40 grid, so a
/// uniformly rescaled input produces bit-identical data.
fn canonical_support(points: &[Point], weights: &[f64]) -> Option<Vec<(Vector2<f64>, f64)>> {
    let max = weights.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let grid = (1u64 << 40) as f64;
    let mut entries: Vec<(Point, f64)> = points
        .iter()
        .zip(weights)
        .map(|(p, w)| (*p, ((w / max) * grid).round() / grid))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    entries.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    let mut merged: Vec<(Point, f64)> = Vec::with_capacity(entries.len());
    for (p, w) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => merged.push((p, w)),
        }
    }
    let total: f64 = merged.iter().map(|e| e.1).sum();
    Some(
        merged
            .into_iter()
            .map(|(p, w)| (Vector2::new(p.x, p.y), w / total))
            .collect(),
    )
}

fn weighted_moments(
    data: &[(Vector2<f64>, f64)],
    resp: impl Fn(usize) -> f64,
) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let mut mass = 0.0;
    let mut mean = Vector2::zeros();
    for (i, (x, w)) in data.iter().enumerate() {
        let r = w * resp(i);
        mass += r;
        mean += x * r;
    }
    if mass <= 0.0 {
        return (0.0, mean, Matrix2::zeros());
    }
    mean /= mass;
    let mut cov = Matrix2::zeros();
    for (i, (x, w)) in data.iter().enumerate() {
        let d = x - mean;
        cov += d * d.transpose() * (w * resp(i));
    }
    (mass, mean, cov / mass)
}

/// Weighted k-means++ seeding: first centre drawn by weight, the rest by
/// weight times squared distance to the nearest chosen centre.
fn seed_centres<R: Rng + ?Sized>(data: &[(Vector2<f64>, f64)], k: usize, rng: &mut R) -> Vec<Vector2<f64>> {
    let draw = |scores: &[f64], rng: &mut R| -> Option<usize> {
        let total: f64 = scores.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, s) in scores.iter().enumerate() {
            if u < *s {
                return Some(i);
            }
            u -= s;
        }
        scores.iter().rposition(|s| *s > 0.0)
    };
    let weights: Vec<f64> = data.iter().map(|e| e.1).collect();
    let first = draw(&weights, rng).expect("positive mass");
    let mut centres = vec![data[first].0];
    while centres.len() < k {
        let scores: Vec<f64> = data
            .iter()
            .map(|(x, w)| {
                let d2 = centres
                    .iter()
                    .map(|c| (x - c).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                w * d2
            })
            .collect();
        match draw(&scores, rng) {
            Some(i) => centres.push(data[i].0),
            None => break,
        }
    }
    centres
}

fn fit_k<R: Rng + ?Sized>(data: &[(Vector2<f64>, f64)], k: usize, rng: &mut R) -> Fit {
    let mut degenerate = false;
    let (_, _, global_cov) = weighted_moments(data, |_| 1.0);
    let (start_cov, floored) = floor_covariance(global_cov);
    degenerate |= floored && k == 1;
    let centres = seed_centres(data, k, rng);
    let mut comps: Vec<(f64, Gaussian)> = centres
        .iter()
        .map(|c| (1.0 / centres.len() as f64, Gaussian::new(*c, start_cov)))
        .collect();

    let mut resp = vec![0.0; data.len() * comps.len()];
    let mut last_ll = f64::NEG_INFINITY;
    let mut ll = last_ll;
    for _ in 0..MAX_ITERATIONS {
        // E-step
        let kk = comps.len();
        resp.resize(data.len() * kk, 0.0);
        ll = 0.0;
        for (i, (x, w)) in data.iter().enumerate() {
            let row = &mut resp[i * kk..(i + 1) * kk];
            for (j, (pi, g)) in comps.iter().enumerate() {
                row[j] = pi.ln() + g.log_pdf(x);
            }
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + s.ln();
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
            ll += w * lse;
        }
        if (ll - last_ll).abs() < TOLERANCE {
            break;
        }
        last_ll = ll;
        // M-step
        let mut next = Vec::with_capacity(kk);
        for j in 0..kk {
            let (mass, mean, cov) = weighted_moments(data, |i| resp[i * kk + j]);
            if mass < 1e-12 {
                degenerate = true;
                continue;
            }
            let (cov, floored) = floor_covariance(cov);
            degenerate |= floored;
            next.push((mass, Gaussian::new(mean, cov)));
        }
        let total: f64 = next.iter().map(|c| c.0).sum();
        next.iter_mut().for_each(|c| c.0 /= total);
        comps = next;
    }
    Fit {
        components: comps,
        log_likelihood: ll,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cloud(center: Point, sd: f64, n: usize, seed: u64) -> Vec<Point> {
        let mut r = rng::stream(seed, 0);
        let g = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| Point::new(center.x + g.sample(&mut r), center.y + g.sample(&mut r)))
            .collect()
    }

    #[test]
    fn single_cluster_gives_one_component() {
        let pts = cloud(Point::new(3.0, 4.0), 0.3, 400, 1);
        let w = vec![1.0; pts.len()];
        let m = fit_weighted(&pts, &w, 3, 7).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.is_valid());
        let n = pts.len() as f64;
        let mean = Point::new(
            pts.iter().map(|p| p.x).sum::<f64>() / n,
            pts.iter().map(|p| p.y).sum::<f64>() / n,
        );
        let sem = 0.3 / n.sqrt();
        assert!(m.components[0].mean.distance(&mean) < 3.0 * sem);
    }

    #[test]
    fn two_separated_clusters() {
        let mut pts = cloud(Point::new(1.0, 1.0), 0.3, 200, 2);
        pts.extend(cloud(Point::new(8.0, 6.0), 0.3, 200, 3));
        let w = vec![1.0; pts.len()];
        let m = fit_weighted(&pts, &w, 3, 7).unwrap();
        assert_eq!(m.len(), 2);
        for c in &m.components {
            assert!((c.weight - 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn identical_points_hit_the_floor() {
        let pts = vec![Point::new(2.0, 2.0); 50];
        let m = fit_weighted(&pts, &vec![1.0; 50], 3, 1).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.degenerate);
        let c = m.components[0].covariance;
        assert!((c[0][0] - COVARIANCE_FLOOR).abs() < 1e-12 && (c[1][1] - COVARIANCE_FLOOR).abs() < 1e-12);
        assert!(c[0][1].abs() < 1e-12);
    }

    #[test]
    fn collinear_points_stay_valid() {
        let pts: Vec<Point> = (0..100).map(|i| Point::new(i as f64 * 0.05, 1.0)).collect();
        let m = fit_weighted(&pts, &vec![1.0; 100], 3, 1).unwrap();
        assert!(m.is_valid());
        assert!(m.degenerate);
    }

    #[test]
    fn rejects_bad_input() {
        let pts = vec![Point::new(0.0, 0.0); 2];
        assert!(matches!(
            fit_weighted(&pts, &[1.0, 1.0], 3, 0),
            Err(PlannerError::TooFewParticles { .. })
        ));
        assert!(fit_weighted(&pts, &[0.0, 0.0], 1, 0).is_err());
        assert!(fit_weighted(&pts, &[f64::NAN, 1.0], 1, 0).is_err());
    }

    #[test]
    fn weight_scaling_is_invisible() {
        let mut pts = cloud(Point::new(1.0, 1.0), 0.5, 150, 4);
        pts.extend(cloud(Point::new(5.0, 2.0), 0.5, 100, 5));
        let w: Vec<f64> = (0..pts.len()).map(|i| 1.0 + (i % 7) as f64).collect();
        let a = fit_weighted(&pts, &w, 3, 11).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * 3.7e-5).collect();
        let b = fit_weighted(&pts, &scaled, 3, 11).unwrap();
        assert_eq!(a, b);
    }
}
