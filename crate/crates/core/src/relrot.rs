//! Relative orientation between a frame pair from bearing correspondences.
//!
//! For the correct relative rotation R, every epipolar-plane normal
//! nᵢ = f′ᵢ × R fᵢ lies in one plane (the plane orthogonal to the
//! translation direction), so the smallest eigenvalue of M = Σ nᵢnᵢᵀ is
//! zero on clean data. The solver minimizes that eigenvalue over SO(3) in a
//! Levenberg-Marquardt scheme. Unlike essential-matrix estimation, the
//! objective stays well defined when the baseline shrinks to zero: all
//! normals vanish and any rotation inconsistency still shows up as nonzero
//! residuals. A RANSAC wrapper handles mismatched correspondences.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bearing::BearingVec;
use crate::error::{Error, Result};
use crate::so3::Rot3;

/// Bearing correspondences between frame j (first of pair) and frame k.
#[derive(Debug, Clone, Default)]
pub struct CorrSet {
    pairs: Vec<(BearingVec, BearingVec)>,
}

impl CorrSet {
    pub fn new() -> Self {
        CorrSet { pairs: Vec::new() }
    }

    pub fn from_pairs(pairs: Vec<(BearingVec, BearingVec)>) -> Self {
        CorrSet { pairs }
    }

    pub fn push(&mut self, f: BearingVec, f_prime: BearingVec) {
        self.pairs.push((f, f_prime));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(BearingVec, BearingVec)> {
        self.pairs.iter()
    }

    pub fn get(&self, i: usize) -> &(BearingVec, BearingVec) {
        &self.pairs[i]
    }

    pub fn subset(&self, idx: &[usize]) -> CorrSet {
        CorrSet {
            pairs: idx.iter().map(|&i| self.pairs[i]).collect(),
        }
    }
}

/// Covariance of the epipolar-plane normals at a candidate rotation.
#[derive(Debug, Clone)]
pub struct NormalCov {
    /// M = Σ nᵢnᵢᵀ; symmetric positive semidefinite.
    pub m: Matrix3<f64>,
    /// Smallest eigenvalue of M, clamped to ≥ 0 against roundoff.
    pub lambda_min: f64,
    /// Unit eigenvector of the smallest eigenvalue; sign fixed so the first
    /// nonzero component is positive. On clean translating data this is the
    /// translation direction.
    pub e_min: Vector3<f64>,
}

/// Result of RANSAC relative-rotation estimation.
#[derive(Debug, Clone)]
pub struct RelRotResult {
    /// Rotation mapping frame-j bearings onto frame-k bearings: f′ ∥ R fᵢ
    /// under pure rotation.
    pub r_jk: Rot3,
    /// Indices into the input correspondence set judged consistent.
    pub inliers: Vec<usize>,
    /// Final smallest-eigenvalue objective on the inlier set.
    pub lambda_min: f64,
}

/// Local solver output: best iterate, objective, and whether a termination
/// tolerance (rather than the iteration cap) ended the solve.
#[derive(Debug, Clone, Copy)]
pub struct RelRotSolve {
    pub r: Rot3,
    pub lambda_min: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct RelRotConfig {
    /// Minimal RANSAC sample; five generic rays make the objective
    /// discriminative for the 3 rotation DOF plus coplanarity.
    pub min_sample: usize,
    /// Inlier threshold angle in radians; a correspondence passes when the
    /// out-of-plane component of its normal is below sin(inlier_thresh).
    pub inlier_thresh: f64,
    pub lm_max_iters: usize,
    /// Terminate when the tangent step norm falls below this.
    pub step_tol: f64,
    /// Terminate when an accepted step decreases the objective by less.
    pub obj_tol: f64,
    /// RANSAC stopping confidence for the adaptive iteration count.
    pub confidence: f64,
    pub max_ransac_iters: usize,
    pub seed: u64,
}

impl Default for RelRotConfig {
    fn default() -> Self {
        RelRotConfig {
            min_sample: 5,
            inlier_thresh: 0.5f64.to_radians(),
            lm_max_iters: 50,
            step_tol: 1e-8,
            obj_tol: 1e-12,
            confidence: 0.99,
            max_ransac_iters: 1000,
            seed: 0,
        }
    }
}

/// Central finite-difference step for the eigenvalue gradient.
pub const FD_STEP: f64 = 1e-6;
/// Normals shorter than this carry no epipolar information (zero baseline or
/// repeated ray) and are consistent with every rotation hypothesis.
pub const DEGENERATE_NORMAL_NORM: f64 = 1e-9;

/// Eigenvalues of a symmetric 3×3 matrix in ascending order, by the
/// trigonometric closed form. Only the lower triangle is read.
pub fn eigvals_sym3(m: &Matrix3<f64>) -> [f64; 3] {
    let p1 = m[(1, 0)] * m[(1, 0)] + m[(2, 0)] * m[(2, 0)] + m[(2, 1)] * m[(2, 1)];
    let (d0, d1, d2) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    if p1 == 0.0 {
        let mut d = [d0, d1, d2];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let q = (d0 + d1 + d2) / 3.0;
    let p2 = (d0 - q) * (d0 - q) + (d1 - q) * (d1 - q) + (d2 - q) * (d2 - q) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (m - Matrix3::from_diagonal_element(q)) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let two_thirds_pi = 2.0 * std::f64::consts::PI / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + two_thirds_pi).cos();
    let mid = 3.0 * q - hi - lo;
    [lo, mid, hi]
}

/// Unit eigenvector for eigenvalue `lambda` of symmetric `m`, chosen
/// deterministically: the largest cross product of rows of (M − λI), with
/// tie-breaks by row order and the sign rule "first nonzero component
/// positive". Falls back to an orthogonal-complement pick when the
/// eigenvalue is repeated.
fn eigvec_sym3(m: &Matrix3<f64>, lambda: f64) -> Vector3<f64> {
    let a = m - Matrix3::from_diagonal_element(lambda);
    let rows: [Vector3<f64>; 3] = [
        a.row(0).transpose(),
        a.row(1).transpose(),
        a.row(2).transpose(),
    ];
    let scale = rows.iter().map(|r| r.norm()).fold(0.0f64, f64::max);
    if scale > 0.0 {
        let candidates = [
            rows[0].cross(&rows[1]),
            rows[0].cross(&rows[2]),
            rows[1].cross(&rows[2]),
        ];
        let mut best = 0;
        for i in 1..3 {
            if candidates[i].norm() > candidates[best].norm() {
                best = i;
            }
        }
        let bn = candidates[best].norm();
        if bn > 1e-12 * scale * scale {
            return canonical_sign(candidates[best] / bn);
        }
        // Repeated eigenvalue: (M − λI) has rank 1; any unit vector
        // orthogonal to its strongest row is an eigenvector.
        let mut strongest = 0;
        for i in 1..3 {
            if rows[i].norm() > rows[strongest].norm() {
                strongest = i;
            }
        }
        let r = rows[strongest];
        let basis = if r.x.abs() <= r.y.abs() && r.x.abs() <= r.z.abs() {
            Vector3::x()
        } else if r.y.abs() <= r.z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let v = r.cross(&basis);
        if v.norm() > 0.0 {
            return canonical_sign(v / v.norm());
        }
    }
    // M − λI ≈ 0: every direction is an eigenvector; pick one.
    Vector3::z()
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let first = [v.x, v.y, v.z].into_iter().find(|c| *c != 0.0);
    if matches!(first, Some(c) if c < 0.0) {
        -v
    } else {
        v
    }
}

fn normals_at(r: &Rot3, c: &CorrSet) -> Vec<Vector3<f64>> {
    c.iter()
        .map(|(f, fp)| fp.as_vec().cross(&r.rotate(f.as_vec())))
        .collect()
}

fn cov_of(normals: &[Vector3<f64>]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for n in normals {
        m += n * n.transpose();
    }
    m
}

/// Normal-vector covariance with its smallest eigenpair.
pub fn normal_cov(r: &Rot3, c: &CorrSet) -> Result<NormalCov> {
    if c.is_empty() {
        return Err(Error::invalid("normal_cov needs at least one correspondence"));
    }
    let m = cov_of(&normals_at(r, c));
    let lambda_raw = eigvals_sym3(&m)[0];
    let e_min = eigvec_sym3(&m, lambda_raw);
    Ok(NormalCov {
        m,
        lambda_min: lambda_raw.max(0.0),
        e_min,
    })
}

fn lambda_min_at(r: &Rot3, c: &CorrSet) -> f64 {
    eigvals_sym3(&cov_of(&normals_at(r, c)))[0].max(0.0)
}

fn step(r: &Rot3, d: &Vector3<f64>) -> Result<Rot3> {
    let delta = Rot3::exp(d).map_err(|_| Error::Numerical("non-finite solver step".into()))?;
    Ok(r.compose(&delta))
}

/// Minimizes λ_min(M(R)) over SO(3) from `r_init`.
///
/// The iterate is parameterized by a right tangent update R·exp(δ). The
/// gradient comes from central finite differences of the closed-form
/// eigenvalue (step [`FD_STEP`]); curvature is the Gauss-Newton matrix JᵀJ
/// of the per-correspondence residuals nᵢᵀe with the eigenvector frozen at
/// the current estimate (exact for the gradient by eigenvector
/// stationarity, positive semidefinite by construction). Damping is adapted
/// multiplicatively; steps are accepted only when the true objective
/// decreases.
pub fn solve_relrot(c: &CorrSet, r_init: &Rot3, cfg: &RelRotConfig) -> Result<RelRotSolve> {
    if c.len() < cfg.min_sample {
        return Err(Error::InsufficientCorrespondences {
            have: c.len(),
            need: cfg.min_sample,
        });
    }
    let mut r = *r_init;
    let mut f0 = lambda_min_at(&r, c);
    let mut mu = -1.0f64;
    let mut converged = false;

    'outer: for _ in 0..cfg.lm_max_iters {
        let center = normal_cov(&r, c)?;
        let e = center.e_min;
        let res0: Vec<f64> = normals_at(&r, c).iter().map(|n| n.dot(&e)).collect();

        let mut grad = Vector3::zeros();
        let mut jac: Vec<Vector3<f64>> = vec![Vector3::zeros(); c.len()];
        for axis in 0..3 {
            let mut d = Vector3::zeros();
            d[axis] = FD_STEP;
            let ns_p = normals_at(&step(&r, &d)?, c);
            d[axis] = -FD_STEP;
            let ns_m = normals_at(&step(&r, &d)?, c);
            let lam_p = eigvals_sym3(&cov_of(&ns_p))[0].max(0.0);
            let lam_m = eigvals_sym3(&cov_of(&ns_m))[0].max(0.0);
            grad[axis] = (lam_p - lam_m) / (2.0 * FD_STEP);
            for i in 0..c.len() {
                jac[i][axis] = (ns_p[i].dot(&e) - ns_m[i].dot(&e)) / (2.0 * FD_STEP);
            }
        }
        let mut jtj = Matrix3::zeros();
        for row in &jac {
            jtj += row * row.transpose();
        }
        // Keep the quadratic model consistent with λ = Σ(nᵢᵀe)²: the
        // residual-space Gauss-Newton system is 2JᵀJ δ = −∇λ.
        jtj *= 2.0;
        let _ = res0;

        if mu < 0.0 {
            mu = 1e-3 * jtj.diagonal().max().max(1e-12);
        }

        loop {
            let damped = jtj + Matrix3::from_diagonal_element(mu);
            let delta = match damped.cholesky() {
                Some(ch) => ch.solve(&(-grad)),
                None => {
                    mu *= 10.0;
                    if mu > 1e12 {
                        break 'outer;
                    }
                    continue;
                }
            };
            if delta.norm() < cfg.step_tol {
                converged = true;
                break 'outer;
            }
            let cand = step(&r, &delta)?;
            let f1 = lambda_min_at(&cand, c);
            if f1 < f0 {
                let improvement = f0 - f1;
                r = cand;
                f0 = f1;
                mu = (mu / 3.0).max(1e-15);
                if improvement < cfg.obj_tol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            mu *= 10.0;
            if mu > 1e12 {
                break 'outer;
            }
        }
    }

    Ok(RelRotSolve {
        r,
        lambda_min: f0,
        converged,
    })
}

/// Inlier test at candidate rotation `r` with plane normal `e`.
///
/// The residual |nᵢᵀe| is the out-of-plane component of the epipolar
/// normal. It is deliberately not normalized by ‖nᵢ‖: the normal's length
/// scales with parallax, so the normalized angle blows up exactly for the
/// low-parallax and zero-baseline correspondences this solver exists to
/// keep, while the raw component stays comparable to bearing noise at every
/// baseline. Degenerate normals (below [`DEGENERATE_NORMAL_NORM`]) carry no
/// constraint and count as inliers.
fn score_inliers(r: &Rot3, e: &Vector3<f64>, c: &CorrSet, cfg: &RelRotConfig) -> Vec<usize> {
    let thresh = cfg.inlier_thresh.sin();
    let mut inliers = Vec::new();
    for (i, (f, fp)) in c.iter().enumerate() {
        let n = fp.as_vec().cross(&r.rotate(f.as_vec()));
        let norm = n.norm();
        if norm < DEGENERATE_NORMAL_NORM || n.dot(e).abs() < thresh {
            inliers.push(i);
        }
    }
    inliers
}

fn sample_distinct(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let v = rng.random_range(0..n);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn ransac_iters_needed(inlier_ratio: f64, sample: usize, confidence: f64, cap: usize) -> usize {
    let w = inlier_ratio.clamp(0.0, 1.0);
    let miss = 1.0 - w.powi(sample as i32);
    if miss <= 1e-12 {
        return 1;
    }
    if miss >= 1.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / miss.ln()).ceil();
    if n.is_finite() && n >= 1.0 {
        (n as usize).min(cap)
    } else {
        cap
    }
}

/// RANSAC relative rotation.
///
/// Each hypothesis i draws its minimal sample from stream i of a counter
/// RNG seeded by `cfg.seed`, so results are identical no matter how
/// hypotheses are scheduled. Hypotheses are scored with the plane normal of
/// their own minimal-sample covariance; the winner is refit on its inliers
/// and the final inlier set is re-scored under the refit model.
pub fn ransac_relrot(c: &CorrSet, r_init: &Rot3, cfg: &RelRotConfig) -> Result<RelRotResult> {
    let n = c.len();
    if n < cfg.min_sample {
        return Err(Error::InsufficientCorrespondences {
            have: n,
            need: cfg.min_sample,
        });
    }

    let mut best_inliers: Vec<usize> = Vec::new();
    let mut best_r = *r_init;
    let mut target = cfg.max_ransac_iters.max(1);
    let mut hyp = 0usize;
    while hyp < target {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(hyp as u64);
        let sample = sample_distinct(&mut rng, cfg.min_sample, n);
        let sub = c.subset(&sample);
        let sol = solve_relrot(&sub, r_init, cfg)?;
        let e = normal_cov(&sol.r, &sub)?.e_min;
        let inliers = score_inliers(&sol.r, &e, c, cfg);
        if inliers.len() > best_inliers.len() {
            best_inliers = inliers;
            best_r = sol.r;
            target = target.min(ransac_iters_needed(
                best_inliers.len() as f64 / n as f64,
                cfg.min_sample,
                cfg.confidence,
                cfg.max_ransac_iters,
            ));
        }
        hyp += 1;
    }

    if best_inliers.len() < cfg.min_sample {
        return Err(Error::NoModel(format!(
            "best hypothesis kept {} of {} correspondences",
            best_inliers.len(),
            n
        )));
    }

    let sub = c.subset(&best_inliers);
    let refit = solve_relrot(&sub, &best_r, cfg)?;
    let e = normal_cov(&refit.r, &sub)?.e_min;
    let inliers = score_inliers(&refit.r, &e, c, cfg);
    if inliers.len() < cfg.min_sample {
        return Err(Error::NoModel(
            "refit model lost the inlier support of its hypothesis".into(),
        ));
    }
    Ok(RelRotResult {
        r_jk: refit.r,
        inliers,
        lambda_min: refit.lambda_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bearing::BearingVec;
    use crate::so3::geodesic_angle;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Characteristic-polynomial oracle: det(M − λI) sign bisection inside
    /// Gershgorin bounds.
    fn eig_oracle(m: &Matrix3<f64>) -> [f64; 3] {
        let charpoly = |l: f64| (m - Matrix3::from_diagonal_element(l)).determinant();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..3 {
            let radius: f64 = (0..3).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            lo = lo.min(m[(i, i)] - radius);
            hi = hi.max(m[(i, i)] + radius);
        }
        // Scan for sign changes of the cubic, then bisect each bracket.
        let steps = 20000;
        let mut roots = Vec::new();
        let mut prev = charpoly(lo);
        let mut prev_x = lo;
        for s in 1..=steps {
            let x = lo + (hi - lo) * s as f64 / steps as f64;
            let y = charpoly(x);
            if prev == 0.0 {
                roots.push(prev_x);
            } else if prev.signum() != y.signum() && y != 0.0 {
                let (mut a, mut b) = (prev_x, x);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if charpoly(a).signum() == charpoly(mid).signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = y;
            prev_x = x;
        }
        while roots.len() < 3 {
            // Repeated roots elude sign scanning; duplicate the nearest.
            roots.push(*roots.last().unwrap_or(&0.0));
        }
        roots.sort_by(f64::total_cmp);
        [roots[0], roots[1], roots[2]]
    }

    fn bearing(v: Vector3<f64>) -> BearingVec {
        BearingVec::new(v).unwrap()
    }

    /// Minimal synthetic pair: points in a box in front of camera j, camera k
    /// rotated by `r_true` (frame-j to frame-k bearing map f′ = R f) and
    /// translated by `baseline` (expressed in frame j).
    fn synthetic_pair(
        rng: &mut ChaCha8Rng,
        r_true: &Rot3,
        baseline: &Vector3<f64>,
        n: usize,
        noise: f64,
    ) -> CorrSet {
        let mut c = CorrSet::new();
        while c.len() < n {
            let p = Vector3::new(
                rng.random::<f64>() * 16.0 - 8.0,
                rng.random::<f64>() * 12.0 - 6.0,
                rng.random::<f64>() * 25.0 + 6.0,
            );
            let pk = r_true.rotate(&(p - baseline));
            if pk.z <= 0.5 {
                continue;
            }
            let f = perturb(rng, p.normalize(), noise);
            let fp = perturb(rng, pk.normalize(), noise);
            if f.z <= 0.0 || fp.z <= 0.0 {
                continue;
            }
            c.push(bearing(f), bearing(fp));
        }
        c
    }

    fn perturb(rng: &mut ChaCha8Rng, v: Vector3<f64>, sigma: f64) -> Vector3<f64> {
        if sigma == 0.0 {
            return v;
        }
        let gauss = |rng: &mut ChaCha8Rng| -> f64 {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            (-2.0 * u1.max(1e-12).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let angle = (gauss(rng) * sigma).abs();
        let t = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let t1 = v.cross(&t).normalize();
        let t2 = v.cross(&t1);
        let dir: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let axis = t1 * dir.cos() + t2 * dir.sin();
        Rot3::exp(&(axis * angle)).unwrap().rotate(&v)
    }

    #[test]
    fn eigvals_match_charpoly_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let mut a = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..=i {
                    let v: f64 = rng.random::<f64>() * 4.0 - 2.0;
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            let fast = eigvals_sym3(&a);
            let slow = eig_oracle(&a);
            for k in 0..3 {
                assert!(
                    (fast[k] - slow[k]).abs() < 1e-6,
                    "eig {k}: {} vs {}",
                    fast[k],
                    slow[k]
                );
            }
        }
    }

    #[test]
    fn eigvals_diagonal_case() {
        let m = Matrix3::from_diagonal(&Vector3::new(3.0, -1.0, 2.0));
        assert_eq!(eigvals_sym3(&m), [-1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigvec_satisfies_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let mut a = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..=i {
                    let v: f64 = rng.random::<f64>() * 4.0 - 2.0;
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            let lam = eigvals_sym3(&a)[0];
            let e = eigvec_sym3(&a, lam);
            assert!((a * e - e * lam).norm() < 1e-8);
            assert!((e.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_cov_zero_at_truth_pure_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r_true = Rot3::exp(&Vector3::new(0.03, -0.05, 0.2)).unwrap();
        let c = synthetic_pair(&mut rng, &r_true, &Vector3::zeros(), 40, 0.0);
        let nc = normal_cov(&r_true, &c).unwrap();
        assert!(nc.lambda_min < 1e-24);
        assert!(nc.m.abs().max() < 1e-24);
    }

    #[test]
    fn normal_cov_translating_truth_gives_translation_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r_true = Rot3::exp(&Vector3::new(0.1, 0.02, -0.04)).unwrap();
        let t = Vector3::new(0.6, -0.1, 0.3);
        let c = synthetic_pair(&mut rng, &r_true, &t, 60, 0.0);
        let nc = normal_cov(&r_true, &c).unwrap();
        // Exactly coplanar normals; the closed-form eigenvalue resolves the
        // zero only to absolute float precision of the matrix entries.
        assert!(nc.lambda_min < 1e-12);
        // Normals are orthogonal to the translation direction expressed in
        // frame k.
        let t_k = r_true.rotate(&t).normalize();
        assert!(nc.e_min.dot(&t_k).abs() > 1.0 - 1e-9);
    }

    #[test]
    fn normal_cov_positive_off_truth_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r_true = Rot3::exp(&Vector3::new(0.05, 0.0, 0.1)).unwrap();
        let c = synthetic_pair(&mut rng, &r_true, &Vector3::new(0.4, 0.0, 0.1), 50, 0.0);
        let r_wrong = Rot3::exp(&Vector3::new(0.0, 0.04, 0.1)).unwrap();
        let nc = normal_cov(&r_wrong, &c).unwrap();
        assert!(nc.lambda_min > 1e-6);
        let oracle = eig_oracle(&nc.m)[0];
        assert!((nc.lambda_min - oracle).abs() < 1e-6 * nc.m.abs().max().max(1.0));
    }

    #[test]
    fn normal_cov_rejects_empty() {
        assert!(normal_cov(&Rot3::identity(), &CorrSet::new()).is_err());
    }

    #[test]
    fn solve_recovers_pure_rotation_from_perturbed_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let r_true = Rot3::exp(&Vector3::new(0.02, -0.03, 0.15)).unwrap();
        let c = synthetic_pair(&mut rng, &r_true, &Vector3::zeros(), 50, 0.0);
        let init = r_true
            .compose(&Rot3::exp(&(Vector3::new(1.0, 1.0, -1.0).normalize() * 2f64.to_radians())).unwrap());
        let sol = solve_relrot(&c, &init, &RelRotConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(geodesic_angle(&sol.r, &r_true) < 1e-4);
        assert!(sol.lambda_min < 1e-12);
    }

    #[test]
    fn solve_recovers_translating_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r_true = Rot3::exp(&Vector3::new(-0.04, 0.06, 0.1)).unwrap();
        let t = Vector3::new(0.8, 0.2, 0.55);
        let c = synthetic_pair(&mut rng, &r_true, &t, 50, 0.0);
        let init = r_true
            .compose(&Rot3::exp(&(Vector3::new(-1.0, 0.5, 1.0).normalize() * 2f64.to_radians())).unwrap());
        let sol = solve_relrot(&c, &init, &RelRotConfig::default()).unwrap();
        assert!(geodesic_angle(&sol.r, &r_true) < 1e-4);
    }

    #[test]
    fn solve_rejects_undersized_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let c = synthetic_pair(&mut rng, &Rot3::identity(), &Vector3::zeros(), 4, 0.0);
        assert!(matches!(
            solve_relrot(&c, &Rot3::identity(), &RelRotConfig::default()),
            Err(Error::InsufficientCorrespondences { have: 4, need: 5 })
        ));
    }

    #[test]
    fn ransac_clean_data_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let r_true = Rot3::exp(&Vector3::new(0.05, -0.02, 0.12)).unwrap();
        let c = synthetic_pair(&mut rng, &r_true, &Vector3::new(0.5, 0.1, 0.2), 80, 0.0);
        let res = ransac_relrot(&c, &Rot3::identity(), &RelRotConfig::default()).unwrap();
        assert_eq!(res.inliers.len(), 80);
        assert!(geodesic_angle(&res.r_jk, &r_true) < 1e-4);
    }

    #[test]
    fn ransac_pure_rotation_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let r_true = Rot3::exp(&Vector3::new(-0.03, 0.04, 0.2)).unwrap();
        let mut c = synthetic_pair(&mut rng, &r_true, &Vector3::zeros(), 80, 0.0005);
        // 20% mismatches: re-pair f′ with unrelated random rays.
        for _ in 0..20 {
            let f = perturb(&mut rng, Vector3::new(0.0, 0.0, 1.0), 0.4);
            let fp = perturb(&mut rng, Vector3::new(0.0, 0.0, 1.0), 0.4);
            c.push(bearing(f.normalize()), bearing(fp.normalize()));
        }
        let res = ransac_relrot(&c, &Rot3::identity(), &RelRotConfig::default()).unwrap();
        assert!(geodesic_angle(&res.r_jk, &r_true) < 2e-3);
        assert!(res.inliers.len() >= 75);
    }

    #[test]
    fn ransac_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let r_true = Rot3::exp(&Vector3::new(0.02, 0.03, -0.1)).unwrap();
        let mut c = synthetic_pair(&mut rng, &r_true, &Vector3::new(0.3, 0.0, 0.0), 90, 0.002);
        for _ in 0..25 {
            let f = perturb(&mut rng, Vector3::new(0.1, 0.0, 1.0).normalize(), 0.3);
            let fp = perturb(&mut rng, Vector3::new(-0.1, 0.1, 1.0).normalize(), 0.3);
            c.push(bearing(f.normalize()), bearing(fp.normalize()));
        }
        let cfg = RelRotConfig {
            seed: 424242,
            ..RelRotConfig::default()
        };
        let a = ransac_relrot(&c, &Rot3::identity(), &cfg).unwrap();
        let b = ransac_relrot(&c, &Rot3::identity(), &cfg).unwrap();
        assert_eq!(a.inliers, b.inliers);
        assert_eq!(a.r_jk.format_quat(), b.r_jk.format_quat());
    }

    #[test]
    fn ransac_objective_invariant_to_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let r_true = Rot3::exp(&Vector3::new(0.0, 0.05, 0.08)).unwrap();
        let c = synthetic_pair(&mut rng, &r_true, &Vector3::new(0.2, 0.1, 0.0), 40, 0.0);
        let shuffled = CorrSet::from_pairs((0..40).rev().map(|i| *c.get(i)).collect());
        // Summation order changes the objective only at float level, both
        // near its zero (at the true rotation) and away from it.
        let a = lambda_min_at(&r_true, &c);
        let b = lambda_min_at(&r_true, &shuffled);
        assert!((a - b).abs() <= 1e-14 + 1e-9 * a.abs());
        let r_off = r_true
            .compose(&Rot3::exp(&Vector3::new(0.02, -0.01, 0.03)).unwrap());
        let a_off = lambda_min_at(&r_off, &c);
        let b_off = lambda_min_at(&r_off, &shuffled);
        assert!(a_off > 1e-7);
        assert!((a_off - b_off).abs() <= 1e-14 + 1e-9 * a_off.abs());
    }
}
