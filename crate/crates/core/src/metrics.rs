//! Rotation-error metrics: RPE at fixed frame separation and the
//! distance-bucketed average rotation error.
//!
//! All metrics compare relative orientations and are therefore invariant to
//! a global rotation of either trajectory; no alignment step exists. Inputs
//! are inner-joined on frame id before evaluation, and separation Δ counts
//! steps in the joined sequence, so dropped frames shrink the pair set
//! instead of corrupting it.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::so3::{geodesic_angle, Rot3};

/// Pair-selection distances (meters) for [`avg_rot_err`], the KITTI ladder.
pub const AVG_ROT_DISTANCES: [f64; 8] =
    [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, Copy)]
struct GtFrame {
    r: Rot3,
    pos: Option<Vector3<f64>>,
}

/// Reference trajectory: orientation per frame, position optional.
///
/// Positions are only consulted by [`avg_rot_err`], which needs path length
/// to select its pairs.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    frames: BTreeMap<u64, GtFrame>,
}

impl GroundTruth {
    pub fn new() -> Self {
        GroundTruth::default()
    }

    /// Inserts or replaces a frame.
    pub fn insert(&mut self, id: u64, r: Rot3, pos: Option<Vector3<f64>>) {
        self.frames.insert(id, GtFrame { r, pos });
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.keys().copied()
    }

    pub fn orientation(&self, id: u64) -> Option<&Rot3> {
        self.frames.get(&id).map(|f| &f.r)
    }

    pub fn position(&self, id: u64) -> Option<&Vector3<f64>> {
        self.frames.get(&id).and_then(|f| f.pos.as_ref())
    }

    /// Parses either supported ground-truth layout, telling them apart by
    /// the token count of the first data row.
    ///
    /// Rows of 5 or 8 tokens are `frame_id qw qx qy qz [tx ty tz]`. Rows of
    /// 12 floats are poses as row-major 3x4 `[R|t]` matrices, one frame per
    /// line, the line ordinal (comments excluded) being the frame id. Blank
    /// lines and `#` comments are skipped in both layouts.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut gt = GroundTruth::new();
        let mut kitti_index: u64 = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::parse(path, lineno + 1, msg);
            match toks.len() {
                5 | 8 => {
                    let id: u64 = toks[0]
                        .parse()
                        .map_err(|_| err(format!("bad frame id `{}`", toks[0])))?;
                    let mut q = [0.0; 4];
                    for (slot, tok) in q.iter_mut().zip(&toks[1..5]) {
                        *slot = tok
                            .parse()
                            .map_err(|_| err(format!("bad number `{tok}`")))?;
                    }
                    let r = Rot3::from_quat_wxyz(q[0], q[1], q[2], q[3])
                        .map_err(|e| err(e.to_string()))?;
                    let pos = if toks.len() == 8 {
                        let mut p = [0.0; 3];
                        for (slot, tok) in p.iter_mut().zip(&toks[5..8]) {
                            *slot = tok
                                .parse()
                                .map_err(|_| err(format!("bad number `{tok}`")))?;
                        }
                        Some(Vector3::new(p[0], p[1], p[2]))
                    } else {
                        None
                    };
                    if gt.frames.insert(id, GtFrame { r, pos }).is_some() {
                        return Err(err(format!("duplicate frame id {id}")));
                    }
                }
                12 => {
                    let mut v = [0.0; 12];
                    for (slot, tok) in v.iter_mut().zip(&toks) {
                        *slot = tok
                            .parse()
                            .map_err(|_| err(format!("bad number `{tok}`")))?;
                    }
                    let m = Matrix3::new(
                        v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10],
                    );
                    let r = Rot3::from_matrix(&m).map_err(|e| err(e.to_string()))?;
                    let pos = Some(Vector3::new(v[3], v[7], v[11]));
                    gt.frames.insert(kitti_index, GtFrame { r, pos });
                    kitti_index += 1;
                }
                n => {
                    return Err(err(format!(
                        "expected 5, 8, or 12 fields, found {n}"
                    )))
                }
            }
        }
        Ok(gt)
    }

    /// Serializes in the quaternion layout; exact round trip through
    /// [`GroundTruth::parse`].
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, f) in &self.frames {
            out.push_str(&format!("{id} {}", f.r.format_quat()));
            if let Some(p) = f.pos {
                out.push_str(&format!(" {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z));
            }
            out.push('\n');
        }
        out
    }
}

/// Frames present in both inputs, ordered by id. Estimate rows may arrive
/// in any order; a repeated id is an input error.
fn join(gt: &GroundTruth, est: &[(u64, Rot3)]) -> Result<Vec<(u64, Rot3, Rot3)>> {
    let mut est_map = BTreeMap::new();
    for &(id, r) in est {
        if est_map.insert(id, r).is_some() {
            return Err(Error::invalid(format!("estimate repeats frame id {id}")));
        }
    }
    Ok(est_map
        .into_iter()
        .filter_map(|(id, e)| gt.frames.get(&id).map(|f| (id, f.r, e)))
        .collect())
}

/// Angle between the ground-truth and estimated relative orientations of
/// the joined pair (i, i+delta).
fn residual_at(joined: &[(u64, Rot3, Rot3)], i: usize, delta: usize) -> f64 {
    let (_, g0, e0) = joined[i];
    let (_, g1, e1) = joined[i + delta];
    geodesic_angle(&g0.relative(&g1), &e0.relative(&e1))
}

/// Relative-orientation error of one frame pair, in radians.
///
/// `i` indexes the joined sequence and `delta` its step count, so the pair
/// is the i-th and (i+delta)-th frames the two trajectories share.
pub fn rpe_residual(
    gt: &GroundTruth,
    est: &[(u64, Rot3)],
    i: usize,
    delta: usize,
) -> Result<f64> {
    let joined = join(gt, est)?;
    if delta == 0 {
        return Err(Error::invalid("delta must be at least 1"));
    }
    if i + delta >= joined.len() {
        return Err(Error::invalid(format!(
            "pair ({i}, {}) outside the {} joined frames",
            i + delta,
            joined.len()
        )));
    }
    Ok(residual_at(&joined, i, delta))
}

fn rmse(joined: &[(u64, Rot3, Rot3)], delta: usize) -> f64 {
    let m = joined.len() - delta;
    let sum: f64 = (0..m)
        .map(|i| residual_at(joined, i, delta))
        .map(|r| r * r)
        .sum();
    (sum / m as f64).sqrt()
}

fn joined_checked(gt: &GroundTruth, est: &[(u64, Rot3)]) -> Result<Vec<(u64, Rot3, Rot3)>> {
    let joined = join(gt, est)?;
    if joined.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 common frames, have {}",
            joined.len()
        )));
    }
    Ok(joined)
}

/// RMSE of single-step relative-orientation errors, radians.
pub fn rpe1(gt: &GroundTruth, est: &[(u64, Rot3)]) -> Result<f64> {
    let joined = joined_checked(gt, est)?;
    Ok(rmse(&joined, 1))
}

/// RMSE of relative-orientation errors for every separation, radians:
/// entry (delta, RMSE(delta)) for delta = 1 .. n-1.
pub fn rmse_curve(gt: &GroundTruth, est: &[(u64, Rot3)]) -> Result<Vec<(usize, f64)>> {
    let joined = joined_checked(gt, est)?;
    Ok((1..joined.len()).map(|d| (d, rmse(&joined, d))).collect())
}

/// Mean of RMSE(delta) over all separations, divided by the frame count
/// (the separation equal to n contributes no pairs and is skipped).
pub fn rpen(gt: &GroundTruth, est: &[(u64, Rot3)]) -> Result<f64> {
    let joined = joined_checked(gt, est)?;
    let n = joined.len();
    let sum: f64 = (1..n).map(|d| rmse(&joined, d)).sum();
    Ok(sum / n as f64)
}

/// Distance-bucketed rotation error summary from [`avg_rot_err`].
#[derive(Debug, Clone, Copy)]
pub struct AvgRotErr {
    /// Mean pair residual, radians.
    pub mean: f64,
    /// Mean of residual over its pair's path distance, radians per meter.
    pub per_meter: f64,
    /// Number of (start, distance) pairs that fit on the path.
    pub n_pairs: usize,
}

/// Average rotation error over distance-selected frame pairs.
///
/// For every start frame and every evaluation distance, the partner is the
/// first frame whose cumulative ground-truth path length from the start
/// exceeds that distance; starts too close to the end of the path
/// contribute no pair. Path length follows the ground-truth positions of
/// the joined frames.
pub fn avg_rot_err(
    gt: &GroundTruth,
    est: &[(u64, Rot3)],
    distances: &[f64],
) -> Result<AvgRotErr> {
    if distances.is_empty() || distances.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid("evaluation distances must be positive"));
    }
    let joined = joined_checked(gt, est)?;
    let positions: Vec<Vector3<f64>> = joined
        .iter()
        .map(|&(id, _, _)| {
            gt.position(id).copied().ok_or_else(|| {
                Error::UnsupportedMetric(format!(
                    "average rotation error needs positions, frame {id} has none"
                ))
            })
        })
        .collect::<Result<_>>()?;
    let mut cum = vec![0.0; joined.len()];
    for i in 1..joined.len() {
        cum[i] = cum[i - 1] + (positions[i] - positions[i - 1]).norm();
    }

    let mut sum = 0.0;
    let mut sum_per_meter = 0.0;
    let mut n_pairs = 0usize;
    for i in 0..joined.len() {
        for &d in distances {
            // First frame strictly beyond distance d along the path.
            let Some(j) = (i + 1..joined.len()).find(|&j| cum[j] - cum[i] > d) else {
                continue;
            };
            let r = residual_at(&joined, i, j - i);
            sum += r;
            sum_per_meter += r / (cum[j] - cum[i]);
            n_pairs += 1;
        }
    }
    if n_pairs == 0 {
        return Err(Error::invalid(format!(
            "path of {:.1} m is shorter than every evaluation distance",
            cum.last().copied().unwrap_or(0.0)
        )));
    }
    Ok(AvgRotErr {
        mean: sum / n_pairs as f64,
        per_meter: sum_per_meter / n_pairs as f64,
        n_pairs,
    })
}
