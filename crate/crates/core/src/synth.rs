//! Synthetic trajectory and correspondence generator.
//!
//! Produces ground-truth orientation paths, per-pair bearing (or pixel)
//! correspondences with controllable noise and outlier contamination, loop
//! candidates, and ready-made rotation graphs. Everything is deterministic
//! under the spec seed: each pair draws from its own counter-derived RNG
//! stream, so output files are bytewise reproducible and independent of
//! generation order.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bearing::{BearingVec, Intrinsics};
use crate::error::{Error, Result};
use crate::metrics::GroundTruth;
use crate::so3::{Rot3, TangentVec};
use crate::viewgraph::{EdgeData, ViewGraph};

/// Initial half-angle of the visibility cone used when sampling covisible
/// points, radians.
pub const BASE_FOV: f64 = 0.35;

/// Widest cone the covisibility retry loop will try.
pub const MAX_FOV: f64 = 1.35;

/// Frame offsets that get a correspondence block, newest frame last. These
/// mirror the pipeline's default matching window.
pub const PAIR_OFFSETS: [u64; 4] = [1, 2, 3, 4];

/// Camera path family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    /// Closed rounded-rectangle drive in the xz-plane; last frame returns
    /// to the first pose, so (0, n-1) is a natural loop pair.
    DriveLoop,
    /// Zero baseline: the camera spins a full turn in place.
    PureRotation,
    /// The drive path with a stationary pan inserted mid-route.
    Mixed,
}

/// Generator parameters.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_frames: usize,
    pub motion: Motion,
    /// Correspondences per frame pair.
    pub n_points: usize,
    /// Std of the angular perturbation applied to each bearing, radians.
    pub bearing_noise: f64,
    /// Fraction of each pair's correspondences replaced by random bearings.
    pub outlier_frac: f64,
    /// Std of the per-edge rotation noise in [`gen_rotgraph`], radians.
    pub rel_rot_noise: f64,
    /// Loop candidates to emit, each a (j, k) frame pair.
    pub loop_pairs: Vec<(u64, u64)>,
    pub seed: u64,
    /// When present, correspondences are written as pixel rows under this
    /// camera; otherwise as unit bearing rows.
    pub intrinsics: Option<Intrinsics>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_frames: 100,
            motion: Motion::DriveLoop,
            n_points: 200,
            bearing_noise: 0.0,
            outlier_frac: 0.0,
            rel_rot_noise: 0.0,
            loop_pairs: Vec::new(),
            seed: 0,
            intrinsics: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.outlier_frac) {
            return Err(Error::invalid("outlier fraction must be in [0, 1)"));
        }
        if self.bearing_noise < 0.0 || self.rel_rot_noise < 0.0 {
            return Err(Error::invalid("noise levels must be nonnegative"));
        }
        if !(self.bearing_noise.is_finite() && self.rel_rot_noise.is_finite()) {
            return Err(Error::invalid("noise levels must be finite"));
        }
        for &(j, k) in &self.loop_pairs {
            if j >= k {
                return Err(Error::invalid(format!("loop pair ({j}, {k}) needs j < k")));
            }
            if k >= self.n_frames as u64 {
                return Err(Error::invalid(format!(
                    "loop pair ({j}, {k}) outside the {} frames",
                    self.n_frames
                )));
            }
            if k - j <= *PAIR_OFFSETS.last().unwrap() {
                return Err(Error::invalid(format!(
                    "loop pair ({j}, {k}) is already a sequential pair"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for one (purpose, pair) slot: same seed everywhere, the stream id
/// carries the coordinates. Purposes draw independently, so e.g. turning
/// noise on cannot shift which points a pair samples.
fn pair_rng(seed: u64, purpose: u64, j: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(splitmix64(purpose).wrapping_add(j)).wrapping_add(k)));
    rng
}

const PURPOSE_GEOMETRY: u64 = 0;
const PURPOSE_NOISE: u64 = 1;
const PURPOSE_OUTLIER: u64 = 2;
const PURPOSE_EDGE_NOISE: u64 = 3;
const PURPOSE_EDGE_OUTLIER: u64 = 4;

fn yaw(a: f64) -> Rot3 {
    Rot3::exp(&TangentVec::new(0.0, a, 0.0)).unwrap()
}

/// Forward direction for heading psi: +z at zero, turning toward +x.
fn forward(psi: f64) -> Vector3<f64> {
    Vector3::new(psi.sin(), 0.0, psi.cos())
}

/// Outward turn normal for heading psi.
fn turn_normal(psi: f64) -> Vector3<f64> {
    Vector3::new(psi.cos(), 0.0, -psi.sin())
}

/// Closed rounded-rectangle path: four straights joined by quarter arcs,
/// total length `total`. Heading accumulates exactly 2 pi.
struct DrivePath {
    /// Segment list: (length, is_arc) with precomputed start state.
    segs: Vec<(f64, bool, Vector3<f64>, f64)>,
    radius: f64,
    total: f64,
}

impl DrivePath {
    fn new(total: f64) -> Self {
        let radius = 0.06 * total;
        let arc = PI * radius / 2.0;
        let lz = (total - 4.0 * arc) / 6.0;
        let lx = 2.0 * lz;
        let lengths = [lz, arc, lx, arc, lz, arc, lx, arc];
        let mut segs = Vec::with_capacity(8);
        let mut p = Vector3::zeros();
        let mut psi = 0.0;
        for (i, &len) in lengths.iter().enumerate() {
            let is_arc = i % 2 == 1;
            segs.push((len, is_arc, p, psi));
            if is_arc {
                let c = p + radius * turn_normal(psi);
                psi += PI / 2.0;
                p = c - radius * turn_normal(psi);
            } else {
                p += len * forward(psi);
            }
        }
        DrivePath { segs, radius, total }
    }

    /// Position and heading at arc length s in [0, total].
    fn at(&self, s: f64) -> (Vector3<f64>, f64) {
        let mut s = s.clamp(0.0, self.total);
        for (i, &(len, is_arc, p0, psi0)) in self.segs.iter().enumerate() {
            if s > len && i + 1 < self.segs.len() {
                s -= len;
                continue;
            }
            if is_arc {
                let c = p0 + self.radius * turn_normal(psi0);
                let psi = psi0 + s / self.radius;
                return (c - self.radius * turn_normal(psi), psi);
            }
            return (p0 + s * forward(psi0), psi0);
        }
        unreachable!("segment walk is exhaustive");
    }
}

/// Gentle pitch and roll riding on top of the heading, zero at s = 0.
fn wobble(s: f64, total: f64) -> Rot3 {
    let pitch = 1f64.to_radians() * (TAU * 5.0 * s / total).sin();
    let roll = 0.5f64.to_radians() * (TAU * 7.0 * s / total).sin();
    Rot3::exp(&TangentVec::new(pitch, 0.0, 0.0))
        .unwrap()
        .compose(&Rot3::exp(&TangentVec::new(0.0, 0.0, roll)).unwrap())
}

/// Generates the ground-truth pose path for a spec.
pub fn gen_trajectory(spec: &SynthSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let n = spec.n_frames;
    let mut gt = GroundTruth::new();
    if n == 0 {
        return Ok(gt);
    }
    if n == 1 {
        gt.insert(0, Rot3::identity(), Some(Vector3::zeros()));
        return Ok(gt);
    }
    match spec.motion {
        Motion::DriveLoop => {
            // One meter of path per frame step; the last frame lands back
            // on the first pose.
            let total = n as f64;
            let path = DrivePath::new(total);
            for i in 0..n {
                let s = total * i as f64 / (n - 1) as f64;
                let (p, psi) = path.at(s);
                let r = yaw(psi).compose(&wobble(s, total));
                gt.insert(i as u64, r, Some(p));
            }
        }
        Motion::PureRotation => {
            for i in 0..n {
                let r = yaw(TAU * i as f64 / n as f64);
                gt.insert(i as u64, r, Some(Vector3::zeros()));
            }
        }
        Motion::Mixed => {
            // The drive path with progress frozen over a mid-route window;
            // the camera pans aside and back while standing still.
            let pan_start = n / 3;
            let pan_len = n / 6;
            let moving = n - pan_len;
            let total = moving as f64;
            let path = DrivePath::new(total);
            let pan_amp = 30f64.to_radians();
            for i in 0..n {
                let (m, extra) = if i < pan_start {
                    (i, 0.0)
                } else if i < pan_start + pan_len {
                    let t = (i - pan_start + 1) as f64 / (pan_len + 1) as f64;
                    (pan_start, pan_amp * (PI * t).sin())
                } else {
                    (i - pan_len, 0.0)
                };
                let s = total * m as f64 / (moving - 1) as f64;
                let (p, psi) = path.at(s);
                let r = yaw(psi + extra).compose(&wobble(s, total));
                gt.insert(i as u64, r, Some(p));
            }
        }
    }
    Ok(gt)
}

/// Uniform direction within `half_angle` of +z.
fn sample_cone(rng: &mut ChaCha8Rng, half_angle: f64) -> Vector3<f64> {
    let z = 1.0 - rng.random::<f64>() * (1.0 - half_angle.cos());
    let phi = TAU * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Uniformly distributed rotation (uniform unit quaternion).
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rot3 {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if n > 1e-6 {
            return Rot3::from_quat_wxyz(q[0], q[1], q[2], q[3]).unwrap();
        }
    }
}

/// Tilts `f` by an angle drawn from |N(0, sigma)| about a random axis
/// orthogonal to it, so the angular error equals the draw exactly.
fn perturb_bearing(rng: &mut ChaCha8Rng, f: &Vector3<f64>, sigma: f64) -> Vector3<f64> {
    let angle = sigma * rng.sample::<f64, _>(StandardNormal).abs();
    let axis = loop {
        let a = f.cross(&random_unit(rng));
        let n = a.norm();
        if n > 1e-9 {
            break a / n;
        }
    };
    Rot3::exp(&(axis * angle)).unwrap().rotate(f)
}

struct PairFrames {
    r_j: Rot3,
    c_j: Vector3<f64>,
    r_k: Rot3,
    c_k: Vector3<f64>,
}

/// Samples covisible scene points for one frame pair and returns the exact
/// bearing pairs (frame j, frame k). Fails when the cone at `half_angle`
/// cannot produce enough covisible directions.
fn sample_pair_geometry(
    rng: &mut ChaCha8Rng,
    frames: &PairFrames,
    n_points: usize,
    half_angle: f64,
) -> Option<Vec<(Vector3<f64>, Vector3<f64>)>> {
    let mut out = Vec::with_capacity(n_points);
    let budget = n_points.max(1) * 50;
    let min_z = half_angle.cos();
    for _ in 0..budget {
        if out.len() == n_points {
            break;
        }
        let f_k = sample_cone(rng, half_angle);
        let depth = 8.0 + 32.0 * rng.random::<f64>();
        let x = frames.c_k + frames.r_k.rotate(&(depth * f_k));
        let v_j = frames.r_j.inverse().rotate(&(x - frames.c_j));
        let n = v_j.norm();
        if n < 1e-9 {
            continue;
        }
        let f_j = v_j / n;
        if f_j.z < min_z {
            continue;
        }
        out.push((f_j, f_k));
    }
    (out.len() == n_points).then_some(out)
}

/// One pair's correspondence rows: exact geometry, then noise, then
/// outlier replacement. Returns (bearing pairs, inlier mask).
fn gen_pair(
    spec: &SynthSpec,
    frames: &PairFrames,
    j: u64,
    k: u64,
) -> Result<(Vec<(Vector3<f64>, Vector3<f64>)>, Vec<bool>)> {
    let mut geo_rng = pair_rng(spec.seed, PURPOSE_GEOMETRY, j, k);
    let mut fov = BASE_FOV;
    let mut pairs = None;
    for _ in 0..10 {
        if let Some(p) = sample_pair_geometry(&mut geo_rng, frames, spec.n_points, fov) {
            pairs = Some(p);
            break;
        }
        fov = (fov * 1.3).min(MAX_FOV);
    }
    let mut pairs = pairs.ok_or_else(|| {
        Error::invalid(format!(
            "frames {j} and {k} share no covisible geometry even at the widest field of view"
        ))
    })?;

    if spec.bearing_noise > 0.0 {
        let mut noise_rng = pair_rng(spec.seed, PURPOSE_NOISE, j, k);
        for (f_j, f_k) in &mut pairs {
            *f_j = perturb_bearing(&mut noise_rng, f_j, spec.bearing_noise);
            *f_k = perturb_bearing(&mut noise_rng, f_k, spec.bearing_noise);
        }
    }

    let mut mask = vec![true; pairs.len()];
    let n_out = (spec.outlier_frac * spec.n_points as f64).round() as usize;
    if n_out > 0 {
        let mut out_rng = pair_rng(spec.seed, PURPOSE_OUTLIER, j, k);
        let mut picks = rand::seq::index::sample(&mut out_rng, pairs.len(), n_out).into_vec();
        picks.sort_unstable();
        for i in picks {
            pairs[i].1 = sample_cone(&mut out_rng, fov);
            mask[i] = false;
        }
    }
    Ok((pairs, mask))
}

fn push_rows(
    out: &mut String,
    pairs: &[(Vector3<f64>, Vector3<f64>)],
    k: Option<&Intrinsics>,
) -> Result<()> {
    for (f_j, f_k) in pairs {
        match k {
            Some(cam) => {
                let (u, v) = cam.project(&BearingVec::new(*f_j)?);
                let (up, vp) = cam.project(&BearingVec::new(*f_k)?);
                writeln!(out, "{u:.16e} {v:.16e} {up:.16e} {vp:.16e}").unwrap();
            }
            None => {
                writeln!(
                    out,
                    "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                    f_j.x, f_j.y, f_j.z, f_k.x, f_k.y, f_k.z
                )
                .unwrap();
            }
        }
    }
    Ok(())
}

fn push_mask(out: &mut String, header: &str, mask: &[bool]) {
    out.push_str(header);
    out.push('\n');
    let row: Vec<&str> = mask.iter().map(|&m| if m { "1" } else { "0" }).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

/// A generated dataset as file contents, keyed by the standard layout
/// names. [`SynthDataset::write_to`] materializes it on disk.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// `matches.txt`: sequential-pair correspondence blocks.
    pub matches: String,
    /// `loops.txt` when the spec lists loop pairs.
    pub loops: Option<String>,
    /// `truth.txt`: ground-truth poses, quaternion layout.
    pub truth: String,
    /// `inliers.txt`: per-block 0/1 ground-truth inlier masks.
    pub inliers: String,
    /// `intrinsics.txt` when generating pixel rows.
    pub intrinsics: Option<String>,
}

impl SynthDataset {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let write = |name: &str, content: &str| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, content)
                .map_err(|e| Error::io(path.display().to_string(), e))
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write("matches.txt", &self.matches)?;
        write("truth.txt", &self.truth)?;
        write("inliers.txt", &self.inliers)?;
        if let Some(l) = &self.loops {
            write("loops.txt", l)?;
        }
        if let Some(k) = &self.intrinsics {
            write("intrinsics.txt", k)?;
        }
        Ok(())
    }
}

fn pose_of(gt: &GroundTruth, id: u64) -> Result<(Rot3, Vector3<f64>)> {
    let r = *gt
        .orientation(id)
        .ok_or_else(|| Error::invalid(format!("ground truth is missing frame {id}")))?;
    let p = *gt
        .position(id)
        .ok_or_else(|| Error::invalid(format!("frame {id} has no position")))?;
    Ok((r, p))
}

/// Generates the correspondence files for a trajectory: one block per
/// sequential pair at the standard offsets, plus loop blocks.
pub fn gen_correspondences(spec: &SynthSpec, gt: &GroundTruth) -> Result<SynthDataset> {
    spec.validate()?;
    let n = gt.len() as u64;
    if gt.ids().zip(0..n).any(|(a, b)| a != b) {
        return Err(Error::invalid("ground-truth frame ids must be 0..n"));
    }

    let cam = spec.intrinsics.as_ref();
    let mut matches = String::new();
    let mut inliers = String::new();
    for k in 1..n {
        for j in k.saturating_sub(*PAIR_OFFSETS.last().unwrap())..k {
            let (r_j, c_j) = pose_of(gt, j)?;
            let (r_k, c_k) = pose_of(gt, k)?;
            let frames = PairFrames { r_j, c_j, r_k, c_k };
            let (pairs, mask) = gen_pair(spec, &frames, j, k)?;
            writeln!(matches, "{} {j} {k}", if cam.is_some() { "PAIR" } else { "BPAIR" }).unwrap();
            push_rows(&mut matches, &pairs, cam)?;
            push_mask(&mut inliers, &format!("PAIR {j} {k}"), &mask);
        }
    }

    let loops = if spec.loop_pairs.is_empty() {
        None
    } else {
        let mut out = String::new();
        for &(j, k) in &spec.loop_pairs {
            let (r_j, c_j) = pose_of(gt, j)?;
            let (r_k, c_k) = pose_of(gt, k)?;
            let frames = PairFrames { r_j, c_j, r_k, c_k };
            let (pairs, mask) = gen_pair(spec, &frames, j, k)?;
            writeln!(out, "LOOP {j} {k}").unwrap();
            push_rows(&mut out, &pairs, cam)?;
            push_mask(&mut inliers, &format!("LOOP {j} {k}"), &mask);
        }
        Some(out)
    };

    Ok(SynthDataset {
        matches,
        loops,
        truth: gt.dump(),
        inliers,
        intrinsics: spec.intrinsics.as_ref().map(|k| {
            let mut s = k.format_line();
            s.push('\n');
            s
        }),
    })
}

/// A rotation-averaging test instance: measured graph, the truth it was
/// cut from, and which edges were replaced by outliers.
#[derive(Debug, Clone)]
pub struct RotGraphData {
    pub graph: ViewGraph,
    pub truth: GroundTruth,
    pub outlier_edges: Vec<(u64, u64)>,
}

/// Builds a window-connected rotation graph directly from a trajectory:
/// edges carry truth composed with tangent noise, a fraction of the
/// non-consecutive edges are replaced by random rotations, and node
/// estimates are chained from the measured consecutive edges (the warm
/// state odometry would deliver).
pub fn gen_rotgraph(spec: &SynthSpec) -> Result<RotGraphData> {
    let truth = gen_trajectory(spec)?;
    let n = truth.len() as u64;
    if n < 2 {
        return Err(Error::invalid("a rotation graph needs at least 2 frames"));
    }

    let mut edges = Vec::new();
    for k in 1..n {
        for j in k.saturating_sub(*PAIR_OFFSETS.last().unwrap())..k {
            let r_true = truth
                .orientation(j)
                .unwrap()
                .relative(truth.orientation(k).unwrap());
            let measured = if spec.rel_rot_noise > 0.0 {
                let mut rng = pair_rng(spec.seed, PURPOSE_EDGE_NOISE, j, k);
                let angle = spec.rel_rot_noise * rng.sample::<f64, _>(StandardNormal).abs();
                r_true.compose(&Rot3::exp(&(random_unit(&mut rng) * angle)).unwrap())
            } else {
                r_true
            };
            edges.push((j, k, measured));
        }
    }

    // Outliers only on the skip edges, never the odometry chain.
    let candidates: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter(|(_, &(j, k, _))| k - j >= 2)
        .map(|(i, _)| i)
        .collect();
    let n_out = (spec.outlier_frac * candidates.len() as f64).round() as usize;
    let mut outlier_edges = Vec::new();
    if n_out > 0 {
        let mut rng = pair_rng(spec.seed, PURPOSE_EDGE_OUTLIER, 0, 0);
        let mut picks = rand::seq::index::sample(&mut rng, candidates.len(), n_out).into_vec();
        picks.sort_unstable();
        for p in picks {
            let i = candidates[p];
            edges[i].2 = random_rotation(&mut rng);
            outlier_edges.push((edges[i].0, edges[i].1));
        }
    }

    let mut graph = ViewGraph::new();
    graph.add_node(0, *truth.orientation(0).unwrap())?;
    for k in 1..n {
        let chained = edges
            .iter()
            .find(|&&(j, kk, _)| j == k - 1 && kk == k)
            .map(|&(_, _, m)| m)
            .unwrap();
        let prev = *graph.orientation(k - 1).unwrap();
        graph.add_node(k, prev.compose(&chained))?;
    }
    for &(j, k, m) in &edges {
        graph.add_edge(j, k, EdgeData { r_jk: m, inlier_count: 150, is_loop: false })?;
    }
    Ok(RotGraphData { graph, truth, outlier_edges })
}
