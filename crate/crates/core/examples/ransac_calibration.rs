//! Calibration driver behind the frozen RANSAC quality thresholds.
//!
//! Protocol: 100 seeded trials, each a single translating-and-rotating
//! frame pair with 200 correspondences, 30% outliers, 0.1 deg bearing
//! noise, solved cold from identity. Prints the error and inlier-
//! classification distributions; the acceptance test asserts the frozen
//! values (median rotation error <= 0.5 deg, median precision >= 0.88,
//! median recall >= 0.9).
//!
//! The precision threshold is the one calibration moved: with a narrow
//! forward-motion view cone every epipolar normal lies close to one great
//! circle, so a fifth of the cone-sampled outliers sit within the 0.5 deg
//! coplanarity threshold by construction and no estimator can tell them
//! apart. Observed across the 100 frozen seeds: median 0.909, min 0.859,
//! with recall 1.0 throughout and median error 0.115 deg.
//!
//! Run with: cargo run --release -p rovo-core --example ransac_calibration

use nalgebra::Vector3;
use rovo_core::{
    gen_correspondences, gen_trajectory, geodesic_angle, ransac_relrot, BearingVec, CorrSet,
    Motion, RelRotConfig, Rot3, SynthSpec,
};

/// Pulls the first correspondence block out of serialized matches.txt.
fn parse_block(matches: &str) -> CorrSet {
    let mut corr = CorrSet::new();
    for line in matches.lines().skip(1) {
        if line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            break;
        }
        let v: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        corr.push(
            BearingVec::new(Vector3::new(v[0], v[1], v[2])).unwrap(),
            BearingVec::new(Vector3::new(v[3], v[4], v[5])).unwrap(),
        );
    }
    corr
}

/// Pulls the first 0/1 mask row out of serialized inliers.txt.
fn parse_mask(inliers: &str) -> Vec<bool> {
    inliers
        .lines()
        .nth(1)
        .unwrap()
        .split_whitespace()
        .map(|t| t == "1")
        .collect()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn summarize(name: &str, values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
    println!(
        "{name}: min {:.4}  median {:.4}  p90 {:.4}  max {:.4}",
        values[0],
        percentile(values, 0.5),
        percentile(values, 0.9),
        values[values.len() - 1]
    );
}

fn main() {
    const TRIALS: u64 = 100;
    let mut errs_deg = Vec::new();
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();

    for seed in 0..TRIALS {
        let spec = SynthSpec {
            n_frames: 2,
            motion: Motion::Mixed,
            n_points: 200,
            bearing_noise: 0.1f64.to_radians(),
            outlier_frac: 0.3,
            seed,
            ..SynthSpec::default()
        };
        let gt = gen_trajectory(&spec).unwrap();
        let ds = gen_correspondences(&spec, &gt).unwrap();
        let corr = parse_block(&ds.matches);
        let mask = parse_mask(&ds.inliers);
        assert_eq!(corr.len(), 200);

        let cfg = RelRotConfig { seed, ..RelRotConfig::default() };
        let res = ransac_relrot(&corr, &Rot3::identity(), &cfg).unwrap();

        let truth = gt.orientation(1).unwrap().relative(gt.orientation(0).unwrap());
        errs_deg.push(geodesic_angle(&res.r_jk, &truth).to_degrees());

        let true_inliers = mask.iter().filter(|&&m| m).count();
        let hits = res.inliers.iter().filter(|&&i| mask[i]).count();
        precisions.push(hits as f64 / res.inliers.len() as f64);
        recalls.push(hits as f64 / true_inliers as f64);
    }

    println!("{TRIALS} trials: 200 points, 30% outliers, 0.1 deg noise, identity init");
    summarize("rotation error (deg)", &mut errs_deg);
    summarize("inlier precision   ", &mut precisions);
    summarize("inlier recall      ", &mut recalls);

    let med_err = percentile(&errs_deg, 0.5);
    let med_prec = percentile(&precisions, 0.5);
    let med_rec = percentile(&recalls, 0.5);
    let pass = med_err <= 0.5 && med_prec >= 0.88 && med_rec >= 0.9;
    println!(
        "frozen thresholds (median): err <= 0.5 deg, precision >= 0.88, recall >= 0.9 -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
}
