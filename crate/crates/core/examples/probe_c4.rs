// Temporary probe for the incremental-latency slope; not shipped.
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rovo_core::{
    gen_correspondences, gen_trajectory, solve_incremental, LocalSubgraph, Motion, Pipeline,
    PipelineConfig, SynthSpec,
};

fn lsq_slope(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mx = samples.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = samples.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = samples.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxy / sxx, my)
}

fn main() {
    let spec = SynthSpec {
        n_frames: 2000,
        motion: Motion::PureRotation,
        n_points: 150,
        bearing_noise: 0.05f64.to_radians(),
        seed: 7,
        ..SynthSpec::default()
    };
    let gt = gen_trajectory(&spec).unwrap();
    let ds_s = gen_correspondences(&spec, &gt).unwrap();
    let dir = std::env::temp_dir().join("rovo-probe-c4");
    ds_s.write_to(&dir).unwrap();
    let ds = rovo_core::load_dataset(&dir).unwrap();
    std::fs::remove_dir_all(&dir).ok();

    let cfg = PipelineConfig::default();
    let mut pipe = Pipeline::new(cfg.clone()).unwrap();
    let mut subs: Vec<(usize, LocalSubgraph)> = Vec::new();
    for (i, rec) in ds.records.iter().enumerate() {
        let r = pipe.process_frame(rec).unwrap();
        if r.skipped || i < 20 {
            continue;
        }
        subs.push((i, pipe.graph().local_subgraph(cfg.r_window)));
    }
    let mut sw = [0usize; 8];
    let mut n = [0usize; 8];
    for (frame, sub) in &subs {
        let out = solve_incremental(sub, &cfg.irls).unwrap();
        let b = (frame / 250).min(7);
        sw[b] += out.sweeps;
        n[b] += 1;
    }
    for b in 0..8 {
        println!("frames {:4}..{:4}: mean sweeps {:.3}", b * 250, (b + 1) * 250, sw[b] as f64 / n[b] as f64);
    }
    for rep in 0..3u64 {
        let mut order: Vec<usize> = (0..subs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(rep));
        let mut samples = vec![(0.0, 0.0); subs.len()];
        for &si in &order {
            let (frame, sub) = &subs[si];
            let mut best = f64::INFINITY;
            for _ in 0..5 {
                let t = Instant::now();
                std::hint::black_box(solve_incremental(sub, &cfg.irls).unwrap().updated.len());
                best = best.min(t.elapsed().as_secs_f64() * 1e6);
            }
            samples[si] = (*frame as f64, best);
        }
        let (slope, mean) = lsq_slope(&samples);
        println!(
            "rep {rep}: mean {mean:6.1} us, slope {:7.3} us/1000 frames ({:5.2}% of mean)",
            slope * 1000.0,
            slope * 1000.0 / mean * 100.0
        );
    }
}
