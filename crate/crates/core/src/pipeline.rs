//! Frame-by-frame orchestration: per-pair rotation estimation against a
//! short window of recent frames, view-graph growth, anchored windowed
//! averaging, and loop-closure-triggered global averaging.
//!
//! The unit of work is one frame's correspondence record. Matching is
//! always against the last `f_window` frames that produced at least one
//! accepted edge, so a dropped frame narrows nothing and the graph stays
//! connected. A frame none of whose pairs survive the inlier gate is
//! skipped and leaves no trace in the graph or the trajectory.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use crate::bearing::{pixel_to_bearing, BearingVec, Intrinsics};
use crate::error::{Error, Result};
use crate::loopclose::{validate_loop, LoopCandidate, LoopValidation};
use crate::relrot::{ransac_relrot, CorrSet, RelRotConfig};
use crate::rotavg::{edge_residual, solve_global, solve_incremental, IrlsConfig};
use crate::so3::Rot3;
use crate::synth::splitmix64;
use crate::viewgraph::{EdgeData, ViewGraph};

/// What happens after the per-pair edges are in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Windowed anchored averaging each frame; loop closures re-average
    /// globally. The engine's normal operation.
    Incremental,
    /// Plain composition of each new frame onto the previous estimate.
    /// No averaging, no loop handling; the comparison baseline.
    ChainingBaseline,
    /// Full global averaging every frame. Only useful for runtime
    /// comparisons; the ablation driver selects it explicitly.
    GlobalEachFrame,
}

/// Engine parameters. The three window values are the only knobs the
/// method itself exposes; the nested configs tune the solvers under it.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Number of recent accepted frames each new frame is matched against.
    pub f_window: usize,
    /// Number of most recent orientations the windowed solve optimizes.
    pub r_window: usize,
    /// A pair becomes an edge only with strictly more inliers than this.
    pub theta_matches: usize,
    pub relrot: RelRotConfig,
    pub irls: IrlsConfig,
    pub mode: Mode,
    pub seed: u64,
    /// Gates the loop-closure stage; candidates are ignored when false.
    pub use_loops: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            f_window: 4,
            r_window: 10,
            theta_matches: 100,
            relrot: RelRotConfig::default(),
            irls: IrlsConfig::default(),
            mode: Mode::Incremental,
            seed: 0,
            use_loops: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f_window < 1 {
            return Err(Error::invalid("f_window must be at least 1"));
        }
        if self.r_window < self.f_window {
            return Err(Error::invalid(
                "r_window must be at least f_window so every new edge touches the window",
            ));
        }
        if self.theta_matches < self.relrot.min_sample {
            return Err(Error::invalid(
                "theta_matches below the minimal sample size accepts unestimable pairs",
            ));
        }
        self.irls.validate()
    }
}

/// One frame's input: correspondences to earlier frames, and any loop
/// candidates that name this frame as their newer end.
#[derive(Debug, Clone, Default)]
pub struct FrameRecord {
    pub frame_id: u64,
    /// (earlier frame id, correspondences), ascending by id.
    pub pairs: Vec<(u64, CorrSet)>,
    pub loops: Vec<LoopCandidate>,
}

/// Per-frame outcome and stage timings.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub frame_id: u64,
    /// True when no pair passed the gate and the frame left no node.
    pub skipped: bool,
    pub attempted_pairs: usize,
    pub accepted_edges: usize,
    /// Inliers summed over the accepted edges.
    pub inlier_total: usize,
    pub loops_validated: usize,
    pub loops_accepted: usize,
    pub connected: bool,
    pub relrot_us: u64,
    pub graph_us: u64,
    pub rotavg_us: u64,
    pub loop_us: u64,
}

/// Sequential engine state. Feed records in frame order through
/// [`Pipeline::process_frame`]; read the trajectory when done.
///
/// Frame ids come from the dataset and may have gaps (skipped frames
/// leave holes); graph node ids are dense in acceptance order. The
/// pipeline owns the mapping and talks frame ids at its boundary.
#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    graph: ViewGraph,
    /// Frames that contributed a node, in processing order; the node id
    /// of `accepted[i]` is `i`.
    accepted: Vec<u64>,
    node_of: BTreeMap<u64, u64>,
    /// Last estimated relative rotation per window offset; the warm start
    /// for the next pair at the same offset (constant-velocity guess).
    warm: BTreeMap<usize, Rot3>,
    last_id: Option<u64>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            graph: ViewGraph::new(),
            accepted: Vec::new(),
            node_of: BTreeMap::new(),
            warm: BTreeMap::new(),
            last_id: None,
        })
    }

    pub fn graph(&self) -> &ViewGraph {
        &self.graph
    }

    /// Graph node id of an accepted frame.
    pub fn node_id(&self, frame_id: u64) -> Option<u64> {
        self.node_of.get(&frame_id).copied()
    }

    /// Final orientations of the accepted frames, in order.
    pub fn trajectory(&self) -> Vec<(u64, Rot3)> {
        self.accepted
            .iter()
            .enumerate()
            .map(|(node, &id)| (id, *self.graph.orientation(node as u64).unwrap()))
            .collect()
    }

    /// Initial estimate for the pair against frame `j`: previous estimate
    /// at the same offset if any, else what the graph currently implies,
    /// else identity.
    fn pair_init(&self, j: u64, offset: usize) -> Rot3 {
        if let Some(r) = self.warm.get(&offset) {
            return *r;
        }
        match (self.accepted.len(), self.node_of.get(&j)) {
            (n, Some(&nj)) if n > 0 => {
                // Zero-motion guess for the new frame: the newest accepted
                // orientation stands in for it.
                let r_k = self.graph.orientation(n as u64 - 1).unwrap();
                r_k.relative(self.graph.orientation(nj).unwrap())
            }
            _ => Rot3::identity(),
        }
    }

    /// Processes one frame record. Records must arrive in increasing
    /// frame-id order; anything else is a fatal input error.
    pub fn process_frame(&mut self, rec: &FrameRecord) -> Result<StepReport> {
        if let Some(last) = self.last_id {
            if rec.frame_id <= last {
                return Err(Error::invalid(format!(
                    "frame {} arrived after frame {last}; records must be in order",
                    rec.frame_id
                )));
            }
        }
        self.last_id = Some(rec.frame_id);

        let mut report = StepReport { frame_id: rec.frame_id, ..StepReport::default() };

        // The first frame pins the gauge.
        if self.graph.is_empty() {
            self.graph.add_node(0, Rot3::identity())?;
            self.node_of.insert(rec.frame_id, 0);
            self.accepted.push(rec.frame_id);
            report.connected = true;
            return Ok(report);
        }

        let k = rec.frame_id;
        let corr_by_id: BTreeMap<u64, &CorrSet> =
            rec.pairs.iter().map(|(j, c)| (*j, c)).collect();
        let window: Vec<u64> = self
            .accepted
            .iter()
            .rev()
            .take(self.cfg.f_window)
            .rev()
            .copied()
            .collect();

        // Relative rotation per window frame, oldest first so concurrent
        // variants have a defined merge order.
        let t = Instant::now();
        let mut new_edges: Vec<(u64, usize, Rot3)> = Vec::new();
        for (idx, &j) in window.iter().enumerate() {
            let offset = window.len() - idx;
            let Some(corr) = corr_by_id.get(&j) else { continue };
            if corr.len() < self.cfg.relrot.min_sample {
                continue;
            }
            report.attempted_pairs += 1;
            let mut cfg = self.cfg.relrot.clone();
            cfg.seed = splitmix64(splitmix64(self.cfg.seed.wrapping_add(j)).wrapping_add(k));
            let init = self.pair_init(j, offset);
            match ransac_relrot(corr, &init, &cfg) {
                Ok(res) => {
                    if res.inliers.len() > self.cfg.theta_matches {
                        self.warm.insert(offset, res.r_jk);
                        new_edges.push((j, res.inliers.len(), res.r_jk));
                    }
                }
                // An unconnectable pair, not a failure of the frame.
                Err(Error::NoModel(_)) | Err(Error::InsufficientCorrespondences { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        report.relrot_us = t.elapsed().as_micros() as u64;

        if new_edges.is_empty() {
            report.skipped = true;
            report.connected = self.graph.is_connected();
            return Ok(report);
        }

        let t = Instant::now();
        // Chain the new node off the nearest accepted frame, then insert
        // every accepted edge. Graph edges follow R_k = R_j * R_jk, the
        // inverse of what the estimator reports.
        let nk = self.accepted.len() as u64;
        let (j_near, _, r_c) = *new_edges.last().unwrap();
        let r_j = *self.graph.orientation(self.node_of[&j_near]).unwrap();
        self.graph.add_node(nk, r_j.compose(&r_c.inverse()))?;
        for &(j, inl, r_c) in &new_edges {
            report.accepted_edges += 1;
            report.inlier_total += inl;
            self.graph.add_edge(
                self.node_of[&j],
                nk,
                EdgeData { r_jk: r_c.inverse(), inlier_count: inl, is_loop: false },
            )?;
        }
        self.node_of.insert(k, nk);
        self.accepted.push(k);
        report.connected = self.graph.is_connected();
        report.graph_us = t.elapsed().as_micros() as u64;

        let t = Instant::now();
        match self.cfg.mode {
            Mode::Incremental => {
                let sub = self.graph.local_subgraph(self.cfg.r_window);
                let out = solve_incremental(&sub, &self.cfg.irls)?;
                for (id, r) in out.updated {
                    self.graph.set_orientation(id, r)?;
                }
            }
            Mode::ChainingBaseline => {}
            Mode::GlobalEachFrame => {
                solve_global(&mut self.graph, &self.cfg.irls)?;
            }
        }
        report.rotavg_us = t.elapsed().as_micros() as u64;

        if self.cfg.use_loops && self.cfg.mode != Mode::ChainingBaseline && !rec.loops.is_empty() {
            let t = Instant::now();
            let mut added = false;
            let mut gap = 0.0f64;
            for cand in &rec.loops {
                if cand.k != k {
                    return Err(Error::invalid(format!(
                        "loop candidate ({}, {}) attached to frame {k}",
                        cand.j, cand.k
                    )));
                }
                if cand.k - cand.j <= self.cfg.f_window as u64 {
                    return Err(Error::invalid(format!(
                        "loop candidate ({}, {}) is within the matching window",
                        cand.j, cand.k
                    )));
                }
                report.loops_validated += 1;
                // A candidate whose older end was skipped has no node to
                // close against; that is a rejection, not an error.
                let Some(&nj) = self.node_of.get(&cand.j) else { continue };
                if self.graph.edge(nj, nk).is_some() {
                    continue;
                }
                let mut cfg = self.cfg.relrot.clone();
                cfg.seed = splitmix64(
                    splitmix64(self.cfg.seed.wrapping_add(cand.j)).wrapping_add(cand.k),
                );
                let node_cand =
                    LoopCandidate { j: nj, k: nk, corr: cand.corr.clone() };
                match validate_loop(&self.graph, &node_cand, &cfg, self.cfg.theta_matches)? {
                    LoopValidation::Accepted(edge) => {
                        let r_j = self.graph.orientation(nj).cloned().unwrap_or_else(Rot3::identity);
                        let r_k = self.graph.orientation(nk).cloned().unwrap_or_else(Rot3::identity);
                        gap = gap.max(edge_residual(&r_j, &r_k, &edge.r_jk).norm());
                        self.graph.add_edge(nj, nk, edge)?;
                        report.loops_accepted += 1;
                        added = true;
                    }
                    LoopValidation::Rejected { .. } => {}
                }
            }
            // All accepted candidates share one global re-averaging. The
            // accumulated drift a validated loop exposes is signal, not
            // noise, so the loss scale for this solve is lifted to the
            // widest warm-start gap; otherwise the robust loss treats the
            // one edge able to correct the drift as an outlier and leaves
            // most of the gap open.
            if added {
                let mut irls = self.cfg.irls.clone();
                irls.loss_scale = irls.loss_scale.max(gap);
                solve_global(&mut self.graph, &irls)?;
            }
            report.loop_us = t.elapsed().as_micros() as u64;
        }

        Ok(report)
    }
}

/// A loaded dataset: per-frame records in id order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<FrameRecord>,
    pub intrinsics: Option<Intrinsics>,
}

fn parse_floats(path: &str, lineno: usize, line: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("bad number `{t}`")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != n {
        return Err(Error::parse(
            path,
            lineno,
            format!("expected {n} values, found {}", vals.len()),
        ));
    }
    Ok(vals)
}

fn row_to_pair(
    path: &str,
    lineno: usize,
    line: &str,
    cam: Option<&Intrinsics>,
) -> Result<(BearingVec, BearingVec)> {
    match cam {
        Some(cam) => {
            let v = parse_floats(path, lineno, line, 4)?;
            let f = pixel_to_bearing(v[0], v[1], cam).map_err(|e| {
                Error::parse(path, lineno, e.to_string())
            })?;
            let fp = pixel_to_bearing(v[2], v[3], cam).map_err(|e| {
                Error::parse(path, lineno, e.to_string())
            })?;
            Ok((f, fp))
        }
        None => {
            let v = parse_floats(path, lineno, line, 6)?;
            let f = BearingVec::new(nalgebra::Vector3::new(v[0], v[1], v[2]))
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let fp = BearingVec::new(nalgebra::Vector3::new(v[3], v[4], v[5]))
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            Ok((f, fp))
        }
    }
}

fn read_file(dir: &Path, name: &str) -> Result<Option<(String, String)>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(Some((text, path.display().to_string())))
}

/// Loads the standard dataset layout from a directory: `matches.txt`
/// (required), `loops.txt` and `intrinsics.txt` (optional). Pixel rows
/// require intrinsics; bearing rows must not have them declared twice.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let intrinsics = match read_file(dir, "intrinsics.txt")? {
        Some((text, path)) => {
            let line = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .find(|l| !l.is_empty())
                .ok_or_else(|| Error::parse(&path, 1, "empty intrinsics file".to_string()))?;
            Some(Intrinsics::parse_line(line).map_err(|e| Error::parse(&path, 1, e.to_string()))?)
        }
        None => None,
    };

    let Some((matches_text, matches_path)) = read_file(dir, "matches.txt")? else {
        return Err(Error::io(
            dir.join("matches.txt").display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    };

    struct Block {
        j: u64,
        k: u64,
        rows: CorrSet,
    }
    let parse_blocks = |text: &str, path: &str, allow: &[&str]| -> Result<Vec<Block>> {
        let mut blocks: Vec<Block> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let head = line.split_whitespace().next().unwrap();
            if head.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                if !allow.contains(&head) {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("unexpected block header `{head}`"),
                    ));
                }
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(Error::parse(path, lineno, "header needs `KIND j k`".to_string()));
                }
                let j: u64 = toks[1].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("bad frame id `{}`", toks[1]))
                })?;
                let k: u64 = toks[2].parse().map_err(|_| {
                    Error::parse(path, lineno, format!("bad frame id `{}`", toks[2]))
                })?;
                if j >= k {
                    return Err(Error::parse(path, lineno, format!("pair ({j}, {k}) needs j < k")));
                }
                if head == "PAIR" && intrinsics.is_none() {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "pixel rows need an intrinsics.txt".to_string(),
                    ));
                }
                if head == "BPAIR" && intrinsics.is_some() {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "bearing rows with intrinsics declared; pick one convention".to_string(),
                    ));
                }
                blocks.push(Block { j, k, rows: CorrSet::new() });
                continue;
            }
            let Some(block) = blocks.last_mut() else {
                return Err(Error::parse(path, lineno, "data row before any header".to_string()));
            };
            let (f, fp) = row_to_pair(path, lineno, line, intrinsics.as_ref())?;
            block.rows.push(f, fp);
        }
        Ok(blocks)
    };

    let mut records: BTreeMap<u64, FrameRecord> = BTreeMap::new();
    fn touch(records: &mut BTreeMap<u64, FrameRecord>, id: u64) {
        records
            .entry(id)
            .or_insert_with(|| FrameRecord { frame_id: id, ..FrameRecord::default() });
    }

    let mut seen = std::collections::BTreeSet::new();
    for b in parse_blocks(&matches_text, &matches_path, &["PAIR", "BPAIR"])? {
        if !seen.insert((b.j, b.k)) {
            return Err(Error::parse(
                &matches_path,
                1,
                format!("duplicate block for pair ({}, {})", b.j, b.k),
            ));
        }
        touch(&mut records, b.j);
        touch(&mut records, b.k);
        records.get_mut(&b.k).unwrap().pairs.push((b.j, b.rows));
    }
    for rec in records.values_mut() {
        rec.pairs.sort_by_key(|(j, _)| *j);
    }

    if let Some((loops_text, loops_path)) = read_file(dir, "loops.txt")? {
        for b in parse_blocks(&loops_text, &loops_path, &["LOOP"])? {
            touch(&mut records, b.j);
            touch(&mut records, b.k);
            records
                .get_mut(&b.k)
                .unwrap()
                .loops
                .push(LoopCandidate { j: b.j, k: b.k, corr: b.rows });
        }
    }

    Ok(Dataset { records: records.into_values().collect(), intrinsics })
}

/// Runs a whole dataset through a fresh pipeline. The trajectory is read
/// out after the last frame, so loop closures retroactively improve every
/// pose; the reports capture the per-frame view.
pub fn run_sequence(
    dataset: &Dataset,
    cfg: &PipelineConfig,
) -> Result<(Vec<(u64, Rot3)>, Vec<StepReport>)> {
    let mut pipe = Pipeline::new(cfg.clone())?;
    let mut reports = Vec::with_capacity(dataset.records.len());
    for rec in &dataset.records {
        reports.push(pipe.process_frame(rec)?);
    }
    Ok((pipe.trajectory(), reports))
}

/// Serializes a trajectory as `frame_id qw qx qy qz` rows; bytewise
/// deterministic for a given trajectory.
pub fn format_trajectory(traj: &[(u64, Rot3)]) -> String {
    let mut out = String::new();
    for (id, r) in traj {
        out.push_str(&format!("{id} {}\n", r.format_quat()));
    }
    out
}

pub fn parse_trajectory(text: &str, path: &str) -> Result<Vec<(u64, Rot3)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(Error::parse(path, i + 1, format!("expected 5 fields, found {}", toks.len())));
        }
        let id: u64 = toks[0]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad frame id `{}`", toks[0])))?;
        let r = Rot3::parse_quat(&toks[1..].join(" "))
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((id, r));
    }
    Ok(out)
}

/// Serializes per-frame stage timings as CSV. The trailing totals comment
/// is informational; timing output is exempt from byte determinism.
pub fn format_timing(reports: &[StepReport]) -> String {
    let mut out = String::from("frame_id,relrot_us,graph_us,rotavg_us,loop_us\n");
    let mut tot = [0u64; 4];
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.frame_id, r.relrot_us, r.graph_us, r.rotavg_us, r.loop_us
        ));
        tot[0] += r.relrot_us;
        tot[1] += r.graph_us;
        tot[2] += r.rotavg_us;
        tot[3] += r.loop_us;
    }
    out.push_str(&format!("# totals: relrot={} graph={} rotavg={} loop={}\n", tot[0], tot[1], tot[2], tot[3]));
    out
}
