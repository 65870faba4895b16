//! Multi-class scribble propagation: seeds per class, one constrained
//! dominant-set collection per class, conflict resolution, rendering and
//! majority voting over colour spaces and FH granularities.
//!
//! The pipeline is split in two stages. [`prepare`] computes everything that
//! depends only on the image and the configuration (superpixels, adjacency,
//! features, affinity graphs); [`predict`] runs the scribble-dependent part.
//! [`full_pipeline`] is exactly `predict(&prepare(..)?, ..)`, which is what
//! the interactive service caches.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use image::RgbImage;
use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig, VoteMode};
use crate::dynamics::{extract_cds_collection, DynamicsError, SolverConfig};
use crate::features::{
    all_superpixel_features, best_sigma_search, build_affinity, convert_color_space, ColorSpace,
    FeatureError, FeatureVector,
};
use crate::graph::{AffinityGraph, VertexSet};
use crate::mask::LabelMask;
use crate::scribbles::{ScribbleSet, UNLABELED};
use crate::superpixels::{adjacency, fh_segment, SuperpixelError, SuperpixelMap};

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("class {0} has no uncontested seed superpixel")]
    EmptySeeds(u8),
    #[error("no class segments to assign")]
    NoSegments,
    #[error("{what}: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("label vector has {got} entries for {expected} superpixels")]
    LabelCount { expected: usize, got: usize },
    #[error("no masks to vote over")]
    NoMasks,
    #[error("every (colour space, k) job failed: {0}")]
    AllJobsFailed(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Superpixel(#[from] SuperpixelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Owning class of every superpixel: the class with the most scribbled pixels
/// inside it (ties go to the smaller id), `None` when it has no scribble.
pub fn seed_owners(scr: &ScribbleSet, sp: &SuperpixelMap) -> Vec<Option<u8>> {
    let mut counts: Vec<BTreeMap<u8, usize>> = vec![BTreeMap::new(); sp.count()];
    for (&l, &id) in scr.labels().iter().zip(sp.labels()) {
        if l != UNLABELED {
            *counts[id as usize].entry(l).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|c| {
            c.into_iter()
                .fold(None, |best: Option<(u8, usize)>, (class, n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((class, n)),
                })
                .map(|(class, _)| class)
        })
        .collect()
}

fn check_dims(
    what: &'static str,
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<(), PropagationError> {
    if expected == got {
        Ok(())
    } else {
        Err(PropagationError::SizeMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Seed superpixels `S_c` of one class.
pub fn seeds_from_scribbles(
    scr: &ScribbleSet,
    sp: &SuperpixelMap,
    class_id: u8,
) -> Result<VertexSet, PropagationError> {
    check_dims(
        "scribbles vs superpixels",
        (sp.width(), sp.height()),
        (scr.width(), scr.height()),
    )?;
    let seeds: VertexSet = seed_owners(scr, sp)
        .into_iter()
        .enumerate()
        .filter(|(_, o)| *o == Some(class_id))
        .map(|(v, _)| v)
        .collect();
    if seeds.is_empty() {
        return Err(PropagationError::EmptySeeds(class_id));
    }
    Ok(seeds)
}

/// Propagated region of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSegments {
    pub class_id: u8,
    /// Union of the extracted supports.
    pub uds: VertexSet,
    /// Characteristic-vector component of each vertex within the extracted
    /// set containing it; zero outside `uds`.
    pub confidence: Vec<f64>,
    /// Number of extracted sets.
    pub rounds: usize,
    /// Rounds whose solver hit the iteration cap.
    pub unconverged: usize,
}

pub fn propagate_class(
    graph: &AffinityGraph,
    seeds: &VertexSet,
    class_id: u8,
    cfg: &SolverConfig,
) -> Result<ClassSegments, PropagationError> {
    let sets = extract_cds_collection(graph, seeds, cfg)?;
    let mut uds = VertexSet::new();
    let mut confidence = vec![0.0; graph.len()];
    for set in &sets {
        for &v in &set.support {
            uds.insert(v);
            confidence[v] = set.chi.as_slice()[v];
        }
    }
    Ok(ClassSegments {
        class_id,
        uds,
        confidence,
        rounds: sets.len(),
        unconverged: sets.iter().filter(|s| !s.converged).count(),
    })
}

/// Per-superpixel labels plus how they were obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<u8>,
    /// Vertices claimed by more than one class.
    pub contested: usize,
    /// Vertices outside every region, labeled by flood fill.
    pub flood_filled: usize,
    /// Vertices with no positive-affinity path to a labeled vertex.
    pub unreachable: usize,
}

/// Resolves the class regions into one label per vertex: highest confidence
/// wins among claiming classes, unclaimed vertices are flood-filled from the
/// strongest labeled neighbour, and vertices the fill cannot reach get the
/// class holding the single highest confidence.
pub fn assign_labels(
    segments: &[ClassSegments],
    graph: &AffinityGraph,
) -> Result<Assignment, PropagationError> {
    if segments.is_empty() {
        return Err(PropagationError::NoSegments);
    }
    let n = graph.len();
    let mut ordered: Vec<&ClassSegments> = segments.iter().collect();
    ordered.sort_by_key(|s| s.class_id);

    let mut labels: Vec<Option<u8>> = vec![None; n];
    let mut contested = 0;
    for v in 0..n {
        let mut best: Option<(f64, u8)> = None;
        let mut claims = 0;
        for seg in &ordered {
            if seg.uds.contains(&v) {
                claims += 1;
                let c = seg.confidence[v];
                if best.is_none_or(|(bc, _)| c > bc) {
                    best = Some((c, seg.class_id));
                }
            }
        }
        if claims > 1 {
            contested += 1;
        }
        labels[v] = best.map(|(_, class)| class);
    }

    // Max-heap on (affinity, smaller vertex, smaller class). Affinities are
    // non-negative, so their bit patterns order like the values.
    let mut heap = BinaryHeap::new();
    let push_neighbors = |heap: &mut BinaryHeap<_>, labels: &[Option<u8>], u: usize, class: u8| {
        for &v in graph.neighbors(u) {
            let w = graph.weight(u, v);
            if labels[v].is_none() && w > 0.0 {
                heap.push((w.to_bits(), Reverse(v), Reverse(class)));
            }
        }
    };
    for u in 0..n {
        if let Some(class) = labels[u] {
            push_neighbors(&mut heap, &labels, u, class);
        }
    }
    let mut flood_filled = 0;
    while let Some((_, Reverse(v), Reverse(class))) = heap.pop() {
        if labels[v].is_some() {
            continue;
        }
        labels[v] = Some(class);
        flood_filled += 1;
        push_neighbors(&mut heap, &labels, v, class);
    }

    let mut unreachable = 0;
    if labels.iter().any(Option::is_none) {
        let fallback = ordered
            .iter()
            .map(|s| (s.confidence.iter().copied().fold(0.0, f64::max), s.class_id))
            .fold(None, |best: Option<(f64, u8)>, (c, class)| match best {
                Some((bc, _)) if bc >= c => best,
                _ => Some((c, class)),
            })
            .map(|(_, class)| class)
            .expect("segments are non-empty");
        for l in labels.iter_mut().filter(|l| l.is_none()) {
            *l = Some(fallback);
            unreachable += 1;
        }
    }
    Ok(Assignment {
        labels: labels.into_iter().map(|l| l.expect("all assigned")).collect(),
        contested,
        flood_filled,
        unreachable,
    })
}

/// Paints every pixel with the label of its superpixel.
pub fn render_mask(sp: &SuperpixelMap, labels: &[u8]) -> Result<LabelMask, PropagationError> {
    if labels.len() != sp.count() {
        return Err(PropagationError::LabelCount {
            expected: sp.count(),
            got: labels.len(),
        });
    }
    let pixels = sp.labels().iter().map(|&id| labels[id as usize]).collect();
    Ok(LabelMask::new(sp.width(), sp.height(), pixels).expect("sized by construction"))
}

fn vote_pixel(labels: impl Iterator<Item = u8>) -> (u8, usize) {
    let mut counts = [0usize; 256];
    for l in labels {
        counts[l as usize] += 1;
    }
    let (mut best, mut best_n) = (0u8, 0usize);
    for (l, &n) in counts.iter().enumerate() {
        if n > best_n {
            best = l as u8;
            best_n = n;
        }
    }
    (best, best_n)
}

fn vote_with_counts(masks: &[&LabelMask]) -> Result<(LabelMask, Vec<usize>), PropagationError> {
    let first = masks.first().ok_or(PropagationError::NoMasks)?;
    for m in masks {
        check_dims("vote input", first.dims(), m.dims())?;
    }
    let (labels, counts) = (0..first.labels().len())
        .map(|p| vote_pixel(masks.iter().map(|m| m.labels()[p])))
        .unzip();
    Ok((
        LabelMask::new(first.width(), first.height(), labels).expect("sized by construction"),
        counts,
    ))
}

/// Per-pixel plurality over `masks`; ties go to the smaller class id.
pub fn majority_vote(masks: &[LabelMask]) -> Result<LabelMask, PropagationError> {
    let refs: Vec<&LabelMask> = masks.iter().collect();
    Ok(vote_with_counts(&refs)?.0)
}

/// Fraction of scribbled pixels whose label in `mask` is their scribble class.
pub fn scribble_consistency(mask: &LabelMask, scr: &ScribbleSet) -> f64 {
    let (hit, total) = mask
        .labels()
        .iter()
        .zip(scr.labels())
        .filter(|(_, &s)| s != UNLABELED)
        .fold((0usize, 0usize), |(h, t), (&m, &s)| (h + (m == s) as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Scribble-independent artifacts of one (colour space, k, sigma_fh) job.
#[derive(Debug, Clone)]
pub struct PreparedJob {
    pub space: ColorSpace,
    pub k: f64,
    pub sigma_fh: f64,
    pub superpixels: SuperpixelMap,
    pub adjacency: BTreeSet<(usize, usize)>,
    pub features: Vec<FeatureVector>,
    /// One affinity graph per `(sigma_c, sigma_t)` candidate.
    pub graphs: Vec<((f64, f64), AffinityGraph)>,
}

pub fn prepare_job(
    image: &RgbImage,
    space: ColorSpace,
    k: f64,
    sigma_fh: f64,
    cfg: &PipelineConfig,
) -> Result<PreparedJob, PropagationError> {
    let channels = convert_color_space(image, space);
    let superpixels = fh_segment(&channels, &cfg.fh_params(k, sigma_fh))?;
    let adjacency = adjacency(&superpixels);
    let features = all_superpixel_features(&channels, &superpixels, space.gradient_channel())?;
    let graphs = cfg
        .sigma_candidates()
        .candidates()
        .into_iter()
        .map(|(c, t)| Ok(((c, t), build_affinity(&features, &adjacency, c, t)?)))
        .collect::<Result<_, FeatureError>>()?;
    Ok(PreparedJob {
        space,
        k,
        sigma_fh,
        superpixels,
        adjacency,
        features,
        graphs,
    })
}

/// Everything [`predict`] needs besides the scribbles.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub width: usize,
    pub height: usize,
    pub config: PipelineConfig,
    pub jobs: Vec<PreparedJob>,
    /// Jobs that could not be prepared, as `(space, k, sigma_fh, error)`.
    pub failed: Vec<(ColorSpace, f64, f64, String)>,
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, PropagationError> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PropagationError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn job_grid(cfg: &PipelineConfig) -> Vec<(f64, ColorSpace, f64)> {
    let mut grid = Vec::new();
    for sigma_fh in cfg.sigma_fh_values() {
        for &space in &cfg.color_spaces {
            for &k in &cfg.k_values {
                grid.push((sigma_fh, space, k));
            }
        }
    }
    grid
}

pub fn prepare(image: &RgbImage, cfg: &PipelineConfig) -> Result<PreparedImage, PropagationError> {
    cfg.validate()?;
    let grid = job_grid(cfg);
    let results: Vec<_> = in_pool(cfg.workers, || {
        grid.par_iter()
            .map(|&(sigma_fh, space, k)| prepare_job(image, space, k, sigma_fh, cfg))
            .collect()
    })?;
    let mut jobs = Vec::new();
    let mut failed = Vec::new();
    for (&(sigma_fh, space, k), r) in grid.iter().zip(results) {
        match r {
            Ok(job) => jobs.push(job),
            Err(e) => {
                warn!("dropping job ({space}, k={k}, sigma_fh={sigma_fh}): {e}");
                failed.push((space, k, sigma_fh, e.to_string()));
            }
        }
    }
    if jobs.is_empty() {
        return Err(PropagationError::AllJobsFailed(
            failed.iter().map(|f| f.3.clone()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(PreparedImage {
        width: image.width() as usize,
        height: image.height() as usize,
        config: cfg.clone(),
        jobs,
        failed,
    })
}

/// Result of one (colour space, k, sigma_fh) job.
#[derive(Debug, Clone)]
pub struct JobOutput {
    pub space: ColorSpace,
    pub k: f64,
    pub sigma_fh: f64,
    pub sigma_c: f64,
    pub sigma_t: f64,
    pub superpixels: SuperpixelMap,
    pub mask: LabelMask,
    pub segments: Vec<ClassSegments>,
    pub assignment: Assignment,
    /// Classes with scribbles but no uncontested seed superpixel.
    pub skipped_classes: Vec<u8>,
}

impl JobOutput {
    pub fn unconverged(&self) -> usize {
        self.segments.iter().map(|s| s.unconverged).sum()
    }
}

fn segment_with_graph(
    job: &PreparedJob,
    graph: &AffinityGraph,
    seeds: &BTreeMap<u8, VertexSet>,
    solver: &SolverConfig,
) -> Result<(LabelMask, Vec<ClassSegments>, Assignment), PropagationError> {
    let segments = seeds
        .iter()
        .map(|(&class, s)| propagate_class(graph, s, class, solver))
        .collect::<Result<Vec<_>, _>>()?;
    let assignment = assign_labels(&segments, graph)?;
    let mask = render_mask(&job.superpixels, &assignment.labels)?;
    Ok((mask, segments, assignment))
}

/// Runs the scribble-dependent stages on one prepared job, choosing
/// `(sigma_c, sigma_t)` by scribble consistency when several are cached.
pub fn run_job(
    job: &PreparedJob,
    scr: &ScribbleSet,
    cfg: &PipelineConfig,
) -> Result<JobOutput, PropagationError> {
    check_dims(
        "scribbles vs image",
        (job.superpixels.width(), job.superpixels.height()),
        (scr.width(), scr.height()),
    )?;
    let owners = seed_owners(scr, &job.superpixels);
    let mut seeds: BTreeMap<u8, VertexSet> = BTreeMap::new();
    for (v, o) in owners.iter().enumerate() {
        if let Some(class) = o {
            seeds.entry(*class).or_default().insert(v);
        }
    }
    let skipped_classes: Vec<u8> = scr
        .classes_present()
        .into_iter()
        .filter(|c| !seeds.contains_key(c))
        .collect();
    for c in &skipped_classes {
        warn!(
            "({}, k={}): class {c} has no uncontested seed superpixel",
            job.space, job.k
        );
    }
    let solver = cfg.solver();

    let (sigma_c, sigma_t) = if job.graphs.len() == 1 {
        job.graphs[0].0
    } else {
        let grid = cfg.sigma_candidates();
        best_sigma_search::<PropagationError>(&grid, |c, t| {
            let graph = graph_for(job, c, t);
            Ok(match segment_with_graph(job, graph, &seeds, &solver) {
                Ok((mask, _, _)) => scribble_consistency(&mask, scr),
                Err(_) => -1.0,
            })
        })?
    };
    let (mask, segments, assignment) =
        segment_with_graph(job, graph_for(job, sigma_c, sigma_t), &seeds, &solver)?;
    Ok(JobOutput {
        space: job.space,
        k: job.k,
        sigma_fh: job.sigma_fh,
        sigma_c,
        sigma_t,
        superpixels: job.superpixels.clone(),
        mask,
        segments,
        assignment,
        skipped_classes,
    })
}

fn graph_for(job: &PreparedJob, sigma_c: f64, sigma_t: f64) -> &AffinityGraph {
    &job
        .graphs
        .iter()
        .find(|(s, _)| *s == (sigma_c, sigma_t))
        .expect("every candidate graph is prepared")
        .1
}

/// One colour space and one FH setting, end to end.
pub fn segment_single(
    image: &RgbImage,
    scr: &ScribbleSet,
    space: ColorSpace,
    k: f64,
    sigma_fh: f64,
    cfg: &PipelineConfig,
) -> Result<JobOutput, PropagationError> {
    cfg.validate()?;
    run_job(&prepare_job(image, space, k, sigma_fh, cfg)?, scr, cfg)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub mask: LabelMask,
    /// Per-pixel share of job masks agreeing with `mask`, scaled to 0..=255.
    pub confidence: Vec<u8>,
    /// Jobs that contributed to the vote, in grid order.
    pub jobs: Vec<JobOutput>,
    /// The sigma_fh whose vote was kept.
    pub sigma_fh: f64,
    /// Jobs dropped during preparation or propagation, with the reason.
    pub failed: Vec<String>,
}

impl PipelineOutput {
    pub fn unconverged(&self) -> usize {
        self.jobs.iter().map(JobOutput::unconverged).sum()
    }

    pub fn unreachable(&self) -> usize {
        self.jobs.iter().map(|j| j.assignment.unreachable).sum()
    }
}

fn vote_jobs(jobs: &[&JobOutput], mode: VoteMode) -> Result<LabelMask, PropagationError> {
    match mode {
        VoteMode::Flat => {
            let masks: Vec<&LabelMask> = jobs.iter().map(|j| &j.mask).collect();
            Ok(vote_with_counts(&masks)?.0)
        }
        VoteMode::TwoStage => {
            let mut spaces: Vec<ColorSpace> = jobs.iter().map(|j| j.space).collect();
            spaces.dedup();
            let per_space = spaces
                .iter()
                .map(|&s| {
                    let masks: Vec<&LabelMask> =
                        jobs.iter().filter(|j| j.space == s).map(|j| &j.mask).collect();
                    Ok(vote_with_counts(&masks)?.0)
                })
                .collect::<Result<Vec<_>, PropagationError>>()?;
            majority_vote(&per_space)
        }
    }
}

/// Runs every prepared job against `scr` and votes over the results.
pub fn predict(prepared: &PreparedImage, scr: &ScribbleSet) -> Result<PipelineOutput, PropagationError> {
    let cfg = &prepared.config;
    check_dims(
        "scribbles vs image",
        (prepared.width, prepared.height),
        (scr.width(), scr.height()),
    )?;
    let results: Vec<Result<JobOutput, PropagationError>> = in_pool(cfg.workers, || {
        prepared
            .jobs
            .par_iter()
            .map(|job| run_job(job, scr, cfg))
            .collect()
    })?;
    let mut failed: Vec<String> = prepared
        .failed
        .iter()
        .map(|(s, k, f, e)| format!("({s}, k={k}, sigma_fh={f}): {e}"))
        .collect();
    let mut jobs = Vec::new();
    for (job, r) in prepared.jobs.iter().zip(results) {
        match r {
            Ok(out) => jobs.push(out),
            Err(e) => {
                warn!("dropping job ({}, k={}, sigma_fh={}): {e}", job.space, job.k, job.sigma_fh);
                failed.push(format!("({}, k={}, sigma_fh={}): {e}", job.space, job.k, job.sigma_fh));
            }
        }
    }
    if jobs.is_empty() {
        return Err(PropagationError::AllJobsFailed(failed.join("; ")));
    }

    // One vote per sigma_fh; keep the most scribble-consistent, ties to the
    // earliest candidate.
    let mut best: Option<(f64, f64, LabelMask)> = None;
    for sigma_fh in cfg.sigma_fh_values() {
        let group: Vec<&JobOutput> = jobs.iter().filter(|j| j.sigma_fh == sigma_fh).collect();
        if group.is_empty() {
            continue;
        }
        let mask = vote_jobs(&group, cfg.vote)?;
        let score = scribble_consistency(&mask, scr);
        if best.as_ref().is_none_or(|(bs, _, _)| score > *bs) {
            best = Some((score, sigma_fh, mask));
        }
    }
    let (_, sigma_fh, mask) = best.expect("at least one job survived");
    jobs.retain(|j| j.sigma_fh == sigma_fh);

    let n = jobs.len();
    let confidence = (0..mask.labels().len())
        .map(|p| {
            let agree = jobs.iter().filter(|j| j.mask.labels()[p] == mask.labels()[p]).count();
            ((agree * 255 + n / 2) / n) as u8
        })
        .collect();
    Ok(PipelineOutput {
        mask,
        confidence,
        jobs,
        sigma_fh,
        failed,
    })
}

/// Full grid of (colour space, k) jobs followed by majority voting.
pub fn full_pipeline(
    image: &RgbImage,
    scr: &ScribbleSet,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PropagationError> {
    check_dims(
        "scribbles vs image",
        (image.width() as usize, image.height() as usize),
        (scr.width(), scr.height()),
    )?;
    predict(&prepare(image, cfg)?, scr)
}
