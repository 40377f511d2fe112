//! End-to-end label propagation: conflicts are cleared, single-labeled roi
//! voxels become seeds, and the rest of the roi is filled by the random
//! walker on the guidance lattice.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dirichlet::{assemble, solve_all, SolverConfig, SolverError};
use crate::lattice::{build_lattice, connected_components, LatticeError};
use crate::volume::{
    argmax_labels, strip_conflicts, Geometry, IntensityVolume, LabelSet, LabelVolume, MaskVolume, MultiLabelAnnotation,
    ProbabilityMap, Volume, VolumeError, BACKGROUND,
};

pub const DEFAULT_BETA: f64 = 10_000.0;

/// What to do with roi voxels that no seed can reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedlessPolicy {
    Error,
    /// Label of the nearest seeded voxel in physical distance.
    #[default]
    NearestSeed,
    Background,
}

impl SeedlessPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeedlessPolicy::Error => "error",
            SeedlessPolicy::NearestSeed => "nearest_seed",
            SeedlessPolicy::Background => "background",
        }
    }
}

impl fmt::Display for SeedlessPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeedlessPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(SeedlessPolicy::Error),
            "nearest_seed" => Ok(SeedlessPolicy::NearestSeed),
            "background" => Ok(SeedlessPolicy::Background),
            other => Err(format!("unknown seedless policy '{other}' (expected error, nearest_seed or background)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("no single-labeled voxel inside the region of interest")]
    NoSeedsInRoi,
    #[error("request label set does not match the annotation's label set")]
    LabelSetMismatch,
    #[error("component {component} ({size} voxels, first at {voxel:?}) contains no seed")]
    SeedlessComponent { component: usize, size: usize, voxel: [usize; 3] },
    #[error("{count} roi voxels lie in neither hemisphere mask")]
    UncoveredVoxels { count: usize },
    #[error("hemisphere masks overlap in {count} voxels")]
    OverlappingHemispheres { count: usize },
    #[error("{count} hemisphere voxels lie outside the region of interest")]
    HemisphereOutsideRoi { count: usize },
    #[error("hemisphere {index}: {source}")]
    Hemisphere {
        index: usize,
        #[source]
        source: Box<PropagationError>,
    },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

impl PropagationError {
    /// Whether the failure is numerical rather than a problem with the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            PropagationError::Solver(e) => {
                matches!(e, SolverError::ConvergenceFailure { .. } | SolverError::ProbabilityOutOfRange { .. })
            }
            PropagationError::SeedlessComponent { .. } | PropagationError::UncoveredVoxels { .. } => true,
            PropagationError::Hemisphere { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropagationRequest<'a> {
    pub guidance: &'a IntensityVolume,
    pub roi: &'a MaskVolume,
    pub annotation: &'a MultiLabelAnnotation,
    pub labels: &'a LabelSet,
    pub beta: f64,
    pub solver: SolverConfig,
    pub seedless_policy: SeedlessPolicy,
}

impl<'a> PropagationRequest<'a> {
    /// Request with the default beta, solver and policy; labels are the
    /// annotation's.
    pub fn new(guidance: &'a IntensityVolume, roi: &'a MaskVolume, annotation: &'a MultiLabelAnnotation) -> Self {
        Self {
            guidance,
            roi,
            annotation,
            labels: annotation.labels(),
            beta: DEFAULT_BETA,
            solver: SolverConfig::default(),
            seedless_policy: SeedlessPolicy::default(),
        }
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn policy(mut self, policy: SeedlessPolicy) -> Self {
        self.seedless_policy = policy;
        self
    }

    pub fn solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    fn with_roi<'b>(&self, roi: &'b MaskVolume) -> PropagationRequest<'b>
    where
        'a: 'b,
    {
        PropagationRequest { roi, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelReport {
    pub id: u16,
    pub name: String,
    /// `false` for the label recovered as one minus the others.
    pub solved: bool,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub beta: f64,
    pub seedless_policy: SeedlessPolicy,
    pub roi_voxels: usize,
    pub seeds: usize,
    pub seeds_outside_roi: usize,
    pub conflicts_cleared: usize,
    pub unseeded_voxels: usize,
    pub components: usize,
    pub seedless_components: usize,
    pub seedless_voxels: usize,
    pub renormalized: usize,
    pub labels: Vec<LabelReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hemispheres: Vec<PropagationReport>,
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub soft: ProbabilityMap,
    pub hard: LabelVolume,
    pub report: PropagationReport,
}

fn check_inputs(req: &PropagationRequest<'_>) -> Result<(), PropagationError> {
    req.guidance.check_same_dims(req.roi)?;
    req.roi.geometry().check_same_dims(req.annotation.geometry())?;
    if req.labels != req.annotation.labels() {
        return Err(PropagationError::LabelSetMismatch);
    }
    if !(req.beta.is_finite() && req.beta >= 0.0) {
        return Err(LatticeError::InvalidBeta(req.beta).into());
    }
    req.solver.validate()?;
    Ok(())
}

pub fn propagate(req: &PropagationRequest<'_>) -> Result<PropagationResult, PropagationError> {
    check_inputs(req)?;
    let geometry = *req.roi.geometry();
    let roi = req.roi.data();
    let (seed_vol, conflicts) = strip_conflicts(req.annotation);
    let seeds = seed_vol.data();

    let seeds_outside = seeds.iter().zip(roi).filter(|(&s, &r)| s != BACKGROUND && !r).count();
    if seeds_outside > 0 {
        warn!("{seeds_outside} seeded voxels lie outside the region of interest and were dropped");
    }
    let conflicts_cleared = conflicts.data().iter().zip(roi).filter(|(&c, &r)| c && r).count();
    let n_seeds = seeds.iter().zip(roi).filter(|(&s, &r)| s != BACKGROUND && r).count();
    if n_seeds == 0 {
        return Err(PropagationError::NoSeedsInRoi);
    }

    let graph = build_lattice(req.guidance, req.roi, req.beta)?;
    let comps = connected_components(&graph);
    let mut seeded = vec![false; comps.count()];
    for node in 0..graph.n_nodes() {
        if seeds[graph.voxel_of(node)] != BACKGROUND {
            seeded[comps.ids[node]] = true;
        }
    }
    let seedless: Vec<usize> = (0..comps.count()).filter(|&c| !seeded[c]).collect();
    let mut seedless_voxels = Vec::new();
    if let Some(&c) = seedless.first() {
        if req.seedless_policy == SeedlessPolicy::Error {
            // nodes are in voxel order, so the first node of the component is its first voxel
            let node = comps.ids.iter().position(|&id| id == c).unwrap_or(0);
            return Err(PropagationError::SeedlessComponent {
                component: c,
                size: comps.sizes[c],
                voxel: geometry.coords(graph.voxel_of(node)),
            });
        }
        for node in 0..graph.n_nodes() {
            if !seeded[comps.ids[node]] {
                seedless_voxels.push(graph.voxel_of(node));
            }
        }
        warn!(
            "{} seedless components ({} voxels) handled by policy {}",
            seedless.len(),
            seedless_voxels.len(),
            req.seedless_policy
        );
    }

    // drop seedless components from the solve
    let reduced;
    let graph = if seedless_voxels.is_empty() {
        graph
    } else {
        let mut mask = roi.to_vec();
        for &v in &seedless_voxels {
            mask[v] = false;
        }
        reduced = Volume::new(geometry, mask)?;
        build_lattice(req.guidance, &reduced, req.beta)?
    };

    let node_seeds: Vec<Option<u16>> =
        (0..graph.n_nodes()).map(|node| Some(seeds[graph.voxel_of(node)]).filter(|&s| s != BACKGROUND)).collect();
    let sys = assemble(&graph, &node_seeds, req.labels)?;
    let outcome = solve_all(&sys, &req.solver)?;
    let mut soft = outcome.field.to_map(&graph);

    if req.seedless_policy == SeedlessPolicy::NearestSeed && !seedless_voxels.is_empty() {
        let seed_list = seed_voxels(seeds, roi);
        let nearest = nearest_seed_labels(&geometry, &seedless_voxels, &seed_list);
        for (&v, &l) in seedless_voxels.iter().zip(&nearest) {
            let channel = req.labels.index_of(l).expect("seed labels come from the label set");
            soft.set_one_hot(v, channel);
        }
    }
    let hard = argmax_labels(&soft, req.roi)?;

    let labels = outcome
        .stats
        .iter()
        .map(|s| LabelReport {
            id: s.label,
            name: req.labels.name_of(s.label).unwrap_or_default().to_string(),
            solved: s.solved,
            iterations: s.iterations,
            residual: s.residual,
        })
        .collect();
    let report = PropagationReport {
        beta: req.beta,
        seedless_policy: req.seedless_policy,
        roi_voxels: req.roi.count(),
        seeds: n_seeds,
        seeds_outside_roi: seeds_outside,
        conflicts_cleared,
        unseeded_voxels: req.roi.count() - n_seeds,
        components: comps.count(),
        seedless_components: seedless.len(),
        seedless_voxels: seedless_voxels.len(),
        renormalized: outcome.renormalized,
        labels,
        hemispheres: Vec::new(),
    };
    info!(
        "propagated {} unseeded voxels from {} seeds ({} conflicts cleared)",
        report.unseeded_voxels, report.seeds, report.conflicts_cleared
    );
    Ok(PropagationResult { soft, hard, report })
}

fn seed_voxels(seeds: &[u16], roi: &[bool]) -> Vec<(usize, u16)> {
    seeds.iter().zip(roi).enumerate().filter(|(_, (&s, &r))| s != BACKGROUND && r).map(|(v, (&s, _))| (v, s)).collect()
}

/// For each target voxel, the label of the closest seed in physical
/// (spacing-scaled) distance; equidistant seeds resolve to the smaller id.
pub fn nearest_seed_labels(geometry: &Geometry, targets: &[usize], seeds: &[(usize, u16)]) -> Vec<u16> {
    let sp = geometry.spacing();
    let seed_pos: Vec<([usize; 3], u16)> = seeds.iter().map(|&(v, l)| (geometry.coords(v), l)).collect();
    targets
        .par_iter()
        .map(|&t| {
            let p = geometry.coords(t);
            let mut best = (f64::INFINITY, u16::MAX);
            for &(q, l) in &seed_pos {
                let mut d2 = 0.0;
                for a in 0..3 {
                    let d = (p[a] as f64 - q[a] as f64) * sp[a];
                    d2 += d * d;
                }
                if d2 < best.0 || (d2 == best.0 && l < best.1) {
                    best = (d2, l);
                }
            }
            if best.1 == u16::MAX {
                BACKGROUND
            } else {
                best.1
            }
        })
        .collect()
}

/// Propagates each hemisphere on its own and stitches the results. Roi
/// voxels outside both hemispheres are handled by the seedless policy.
pub fn propagate_bilateral(
    req: &PropagationRequest<'_>,
    hemispheres: (&MaskVolume, &MaskVolume),
) -> Result<PropagationResult, PropagationError> {
    check_inputs(req)?;
    let (left, right) = hemispheres;
    req.roi.check_same_dims(left)?;
    req.roi.check_same_dims(right)?;
    let roi = req.roi.data();
    let (l, r) = (left.data(), right.data());
    let overlap = l.iter().zip(r).filter(|(&a, &b)| a && b).count();
    if overlap > 0 {
        return Err(PropagationError::OverlappingHemispheres { count: overlap });
    }
    let outside = l.iter().zip(r).zip(roi).filter(|((&a, &b), &m)| (a || b) && !m).count();
    if outside > 0 {
        return Err(PropagationError::HemisphereOutsideRoi { count: outside });
    }

    let wrap = |index: usize| move |e: PropagationError| PropagationError::Hemisphere { index, source: Box::new(e) };
    let (res_l, res_r) = rayon::join(|| propagate(&req.with_roi(left)), || propagate(&req.with_roi(right)));
    let res_l = res_l.map_err(wrap(0))?;
    let res_r = res_r.map_err(wrap(1))?;

    let geometry = *req.roi.geometry();
    let ids = req.labels.ids();
    let channels: Vec<Vec<f64>> = (0..ids.len())
        .map(|c| res_l.soft.channel(c).iter().zip(res_r.soft.channel(c)).map(|(a, b)| a + b).collect())
        .collect();
    let mut soft = ProbabilityMap::new(geometry, ids, channels)?;

    let uncovered: Vec<usize> = (0..roi.len()).filter(|&v| roi[v] && !l[v] && !r[v]).collect();
    if !uncovered.is_empty() {
        match req.seedless_policy {
            SeedlessPolicy::Error => return Err(PropagationError::UncoveredVoxels { count: uncovered.len() }),
            SeedlessPolicy::Background => {}
            SeedlessPolicy::NearestSeed => {
                let (seed_vol, _) = strip_conflicts(req.annotation);
                let seed_list = seed_voxels(seed_vol.data(), roi);
                let nearest = nearest_seed_labels(&geometry, &uncovered, &seed_list);
                for (&v, &lab) in uncovered.iter().zip(&nearest) {
                    if let Some(c) = req.labels.index_of(lab) {
                        soft.set_one_hot(v, c);
                    }
                }
            }
        }
    }
    let hard = argmax_labels(&soft, req.roi)?;
    let report = merge_reports(req, res_l.report, res_r.report, uncovered.len());
    Ok(PropagationResult { soft, hard, report })
}

fn merge_reports(
    req: &PropagationRequest<'_>,
    a: PropagationReport,
    b: PropagationReport,
    uncovered: usize,
) -> PropagationReport {
    let (seed_vol, conflicts) = strip_conflicts(req.annotation);
    let roi = req.roi.data();
    let labels = a
        .labels
        .iter()
        .zip(&b.labels)
        .map(|(x, y)| LabelReport {
            id: x.id,
            name: x.name.clone(),
            solved: x.solved,
            iterations: x.iterations + y.iterations,
            residual: x.residual.max(y.residual),
        })
        .collect();
    PropagationReport {
        beta: req.beta,
        seedless_policy: req.seedless_policy,
        roi_voxels: req.roi.count(),
        seeds: seed_vol.data().iter().zip(roi).filter(|(&s, &m)| s != BACKGROUND && m).count(),
        seeds_outside_roi: seed_vol.data().iter().zip(roi).filter(|(&s, &m)| s != BACKGROUND && !m).count(),
        conflicts_cleared: conflicts.data().iter().zip(roi).filter(|(&c, &m)| c && m).count(),
        unseeded_voxels: a.unseeded_voxels + b.unseeded_voxels + uncovered,
        components: a.components + b.components,
        seedless_components: a.seedless_components + b.seedless_components,
        seedless_voxels: a.seedless_voxels + b.seedless_voxels + uncovered,
        renormalized: a.renormalized + b.renormalized,
        labels,
        hemispheres: vec![a, b],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn line_setup(guide: &[f64], sets: &[Vec<u16>]) -> (IntensityVolume, MaskVolume, MultiLabelAnnotation) {
        let g = Geometry::with_dims([guide.len(), 1, 1]).unwrap();
        let labels = LabelSet::from_pairs([(1, "A"), (2, "B")]).unwrap();
        (
            Volume::new(g, guide.to_vec()).unwrap(),
            Volume::filled(g, true),
            MultiLabelAnnotation::from_sets(g, labels, sets).unwrap(),
        )
    }

    #[test]
    fn four_voxel_line_gamblers_ruin() {
        let (guide, roi, ann) = line_setup(&[0.5; 4], &[vec![1], vec![], vec![], vec![2]]);
        let out = propagate(&PropagationRequest::new(&guide, &roi, &ann)).unwrap();
        let expect = [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0];
        for (v, e) in out.soft.channel(0).iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(out.hard.data(), &[1, 1, 2, 2]);
        assert_eq!(out.report.unseeded_voxels, 2);
    }

    #[test]
    fn fully_seeded_needs_no_iterations() {
        let (guide, roi, ann) = line_setup(&[0.1, 0.9, 0.3], &[vec![1], vec![2], vec![2]]);
        let out = propagate(&PropagationRequest::new(&guide, &roi, &ann)).unwrap();
        assert_eq!(out.hard.data(), &[1, 2, 2]);
        assert!(out.report.labels.iter().all(|l| l.iterations == 0));
        assert_eq!(out.soft.at(1), vec![0.0, 1.0]);
    }

    #[test]
    fn conflicts_are_cleared_and_filled() {
        let (guide, roi, ann) = line_setup(&[0.0; 5], &[vec![1], vec![1, 2], vec![], vec![1, 2], vec![2]]);
        let out = propagate(&PropagationRequest::new(&guide, &roi, &ann)).unwrap();
        assert_eq!(out.report.conflicts_cleared, 2);
        assert_eq!(out.report.seeds, 2);
        assert!(out.hard.data().iter().all(|&l| l != BACKGROUND));
    }

    #[test]
    fn no_seeds_in_roi() {
        let (guide, _, ann) = line_setup(&[0.0; 3], &[vec![1], vec![], vec![]]);
        let roi = Volume::new(*guide.geometry(), vec![false, true, true]).unwrap();
        let err = propagate(&PropagationRequest::new(&guide, &roi, &ann)).unwrap_err();
        assert_eq!(err, PropagationError::NoSeedsInRoi);
    }

    #[test]
    fn seedless_island_policies() {
        // roi: [x x . x], seed only on the left part
        let (guide, _, ann) = line_setup(&[0.0; 4], &[vec![1], vec![], vec![2], vec![]]);
        let roi = Volume::new(*guide.geometry(), vec![true, true, false, true]).unwrap();
        let base = PropagationRequest::new(&guide, &roi, &ann);

        let err = propagate(&base.clone().policy(SeedlessPolicy::Error)).unwrap_err();
        assert!(matches!(err, PropagationError::SeedlessComponent { component: 1, size: 1, voxel: [3, 0, 0] }));
        assert!(err.is_numerical());

        let bg = propagate(&base.clone().policy(SeedlessPolicy::Background)).unwrap();
        assert_eq!(bg.hard.data(), &[1, 1, 0, 0]);
        assert_eq!(bg.soft.at(3), vec![0.0, 0.0]);
        assert_eq!(bg.report.seeds_outside_roi, 1);

        let near = propagate(&base.policy(SeedlessPolicy::NearestSeed)).unwrap();
        assert_eq!(near.hard.data(), &[1, 1, 0, 1]);
        assert_eq!(near.report.seedless_voxels, 1);
    }

    #[test]
    fn nearest_seed_uses_spacing_and_breaks_ties_low() {
        let g = Geometry::new([5, 3, 1], [1.0, 3.0, 1.0], [0.0; 3]).unwrap();
        // target at (2,1): seed 7 two voxels along x (distance 2), seed 4 one voxel along y (distance 3)
        let t = g.index(2, 1, 0);
        let seeds = [(g.index(0, 1, 0), 7), (g.index(2, 0, 0), 4)];
        assert_eq!(nearest_seed_labels(&g, &[t], &seeds), vec![7]);
        let tie = [(g.index(0, 1, 0), 7), (g.index(4, 1, 0), 3)];
        assert_eq!(nearest_seed_labels(&g, &[t], &tie), vec![3]);
    }

    #[test]
    fn policy_parsing() {
        for p in [SeedlessPolicy::Error, SeedlessPolicy::NearestSeed, SeedlessPolicy::Background] {
            assert_eq!(p.as_str().parse::<SeedlessPolicy>().unwrap(), p);
        }
        assert!("nearest".parse::<SeedlessPolicy>().is_err());
        assert_eq!(SeedlessPolicy::default(), SeedlessPolicy::NearestSeed);
    }

    #[test]
    fn bilateral_rejects_bad_masks() {
        let (guide, roi, ann) = line_setup(&[0.0; 4], &[vec![1], vec![], vec![], vec![2]]);
        let g = *guide.geometry();
        let a = Volume::new(g, vec![true, true, false, false]).unwrap();
        let b = Volume::new(g, vec![false, true, true, true]).unwrap();
        let req = PropagationRequest::new(&guide, &roi, &ann);
        assert_eq!(
            propagate_bilateral(&req, (&a, &b)).unwrap_err(),
            PropagationError::OverlappingHemispheres { count: 1 }
        );
        let small_roi = Volume::new(g, vec![true, true, true, false]).unwrap();
        let b = Volume::new(g, vec![false, false, true, true]).unwrap();
        let req = PropagationRequest::new(&guide, &small_roi, &ann);
        assert_eq!(
            propagate_bilateral(&req, (&a, &b)).unwrap_err(),
            PropagationError::HemisphereOutsideRoi { count: 1 }
        );
    }

    #[test]
    fn bilateral_hemisphere_without_seeds() {
        let (guide, roi, ann) = line_setup(&[0.0; 4], &[vec![1], vec![2], vec![], vec![]]);
        let g = *guide.geometry();
        let a = Volume::new(g, vec![true, true, false, false]).unwrap();
        let b = Volume::new(g, vec![false, false, true, true]).unwrap();
        let err = propagate_bilateral(&PropagationRequest::new(&guide, &roi, &ann), (&a, &b)).unwrap_err();
        assert_eq!(err, PropagationError::Hemisphere { index: 1, source: Box::new(PropagationError::NoSeedsInRoi) });
    }

    #[test]
    fn label_set_must_match() {
        let (guide, roi, ann) = line_setup(&[0.0; 2], &[vec![1], vec![2]]);
        let other = LabelSet::numbered(3).unwrap();
        let mut req = PropagationRequest::new(&guide, &roi, &ann);
        req.labels = &other;
        assert_eq!(propagate(&req).unwrap_err(), PropagationError::LabelSetMismatch);
    }
}
