//! Synthetic test volumes: piecewise-constant blobs with noise, a ground
//! truth labeling and a corrupted multi-label annotation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{
    Geometry, IntensityVolume, LabelSet, LabelVolume, MaskVolume, MultiLabelAnnotation, Volume, BACKGROUND,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("bad phantom spec: {0}")]
    BadSpec(String),
}

fn bad(msg: impl Into<String>) -> PhantomError {
    PhantomError::BadSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub label: u16,
    pub name: String,
    /// Voxel coordinates.
    pub center: [f64; 3],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    /// Semi-axes in voxels of an ellipsoidal roi centred in the volume;
    /// absent means the whole volume.
    #[serde(default)]
    pub roi_radii: Option<[f64; 3]>,
    #[serde(default)]
    pub background_intensity: f64,
    pub blobs: Vec<BlobSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub unlabeled_fraction: f64,
    #[serde(default)]
    pub conflict_fraction: f64,
    /// Keep every blob centre as a single-labeled voxel.
    #[serde(default = "yes")]
    pub retain_blob_centers: bool,
    #[serde(default)]
    pub seed: u64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

fn yes() -> bool {
    true
}

pub const THALAMIC_NUCLEI: [&str; 13] =
    ["AN", "CL", "CM", "LD", "LP", "MD", "PuA", "PuI", "VA", "VLA", "VLP", "VPL", "VPM"];

impl PhantomSpec {
    /// 64x96x64 ellipsoid holding one blob per thalamic nucleus, ids 1..=13,
    /// noise 0.01, 30% unlabeled and 20% conflicting voxels.
    pub fn thalamus_13() -> Self {
        let offsets: [[f64; 3]; 13] = [
            [-14.0, -28.0, 0.0],
            [14.0, -28.0, 0.0],
            [0.0, -14.0, -12.0],
            [0.0, -14.0, 12.0],
            [-16.0, 0.0, 0.0],
            [16.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 14.0, -12.0],
            [0.0, 14.0, 12.0],
            [-14.0, 28.0, 0.0],
            [14.0, 28.0, 0.0],
            [0.0, 36.0, 0.0],
            [0.0, -36.0, 0.0],
        ];
        let mid = [31.5, 47.5, 31.5];
        let blobs = offsets
            .iter()
            .zip(THALAMIC_NUCLEI)
            .enumerate()
            .map(|(k, (o, name))| BlobSpec {
                label: k as u16 + 1,
                name: name.to_string(),
                center: [(mid[0] + o[0]).round(), (mid[1] + o[1]).round(), (mid[2] + o[2]).round()],
                intensity: (20 + 6 * k) as f64 / 100.0,
            })
            .collect();
        Self {
            dims: [64, 96, 64],
            spacing: [1.0; 3],
            roi_radii: Some([28.0, 44.0, 28.0]),
            background_intensity: 0.0,
            blobs,
            noise_sigma: 0.01,
            unlabeled_fraction: 0.3,
            conflict_fraction: 0.2,
            retain_blob_centers: true,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PhantomError> {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PhantomError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| bad(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("phantom spec serialises")
    }

    pub fn label_set(&self) -> Result<LabelSet, PhantomError> {
        let mut pairs: Vec<(u16, String)> = self.blobs.iter().map(|b| (b.label, b.name.clone())).collect();
        pairs.sort_by_key(|p| p.0);
        LabelSet::from_pairs(pairs).map_err(|e| bad(e.to_string()))
    }

    fn validate(&self) -> Result<(Geometry, LabelSet), PhantomError> {
        let geometry = Geometry::new(self.dims, self.spacing, [0.0; 3]).map_err(|e| bad(e.to_string()))?;
        if self.blobs.is_empty() {
            return Err(bad("at least one blob is required"));
        }
        let labels = self.label_set()?;
        for (what, f) in
            [("unlabeled_fraction", self.unlabeled_fraction), ("conflict_fraction", self.conflict_fraction)]
        {
            if !(0.0..=1.0).contains(&f) {
                return Err(bad(format!("{what} must lie in [0, 1], got {f}")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(bad(format!("noise_sigma must be finite and nonnegative, got {}", self.noise_sigma)));
        }
        if !self.background_intensity.is_finite() || self.blobs.iter().any(|b| !b.intensity.is_finite()) {
            return Err(bad("intensities must be finite"));
        }
        if let Some(r) = self.roi_radii {
            if r.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(bad(format!("roi radii must be positive, got {r:?}")));
            }
        }
        for b in &self.blobs {
            if b.center.iter().zip(self.dims).any(|(&c, d)| !(c >= 0.0 && c <= d as f64 - 1.0)) {
                return Err(bad(format!("centre of blob {} ({:?}) lies outside the volume", b.label, b.center)));
            }
        }
        Ok((geometry, labels))
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub guidance: IntensityVolume,
    pub roi: MaskVolume,
    pub truth: LabelVolume,
    pub annotation: MultiLabelAnnotation,
}

impl Phantom {
    pub fn labels(&self) -> &LabelSet {
        self.annotation.labels()
    }
}

fn dist2(p: [usize; 3], c: [f64; 3], sp: [f64; 3]) -> f64 {
    (0..3).map(|a| ((p[a] as f64 - c[a]) * sp[a]).powi(2)).sum()
}

/// Deterministic in `spec` (including its seed).
pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    let (geometry, labels) = spec.validate()?;
    let sp = spec.spacing;
    let dims = spec.dims;
    let mid = dims.map(|d| (d as f64 - 1.0) / 2.0);
    let roi = Volume::from_fn(geometry, |x, y, z| match spec.roi_radii {
        None => true,
        Some(r) => {
            let p = [x, y, z];
            (0..3).map(|a| ((p[a] as f64 - mid[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
        }
    });
    if roi.count() == 0 {
        return Err(bad("region of interest is empty"));
    }

    // blobs sorted by id so equidistant voxels go to the smaller id
    let mut blobs: Vec<&BlobSpec> = spec.blobs.iter().collect();
    blobs.sort_by_key(|b| b.label);
    let nearest = |p: [usize; 3]| -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, b) in blobs.iter().enumerate() {
            let d = dist2(p, b.center, sp);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    };
    let truth = Volume::from_fn(
        geometry,
        |x, y, z| {
            if roi.get(x, y, z) {
                blobs[nearest([x, y, z])].label
            } else {
                BACKGROUND
            }
        },
    );

    let mut centers = Vec::with_capacity(blobs.len());
    for b in &blobs {
        let c = b.center.map(|v| v.round() as usize);
        let idx = geometry.index(c[0], c[1], c[2]);
        if !roi.data()[idx] {
            return Err(bad(format!("centre of blob {} lies outside the roi", b.label)));
        }
        if truth.data()[idx] != b.label {
            return Err(bad(format!("centre of blob {} is claimed by another blob", b.label)));
        }
        centers.push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| bad(e.to_string()))?;
    let intensity_of = |l: u16| blobs.iter().find(|b| b.label == l).map_or(spec.background_intensity, |b| b.intensity);
    let noisy: Vec<f64> = truth
        .data()
        .iter()
        .map(|&l| intensity_of(l) + if spec.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 })
        .collect();
    let guidance = Volume::new(geometry, noisy).map_err(|e| bad(e.to_string()))?;

    let protected = |idx: usize| spec.retain_blob_centers && centers.contains(&idx);
    let mut pool: Vec<usize> = (0..geometry.len()).filter(|&i| roi.data()[i] && !protected(i)).collect();
    pool.shuffle(&mut rng);
    let n_unlabeled = (spec.unlabeled_fraction * pool.len() as f64).round() as usize;
    let mut sets: Vec<Vec<u16>> =
        truth.data().iter().map(|&l| if l == BACKGROUND { vec![] } else { vec![l] }).collect();
    for &i in &pool[..n_unlabeled] {
        sets[i].clear();
    }

    let labeled = sets.iter().filter(|s| !s.is_empty()).count();
    let candidates = &pool[n_unlabeled..];
    let n_conflicts = ((spec.conflict_fraction * labeled as f64).round() as usize).min(candidates.len());
    if blobs.len() > 1 {
        for &i in &candidates[..n_conflicts] {
            let own = sets[i][0];
            let p = geometry.coords(i);
            let mut others: Vec<(f64, u16)> =
                blobs.iter().filter(|b| b.label != own).map(|b| (dist2(p, b.center, sp), b.label)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let k = rng.gen_range(0..others.len().min(3));
            sets[i].push(others[k].1);
            sets[i].sort_unstable();
        }
    }
    let annotation = MultiLabelAnnotation::from_sets(geometry, labels, &sets).map_err(|e| bad(e.to_string()))?;
    Ok(Phantom { guidance, roi, truth, annotation })
}
