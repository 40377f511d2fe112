//! Dense 3D volumes, label sets, and the annotation transforms applied before
//! graph construction.
//!
//! Voxel data is stored in x-fastest linear order: `idx = x + nx * (y + ny * z)`.

use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Label id reserved for "no label".
pub const BACKGROUND: u16 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("invalid dimensions {0:?}: every axis needs at least one voxel")]
    InvalidDims([usize; 3]),
    #[error("invalid spacing {0:?}: every axis must be finite and positive")]
    InvalidSpacing([f64; 3]),
    #[error("data length {actual} does not match dims (expected {expected})")]
    DataLength { expected: usize, actual: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("volume is constant inside the region of interest (value {0})")]
    ConstantVolume(f64),
    #[error("region of interest is empty")]
    EmptyRoi,
    #[error("crop target {target:?} exceeds source dims {dims:?}")]
    TargetTooLarge { dims: [usize; 3], target: [usize; 3] },
    #[error("label set must contain at least one label")]
    EmptyLabelSet,
    #[error("label id 0 is reserved for background")]
    ZeroLabel,
    #[error("label ids must be unique and ascending (found {0} after {1})")]
    UnsortedLabels(u16, u16),
    #[error("label id {0} is not part of the label set")]
    UnknownLabel(u16),
    #[error("label set line {line}: {msg}")]
    LabelSetParse { line: usize, msg: String },
    #[error("expected {expected} per-label masks, got {actual}")]
    MaskCountMismatch { expected: usize, actual: usize },
    #[error("probability map has {actual} channels for {expected} labels")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Semantic role of a volume's elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Intensity,
    Label,
    Mask,
    Probability,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ElementKind::Intensity => "intensity",
            ElementKind::Label => "label",
            ElementKind::Mask => "mask",
            ElementKind::Probability => "probability",
        };
        f.write_str(s)
    }
}

/// Grid layout shared by every volume: voxel counts, voxel size in mm and the
/// world position of voxel (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidSpacing(spacing));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Unit spacing, zero origin.
    pub fn with_dims(dims: [usize; 3]) -> Result<Self, VolumeError> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// World position (mm) of a voxel centre.
    pub fn world(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        [
            self.origin[0] + c[0] as f64 * self.spacing[0],
            self.origin[1] + c[1] as f64 * self.spacing[1],
            self.origin[2] + c[2] as f64 * self.spacing[2],
        ]
    }

    pub fn check_same_dims(&self, other: &Geometry) -> Result<(), VolumeError> {
        if self.dims != other.dims {
            return Err(VolumeError::DimMismatch { left: self.dims, right: other.dims });
        }
        Ok(())
    }
}

/// Dense 3D grid of `T` in x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: Geometry,
    data: Vec<T>,
}

pub type IntensityVolume = Volume<f64>;
pub type LabelVolume = Volume<u16>;
pub type MaskVolume = Volume<bool>;

impl<T: Copy> Volume<T> {
    pub fn new(geometry: Geometry, data: Vec<T>) -> Result<Self, VolumeError> {
        if data.len() != geometry.len() {
            return Err(VolumeError::DataLength { expected: geometry.len(), actual: data.len() });
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Self {
        Self { geometry, data: vec![value; geometry.len()] }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let [nx, ny, nz] = geometry.dims();
        let mut data = Vec::with_capacity(geometry.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.geometry.index(x, y, z)]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Volume<U> {
        Volume { geometry: self.geometry, data: self.data.iter().copied().map(f).collect() }
    }

    /// Same grid, new contents.
    pub fn with_data<U: Copy>(&self, data: Vec<U>) -> Result<Volume<U>, VolumeError> {
        Volume::new(self.geometry, data)
    }

    pub fn check_same_dims<U>(&self, other: &Volume<U>) -> Result<(), VolumeError> {
        self.geometry.check_same_dims(&other.geometry)
    }
}

impl MaskVolume {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// A volume of any supported element kind, as read from or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Intensity(IntensityVolume),
    Probability(IntensityVolume),
    Label(LabelVolume),
    Mask(MaskVolume),
}

impl AnyVolume {
    pub fn kind(&self) -> ElementKind {
        match self {
            AnyVolume::Intensity(_) => ElementKind::Intensity,
            AnyVolume::Probability(_) => ElementKind::Probability,
            AnyVolume::Label(_) => ElementKind::Label,
            AnyVolume::Mask(_) => ElementKind::Mask,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        match self {
            AnyVolume::Intensity(v) | AnyVolume::Probability(v) => v.geometry(),
            AnyVolume::Label(v) => v.geometry(),
            AnyVolume::Mask(v) => v.geometry(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub id: u16,
    pub name: String,
}

/// Ordered, non-empty set of foreground labels. Ids are unique, strictly
/// positive and ascending; [`BACKGROUND`] is never a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    entries: Vec<LabelEntry>,
}

impl LabelSet {
    pub fn new(entries: Vec<LabelEntry>) -> Result<Self, VolumeError> {
        if entries.is_empty() {
            return Err(VolumeError::EmptyLabelSet);
        }
        for (i, e) in entries.iter().enumerate() {
            if e.id == BACKGROUND {
                return Err(VolumeError::ZeroLabel);
            }
            if i > 0 && entries[i - 1].id >= e.id {
                return Err(VolumeError::UnsortedLabels(e.id, entries[i - 1].id));
            }
        }
        Ok(Self { entries })
    }

    /// Labels `1..=m` named `label_<id>`.
    pub fn numbered(m: u16) -> Result<Self, VolumeError> {
        Self::new((1..=m).map(|id| LabelEntry { id, name: format!("label_{id}") }).collect())
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (u16, S)>) -> Result<Self, VolumeError> {
        Self::new(pairs.into_iter().map(|(id, name)| LabelEntry { id, name: name.into() }).collect())
    }

    /// Parses the `id<TAB>name` text format. Blank lines and anything after
    /// `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, VolumeError> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| VolumeError::LabelSetParse { line: lineno + 1, msg: msg.to_string() };
            let (id, name) = line.split_once('\t').ok_or_else(|| err("expected `id<TAB>name`"))?;
            let id: u16 = id.trim().parse().map_err(|_| err("label id is not an unsigned 16-bit integer"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(err("empty label name"));
            }
            entries.push(LabelEntry { id, name: name.to_string() });
        }
        Self::new(entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, VolumeError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| VolumeError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# id\tname\n");
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\n", e.id, e.name));
        }
        out
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<u16> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn index_of(&self, id: u16) -> Option<usize> {
        self.entries.binary_search_by_key(&id, |e| e.id).ok()
    }

    pub fn contains(&self, id: u16) -> bool {
        self.index_of(id).is_some()
    }

    pub fn name_of(&self, id: u16) -> Option<&str> {
        self.index_of(id).map(|i| self.entries[i].name.as_str())
    }

    /// Checks that every voxel is background or a member of the set.
    pub fn validate(&self, v: &LabelVolume) -> Result<(), VolumeError> {
        match v.data().iter().find(|&&l| l != BACKGROUND && !self.contains(l)) {
            Some(&l) => Err(VolumeError::UnknownLabel(l)),
            None => Ok(()),
        }
    }
}

/// Per-voxel set of labels, stored as one binary mask per label of the set.
/// A voxel may carry no label, one label, or several (a conflict).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelAnnotation {
    geometry: Geometry,
    labels: LabelSet,
    masks: Vec<Vec<bool>>,
}

impl MultiLabelAnnotation {
    /// `masks[i]` is the indicator of `labels.entries()[i]`.
    pub fn from_masks(labels: LabelSet, masks: Vec<MaskVolume>) -> Result<Self, VolumeError> {
        if masks.len() != labels.len() {
            return Err(VolumeError::MaskCountMismatch { expected: labels.len(), actual: masks.len() });
        }
        let geometry = *masks[0].geometry();
        for m in &masks[1..] {
            geometry.check_same_dims(m.geometry())?;
        }
        Ok(Self { geometry, labels, masks: masks.into_iter().map(Volume::into_data).collect() })
    }

    /// Single-label annotation from a hard label map (background stays
    /// unlabeled).
    pub fn from_label_volume(labels: LabelSet, v: &LabelVolume) -> Result<Self, VolumeError> {
        labels.validate(v)?;
        let masks = labels.entries().iter().map(|e| v.map(|l| l == e.id)).collect();
        Self::from_masks(labels, masks)
    }

    /// Builds from explicit per-voxel sets.
    pub fn from_sets(geometry: Geometry, labels: LabelSet, sets: &[Vec<u16>]) -> Result<Self, VolumeError> {
        if sets.len() != geometry.len() {
            return Err(VolumeError::DataLength { expected: geometry.len(), actual: sets.len() });
        }
        let mut masks = vec![vec![false; geometry.len()]; labels.len()];
        for (idx, set) in sets.iter().enumerate() {
            for &l in set {
                let li = labels.index_of(l).ok_or(VolumeError::UnknownLabel(l))?;
                masks[li][idx] = true;
            }
        }
        Ok(Self { geometry, labels, masks })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims()
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    /// Indicator of the `i`-th label of the set.
    pub fn label_mask(&self, i: usize) -> &[bool] {
        &self.masks[i]
    }

    pub fn to_mask_volumes(&self) -> Vec<MaskVolume> {
        self.masks.iter().map(|m| Volume { geometry: self.geometry, data: m.clone() }).collect()
    }

    pub fn count_at(&self, idx: usize) -> usize {
        self.masks.iter().filter(|m| m[idx]).count()
    }

    pub fn labels_at(&self, idx: usize) -> impl Iterator<Item = u16> + '_ {
        self.masks.iter().zip(self.labels.entries()).filter(move |(m, _)| m[idx]).map(|(_, e)| e.id)
    }
}

/// Fractional per-voxel membership, one channel per label of the set.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipField {
    geometry: Geometry,
    label_ids: Vec<u16>,
    channels: Vec<Vec<f64>>,
}

impl MembershipField {
    pub fn label_ids(&self) -> &[u16] {
        &self.label_ids
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn at(&self, idx: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[idx]).collect()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }
}

/// Voxel-space soft labeling: one probability channel per label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    geometry: Geometry,
    label_ids: Vec<u16>,
    channels: Vec<Vec<f64>>,
}

impl ProbabilityMap {
    pub fn new(geometry: Geometry, label_ids: Vec<u16>, channels: Vec<Vec<f64>>) -> Result<Self, VolumeError> {
        if channels.len() != label_ids.len() {
            return Err(VolumeError::ChannelMismatch { expected: label_ids.len(), actual: channels.len() });
        }
        for c in &channels {
            if c.len() != geometry.len() {
                return Err(VolumeError::DataLength { expected: geometry.len(), actual: c.len() });
            }
        }
        Ok(Self { geometry, label_ids, channels })
    }

    pub fn zeros(geometry: Geometry, label_ids: Vec<u16>) -> Self {
        let channels = vec![vec![0.0; geometry.len()]; label_ids.len()];
        Self { geometry, label_ids, channels }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn label_ids(&self) -> &[u16] {
        &self.label_ids
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub(crate) fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.channels[i]
    }

    pub fn channel_volume(&self, i: usize) -> IntensityVolume {
        Volume { geometry: self.geometry, data: self.channels[i].clone() }
    }

    pub fn at(&self, idx: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[idx]).collect()
    }

    pub(crate) fn set_one_hot(&mut self, idx: usize, channel: usize) {
        for (i, c) in self.channels.iter_mut().enumerate() {
            c[idx] = if i == channel { 1.0 } else { 0.0 };
        }
    }
}

/// Affine rescale so the roi minimum maps to 0 and the roi maximum to 1.
/// Voxels outside the roi go through the same map without clamping.
pub fn min_max_normalize(v: &IntensityVolume, roi: Option<&MaskVolume>) -> Result<IntensityVolume, VolumeError> {
    if let Some(r) = roi {
        v.check_same_dims(r)?;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for (i, &x) in v.data().iter().enumerate() {
        if roi.is_none_or(|r| r.data()[i]) {
            lo = lo.min(x);
            hi = hi.max(x);
            any = true;
        }
    }
    if !any {
        return Err(VolumeError::EmptyRoi);
    }
    if hi <= lo {
        return Err(VolumeError::ConstantVolume(lo));
    }
    let range = hi - lo;
    Ok(v.map(|x| (x - lo) / range))
}

/// Start index of a centred crop window; odd remainders trim the high side.
pub fn crop_start(dim: usize, target: usize) -> usize {
    (dim - target) / 2
}

pub fn center_crop<T: Copy>(v: &Volume<T>, target: [usize; 3]) -> Result<Volume<T>, VolumeError> {
    let dims = v.dims();
    if target.contains(&0) {
        return Err(VolumeError::InvalidDims(target));
    }
    if (0..3).any(|a| target[a] > dims[a]) {
        return Err(VolumeError::TargetTooLarge { dims, target });
    }
    let start = [crop_start(dims[0], target[0]), crop_start(dims[1], target[1]), crop_start(dims[2], target[2])];
    let g = v.geometry();
    let sp = g.spacing();
    let o = g.origin();
    let origin = [o[0] + start[0] as f64 * sp[0], o[1] + start[1] as f64 * sp[1], o[2] + start[2] as f64 * sp[2]];
    let geometry = Geometry::new(target, sp, origin)?;
    Ok(Volume::from_fn(geometry, |x, y, z| v.get(x + start[0], y + start[1], z + start[2])))
}

/// Splits an annotation into hard seeds (voxels with exactly one label) and
/// the mask of conflicting voxels (two or more labels). Conflicts become
/// unlabeled.
pub fn strip_conflicts(a: &MultiLabelAnnotation) -> (LabelVolume, MaskVolume) {
    let n = a.geometry.len();
    let mut seeds = vec![BACKGROUND; n];
    let mut conflict = vec![false; n];
    for idx in 0..n {
        let mut only = None;
        let mut count = 0;
        for (m, e) in a.masks.iter().zip(a.labels.entries()) {
            if m[idx] {
                count += 1;
                only = Some(e.id);
            }
        }
        match count {
            0 => {}
            1 => seeds[idx] = only.unwrap_or(BACKGROUND),
            _ => conflict[idx] = true,
        }
    }
    (Volume { geometry: a.geometry, data: seeds }, Volume { geometry: a.geometry, data: conflict })
}

/// Each labeled voxel spreads unit mass evenly over its `n` labels.
pub fn to_membership(a: &MultiLabelAnnotation) -> MembershipField {
    let n = a.geometry.len();
    let counts: Vec<usize> = (0..n).map(|idx| a.count_at(idx)).collect();
    let channels = a
        .masks
        .iter()
        .map(|m| m.iter().zip(&counts).map(|(&on, &c)| if on { 1.0 / c as f64 } else { 0.0 }).collect())
        .collect();
    MembershipField { geometry: a.geometry, label_ids: a.labels.ids(), channels }
}

/// Hard labels from a probability map. Ties go to the smallest label id; roi
/// voxels whose probabilities are all zero stay background, as does
/// everything outside the roi.
pub fn argmax_labels(p: &ProbabilityMap, roi: &MaskVolume) -> Result<LabelVolume, VolumeError> {
    p.geometry.check_same_dims(roi.geometry())?;
    // Channels are visited in ascending id order, so a strict `>` keeps the
    // smallest id on ties.
    let mut order: Vec<usize> = (0..p.label_ids.len()).collect();
    order.sort_by_key(|&i| p.label_ids[i]);
    let data = (0..p.geometry.len())
        .map(|idx| {
            if !roi.data()[idx] {
                return BACKGROUND;
            }
            let mut best: Option<(usize, f64)> = None;
            for &c in &order {
                let v = p.channels[c][idx];
                if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            best.map_or(BACKGROUND, |(c, _)| p.label_ids[c])
        })
        .collect();
    Ok(Volume { geometry: p.geometry, data })
}
