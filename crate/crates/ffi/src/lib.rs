//! C ABI for labelprop.
//!
//! Every function returns an [`LpStatus`]; on failure a message is available
//! from [`lp_last_error_message`] on the same thread. Objects are opaque
//! handles created by `lp_*` constructors and released with the matching
//! `lp_*_free`. Strings returned to the caller are freed with
//! [`lp_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use labelprop::dirichlet::{Preconditioner, SolverConfig};
use labelprop::fusion::{evaluate, majority_vote, FusionError};
use labelprop::nifti::{self, NiftiError};
use labelprop::propagation::{propagate, PropagationError, PropagationRequest, PropagationResult, SeedlessPolicy};
use labelprop::volume::{
    AnyVolume, ElementKind, Geometry, LabelSet, LabelVolume, MaskVolume, MultiLabelAnnotation, Volume, VolumeError,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpKind {
    Intensity = 0,
    Label = 1,
    Mask = 2,
    Probability = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpPolicy {
    NearestSeed = 0,
    Background = 1,
    Error = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpPropagateOptions {
    pub beta: f64,
    pub rel_tol: f64,
    /// 0 selects the default limit.
    pub max_iters: usize,
    pub policy: LpPolicy,
}

pub struct LpVolume(AnyVolume);
pub struct LpLabelSet(LabelSet);
pub struct LpAnnotation(MultiLabelAnnotation);
pub struct LpResult(PropagationResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LpStatus, String);

impl From<NiftiError> for Failure {
    fn from(e: NiftiError) -> Self {
        let status = match e {
            NiftiError::Io { .. } => LpStatus::Io,
            NiftiError::Volume(_) | NiftiError::DimMismatch { .. } | NiftiError::PathCountMismatch { .. } => {
                LpStatus::Validation
            }
            _ => LpStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<VolumeError> for Failure {
    fn from(e: VolumeError) -> Self {
        Failure(LpStatus::Validation, e.to_string())
    }
}

impl From<PropagationError> for Failure {
    fn from(e: PropagationError) -> Self {
        let status = if e.is_numerical() { LpStatus::Numerical } else { LpStatus::Validation };
        Failure(status, e.to_string())
    }
}

impl From<FusionError> for Failure {
    fn from(e: FusionError) -> Self {
        Failure(LpStatus::Validation, e.to_string())
    }
}

fn fail(status: LpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(LpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(LpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(LpStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| fail(LpStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(LpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn geometry_arg(dims: *const usize, spacing: *const f64) -> Result<Geometry, Failure> {
    let d = slice_arg(dims, 3, "dims")?;
    let sp = if spacing.is_null() { [1.0; 3] } else { [*spacing, *spacing.add(1), *spacing.add(2)] };
    Ok(Geometry::new([d[0], d[1], d[2]], sp, [0.0; 3])?)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

fn kind_of(k: LpKind) -> ElementKind {
    match k {
        LpKind::Intensity => ElementKind::Intensity,
        LpKind::Label => ElementKind::Label,
        LpKind::Mask => ElementKind::Mask,
        LpKind::Probability => ElementKind::Probability,
    }
}

fn intensity(v: &LpVolume) -> Result<&Volume<f64>, Failure> {
    match &v.0 {
        AnyVolume::Intensity(x) | AnyVolume::Probability(x) => Ok(x),
        other => Err(fail(LpStatus::InvalidArgument, format!("expected an intensity volume, got {}", other.kind()))),
    }
}

fn labels_of(v: &LpVolume) -> Result<&LabelVolume, Failure> {
    match &v.0 {
        AnyVolume::Label(x) => Ok(x),
        other => Err(fail(LpStatus::InvalidArgument, format!("expected a label volume, got {}", other.kind()))),
    }
}

fn mask_of(v: &LpVolume) -> Result<&MaskVolume, Failure> {
    match &v.0 {
        AnyVolume::Mask(x) => Ok(x),
        other => Err(fail(LpStatus::InvalidArgument, format!("expected a mask volume, got {}", other.kind()))),
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next `lp_*` call on the thread.
#[no_mangle]
pub extern "C" fn lp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn lp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lp_volume_read(path: *const c_char, kind: LpKind, out: *mut *mut LpVolume) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let v = nifti::read_volume(path_arg(path)?, kind_of(kind))?;
        *out = boxed(LpVolume(v));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_volume_write(vol: *const LpVolume, path: *const c_char) -> LpStatus {
    guard(|| {
        let v = deref(vol, "volume")?;
        nifti::write_any(&v.0, path_arg(path)?)?;
        Ok(())
    })
}

/// `spacing` may be null for unit spacing. `data` holds `dims[0]*dims[1]*dims[2]`
/// values with x fastest.
#[no_mangle]
pub unsafe extern "C" fn lp_volume_from_f64(
    dims: *const usize,
    spacing: *const f64,
    data: *const f64,
    len: usize,
    probability: bool,
    out: *mut *mut LpVolume,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let v = Volume::new(geometry_arg(dims, spacing)?, slice_arg(data, len, "data")?.to_vec())?;
        *out = boxed(LpVolume(if probability { AnyVolume::Probability(v) } else { AnyVolume::Intensity(v) }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_volume_from_labels(
    dims: *const usize,
    spacing: *const f64,
    data: *const u16,
    len: usize,
    out: *mut *mut LpVolume,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let v = Volume::new(geometry_arg(dims, spacing)?, slice_arg(data, len, "data")?.to_vec())?;
        *out = boxed(LpVolume(AnyVolume::Label(v)));
        Ok(())
    })
}

/// Nonzero bytes are inside the mask.
#[no_mangle]
pub unsafe extern "C" fn lp_volume_from_mask(
    dims: *const usize,
    spacing: *const f64,
    data: *const u8,
    len: usize,
    out: *mut *mut LpVolume,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bits = slice_arg(data, len, "data")?.iter().map(|&b| b != 0).collect();
        let v = Volume::new(geometry_arg(dims, spacing)?, bits)?;
        *out = boxed(LpVolume(AnyVolume::Mask(v)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_volume_free(vol: *mut LpVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lp_volume_kind(vol: *const LpVolume, out: *mut LpKind) -> LpStatus {
    guard(|| {
        let v = deref(vol, "volume")?;
        *out_ptr(out, "out")? = match v.0.kind() {
            ElementKind::Intensity => LpKind::Intensity,
            ElementKind::Label => LpKind::Label,
            ElementKind::Mask => LpKind::Mask,
            ElementKind::Probability => LpKind::Probability,
        };
        Ok(())
    })
}

/// Writes the three dimensions to `dims_out`.
#[no_mangle]
pub unsafe extern "C" fn lp_volume_dims(vol: *const LpVolume, dims_out: *mut usize) -> LpStatus {
    guard(|| {
        let v = deref(vol, "volume")?;
        if dims_out.is_null() {
            return Err(fail(LpStatus::NullPointer, "dims_out is null"));
        }
        let d = v.0.geometry().dims();
        std::slice::from_raw_parts_mut(dims_out, 3).copy_from_slice(&d);
        Ok(())
    })
}

/// Copies voxel values, converted to double, into `buf` of length `len`
/// (which must equal the voxel count).
#[no_mangle]
pub unsafe extern "C" fn lp_volume_copy_f64(vol: *const LpVolume, buf: *mut f64, len: usize) -> LpStatus {
    guard(|| {
        let v = deref(vol, "volume")?;
        let n = v.0.geometry().len();
        if len != n {
            return Err(fail(LpStatus::InvalidArgument, format!("buffer holds {len} values, volume has {n}")));
        }
        if buf.is_null() {
            return Err(fail(LpStatus::NullPointer, "buf is null"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        match &v.0 {
            AnyVolume::Intensity(x) | AnyVolume::Probability(x) => dst.copy_from_slice(x.data()),
            AnyVolume::Label(x) => dst.iter_mut().zip(x.data()).for_each(|(d, &s)| *d = s as f64),
            AnyVolume::Mask(x) => dst.iter_mut().zip(x.data()).for_each(|(d, &s)| *d = s as u8 as f64),
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_labelset_parse(text: *const c_char, out: *mut *mut LpLabelSet) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if text.is_null() {
            return Err(fail(LpStatus::NullPointer, "text is null"));
        }
        let s = CStr::from_ptr(text).to_str().map_err(|_| fail(LpStatus::InvalidArgument, "text is not UTF-8"))?;
        *out = boxed(LpLabelSet(LabelSet::parse(s)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_labelset_read(path: *const c_char, out: *mut *mut LpLabelSet) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = path_arg(path)?;
        let set = LabelSet::from_file(&path).map_err(|e| match e {
            VolumeError::Io(_) => fail(LpStatus::Io, e.to_string()),
            other => other.into(),
        })?;
        *out = boxed(LpLabelSet(set));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_labelset_len(set: *const LpLabelSet, out: *mut usize) -> LpStatus {
    guard(|| {
        *out_ptr(out, "out")? = deref(set, "label set")?.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_labelset_free(set: *mut LpLabelSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// One mask volume per label of `labels`, in label order.
#[no_mangle]
pub unsafe extern "C" fn lp_annotation_from_masks(
    labels: *const LpLabelSet,
    masks: *const *const LpVolume,
    n_masks: usize,
    out: *mut *mut LpAnnotation,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let labels = deref(labels, "label set")?;
        let vols = slice_arg(masks, n_masks, "masks")?
            .iter()
            .map(|&m| deref(m, "mask").and_then(mask_of).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        if vols.is_empty() {
            return Err(fail(LpStatus::InvalidArgument, "no masks given"));
        }
        *out = boxed(LpAnnotation(MultiLabelAnnotation::from_masks(labels.0.clone(), vols)?));
        Ok(())
    })
}

/// One NIfTI mask path per label of `labels`, in label order.
#[no_mangle]
pub unsafe extern "C" fn lp_annotation_read(
    paths: *const *const c_char,
    n_paths: usize,
    labels: *const LpLabelSet,
    out: *mut *mut LpAnnotation,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let labels = deref(labels, "label set")?;
        let paths = slice_arg(paths, n_paths, "paths")?.iter().map(|&p| path_arg(p)).collect::<Result<Vec<_>, _>>()?;
        *out = boxed(LpAnnotation(nifti::read_annotation(&paths, &labels.0)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_annotation_free(a: *mut LpAnnotation) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

#[no_mangle]
pub extern "C" fn lp_propagate_options_default() -> LpPropagateOptions {
    let cfg = SolverConfig::default();
    LpPropagateOptions {
        beta: labelprop::propagation::DEFAULT_BETA,
        rel_tol: cfg.rel_tol,
        max_iters: 0,
        policy: LpPolicy::NearestSeed,
    }
}

/// `options` may be null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn lp_propagate(
    guidance: *const LpVolume,
    roi: *const LpVolume,
    annotation: *const LpAnnotation,
    options: *const LpPropagateOptions,
    out: *mut *mut LpResult,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let guidance = intensity(deref(guidance, "guidance")?)?;
        let roi = mask_of(deref(roi, "roi")?)?;
        let annotation = &deref(annotation, "annotation")?.0;
        let opts = options.as_ref().copied().unwrap_or_else(|| lp_propagate_options_default());
        let policy = match opts.policy {
            LpPolicy::NearestSeed => SeedlessPolicy::NearestSeed,
            LpPolicy::Background => SeedlessPolicy::Background,
            LpPolicy::Error => SeedlessPolicy::Error,
        };
        let solver = SolverConfig {
            rel_tol: opts.rel_tol,
            max_iters: (opts.max_iters > 0).then_some(opts.max_iters),
            preconditioner: Preconditioner::Multilevel,
        };
        let req = PropagationRequest::new(guidance, roi, annotation).beta(opts.beta).policy(policy).solver(solver);
        *out = boxed(LpResult(propagate(&req)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_result_free(r: *mut LpResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// New label volume holding the hard labels; free with `lp_volume_free`.
#[no_mangle]
pub unsafe extern "C" fn lp_result_hard(r: *const LpResult, out: *mut *mut LpVolume) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(LpVolume(AnyVolume::Label(deref(r, "result")?.0.hard.clone())));
        Ok(())
    })
}

/// New probability volume for the `label_index`-th label of the set.
#[no_mangle]
pub unsafe extern "C" fn lp_result_soft(r: *const LpResult, label_index: usize, out: *mut *mut LpVolume) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let soft = &deref(r, "result")?.0.soft;
        if label_index >= soft.label_ids().len() {
            return Err(fail(LpStatus::InvalidArgument, format!("label index {label_index} out of range")));
        }
        *out = boxed(LpVolume(AnyVolume::Probability(soft.channel_volume(label_index))));
        Ok(())
    })
}

/// Propagation report as JSON; free with `lp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn lp_result_report_json(r: *const LpResult, out: *mut *mut c_char) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let report = &deref(r, "result")?.0.report;
        let json = serde_json_string(report)?;
        *out = to_c_string(json);
        Ok(())
    })
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| fail(LpStatus::Panic, e.to_string()))
}

#[no_mangle]
pub unsafe extern "C" fn lp_majority_vote(
    maps: *const *const LpVolume,
    n_maps: usize,
    roi: *const LpVolume,
    out: *mut *mut LpVolume,
) -> LpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let roi = mask_of(deref(roi, "roi")?)?;
        let vols = slice_arg(maps, n_maps, "maps")?
            .iter()
            .map(|&m| deref(m, "map").and_then(labels_of).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        *out = boxed(LpVolume(AnyVolume::Label(majority_vote(&vols, roi)?)));
        Ok(())
    })
}

/// Volume-weighted Dice of `pred` against `target` over `roi`. When
/// `annotation` is non-null its ambiguous voxels are excluded. Either output
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn lp_dice_report(
    pred: *const LpVolume,
    target: *const LpVolume,
    labels: *const LpLabelSet,
    roi: *const LpVolume,
    annotation: *const LpAnnotation,
    overall_out: *mut f64,
    json_out: *mut *mut c_char,
) -> LpStatus {
    guard(|| {
        let pred = labels_of(deref(pred, "pred")?)?;
        let target = labels_of(deref(target, "target")?)?;
        let labels = &deref(labels, "label set")?.0;
        let roi = mask_of(deref(roi, "roi")?)?;
        let ann = annotation.as_ref().map(|a| &a.0);
        let report = evaluate(pred, target, labels, roi, ann)?;
        if let Some(o) = overall_out.as_mut() {
            *o = report.overall;
        }
        if let Some(j) = json_out.as_mut() {
            *j = to_c_string(report.to_json());
        }
        Ok(())
    })
}
