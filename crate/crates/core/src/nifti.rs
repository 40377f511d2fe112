//! Single-file NIfTI-1 (`.nii`) subset: uncompressed, little-endian, 3D,
//! datatypes uint8 / int16 / float32 / uint16.
//!
//! The writer is canonical: a file produced by [`write_volume`] reads back to a
//! volume that writes out byte-identically.

use std::fs;
use std::path::Path;

use log::warn;
use thiserror::Error;

use crate::volume::{
    AnyVolume, ElementKind, Geometry, IntensityVolume, LabelSet, LabelVolume, MaskVolume, MultiLabelAnnotation, Volume,
    VolumeError,
};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_UINT16: i16 = 512;

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("{path}: bad magic {found:?} (only single-file \"n+1\" is supported)")]
    BadMagic { path: String, found: [u8; 4] },
    #[error("{path}: unsupported datatype {datatype}")]
    UnsupportedDatatype { path: String, datatype: i16 },
    #[error("{path}: truncated file ({actual} bytes, need {expected})")]
    TruncatedFile { path: String, expected: usize, actual: usize },
    #[error("{path}: expected a 3D volume, dim[0] = {dim0}")]
    NotThreeDimensional { path: String, dim0: i16 },
    #[error("{path}: {msg}")]
    BadHeader { path: String, msg: String },
    #[error("{path}: value {value} cannot be stored as a {kind}")]
    InvalidValue { path: String, value: f64, kind: ElementKind },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("{got} annotation files for {expected} labels")]
    PathCountMismatch { expected: usize, got: usize },
    #[error("dims {0:?} do not fit the 16-bit header fields")]
    DimsTooLarge([usize; 3]),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// On-disk datatype codes of the supported subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
    Uint16,
}

impl Datatype {
    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            DT_UINT8 => Some(Datatype::Uint8),
            DT_INT16 => Some(Datatype::Int16),
            DT_FLOAT32 => Some(Datatype::Float32),
            DT_UINT16 => Some(Datatype::Uint16),
            _ => None,
        }
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => DT_UINT8,
            Datatype::Int16 => DT_INT16,
            Datatype::Float32 => DT_FLOAT32,
            Datatype::Uint16 => DT_UINT16,
        }
    }

    pub fn bitpix(self) -> i16 {
        8 * self.bytes() as i16
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 | Datatype::Uint16 => 2,
            Datatype::Float32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Datatype::Uint8 => "uint8",
            Datatype::Int16 => "int16",
            Datatype::Float32 => "float32",
            Datatype::Uint16 => "uint16",
        }
    }
}

/// The header fields this subset reads and writes. Everything else is zero
/// on write and ignored on read.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub qform_code: i16,
    pub sform_code: i16,
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
}

fn rd_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn rd_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn rd_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn wr(b: &mut [u8], off: usize, bytes: &[u8]) {
    b[off..off + bytes.len()].copy_from_slice(bytes);
}

impl NiftiHeader {
    /// Canonical header for a volume stored with `datatype`: sform from
    /// spacing and origin (code 1), no qform, unit scaling.
    pub fn canonical(geometry: &Geometry, datatype: Datatype) -> Result<Self, NiftiError> {
        let d = geometry.dims();
        if d.iter().any(|&n| n > i16::MAX as usize) {
            return Err(NiftiError::DimsTooLarge(d));
        }
        let s = geometry.spacing();
        let o = geometry.origin();
        Ok(Self {
            dim: [3, d[0] as i16, d[1] as i16, d[2] as i16, 1, 1, 1, 1],
            datatype: datatype.code(),
            bitpix: datatype.bitpix(),
            pixdim: [1.0, s[0] as f32, s[1] as f32, s[2] as f32, 0.0, 0.0, 0.0, 0.0],
            vox_offset: VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            // millimetres
            xyzt_units: 2,
            qform_code: 0,
            sform_code: 1,
            qoffset: [0.0; 3],
            srow_x: [s[0] as f32, 0.0, 0.0, o[0] as f32],
            srow_y: [0.0, s[1] as f32, 0.0, o[1] as f32],
            srow_z: [0.0, 0.0, s[2] as f32, o[2] as f32],
            magic: MAGIC,
        })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        let mut b = [0u8; HEADER_SIZE];
        wr(&mut b, 0, &(HEADER_SIZE as i32).to_le_bytes());
        for (i, v) in self.dim.iter().enumerate() {
            wr(&mut b, 40 + 2 * i, &v.to_le_bytes());
        }
        wr(&mut b, 70, &self.datatype.to_le_bytes());
        wr(&mut b, 72, &self.bitpix.to_le_bytes());
        for (i, v) in self.pixdim.iter().enumerate() {
            wr(&mut b, 76 + 4 * i, &v.to_le_bytes());
        }
        wr(&mut b, 108, &self.vox_offset.to_le_bytes());
        wr(&mut b, 112, &self.scl_slope.to_le_bytes());
        wr(&mut b, 116, &self.scl_inter.to_le_bytes());
        b[123] = self.xyzt_units;
        wr(&mut b, 252, &self.qform_code.to_le_bytes());
        wr(&mut b, 254, &self.sform_code.to_le_bytes());
        for (i, v) in self.qoffset.iter().enumerate() {
            wr(&mut b, 268 + 4 * i, &v.to_le_bytes());
        }
        for (row, off) in [(&self.srow_x, 280), (&self.srow_y, 296), (&self.srow_z, 312)] {
            for (i, v) in row.iter().enumerate() {
                wr(&mut b, off + 4 * i, &v.to_le_bytes());
            }
        }
        wr(&mut b, 344, &self.magic);
        b
    }

    /// Parses and validates the first 348 bytes of a `.nii` file.
    pub fn parse(bytes: &[u8], path: &str) -> Result<Self, NiftiError> {
        if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
            return Err(NiftiError::BadHeader {
                path: path.into(),
                msg: "gzip-compressed files are not supported".into(),
            });
        }
        if bytes.len() < HEADER_SIZE {
            return Err(NiftiError::TruncatedFile { path: path.into(), expected: HEADER_SIZE, actual: bytes.len() });
        }
        let sizeof_hdr = rd_i32(bytes, 0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            let msg = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
                "big-endian files are not supported".to_string()
            } else {
                format!("sizeof_hdr is {sizeof_hdr}, expected 348")
            };
            return Err(NiftiError::BadHeader { path: path.into(), msg });
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[344..348]);
        if magic != MAGIC {
            return Err(NiftiError::BadMagic { path: path.into(), found: magic });
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = rd_i16(bytes, 40 + 2 * i);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = rd_f32(bytes, 76 + 4 * i);
        }
        let row =
            |off: usize| [rd_f32(bytes, off), rd_f32(bytes, off + 4), rd_f32(bytes, off + 8), rd_f32(bytes, off + 12)];
        let h = Self {
            dim,
            datatype: rd_i16(bytes, 70),
            bitpix: rd_i16(bytes, 72),
            pixdim,
            vox_offset: rd_f32(bytes, 108),
            scl_slope: rd_f32(bytes, 112),
            scl_inter: rd_f32(bytes, 116),
            xyzt_units: bytes[123],
            qform_code: rd_i16(bytes, 252),
            sform_code: rd_i16(bytes, 254),
            qoffset: [rd_f32(bytes, 268), rd_f32(bytes, 272), rd_f32(bytes, 276)],
            srow_x: row(280),
            srow_y: row(296),
            srow_z: row(312),
            magic,
        };
        h.validate(path)?;
        Ok(h)
    }

    fn validate(&self, path: &str) -> Result<(), NiftiError> {
        let dt = Datatype::from_code(self.datatype)
            .ok_or(NiftiError::UnsupportedDatatype { path: path.into(), datatype: self.datatype })?;
        if self.bitpix != dt.bitpix() {
            return Err(NiftiError::BadHeader {
                path: path.into(),
                msg: format!("bitpix {} inconsistent with datatype {}", self.bitpix, dt.name()),
            });
        }
        if self.dim[0] != 3 {
            return Err(NiftiError::NotThreeDimensional { path: path.into(), dim0: self.dim[0] });
        }
        if self.dim[1..4].iter().any(|&d| d < 1) {
            return Err(NiftiError::BadHeader {
                path: path.into(),
                msg: format!("invalid dims {:?}", &self.dim[1..4]),
            });
        }
        if !(self.vox_offset.is_finite() && self.vox_offset >= VOX_OFFSET as f32) {
            return Err(NiftiError::BadHeader {
                path: path.into(),
                msg: format!("vox_offset {} < 352", self.vox_offset),
            });
        }
        Ok(())
    }

    pub fn datatype(&self) -> Option<Datatype> {
        Datatype::from_code(self.datatype)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    fn geometry(&self, path: &str) -> Result<Geometry, NiftiError> {
        let mut spacing = [1.0f64; 3];
        for (a, s) in spacing.iter_mut().enumerate() {
            let p = f64::from(self.pixdim[a + 1]).abs();
            if p.is_finite() && p > 0.0 {
                *s = p;
            } else {
                warn!("{path}: pixdim[{}] = {} is not usable, assuming 1 mm", a + 1, self.pixdim[a + 1]);
            }
        }
        let origin = if self.sform_code > 0 {
            [f64::from(self.srow_x[3]), f64::from(self.srow_y[3]), f64::from(self.srow_z[3])]
        } else if self.qform_code > 0 {
            self.qoffset.map(f64::from)
        } else {
            [0.0; 3]
        };
        Ok(Geometry::new(self.dims(), spacing, origin)?)
    }
}

/// Raw voxel values decoded to `f64`, before any scaling.
fn decode(raw: &[u8], dt: Datatype, n: usize) -> Vec<f64> {
    let b = dt.bytes();
    (0..n)
        .map(|i| {
            let c = &raw[i * b..(i + 1) * b];
            match dt {
                Datatype::Uint8 => f64::from(c[0]),
                Datatype::Int16 => f64::from(i16::from_le_bytes([c[0], c[1]])),
                Datatype::Uint16 => f64::from(u16::from_le_bytes([c[0], c[1]])),
                Datatype::Float32 => f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            }
        })
        .collect()
}

/// Header plus unscaled voxel values.
pub struct RawNifti {
    pub header: NiftiHeader,
    pub geometry: Geometry,
    pub values: Vec<f64>,
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawNifti, NiftiError> {
    let path = path.as_ref();
    let p = path_str(path);
    let bytes = fs::read(path).map_err(|source| NiftiError::Io { path: p.clone(), source })?;
    let header = NiftiHeader::parse(&bytes, &p)?;
    let dt = header.datatype().expect("validated datatype");
    let geometry = header.geometry(&p)?;
    let n = geometry.len();
    let start = header.vox_offset as usize;
    let expected = start + n * dt.bytes();
    if bytes.len() < expected {
        return Err(NiftiError::TruncatedFile { path: p, expected, actual: bytes.len() });
    }
    let values = decode(&bytes[start..expected], dt, n);
    Ok(RawNifti { header, geometry, values })
}

/// Reads a volume, interpreting its elements as `kind`.
///
/// Intensity and probability data are scaled by `scl_slope`/`scl_inter` when
/// the slope is nonzero. Label data must be integral in `0..=65535`; masks
/// take any nonzero value as set.
pub fn read_volume(path: impl AsRef<Path>, kind: ElementKind) -> Result<AnyVolume, NiftiError> {
    let path = path.as_ref();
    let RawNifti { header, geometry, values } = read_raw(path)?;
    let invalid = |value: f64| NiftiError::InvalidValue { path: path_str(path), value, kind };
    Ok(match kind {
        ElementKind::Intensity | ElementKind::Probability => {
            let slope = f64::from(header.scl_slope);
            let inter = f64::from(header.scl_inter);
            let scaled = if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope, inter) != (1.0, 0.0) {
                values.into_iter().map(|v| v * slope + inter).collect()
            } else {
                values
            };
            let v = Volume::new(geometry, scaled)?;
            if kind == ElementKind::Intensity {
                AnyVolume::Intensity(v)
            } else {
                AnyVolume::Probability(v)
            }
        }
        ElementKind::Label => {
            let mut labels = Vec::with_capacity(values.len());
            for v in values {
                if !(v.fract() == 0.0 && (0.0..=f64::from(u16::MAX)).contains(&v)) {
                    return Err(invalid(v));
                }
                labels.push(v as u16);
            }
            AnyVolume::Label(Volume::new(geometry, labels)?)
        }
        ElementKind::Mask => {
            if let Some(&v) = values.iter().find(|v| v.is_nan()) {
                return Err(invalid(v));
            }
            AnyVolume::Mask(Volume::new(geometry, values.into_iter().map(|v| v != 0.0).collect())?)
        }
    })
}

pub fn read_intensity(path: impl AsRef<Path>) -> Result<IntensityVolume, NiftiError> {
    match read_volume(path, ElementKind::Intensity)? {
        AnyVolume::Intensity(v) => Ok(v),
        _ => unreachable!(),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume, NiftiError> {
    match read_volume(path, ElementKind::Label)? {
        AnyVolume::Label(v) => Ok(v),
        _ => unreachable!(),
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskVolume, NiftiError> {
    match read_volume(path, ElementKind::Mask)? {
        AnyVolume::Mask(v) => Ok(v),
        _ => unreachable!(),
    }
}

/// Element types with a fixed on-disk representation.
pub trait NiftiElement: Copy {
    const DATATYPE: Datatype;
    fn put(self, out: &mut Vec<u8>);
}

impl NiftiElement for f64 {
    const DATATYPE: Datatype = Datatype::Float32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self as f32).to_le_bytes());
    }
}

impl NiftiElement for u16 {
    const DATATYPE: Datatype = Datatype::Uint16;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl NiftiElement for bool {
    const DATATYPE: Datatype = Datatype::Uint8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(u8::from(self));
    }
}

/// Serializes a volume to the canonical byte layout.
pub fn encode<T: NiftiElement>(v: &Volume<T>) -> Result<Vec<u8>, NiftiError> {
    let header = NiftiHeader::canonical(v.geometry(), T::DATATYPE)?;
    let mut out = Vec::with_capacity(VOX_OFFSET + v.len() * T::DATATYPE.bytes());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&[0u8; VOX_OFFSET - HEADER_SIZE]);
    for &x in v.data() {
        x.put(&mut out);
    }
    Ok(out)
}

/// Writes intensities/probabilities as float32, labels as uint16 and masks
/// as uint8, with the data starting at byte 352.
pub fn write_volume<T: NiftiElement>(v: &Volume<T>, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let path = path.as_ref();
    let bytes = encode(v)?;
    fs::write(path, bytes).map_err(|source| NiftiError::Io { path: path_str(path), source })
}

pub fn write_any(v: &AnyVolume, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    match v {
        AnyVolume::Intensity(v) | AnyVolume::Probability(v) => write_volume(v, path),
        AnyVolume::Label(v) => write_volume(v, path),
        AnyVolume::Mask(v) => write_volume(v, path),
    }
}

/// Reads one binary mask per label (ordered as the label set) into a
/// multi-label annotation. Overlaps are preserved.
pub fn read_annotation<P: AsRef<Path>>(paths: &[P], labels: &LabelSet) -> Result<MultiLabelAnnotation, NiftiError> {
    if paths.len() != labels.len() {
        return Err(NiftiError::PathCountMismatch { expected: labels.len(), got: paths.len() });
    }
    let mut masks: Vec<MaskVolume> = Vec::with_capacity(paths.len());
    for p in paths {
        let m = read_mask(p)?;
        if let Some(first) = masks.first() {
            if first.dims() != m.dims() {
                return Err(NiftiError::DimMismatch { left: first.dims(), right: m.dims() });
            }
            warn_if_grids_differ(first.geometry(), m.geometry(), p.as_ref());
        }
        masks.push(m);
    }
    Ok(MultiLabelAnnotation::from_masks(labels.clone(), masks)?)
}

/// Inputs are expected to be co-registered; differing affines are reported
/// but not rejected.
pub fn warn_if_grids_differ(reference: &Geometry, other: &Geometry, path: &Path) {
    if reference.spacing() != other.spacing() || reference.origin() != other.origin() {
        warn!("{}: spacing/origin differ from the first input; assuming co-registered grids", path.display());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelEntry;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn geom(dims: [usize; 3]) -> Geometry {
        Geometry::new(dims, [0.75, 1.0, 1.25], [-10.5, 3.0, 0.25]).unwrap()
    }

    #[test]
    fn file_sizes() {
        let labels = Volume::filled(geom([2, 2, 2]), 3u16);
        assert_eq!(encode(&labels).unwrap().len(), 352 + 16);
        let one = Volume::filled(geom([1, 1, 1]), 0.5f64);
        assert_eq!(encode(&one).unwrap().len(), 356);
    }

    #[test]
    fn header_layout() {
        let v = Volume::filled(geom([3, 4, 5]), true);
        let b = encode(&v).unwrap();
        assert_eq!(&b[0..4], &348i32.to_le_bytes());
        assert_eq!(&b[344..348], b"n+1\0");
        assert_eq!(&b[348..352], &[0, 0, 0, 0]);
        assert_eq!(rd_i16(&b, 40), 3);
        assert_eq!(rd_i16(&b, 42), 3);
        assert_eq!(rd_i16(&b, 44), 4);
        assert_eq!(rd_i16(&b, 46), 5);
        assert_eq!(rd_i16(&b, 70), DT_UINT8);
        assert_eq!(rd_i16(&b, 72), 8);
        assert_eq!(rd_f32(&b, 108), 352.0);
        assert_eq!(rd_i16(&b, 252), 0);
        assert_eq!(rd_i16(&b, 254), 1);
        assert_eq!(rd_f32(&b, 280), 0.75);
        assert_eq!(rd_f32(&b, 292), -10.5);
    }

    #[test]
    fn round_trip_labels_and_masks() {
        let dir = tmp();
        let g = geom([3, 2, 2]);
        let labels = Volume::new(g, (0..12u16).map(|i| i * 1000).collect()).unwrap();
        let p = dir.path().join("l.nii");
        write_volume(&labels, &p).unwrap();
        assert_eq!(read_labels(&p).unwrap(), labels);

        let mask = labels.map(|l| l % 3000 == 0);
        write_volume(&mask, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), mask);
    }

    #[test]
    fn float_round_trip_is_f32_exact() {
        let dir = tmp();
        let g = geom([4, 1, 1]);
        let v = Volume::new(g, vec![0.1, -2.5, 1e-3, 1.0 / 3.0]).unwrap();
        let p = dir.path().join("f.nii");
        write_volume(&v, &p).unwrap();
        let back = read_intensity(&p).unwrap();
        for (a, b) in v.data().iter().zip(back.data()) {
            assert_eq!(*b, f64::from(*a as f32));
        }
    }

    #[test]
    fn rejects_bad_magic_and_datatype() {
        let dir = tmp();
        let v = Volume::filled(geom([2, 2, 2]), 1u16);
        let mut bytes = encode(&v).unwrap();
        bytes[344..348].copy_from_slice(b"ni1\0");
        let p = dir.path().join("bad.nii");
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_labels(&p), Err(NiftiError::BadMagic { .. })));

        let mut bytes = encode(&v).unwrap();
        bytes[70..72].copy_from_slice(&64i16.to_le_bytes());
        bytes[72..74].copy_from_slice(&64i16.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_labels(&p), Err(NiftiError::UnsupportedDatatype { datatype: 64, .. })));
    }

    #[test]
    fn rejects_truncation_and_4d() {
        let dir = tmp();
        let v = Volume::filled(geom([2, 2, 2]), 1u16);
        let bytes = encode(&v).unwrap();
        let p = dir.path().join("t.nii");
        fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_labels(&p), Err(NiftiError::TruncatedFile { expected: 368, actual: 367, .. })));
        fs::write(&p, &bytes[..100]).unwrap();
        assert!(matches!(read_labels(&p), Err(NiftiError::TruncatedFile { .. })));

        let mut four = bytes.clone();
        four[40..42].copy_from_slice(&4i16.to_le_bytes());
        fs::write(&p, &four).unwrap();
        assert!(matches!(read_labels(&p), Err(NiftiError::NotThreeDimensional { dim0: 4, .. })));
    }

    #[test]
    fn scaling_applies_to_intensity_only() {
        let dir = tmp();
        let v = Volume::new(geom([3, 1, 1]), vec![1u16, 2, 3]).unwrap();
        let mut bytes = encode(&v).unwrap();
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&0.5f32.to_le_bytes());
        let p = dir.path().join("s.nii");
        fs::write(&p, &bytes).unwrap();
        assert_eq!(read_intensity(&p).unwrap().data(), &[2.5, 4.5, 6.5]);
        assert_eq!(read_labels(&p).unwrap().data(), &[1, 2, 3]);
    }

    #[test]
    fn labels_must_be_integral() {
        let dir = tmp();
        let v = Volume::new(geom([2, 1, 1]), vec![1.0, 2.5]).unwrap();
        let p = dir.path().join("x.nii");
        write_volume(&v, &p).unwrap();
        assert!(matches!(read_labels(&p), Err(NiftiError::InvalidValue { .. })));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let v = Volume::filled(geom([1, 1, 1]), 1u16);
        assert!(matches!(write_volume(&v, ""), Err(NiftiError::Io { .. })));
        assert!(matches!(write_volume(&v, "/nonexistent-dir/x/y.nii"), Err(NiftiError::Io { .. })));
    }

    #[test]
    fn annotation_from_overlapping_masks() {
        let dir = tmp();
        let g = geom([3, 1, 1]);
        let labels =
            LabelSet::new(vec![LabelEntry { id: 4, name: "CL".into() }, LabelEntry { id: 6, name: "MD".into() }])
                .unwrap();
        let a = Volume::new(g, vec![true, true, false]).unwrap();
        let b = Volume::new(g, vec![false, true, false]).unwrap();
        let pa = dir.path().join("a.nii");
        let pb = dir.path().join("b.nii");
        write_volume(&a, &pa).unwrap();
        write_volume(&b, &pb).unwrap();
        let ann = read_annotation(&[&pa, &pb], &labels).unwrap();
        assert_eq!(ann.labels_at(0).collect::<Vec<_>>(), vec![4]);
        assert_eq!(ann.labels_at(1).collect::<Vec<_>>(), vec![4, 6]);
        assert_eq!(ann.labels_at(2).count(), 0);

        assert!(matches!(read_annotation(&[&pa], &labels), Err(NiftiError::PathCountMismatch { expected: 2, got: 1 })));
        let pc = dir.path().join("c.nii");
        write_volume(&Volume::filled(geom([2, 1, 1]), false), &pc).unwrap();
        assert!(matches!(read_annotation(&[&pa, &pc], &labels), Err(NiftiError::DimMismatch { .. })));
    }

    #[test]
    fn dims_must_fit_header() {
        let g = Geometry::with_dims([40_000, 1, 1]).unwrap();
        assert!(matches!(encode(&Volume::filled(g, false)), Err(NiftiError::DimsTooLarge(_))));
    }
}
