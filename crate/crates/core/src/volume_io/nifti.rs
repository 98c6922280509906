//! Single-file NIfTI-1 reader (`.nii`, optionally gzip-compressed).

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;

use super::{LabelVolume, Volume};
use crate::error::{Error, Result};
use crate::grid::Grid;

const HEADER_SIZE: usize = 348;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl NiftiDatatype {
    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => Self::Uint8,
            4 => Self::Int16,
            8 => Self::Int32,
            16 => Self::Float32,
            64 => Self::Float64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        match self {
            Self::Uint8 => 2,
            Self::Int16 => 4,
            Self::Int32 => 8,
            Self::Float32 => 16,
            Self::Float64 => 64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Uint8 => 1,
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dims: [i16; 8],
    pub pixdim: [f32; 8],
    pub datatype: NiftiDatatype,
    pub bitpix: i16,
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub big_endian: bool,
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::TruncatedFile(format!("header needs {HEADER_SIZE} bytes, found {}", bytes.len())));
        }
        let big_endian = match LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) {
            348 => false,
            _ if BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == 348 => true,
            n => return Err(Error::BadMagic(format!("header size field {n}"))),
        };
        if big_endian {
            Self::parse_with::<BigEndian>(bytes, true)
        } else {
            Self::parse_with::<LittleEndian>(bytes, false)
        }
    }

    fn parse_with<B: ByteOrder>(b: &[u8], big_endian: bool) -> Result<Self> {
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&b[offsets::MAGIC..offsets::MAGIC + 4]);
        if &magic != MAGIC_SINGLE {
            return Err(Error::BadMagic(format!("magic {:?}", String::from_utf8_lossy(&magic))));
        }
        let mut dims = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dims[i] = B::read_i16(&b[offsets::DIM + 2 * i..]);
            pixdim[i] = B::read_f32(&b[offsets::PIXDIM + 4 * i..]);
        }
        Ok(Self {
            dims,
            pixdim,
            datatype: NiftiDatatype::from_code(B::read_i16(&b[offsets::DATATYPE..]))?,
            bitpix: B::read_i16(&b[offsets::BITPIX..]),
            vox_offset: B::read_f32(&b[offsets::VOX_OFFSET..]),
            scl_slope: B::read_f32(&b[offsets::SCL_SLOPE..]),
            scl_inter: B::read_f32(&b[offsets::SCL_INTER..]),
            magic,
            big_endian,
        })
    }

    /// Grid shape in crate axis order (`dim[3], dim[2], dim[1]`).
    pub fn shape(&self) -> Result<[usize; 3]> {
        let nd = self.dims[0];
        let extents: Vec<i64> = self.dims[1..].iter().map(|&d| d as i64).collect();
        let bad = || Error::UnsupportedDimensions(extents.clone());
        if !(1..=7).contains(&nd) {
            return Err(bad());
        }
        let nd = nd as usize;
        if extents[..nd].iter().any(|&d| d < 1) || extents[3.min(nd)..nd].iter().any(|&d| d != 1) {
            return Err(bad());
        }
        let ext = |i: usize| if i < nd { extents[i] as usize } else { 1 };
        Ok([ext(2), ext(1), ext(0)])
    }

    /// Voxel spacing in crate axis order; missing or non-positive entries become 1.
    pub fn spacing(&self) -> [f64; 3] {
        let nd = self.dims[0].clamp(0, 7) as usize;
        let sp = |i: usize| {
            let v = self.pixdim[i + 1] as f64;
            if i < nd && v.is_finite() && v > 0.0 {
                v
            } else {
                1.0
            }
        };
        [sp(2), sp(1), sp(0)]
    }

    pub fn data_offset(&self) -> usize {
        let v = self.vox_offset;
        if v.is_finite() && v >= HEADER_SIZE as f32 {
            v as usize
        } else {
            HEADER_SIZE + 4
        }
    }
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decompress_if_gzip(raw)
}

fn decompress_if_gzip(raw: Vec<u8>) -> Result<Vec<u8>> {
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        match MultiGzDecoder::new(raw.as_slice()).read_to_end(&mut out) {
            Ok(_) => Ok(out),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(Error::TruncatedFile(format!("gzip stream ends after {} bytes", out.len())))
            }
            Err(e) => Err(Error::Invalid(format!("gzip stream: {e}"))),
        }
    } else {
        Ok(raw)
    }
}

/// Decode an in-memory NIfTI-1 file (plain or gzip) into header and voxel values.
pub fn parse_nifti(bytes: Vec<u8>) -> Result<(NiftiHeader, [usize; 3], Vec<f64>)> {
    let bytes = decompress_if_gzip(bytes)?;
    let hdr = NiftiHeader::parse(&bytes)?;
    let shape = hdr.shape()?;
    let n: usize = shape.iter().product();
    let start = hdr.data_offset();
    let end = start + n * hdr.datatype.size();
    if bytes.len() < end {
        return Err(Error::TruncatedFile(format!("payload needs {end} bytes, found {}", bytes.len())));
    }
    let payload = &bytes[start..end];
    let mut values = if hdr.big_endian {
        decode::<BigEndian>(payload, hdr.datatype, n)
    } else {
        decode::<LittleEndian>(payload, hdr.datatype, n)
    };
    let (slope, inter) = (hdr.scl_slope as f64, hdr.scl_inter as f64);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    Ok((hdr, shape, values))
}

fn decode<B: ByteOrder>(p: &[u8], dt: NiftiDatatype, n: usize) -> Vec<f64> {
    let w = dt.size();
    (0..n)
        .map(|i| {
            let s = &p[i * w..];
            match dt {
                NiftiDatatype::Uint8 => s[0] as f64,
                NiftiDatatype::Int16 => B::read_i16(s) as f64,
                NiftiDatatype::Int32 => B::read_i32(s) as f64,
                NiftiDatatype::Float32 => B::read_f32(s) as f64,
                NiftiDatatype::Float64 => B::read_f64(s),
            }
        })
        .collect()
}

/// Read an intensity image.
pub fn read_nifti(path: &Path, modality: &str) -> Result<Volume> {
    let (hdr, shape, values) = parse_nifti(read_maybe_gzip(path)?)?;
    Volume::new(shape, hdr.spacing(), values.into_iter().map(|v| v as f32).collect(), modality)
}

/// Read a label map; values must be non-negative integers.
pub fn read_nifti_labels(path: &Path) -> Result<LabelVolume> {
    let (hdr, shape, values) = parse_nifti(read_maybe_gzip(path)?)?;
    let mut data = Vec::with_capacity(values.len());
    for v in values {
        let r = v.round();
        if !(0.0..=u16::MAX as f64).contains(&r) || (v - r).abs() > 1e-3 {
            return Err(Error::Invalid(format!("{}: label value {v} is not a class index", path.display())));
        }
        data.push(r as u16);
    }
    LabelVolume::from_grid_inferred(Grid::new(shape.to_vec(), data)?, hdr.spacing())
}
