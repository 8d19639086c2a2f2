//! NPY version 1.0 reader and writer for little-endian `f4` / `f8` arrays of
//! rank 1 to 3 in C order.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1} (only 1.0 is accepted)")]
    UnsupportedVersion(u8, u8),
    #[error("malformed NPY header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {0:?} (expected '<f4' or '<f8')")]
    UnsupportedDtype(String),
    #[error("fortran_order arrays are not supported")]
    FortranOrder,
    #[error("unsupported rank {0} (expected 1, 2 or 3)")]
    UnsupportedRank(usize),
    #[error("non-finite element at index {0:?}")]
    NonFinite(Vec<usize>),
    #[error("payload is {found} bytes, shape requires {expected}")]
    TruncatedPayload { expected: usize, found: usize },
}

/// A dense array widened to `f64`, with its shape taken verbatim from the
/// file header.
#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NpyArray {
    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray, NpyError> {
    parse_npy(&fs::read(path)?)
}

pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    if bytes.len() < 6 || &bytes[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < 10 {
        return Err(NpyError::MalformedHeader("file ends inside the preamble".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion(major, minor));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let start = 10 + header_len;
    if bytes.len() < start {
        return Err(NpyError::MalformedHeader("file ends inside the header".into()));
    }
    let text = std::str::from_utf8(&bytes[10..start])
        .map_err(|_| NpyError::MalformedHeader("header is not ASCII".into()))?;
    let header = parse_header(text)?;

    let count: usize = header.shape.iter().product();
    let payload = &bytes[start..];
    let expected = count * header.dtype.size();
    if payload.len() != expected {
        return Err(NpyError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(NpyError::NonFinite(unravel(k, &header.shape)));
    }
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (slot, &dim) in idx.iter_mut().zip(shape).rev() {
        *slot = flat % dim;
        flat /= dim;
    }
    idx
}

fn parse_header(text: &str) -> Result<Header, NpyError> {
    let malformed = |m: &str| NpyError::MalformedHeader(m.to_string());
    let body = text.trim_end_matches(['\n', ' ', '\0']).trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| malformed("header is not a dict literal"))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| malformed("expected a quoted key"))?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| malformed("expected ':' after key"))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = take_quoted(after).ok_or_else(|| malformed("descr must be a string"))?;
                descr = Some(v.to_string());
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else {
                    return Err(malformed("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let inner_end = after.find(')').ok_or_else(|| malformed("unterminated shape tuple"))?;
                let inner = after
                    .strip_prefix('(')
                    .ok_or_else(|| malformed("shape must be a tuple"))?;
                let dims = &inner[..inner_end - 1];
                let parsed: Result<Vec<usize>, _> = dims
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse::<usize>)
                    .collect();
                shape = Some(parsed.map_err(|_| malformed("shape entries must be integers"))?);
                &after[inner_end + 1..]
            }
            other => return Err(NpyError::MalformedHeader(format!("unexpected key {other:?}"))),
        };
        let after = after.trim_start();
        rest = after.strip_prefix(',').unwrap_or(after).trim_start();
        if !after.starts_with(',') && !rest.is_empty() {
            return Err(malformed("expected ',' between entries"));
        }
    }

    let descr = descr.ok_or_else(|| malformed("missing descr"))?;
    let dtype = match descr.as_str() {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        _ => return Err(NpyError::UnsupportedDtype(descr)),
    };
    if fortran.ok_or_else(|| malformed("missing fortran_order"))? {
        return Err(NpyError::FortranOrder);
    }
    let shape = shape.ok_or_else(|| malformed("missing shape"))?;
    if !(1..=3).contains(&shape.len()) {
        return Err(NpyError::UnsupportedRank(shape.len()));
    }
    Ok(Header { dtype, shape })
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let q = s.chars().next()?;
    if q != '\'' && q != '"' {
        return None;
    }
    let end = s[1..].find(q)? + 1;
    Some((&s[1..end], &s[end + 1..]))
}

/// Serialise as NPY 1.0, `<f8`, C order. The header is padded so the payload
/// starts on a 64-byte boundary, as numpy does.
pub fn encode_npy(shape: &[usize], data: &[f64]) -> Vec<u8> {
    assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
    let dims = match shape {
        [d] => format!("({d},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {dims}, }}");
    let unpadded = 10 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_npy(path: impl AsRef<Path>, array: &NpyArray) -> Result<(), NpyError> {
    fs::write(path, encode_npy(&array.shape, &array.data))?;
    Ok(())
}
