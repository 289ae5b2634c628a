//! IDX container files (the MNIST format).
//!
//! Header: two zero bytes, a type code, the number of dimensions, then one
//! big-endian `u32` per dimension. Payload values are big-endian.
//! Supported type codes: `0x08` u8, `0x09` i8, `0x0B` i16, `0x0C` i32,
//! `0x0D` f32, `0x0E` f64.

use std::fs;
use std::path::Path;

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const TYPE_U8: u8 = 0x08;
pub const TYPE_I8: u8 = 0x09;
pub const TYPE_I16: u8 = 0x0B;
pub const TYPE_I32: u8 = 0x0C;
pub const TYPE_F32: u8 = 0x0D;
pub const TYPE_F64: u8 = 0x0E;

/// A decoded IDX array.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub type_code: u8,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

fn format_err(path: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn width_of(type_code: u8) -> Option<usize> {
    match type_code {
        TYPE_U8 | TYPE_I8 => Some(1),
        TYPE_I16 => Some(2),
        TYPE_I32 | TYPE_F32 => Some(4),
        TYPE_F64 => Some(8),
        _ => None,
    }
}

/// Parses an in-memory IDX file; `name` is only used in error messages.
pub fn parse_idx(bytes: &[u8], name: &str) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(format_err(name, bytes.len(), "truncated header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(name, 0, "magic must start with two zero bytes"));
    }
    let type_code = bytes[2];
    let width =
        width_of(type_code).ok_or_else(|| format_err(name, 2, format!("unknown type code 0x{type_code:02X}")))?;
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(format_err(name, 3, "zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(format_err(name, bytes.len(), "truncated dimension list"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|k| {
            let o = 4 + 4 * k;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(name, 4, "dimension product overflows"))?;
    let expected = header + count * width;
    if bytes.len() < expected {
        return Err(format_err(
            name,
            bytes.len(),
            format!("truncated payload: need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(name, expected, "trailing bytes after payload"));
    }
    let payload = &bytes[header..expected];
    let values: Vec<f64> = match type_code {
        TYPE_U8 => payload.iter().map(|&b| f64::from(b)).collect(),
        TYPE_I8 => payload.iter().map(|&b| f64::from(b as i8)).collect(),
        TYPE_I16 => payload
            .chunks_exact(2)
            .map(|c| f64::from(i16::from_be_bytes([c[0], c[1]])))
            .collect(),
        TYPE_I32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(i32::from_be_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        TYPE_F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_be_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        TYPE_F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
        _ => unreachable!(),
    };
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(format_err(name, header + pos * width, "non-finite value"));
    }
    Ok(IdxArray {
        type_code,
        dims,
        values,
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, &path.display().to_string())
}

/// Loads an images/labels pair. The class count is one more than the
/// largest label unless `num_classes` is given.
///
/// With `normalize`, integer-typed images are treated as raw pixels: u8
/// values are scaled to `[0, 1]` and every feature is then standardised by
/// the global mean and standard deviation of the file. Floating-point files
/// already hold features and are loaded unchanged.
pub fn load_idx(images: &Path, labels: &Path, normalize: bool) -> Result<LabeledDataset> {
    load_idx_with_classes(images, labels, normalize, None)
}

pub fn load_idx_with_classes(
    images: &Path,
    labels: &Path,
    normalize: bool,
    num_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    let img_name = images.display().to_string();
    let lab_name = labels.display().to_string();
    if img.dims.len() < 2 {
        return Err(format_err(&img_name, 3, "image file needs at least two dimensions"));
    }
    if lab.dims.len() != 1 {
        return Err(format_err(&lab_name, 3, "label file must be one-dimensional"));
    }
    if !matches!(lab.type_code, TYPE_U8 | TYPE_I8 | TYPE_I16 | TYPE_I32) {
        return Err(format_err(&lab_name, 2, "labels must be an integer type"));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(format_err(
            &lab_name,
            4,
            format!("{} labels for {} images", lab.dims[0], img.dims[0]),
        ));
    }
    let n = img.dims[0];
    if n == 0 {
        return Err(format_err(&img_name, 4, "no examples"));
    }
    let d: usize = img.dims[1..].iter().product();
    if d == 0 {
        return Err(format_err(&img_name, 8, "zero-sized examples"));
    }
    let mut labels_out = Vec::with_capacity(n);
    for (i, &v) in lab.values.iter().enumerate() {
        if v < 0.0 {
            return Err(format_err(&lab_name, 8 + i, format!("negative label {v}")));
        }
        labels_out.push(v as usize);
    }
    let mut values = img.values;
    if normalize && !matches!(img.type_code, TYPE_F32 | TYPE_F64) {
        if img.type_code == TYPE_U8 {
            values.iter_mut().for_each(|v| *v /= 255.0);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        values.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    }
    let classes = match num_classes {
        Some(c) => c,
        None => labels_out.iter().max().map_or(1, |m| m + 1),
    };
    let features = Tensor::new(vec![n, d], values)?;
    LabeledDataset::new(features, labels_out, classes, format!("idx:{}", images.display()))
}

pub fn encode_idx(type_code: u8, dims: &[usize], values: &[f64]) -> Result<Vec<u8>> {
    let width = width_of(type_code).ok_or_else(|| Error::input("unknown IDX type code"))?;
    if dims.is_empty() || dims.len() > 255 {
        return Err(Error::input("IDX needs 1..=255 dimensions"));
    }
    if dims.iter().product::<usize>() != values.len() {
        return Err(Error::dim("IDX dims do not match value count"));
    }
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + width * values.len());
    out.extend_from_slice(&[0, 0, type_code, dims.len() as u8]);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::input("IDX dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    for &v in values {
        match type_code {
            TYPE_U8 => out.push(v as u8),
            TYPE_I8 => out.push(v as i8 as u8),
            TYPE_I16 => out.extend_from_slice(&(v as i16).to_be_bytes()),
            TYPE_I32 => out.extend_from_slice(&(v as i32).to_be_bytes()),
            TYPE_F32 => out.extend_from_slice(&(v as f32).to_be_bytes()),
            TYPE_F64 => out.extend_from_slice(&v.to_be_bytes()),
            _ => unreachable!(),
        }
    }
    Ok(out)
}

/// Writes a dataset as an `f64` feature file and an integer label file.
pub fn save_idx(data: &LabeledDataset, images: &Path, labels: &Path) -> Result<()> {
    let f = data.features();
    let img = encode_idx(TYPE_F64, &[f.rows(), f.cols()], f.data())?;
    let max = data.labels().iter().copied().max().unwrap_or(0);
    let ty = if max < 256 { TYPE_U8 } else { TYPE_I32 };
    let lv: Vec<f64> = data.labels().iter().map(|&y| y as f64).collect();
    let lab = encode_idx(ty, &[lv.len()], &lv)?;
    fs::write(images, img).map_err(|e| Error::io(images, e))?;
    fs::write(labels, lab).map_err(|e| Error::io(labels, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Three 2×2 u8 images and their labels, written out byte by byte.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = vec![
            0x00, 0x00, 0x08, 0x03, // magic 0x00000803
            0x00, 0x00, 0x00, 0x03, // 3 images
            0x00, 0x00, 0x00, 0x02, // 2 rows
            0x00, 0x00, 0x00, 0x02, // 2 cols
            0, 1, 2, 3, //
            10, 20, 30, 40, //
            255, 128, 64, 0,
        ];
        let labels = vec![
            0x00, 0x00, 0x08, 0x01, // magic 0x00000801
            0x00, 0x00, 0x00, 0x03, //
            7, 0, 3,
        ];
        (images, labels)
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn loads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture();
        let ip = write(dir.path(), "i.idx", &i);
        let lp = write(dir.path(), "l.idx", &l);
        let ds = load_idx(&ip, &lp, false).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dims(), 4);
        assert_eq!(ds.labels(), &[7, 0, 3]);
        assert_eq!(ds.num_classes(), 8);
        assert_eq!(
            ds.features().data(),
            &[0.0, 1.0, 2.0, 3.0, 10.0, 20.0, 30.0, 40.0, 255.0, 128.0, 64.0, 0.0]
        );
    }

    #[test]
    fn normalization_standardizes() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture();
        let ds = load_idx(&write(dir.path(), "i", &i), &write(dir.path(), "l", &l), true).unwrap();
        let v = ds.features().data();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn count_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (i, mut l) = fixture();
        l[7] = 2;
        l.pop();
        let err = load_idx(&write(dir.path(), "i", &i), &write(dir.path(), "l", &l), false).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn bad_magic_and_truncation_report_offsets() {
        let (mut i, _) = fixture();
        i[0] = 1;
        match parse_idx(&i, "x") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        let (i, _) = fixture();
        match parse_idx(&i[..20], "x") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        let (mut i, _) = fixture();
        i[2] = 0x07;
        assert!(matches!(parse_idx(&i, "x"), Err(Error::Format { offset: 2, .. })));
    }

    #[test]
    fn f64_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = Tensor::new(vec![2, 3], vec![0.5, -1.25, 3.0, 1e-300, 7.0, -0.0]).unwrap();
        let ds = LabeledDataset::new(f, vec![1, 0], 2, "t").unwrap();
        let (ip, lp) = (dir.path().join("a"), dir.path().join("b"));
        save_idx(&ds, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp, false).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
    }
}
