//! Encoded-matrix cache files. Layout, all integers little endian:
//!
//! ```text
//! magic "EMX1" | u32 version | u8 label mode | u32 classes
//! u64 rows | u64 features | u32 name-block length | names ('\n'-joined)
//! rows * features f64 feature cells, row major
//! rows * target-width f64 target cells, row major
//! ```
//!
//! The target width is 1 for binary labels and the class count for
//! one-hot labels.

use std::io::{Read, Write};
use std::path::Path;

use super::{EncodedMatrix, LabelMode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"EMX1";
const VERSION: u32 = 1;

pub fn write_emx(path: &Path, m: &EncodedMatrix) -> Result<()> {
    m.validate()?;
    let mut out = Vec::new();
    write_emx_to(&mut out, m)?;
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_emx_to(w: &mut impl Write, m: &EncodedMatrix) -> Result<()> {
    let mode_byte: u8 = match m.label_mode {
        LabelMode::Binary => 0,
        LabelMode::Multiclass => 1,
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[mode_byte])?;
    w.write_all(&(m.class_count() as u32).to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.features() as u64).to_le_bytes())?;
    let names = m.feature_names.join("\n");
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    w.write_all(names.as_bytes())?;
    for v in m.x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in m.y.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_emx(path: &Path) -> Result<EncodedMatrix> {
    let bytes = std::fs::read(path)?;
    read_emx_from(&mut bytes.as_slice())
}

pub fn read_emx_from(r: &mut impl Read) -> Result<EncodedMatrix> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Integrity(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            supported: VERSION,
        });
    }
    let mut mode_byte = [0u8; 1];
    read_exact(r, &mut mode_byte, "label mode")?;
    let label_mode = match mode_byte[0] {
        0 => LabelMode::Binary,
        1 => LabelMode::Multiclass,
        other => {
            return Err(Error::Integrity(format!("unknown label mode byte {other}")))
        }
    };
    let classes = read_u32(r, "class count")? as usize;
    if classes != label_mode.class_count() {
        return Err(Error::Integrity(format!(
            "class count {classes} does not match label mode {}",
            label_mode.name()
        )));
    }
    let rows = read_u64(r, "row count")? as usize;
    let features = read_u64(r, "feature count")? as usize;
    let name_len = read_u32(r, "name block")? as usize;
    let mut name_bytes = vec![0u8; name_len];
    read_exact(r, &mut name_bytes, "feature names")?;
    let names = String::from_utf8(name_bytes)
        .map_err(|_| Error::Integrity("feature names are not valid UTF-8".into()))?;
    let feature_names: Vec<String> = if names.is_empty() {
        Vec::new()
    } else {
        names.split('\n').map(str::to_string).collect()
    };
    if feature_names.len() != features {
        return Err(Error::Integrity(format!(
            "{} feature names for {features} features",
            feature_names.len()
        )));
    }

    let x = read_f64s(r, rows * features, "feature cells")?;
    let y = read_f64s(r, rows * classes, "target cells")?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Integrity("trailing bytes after target cells".into()));
    }

    let out = EncodedMatrix {
        x: Tensor::new(vec![rows, features], x)?,
        y: Tensor::new(vec![rows, classes], y)?,
        feature_names,
        label_mode,
    };
    out.validate()?;
    Ok(out)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Integrity(format!("truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact(r, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(mode: LabelMode) -> EncodedMatrix {
        let y = match mode {
            LabelMode::Binary => Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap(),
            LabelMode::Multiclass => {
                let mut y = vec![0.0; 20];
                y[0] = 1.0;
                y[14] = 1.0;
                Tensor::new(vec![2, 10], y).unwrap()
            }
        };
        EncodedMatrix {
            x: Tensor::new(vec![2, 3], vec![0.25, -1.5, 3.0, 0.0, 9.5, -0.125]).unwrap(),
            y,
            feature_names: vec!["dur".into(), "proto=tcp".into(), "rate".into()],
            label_mode: mode,
        }
    }

    #[test]
    fn round_trips_both_modes() {
        for mode in [LabelMode::Binary, LabelMode::Multiclass] {
            let m = sample(mode);
            let mut buf = Vec::new();
            write_emx_to(&mut buf, &m).unwrap();
            let back = read_emx_from(&mut buf.as_slice()).unwrap();
            assert_eq!(m, back);
        }
    }

    #[test]
    fn files_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.emx");
        let m = sample(LabelMode::Binary);
        write_emx(&path, &m).unwrap();
        let back = read_emx(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn identical_input_writes_identical_bytes() {
        let m = sample(LabelMode::Multiclass);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_emx_to(&mut a, &m).unwrap();
        write_emx_to(&mut b, &m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = Vec::new();
        write_emx_to(&mut buf, &sample(LabelMode::Binary)).unwrap();
        buf[0] = b'X';
        let err = read_emx_from(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn future_version_is_rejected_with_both_versions() {
        let mut buf = Vec::new();
        write_emx_to(&mut buf, &sample(LabelMode::Binary)).unwrap();
        buf[4..8].copy_from_slice(&7u32.to_le_bytes());
        match read_emx_from(&mut buf.as_slice()).unwrap_err() {
            Error::Version { found, supported } => {
                assert_eq!(found, 7);
                assert_eq!(supported, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncation_anywhere_is_rejected() {
        let mut buf = Vec::new();
        write_emx_to(&mut buf, &sample(LabelMode::Binary)).unwrap();
        for cut in [2, 8, 12, 20, 30, buf.len() - 3] {
            let err = read_emx_from(&mut buf[..cut].to_vec().as_slice()).unwrap_err();
            assert!(matches!(err, Error::Integrity(_)), "cut at {cut}");
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut buf = Vec::new();
        write_emx_to(&mut buf, &sample(LabelMode::Binary)).unwrap();
        buf.push(0);
        let err = read_emx_from(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("trailing"));
    }
}
