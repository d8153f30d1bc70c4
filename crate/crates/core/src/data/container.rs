//! `OSDS` dataset container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "OSDS"
//! 4       4           version, u32 LE (currently 1)
//! 8       8           n rows, u64 LE
//! 16      8           d_in, u64 LE
//! 24      8           classes, u64 LE (0 = real-valued targets)
//! 32      8·n·d_in    inputs, f64 LE, row-major
//! ..      8·n         targets, f64 LE (class index for classification)
//! ```

use std::fs;
use std::path::Path;

use super::{Dataset, Provenance, Split};
use crate::error::{Error, Result};
use crate::models::Targets;

pub const CONTAINER_MAGIC: &[u8; 4] = b"OSDS";
pub const CONTAINER_VERSION: u32 = 1;

const HEADER_LEN: usize = 32;

pub fn write_container(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (ds.inputs.len() + ds.len()));
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    for dim in [ds.len(), ds.d_in, ds.classes] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for x in &ds.inputs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    match &ds.targets {
        Targets::Classes(ls) => ls
            .iter()
            .for_each(|&l| out.extend_from_slice(&(l as f64).to_le_bytes())),
        Targets::Real(ys) => ys.iter().for_each(|y| out.extend_from_slice(&y.to_le_bytes())),
    }
    fs::write(path, out)?;
    Ok(())
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn read_container(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != CONTAINER_MAGIC {
        return Err(format_err(0, "unexpected magic, expected \"OSDS\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (n, d_in, classes) = (word(8), word(16), word(24));

    let expected = HEADER_LEN + 8 * (n * d_in + n);
    if bytes.len() != expected {
        return Err(format_err(
            bytes.len().min(expected),
            format!("payload is {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let floats: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (inputs, raw_targets) = floats.split_at(n * d_in);
    let targets = if classes == 0 {
        Targets::Real(raw_targets.to_vec())
    } else {
        let mut ls = Vec::with_capacity(n);
        for (i, &t) in raw_targets.iter().enumerate() {
            if t.fract() != 0.0 || t < 0.0 || t as usize >= classes {
                return Err(format_err(
                    HEADER_LEN + 8 * (n * d_in + i),
                    format!("invalid class label {t}"),
                ));
            }
            ls.push(t as usize);
        }
        Targets::Classes(ls)
    };
    let mut ds = Dataset::from_parts(
        inputs.to_vec(),
        d_in,
        targets,
        classes,
        Provenance {
            generator: format!("osds:{}", path.display()),
            seed: None,
            label_noise_rate: 0.0,
        },
    )?;
    ds.split = split;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_linear_regression, gen_two_moons};
    use tempfile::tempdir;

    #[test]
    fn round_trips_both_target_kinds() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.osds");
        for ds in [
            gen_two_moons(31, 0.2, 1).unwrap(),
            gen_linear_regression(17, 3, 0.5, 2).unwrap(),
        ] {
            write_container(&path, &ds).unwrap();
            let back = read_container(&path, Split::Train).unwrap();
            assert_eq!(back.inputs, ds.inputs);
            assert_eq!(back.targets, ds.targets);
            assert_eq!(back.classes, ds.classes);
        }
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.osds");
        write_container(&path, &gen_two_moons(4, 0.0, 1).unwrap()).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(read_container(&path, Split::Train), Err(Error::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad.pop();
        fs::write(&path, &bad).unwrap();
        assert!(read_container(&path, Split::Train).is_err());

        let mut bad = good;
        let last = bad.len() - 8;
        bad[last..].copy_from_slice(&7.0f64.to_le_bytes());
        fs::write(&path, &bad).unwrap();
        assert!(read_container(&path, Split::Train).is_err());
    }
}
