//! Parameter files: a one-line JSON header naming groups and shapes,
//! followed by the concatenated flat little-endian f64 arrays.
//! Format version `nnref/1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lga::LgaParams;
use super::rcm::RcmParams;
use super::{NnError, ParamGroups};

pub const PARAM_FORMAT_VERSION: &str = "nnref/1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: String,
    module: String,
    channels: usize,
    groups: Vec<GroupHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupHeader {
    name: String,
    shape: Vec<usize>,
    /// offset into the blob, in f64 elements
    offset: usize,
    len: usize,
}

fn write_params<P: ParamGroups>(
    path: &Path,
    module: &str,
    channels: usize,
    params: &P,
) -> Result<(), NnError> {
    let shapes = params.group_shapes();
    let groups = params.groups();
    let mut headers = Vec::with_capacity(groups.len());
    let mut offset = 0usize;
    for ((name, data), (shape_name, shape)) in groups.iter().zip(&shapes) {
        debug_assert_eq!(name, shape_name);
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        headers.push(GroupHeader {
            name: (*name).to_string(),
            shape: shape.clone(),
            offset,
            len: data.len(),
        });
        offset += data.len();
    }
    let header = Header {
        version: PARAM_FORMAT_VERSION.to_string(),
        module: module.to_string(),
        channels,
        groups: headers,
    };

    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header).map_err(|e| NnError::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    for (_, data) in &groups {
        for v in *data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_params<P: ParamGroups>(path: &Path, module: &str, make: impl Fn(usize) -> Result<P, NnError>) -> Result<P, NnError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = reader.read(&mut byte)?;
        if n == 0 {
            return Err(NnError::Format("missing header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
    }
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| NnError::Format(e.to_string()))?;
    if header.version != PARAM_FORMAT_VERSION {
        return Err(NnError::Format(format!(
            "unsupported version '{}', expected '{PARAM_FORMAT_VERSION}'",
            header.version
        )));
    }
    if header.module != module {
        return Err(NnError::Format(format!(
            "file holds module '{}', expected '{module}'",
            header.module
        )));
    }

    let mut params = make(header.channels)?;
    let expected = params.group_shapes();
    if header.groups.len() != expected.len() {
        return Err(NnError::Format(format!(
            "expected {} groups, file has {}",
            expected.len(),
            header.groups.len()
        )));
    }

    let mut blob = Vec::new();
    reader.read_to_end(&mut blob)?;
    let total: usize = header.groups.iter().map(|g| g.len).sum();
    if blob.len() != total * 8 {
        return Err(NnError::Format(format!(
            "blob holds {} bytes, header describes {}",
            blob.len(),
            total * 8
        )));
    }

    for ((gh, (name, shape)), (_, slot)) in header
        .groups
        .iter()
        .zip(&expected)
        .zip(params.groups_mut())
    {
        if gh.name != *name || &gh.shape != shape {
            return Err(NnError::Format(format!(
                "group '{}' with shape {:?} does not match expected '{}' {:?}",
                gh.name, gh.shape, name, shape
            )));
        }
        if gh.len != slot.len() {
            return Err(NnError::Format(format!(
                "group '{}' length {} does not match expected {}",
                gh.name,
                gh.len,
                slot.len()
            )));
        }
        for (i, v) in slot.iter_mut().enumerate() {
            let start = (gh.offset + i) * 8;
            let bytes: [u8; 8] = blob[start..start + 8].try_into().expect("8-byte chunk");
            *v = f64::from_le_bytes(bytes);
        }
    }
    Ok(params)
}

pub fn save_lga_params(path: impl AsRef<Path>, params: &LgaParams) -> Result<(), NnError> {
    write_params(path.as_ref(), "lga", params.channels, params)
}

pub fn load_lga_params(path: impl AsRef<Path>) -> Result<LgaParams, NnError> {
    read_params(path.as_ref(), "lga", |c| LgaParams::seeded(c, 0))
}

pub fn save_rcm_params(path: impl AsRef<Path>, params: &RcmParams) -> Result<(), NnError> {
    write_params(path.as_ref(), "rcm", params.channels, params)
}

pub fn load_rcm_params(path: impl AsRef<Path>) -> Result<RcmParams, NnError> {
    read_params(path.as_ref(), "rcm", |c| RcmParams::seeded(c, 0))
}

#[cfg(test)]
mod tests {
    use super::super::tensor::Tensor;
    use super::super::{lga_forward, rcm_forward};
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lga_roundtrip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lga.nnp");
        let params = LgaParams::seeded(4, 42).unwrap();
        save_lga_params(&path, &params).unwrap();
        let loaded = load_lga_params(&path).unwrap();
        for ((na, a), (nb, b)) in params.groups().iter().zip(loaded.groups().iter()) {
            assert_eq!(na, nb);
            assert_eq!(a, b, "group {na} differs");
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::random(4, 5, 5, &mut rng);
        assert_eq!(
            lga_forward(&x, &params).unwrap(),
            lga_forward(&x, &loaded).unwrap()
        );
    }

    #[test]
    fn rcm_roundtrip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rcm.nnp");
        let params = RcmParams::seeded_dense(3, 9).unwrap();
        save_rcm_params(&path, &params).unwrap();
        let loaded = load_rcm_params(&path).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::random(3, 4, 6, &mut rng);
        assert_eq!(
            rcm_forward(&x, &params).unwrap(),
            rcm_forward(&x, &loaded).unwrap()
        );
    }

    #[test]
    fn wrong_module_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.nnp");
        let params = LgaParams::seeded(2, 1).unwrap();
        save_lga_params(&path, &params).unwrap();
        assert!(matches!(load_rcm_params(&path), Err(NnError::Format(_))));
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.nnp");
        let params = LgaParams::seeded(2, 1).unwrap();
        save_lga_params(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_lga_params(&path), Err(NnError::Format(_))));
    }
}
