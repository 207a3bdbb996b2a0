//! Reading and writing tensor files and containers.

use std::fs;
use std::path::{Path, PathBuf};

use mvq::codec::{deserialize, CompressedLayer};
use mvq::io::{decode_blob, encode_blob, parse_manifest, render_manifest, TensorManifest};
use mvq::tensor::WeightTensor;

use crate::fail::{Failure, Outcome};

pub struct NamedTensor {
    pub name: String,
    pub tensor: WeightTensor,
}

pub fn read_text(path: &Path, as_config: bool) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        if as_config {
            Failure::Config(msg)
        } else {
            Failure::Data(msg)
        }
    })
}

fn blob_path(manifest: &Path, m: &TensorManifest) -> PathBuf {
    match &m.data {
        Some(rel) => manifest.parent().unwrap_or(Path::new(".")).join(rel),
        None => manifest.with_extension("bin"),
    }
}

pub fn read_tensor(manifest: &Path) -> Outcome<NamedTensor> {
    let ctx = manifest.display().to_string();
    let m = parse_manifest(&read_text(manifest, false)?)
        .map_err(|e| Failure::Data(e.to_string()).context(&ctx))?;
    let blob = blob_path(manifest, &m);
    let bytes = fs::read(&blob).map_err(|e| Failure::Data(format!("{}: {e}", blob.display())))?;
    let tensor = decode_blob(&bytes, m.shape).map_err(|e| Failure::Data(e.to_string()).context(&ctx))?;
    Ok(NamedTensor { name: m.name, tensor })
}

/// Writes `<dir>/<stem>.txt` and `<dir>/<stem>.bin`.
pub fn write_tensor(dir: &Path, stem: &str, name: &str, t: &WeightTensor) -> Outcome<PathBuf> {
    let manifest = TensorManifest {
        name: name.to_string(),
        shape: t.shape(),
        data: Some(format!("{stem}.bin")),
    };
    let path = dir.join(format!("{stem}.txt"));
    write_bytes(&dir.join(format!("{stem}.bin")), &encode_blob(t))?;
    write_bytes(&path, render_manifest(&manifest).as_bytes())?;
    Ok(path)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn read_container(path: &Path) -> Outcome<Vec<CompressedLayer>> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    deserialize(&bytes).map_err(|e| Failure::Data(e.to_string()).context(path.display()))
}
