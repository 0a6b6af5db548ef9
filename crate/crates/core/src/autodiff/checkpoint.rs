//! Checkpoint files: a versioned JSON map from parameter path to shape and
//! flat value array.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::optim::ParamStore;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    params: BTreeMap<String, Tensor>,
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let params: BTreeMap<String, Tensor> =
        store.iter().map(|(k, p)| (k.to_string(), p.value.clone())).collect();
    let file = CheckpointFile { version: CHECKPOINT_VERSION, params };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &file)?;
    Ok(())
}

/// Load parameter values into a store whose parameters are already
/// registered (shapes are checked).
pub fn load(store: &mut ParamStore, path: &Path) -> Result<()> {
    let r = BufReader::new(File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(r)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {})",
            file.version, CHECKPOINT_VERSION
        )));
    }
    for (k, t) in file.params {
        store.set_value(&k, t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("vrd-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.json");

        let mut a = ParamStore::new();
        a.register("net.w", Tensor { shape: vec![2, 2], data: vec![1.0, 2.0, 3.0, 4.0] });
        a.register("net.b", Tensor::vector(vec![-0.5, 0.5]));
        save(&a, &path).unwrap();

        let mut b = ParamStore::new();
        b.register("net.w", Tensor::zeros(vec![2, 2]));
        b.register("net.b", Tensor::zeros(vec![2]));
        load(&mut b, &path).unwrap();
        assert_eq!(b.get("net.w").unwrap().value.data, vec![1.0, 2.0, 3.0, 4.0]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = std::env::temp_dir().join(format!("vrd-ckpt2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.json");
        let mut a = ParamStore::new();
        a.register("w", Tensor::vector(vec![1.0, 2.0]));
        save(&a, &path).unwrap();
        let mut b = ParamStore::new();
        b.register("w", Tensor::zeros(vec![3]));
        assert!(load(&mut b, &path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
