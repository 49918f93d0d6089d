//! Binary checkpoint containers. Layout: 8-byte magic, u32 format version,
//! length-prefixed JSON metadata, then length-prefixed f64 blobs in little
//! endian. Values round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Linear, Net, NetSpec};
use crate::objective::{ObjectiveNetwork, TuningMode};
use crate::mixer::MixerHeads;
use crate::prompt::{InitSpec, PaddingPrompt};
use crate::tensor::{Image, Shape3};

const FORMAT_VERSION: u32 = 1;
const PROMPT_MAGIC: &[u8; 8] = b"A2XPPRMT";
const OBJECTIVE_MAGIC: &[u8; 8] = b"A2XPOBJN";
const HEADS_MAGIC: &[u8; 8] = b"A2XPHEAD";

fn write_container<M: Serialize>(
    path: &Path,
    magic: &[u8; 8],
    meta: &M,
    blobs: &[&[f64]],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(magic).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    let meta_bytes = serde_json::to_vec(meta).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: format!("metadata encode: {e}"),
    })?;
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&meta_bytes).map_err(io)?;
    w.write_all(&(blobs.len() as u64).to_le_bytes()).map_err(io)?;
    for blob in blobs {
        w.write_all(&(blob.len() as u64).to_le_bytes()).map_err(io)?;
        for v in *blob {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn read_container<M: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(M, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut got_magic = [0u8; 8];
    r.read_exact(&mut got_magic).map_err(|e| Error::io(path, e))?;
    if &got_magic != magic {
        return Err(bad(format!(
            "wrong magic {:?}, expected {:?}",
            got_magic, magic
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let meta_len = u64::from_le_bytes(u64buf) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes).map_err(|e| Error::io(path, e))?;
    let meta: M = serde_json::from_slice(&meta_bytes)
        .map_err(|e| bad(format!("metadata decode: {e}")))?;
    r.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let n_blobs = u64::from_le_bytes(u64buf) as usize;
    let mut blobs = Vec::with_capacity(n_blobs);
    for _ in 0..n_blobs {
        r.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
        let len = u64::from_le_bytes(u64buf) as usize;
        let mut blob = Vec::with_capacity(len);
        let mut f64buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut f64buf).map_err(|e| Error::io(path, e))?;
            blob.push(f64::from_le_bytes(f64buf));
        }
        blobs.push(blob);
    }
    Ok((meta, blobs))
}

/// Metadata stored with a prompt checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PromptMeta {
    pub border_width: usize,
    pub shape: Shape3,
    pub init_strategy: InitSpec,
    pub domain_name: String,
    pub seed: u64,
    pub update_count: usize,
}

pub fn save_prompt(path: &Path, prompt: &PaddingPrompt, meta: &PromptMeta) -> Result<()> {
    write_container(path, PROMPT_MAGIC, meta, &[prompt.values().data()])
}

pub fn load_prompt(path: &Path) -> Result<(PaddingPrompt, PromptMeta)> {
    let (meta, blobs): (PromptMeta, _) = read_container(path, PROMPT_MAGIC)?;
    if blobs.len() != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("expected 1 blob, found {}", blobs.len()),
        });
    }
    let values = Image::from_vec(meta.shape, blobs.into_iter().next().unwrap())?;
    let prompt = PaddingPrompt::from_values(values, meta.border_width)?;
    Ok((prompt, meta))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectiveMeta {
    features: NetSpec,
    classifier_in: usize,
    classifier_out: usize,
    num_classes: usize,
    tuning_mode: TuningMode,
}

pub fn save_objective(path: &Path, net: &ObjectiveNetwork) -> Result<()> {
    let meta = ObjectiveMeta {
        features: net.features.spec(),
        classifier_in: net.classifier.in_dim,
        classifier_out: net.classifier.out_dim,
        num_classes: net.num_classes,
        tuning_mode: net.tuning_mode,
    };
    let mut blobs: Vec<&[f64]> = net
        .features
        .param_vecs()
        .into_iter()
        .map(|v| v.as_slice())
        .collect();
    blobs.push(&net.classifier.w);
    blobs.push(&net.classifier.b);
    write_container(path, OBJECTIVE_MAGIC, &meta, &blobs)
}

fn fill_net_params(path: &Path, net: &mut Net, blobs: &[Vec<f64>]) -> Result<()> {
    let params = net.param_vecs_mut();
    if params.len() > blobs.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("expected >= {} blobs, found {}", params.len(), blobs.len()),
        });
    }
    for (p, blob) in params.into_iter().zip(blobs) {
        if p.len() != blob.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("blob length {} does not match {}", blob.len(), p.len()),
            });
        }
        p.copy_from_slice(blob);
    }
    Ok(())
}

pub fn load_objective(path: &Path) -> Result<ObjectiveNetwork> {
    let (meta, blobs): (ObjectiveMeta, _) = read_container(path, OBJECTIVE_MAGIC)?;
    let mut features = Net::from_spec(&meta.features);
    let n_feat_params = features.param_vecs().len();
    if blobs.len() != n_feat_params + 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!(
                "expected {} blobs, found {}",
                n_feat_params + 2,
                blobs.len()
            ),
        });
    }
    fill_net_params(path, &mut features, &blobs[..n_feat_params])?;
    let mut classifier = Linear {
        w: blobs[n_feat_params].clone(),
        b: blobs[n_feat_params + 1].clone(),
        in_dim: meta.classifier_in,
        out_dim: meta.classifier_out,
    };
    if classifier.w.len() != classifier.in_dim * classifier.out_dim {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: "classifier weight blob has wrong length".into(),
        });
    }
    if classifier.b.len() != classifier.out_dim {
        classifier.b.resize(classifier.out_dim, 0.0);
    }
    Ok(ObjectiveNetwork {
        features,
        classifier,
        tuning_mode: meta.tuning_mode,
        num_classes: meta.num_classes,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeadsMeta {
    shared: NetSpec,
    embed_dim: usize,
    feat_dim: usize,
}

pub fn save_heads(path: &Path, heads: &MixerHeads) -> Result<()> {
    let meta = HeadsMeta {
        shared: heads.shared.spec(),
        embed_dim: heads.embed_dim(),
        feat_dim: heads.shared.out_dim(),
    };
    let mut blobs: Vec<&[f64]> = heads
        .shared
        .param_vecs()
        .into_iter()
        .map(|v| v.as_slice())
        .collect();
    blobs.push(&heads.head_t.w);
    blobs.push(&heads.head_t.b);
    blobs.push(&heads.head_e.w);
    blobs.push(&heads.head_e.b);
    write_container(path, HEADS_MAGIC, &meta, &blobs)
}

pub fn load_heads(path: &Path) -> Result<MixerHeads> {
    let (meta, blobs): (HeadsMeta, _) = read_container(path, HEADS_MAGIC)?;
    let mut shared = Net::from_spec(&meta.shared);
    let n_shared = shared.param_vecs().len();
    if blobs.len() != n_shared + 4 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("expected {} blobs, found {}", n_shared + 4, blobs.len()),
        });
    }
    fill_net_params(path, &mut shared, &blobs[..n_shared])?;
    let mut heads = MixerHeads::with_embed_dim(shared, meta.embed_dim, 0);
    heads.head_t.w.copy_from_slice(&blobs[n_shared]);
    heads.head_t.b.copy_from_slice(&blobs[n_shared + 1]);
    heads.head_e.w.copy_from_slice(&blobs[n_shared + 2]);
    heads.head_e.b.copy_from_slice(&blobs[n_shared + 3]);
    Ok(heads)
}

/// Sha256 of a file's bytes, hex encoded; used in run manifests.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{init_prompt, InitStrategy};

    #[test]
    fn prompt_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.a2xp");
        let prompt = init_prompt(
            Shape3::new(3, 16, 16),
            3,
            &InitStrategy::Normal { scale: 0.31 },
            99,
        )
        .unwrap();
        let meta = PromptMeta {
            border_width: 3,
            shape: prompt.shape(),
            init_strategy: InitSpec {
                kind: "normal".into(),
                scale: Some(0.31),
            },
            domain_name: "art".into(),
            seed: 99,
            update_count: 1000,
        };
        save_prompt(&path, &prompt, &meta).unwrap();
        let (loaded, lm) = load_prompt(&path).unwrap();
        assert_eq!(loaded.values().data(), prompt.values().data());
        assert_eq!(lm, meta);
        // Bitwise, not approximate.
        for (a, b) in loaded
            .values()
            .data()
            .iter()
            .zip(prompt.values().data())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn objective_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.a2xp");
        let shape = Shape3::new(3, 16, 16);
        let net = ObjectiveNetwork::new(Net::small_cnn(shape, 12, 5), 4, TuningMode::LinearProbe, 6);
        save_objective(&path, &net).unwrap();
        let loaded = load_objective(&path).unwrap();
        assert_eq!(loaded.param_hash(), net.param_hash());
        assert_eq!(loaded.tuning_mode, TuningMode::LinearProbe);
        let x = Image::zeros(shape);
        assert_eq!(loaded.predict(&[x.clone()]).unwrap(), net.predict(&[x]).unwrap());
    }

    #[test]
    fn heads_round_trip_preserves_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heads.a2xp");
        let shape = Shape3::new(3, 16, 16);
        let heads = MixerHeads::with_embed_dim(Net::small_cnn(shape, 12, 7), 32, 8);
        save_heads(&path, &heads).unwrap();
        let loaded = load_heads(&path).unwrap();
        assert_eq!(loaded.param_hash(), heads.param_hash());
        assert_eq!(loaded.embed_dim(), 32);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.a2xp");
        let prompt = init_prompt(Shape3::new(1, 8, 8), 1, &InitStrategy::Zero, 0).unwrap();
        let meta = PromptMeta {
            border_width: 1,
            shape: prompt.shape(),
            init_strategy: InitSpec {
                kind: "zero".into(),
                scale: None,
            },
            domain_name: "d".into(),
            seed: 0,
            update_count: 0,
        };
        save_prompt(&path, &prompt, &meta).unwrap();
        assert!(matches!(
            load_heads(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load_prompt(Path::new("/nonexistent/x.a2xp")),
            Err(Error::Io { .. })
        ));
    }
}
