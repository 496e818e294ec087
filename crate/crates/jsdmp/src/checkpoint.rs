//! Binary model checkpoints with a human-readable sidecar manifest.
//!
//! Layout: 4-byte magic, format version (u32 LE), a length-prefixed JSON
//! metadata block, the parameter count, then one block per parameter
//! holding its name, shape and raw little-endian f64 data. The sidecar
//! `<path>.manifest` lists `name<TAB>rows<TAB>cols` per parameter.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SplitSource;
use crate::error::{Error, Result};
use crate::layers::DivergenceMode;
use crate::matrix::Matrix;
use crate::models::{Ablation, DmpGcnModel, DmpPrgModel, Model};
use crate::rng::{seeded_rng, Domain};

const MAGIC: &[u8; 4] = b"JDMP";
const FORMAT_VERSION: u32 = 1;

/// Run provenance stored next to the weights, enough to rebuild the model
/// and replay its data splits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: String,
    pub ablation: String,
    pub divergence_mode: String,
    pub nodes: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub k_steps: usize,
    pub seed: u64,
    pub dataset: String,
    pub split: SplitSource,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Writes `model` and its provenance to `path`, plus `<path>.manifest`.
pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    seed: u64,
    dataset: &str,
    split: SplitSource,
) -> Result<()> {
    let meta = CheckpointMeta {
        model: model.kind().into(),
        ablation: model.ablation().as_str().into(),
        divergence_mode: model.divergence_mode().as_str().into(),
        nodes: model.num_nodes(),
        input_dim: model.input_dim(),
        hidden_dim: model.hidden_dim(),
        num_classes: model.num_classes(),
        k_steps: model.k_steps(),
        seed,
        dataset: dataset.into(),
        split,
    };
    let meta_json = serde_json::to_vec(&meta).expect("meta serializes");
    let params = model.params();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, m) in &params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;

    let manifest_path = sidecar_path(path);
    let mut manifest = fs::File::create(manifest_path)?;
    for (name, m) in &params {
        writeln!(manifest, "{name}\t{}\t{}", m.rows(), m.cols())?;
    }
    Ok(())
}

/// The manifest file written next to a checkpoint.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    std::path::PathBuf::from(s)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Reads a checkpoint back into a model and its metadata.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let buf = fs::read(path)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    if cur.take(4, "magic")? != MAGIC {
        return Err(corrupt("bad magic, not a model checkpoint"));
    }
    let version = cur.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let meta_len = cur.u32("metadata length")? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(cur.take(meta_len, "metadata")?)
        .map_err(|e| corrupt(format!("bad metadata block: {e}")))?;

    let divergence_mode = DivergenceMode::parse(&meta.divergence_mode)?;
    let ablation = Ablation::parse(&meta.ablation)?;
    let mut init_rng = seeded_rng(meta.seed, Domain::ModelInit);
    let mut model = match meta.model.as_str() {
        "dmpgcn" => Model::DmpGcn(DmpGcnModel::new(
            meta.nodes,
            meta.input_dim,
            meta.hidden_dim,
            meta.num_classes,
            ablation,
            divergence_mode,
            &mut init_rng,
        )?),
        "dmpprg" => Model::DmpPrg(DmpPrgModel::new(
            meta.nodes,
            meta.input_dim,
            meta.hidden_dim,
            meta.num_classes,
            meta.k_steps,
            ablation,
            divergence_mode,
            &mut init_rng,
        )?),
        other => return Err(corrupt(format!("unknown model kind {other:?}"))),
    };

    let stored = cur.u32("parameter count")? as usize;
    let expected = model.params().len();
    if stored != expected {
        return Err(corrupt(format!(
            "checkpoint holds {stored} parameters, the {} model has {expected}",
            meta.model
        )));
    }
    for (want_name, param) in model.params_mut() {
        let name_len = cur.u32("parameter name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "parameter name")?)
            .map_err(|_| corrupt("parameter name is not UTF-8"))?;
        if name != want_name {
            return Err(corrupt(format!(
                "parameter {name:?} out of order, expected {want_name:?}"
            )));
        }
        let rows = cur.u64("rows")? as usize;
        let cols = cur.u64("cols")? as usize;
        if rows != param.rows() || cols != param.cols() {
            return Err(corrupt(format!(
                "parameter {name} has shape {rows}x{cols}, model expects {}x{}",
                param.rows(),
                param.cols()
            )));
        }
        let raw = cur.take(rows * cols * 8, "parameter data")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *param = Matrix::new(rows, cols, data)?;
    }
    if cur.pos != buf.len() {
        return Err(corrupt(format!(
            "{} trailing bytes after the last parameter",
            buf.len() - cur.pos
        )));
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SplitPolicy, TrainBudget};

    fn sample_model(kind: &str) -> Model {
        let mut rng = seeded_rng(11, Domain::ModelInit);
        match kind {
            "dmpgcn" => Model::DmpGcn(
                DmpGcnModel::new(
                    9,
                    6,
                    5,
                    3,
                    Ablation::Full,
                    DivergenceMode::Normalized,
                    &mut rng,
                )
                .unwrap(),
            ),
            _ => Model::DmpPrg(
                DmpPrgModel::new(
                    9,
                    6,
                    5,
                    3,
                    4,
                    Ablation::StructureOnly,
                    DivergenceMode::Literal,
                    &mut rng,
                )
                .unwrap(),
            ),
        }
    }

    fn policy() -> SplitSource {
        SplitSource::Policy(SplitPolicy::Planetoid {
            train: TrainBudget::PerClass(2),
            val: 2,
            test: 1,
        })
    }

    #[test]
    fn save_then_load_round_trips_both_architectures() {
        for kind in ["dmpgcn", "dmpprg"] {
            let model = sample_model(kind);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.ckpt");
            save_checkpoint(&path, &model, 42, "toy", policy()).unwrap();
            let (back, meta) = load_checkpoint(&path).unwrap();

            assert_eq!(meta.model, kind);
            assert_eq!(meta.seed, 42);
            assert_eq!(meta.dataset, "toy");
            assert_eq!(meta.split, policy());
            assert_eq!(back.kind(), model.kind());
            assert_eq!(back.ablation(), model.ablation());
            assert_eq!(back.divergence_mode(), model.divergence_mode());
            for ((an, am), (bn, bm)) in model.params().iter().zip(back.params().iter()) {
                assert_eq!(an, bn);
                assert_eq!(am, bm, "parameter {an} changed in transit");
            }
        }
    }

    #[test]
    fn sidecar_manifest_lists_every_parameter() {
        let model = sample_model("dmpprg");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 0, "toy", policy()).unwrap();
        let manifest = fs::read_to_string(sidecar_path(&path)).unwrap();
        let lines: Vec<&str> = manifest.lines().collect();
        assert_eq!(lines.len(), model.params().len());
        assert!(lines[0].starts_with("mlp.w1\t"));
        for ((name, m), line) in model.params().iter().zip(&lines) {
            assert_eq!(*line, format!("{name}\t{}\t{}", m.rows(), m.cols()));
        }
    }

    #[test]
    fn corrupted_magic_is_a_clean_error() {
        let model = sample_model("dmpgcn");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 0, "toy", policy()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path).unwrap_err() {
            Error::Checkpoint(msg) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_clean_error() {
        let model = sample_model("dmpgcn");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 0, "toy", policy()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_checkpoint(&path).unwrap_err() {
            Error::Checkpoint(msg) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn shape_tampering_names_the_offending_parameter() {
        let model = sample_model("dmpgcn");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 0, "toy", policy()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let needle = b"layer0.w_f";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .unwrap();
        let rows_at = at + needle.len();
        let mut rows = u64::from_le_bytes(bytes[rows_at..rows_at + 8].try_into().unwrap());
        rows += 1;
        bytes[rows_at..rows_at + 8].copy_from_slice(&rows.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path).unwrap_err() {
            Error::Checkpoint(msg) => assert!(msg.contains("layer0.w_f"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let model = sample_model("dmpgcn");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 0, "toy", policy()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path).unwrap_err() {
            Error::Checkpoint(msg) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }
}
