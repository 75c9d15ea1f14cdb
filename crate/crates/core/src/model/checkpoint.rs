use super::config::ModelConfig;
use super::optimizer::AdamState;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RATT";
const VERSION: u16 = 1;

/// Complete training state: parameters, optimizer moments, step counter, and
/// the seed the run was started with. Round-trips bit-exactly through the
/// on-disk format.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset into the payload region, in bytes.
    byte_offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: usize,
    seed: u64,
    manifest: Vec<TensorEntry>,
}

fn collect(params: &ModelParams, prefix: &str, out: &mut Vec<(String, Tensor2D)>) {
    params.visit(|name, t| out.push((format!("{prefix}{name}"), t.clone())));
}

impl Checkpoint {
    /// Layout: magic "RATT", u16 LE version, u64 LE header length, JSON
    /// header (config, step, seed, tensor manifest), then raw little-endian
    /// f64 payloads in manifest order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<(String, Tensor2D)> = Vec::new();
        collect(&self.params, "", &mut tensors);
        collect(&self.adam.m, "adam_m::", &mut tensors);
        collect(&self.adam.v, "adam_v::", &mut tensors);

        let mut manifest = Vec::with_capacity(tensors.len());
        let mut offset = 0u64;
        for (name, t) in &tensors {
            manifest.push(TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
                byte_offset: offset,
            });
            offset += (t.data().len() * 8) as u64;
        }
        let header = Header {
            config: self.params.config.clone(),
            step: self.adam.step,
            seed: self.seed,
            manifest,
        };
        let header_bytes = serde_json::to_vec(&header)?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for (_, t) in &tensors {
            for v in t.data() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut v16 = [0u8; 2];
        f.read_exact(&mut v16)?;
        let version = u16::from_le_bytes(v16);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let mut len8 = [0u8; 8];
        f.read_exact(&mut len8)?;
        let header_len = u64::from_le_bytes(len8) as usize;
        let mut header_bytes = vec![0u8; header_len];
        f.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)?;
        let mut payload = Vec::new();
        f.read_to_end(&mut payload)?;

        let mut tensors: std::collections::HashMap<String, Tensor2D> =
            std::collections::HashMap::new();
        for entry in &header.manifest {
            let count = entry.rows * entry.cols;
            let start = entry.byte_offset as usize;
            let end = start + count * 8;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} extends past end of file",
                    entry.name
                )));
            }
            let data: Vec<f64> = payload[start..end]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.insert(
                entry.name.clone(),
                Tensor2D::from_vec(entry.rows, entry.cols, data)?,
            );
        }

        let mut rng = crate::numerics::Rng::new(0);
        let mut params = ModelParams::init_with_scales(
            &header.config,
            &mut rng,
            super::params::InitScales::for_width(header.config.d_model),
        );
        let fill = |p: &mut ModelParams, prefix: &str| -> Result<()> {
            let mut missing = None;
            p.visit_mut(|name, t| {
                let key = format!("{prefix}{name}");
                match tensors.get(&key) {
                    Some(src) if src.same_shape(t) => *t = src.clone(),
                    _ => missing = Some(key),
                }
            });
            match missing {
                Some(key) => Err(Error::Checkpoint(format!("missing or misshapen tensor {key}"))),
                None => Ok(()),
            }
        };
        fill(&mut params, "")?;
        let mut adam = AdamState::new(&params);
        fill(&mut adam.m, "adam_m::")?;
        fill(&mut adam.v, "adam_v::")?;
        adam.step = header.step;
        Ok(Checkpoint {
            params,
            adam,
            seed: header.seed,
        })
    }
}
