use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Attention score matrices for T examples, each L layers x H heads of n x n
/// row-stochastic matrices. All examples share one sequence length; mixed
/// lengths are a hard error.
#[derive(Clone, Debug)]
pub struct AttentionCapture {
    layers: usize,
    heads: usize,
    n: usize,
    examples: Vec<Vec<Vec<Tensor2D>>>,
}

impl AttentionCapture {
    pub fn new(layers: usize, heads: usize, n: usize) -> Self {
        AttentionCapture {
            layers,
            heads,
            n,
            examples: Vec::new(),
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.n
    }

    pub fn examples(&self) -> usize {
        self.examples.len()
    }

    pub fn example(&self, t: usize) -> &[Vec<Tensor2D>] {
        &self.examples[t]
    }

    pub fn score(&self, t: usize, l: usize, h: usize) -> &Tensor2D {
        &self.examples[t][l][h]
    }

    pub fn push_example(&mut self, scores: Vec<Vec<Tensor2D>>) -> Result<()> {
        if scores.len() != self.layers {
            return Err(Error::Capture(format!(
                "example has {} layers, capture expects {}",
                scores.len(),
                self.layers
            )));
        }
        for layer in &scores {
            if layer.len() != self.heads {
                return Err(Error::Capture(format!(
                    "layer has {} heads, capture expects {}",
                    layer.len(),
                    self.heads
                )));
            }
            for a in layer {
                if a.rows() != self.n || a.cols() != self.n {
                    return Err(Error::Capture(format!(
                        "score matrix is {}x{}, capture expects {}x{}",
                        a.rows(),
                        a.cols(),
                        self.n,
                        self.n
                    )));
                }
                a.check_row_stochastic(1e-10)?;
            }
        }
        self.examples.push(scores);
        Ok(())
    }

    /// Builds a per-example entry from a forward pass capture; skip layers
    /// (which produce no scores) are rejected because the analysis has no
    /// alignment for them.
    pub fn push_forward_capture(&mut self, capture: Vec<Option<Vec<Tensor2D>>>) -> Result<()> {
        let scores: Option<Vec<Vec<Tensor2D>>> = capture.into_iter().collect();
        match scores {
            Some(s) => self.push_example(s),
            None => Err(Error::Capture(
                "capture contains skip layers with no attention scores".into(),
            )),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CaptureHeader {
    #[serde(rename = "L")]
    layers: usize,
    #[serde(rename = "H")]
    heads: usize,
    n: usize,
    #[serde(rename = "T")]
    examples: usize,
}

/// Dump format: u32 LE header length, JSON header {L, H, n, T}, then
/// T*L*H row-major little-endian f64 n x n blocks in (t, l, h) order.
pub fn write_capture(path: &Path, capture: &AttentionCapture) -> Result<()> {
    let header = CaptureHeader {
        layers: capture.layers,
        heads: capture.heads,
        n: capture.n,
        examples: capture.examples(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    for ex in &capture.examples {
        for layer in ex {
            for a in layer {
                for v in a.data() {
                    f.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_capture(path: &Path) -> Result<AttentionCapture> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut len4 = [0u8; 4];
    f.read_exact(&mut len4)?;
    let header_len = u32::from_le_bytes(len4) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: CaptureHeader = serde_json::from_slice(&header_bytes)?;
    let block = header.n * header.n * 8;
    let mut capture = AttentionCapture::new(header.layers, header.heads, header.n);
    let mut buf = vec![0u8; block];
    for _ in 0..header.examples {
        let mut ex = Vec::with_capacity(header.layers);
        for _ in 0..header.layers {
            let mut layer = Vec::with_capacity(header.heads);
            for _ in 0..header.heads {
                f.read_exact(&mut buf)?;
                let data: Vec<f64> = buf
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                layer.push(Tensor2D::from_vec(header.n, header.n, data)?);
            }
            ex.push(layer);
        }
        capture.push_example(ex)?;
    }
    Ok(capture)
}
