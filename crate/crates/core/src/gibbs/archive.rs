use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::FitData;
use super::state::ModelState;
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, TimeMap, Variant};
use crate::partition::Partition;
use crate::random::RngStream;

pub const ARCHIVE_FORMAT: u32 = 1;
const CHECKPOINT_MAGIC: &str = "htrpm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hash of everything that determines a chain: hyperparameters and data.
pub fn fingerprint(hyper: &Hyperparameters, data: &FitData) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(hyper)?);
    h.update(serde_json::to_vec(data)?);
    Ok(hex::encode(h.finalize()))
}

/// Run-level metadata stored in the first line of an archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub format: u32,
    pub variant: Variant,
    pub n: usize,
    pub periods: usize,
    pub q: usize,
    pub d_z: usize,
    pub d_x: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub hyper: Hyperparameters,
    pub participant_ids: Vec<i64>,
    pub period_ids: Vec<i64>,
    pub time_map: TimeMap,
}

/// One retained draw. Cluster labels are canonical (first appearance over
/// periods, then participants) and index `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    /// Period-major canonical dish labels.
    pub labels: Vec<u32>,
    /// Period-major fixed flags.
    pub gamma: Vec<bool>,
    pub beta: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub n_dishes: usize,
    /// Period-major per-cell log-likelihoods.
    pub loglik: Vec<f64>,
}

impl Draw {
    pub fn from_state(state: &ModelState, iteration: usize, loglik: Vec<f64>) -> Self {
        let part = &state.partition;
        let labels = part.canonical_labels();
        let mut beta: Vec<Vec<f64>> = vec![Vec::new(); part.n_dishes()];
        for (&c, &d) in labels.iter().zip(part.labels()) {
            if beta[c as usize].is_empty() {
                beta[c as usize] = state.dish(d).beta.clone();
            }
        }
        Draw {
            iteration,
            labels,
            gamma: part.gammas().to_vec(),
            beta,
            theta: state.theta.clone(),
            eta: state.eta.clone(),
            n_dishes: part.n_dishes(),
            loglik,
        }
    }

    /// Partition of period `j` among `n` participants.
    pub fn period_partition(&self, n: usize, j: usize) -> Partition {
        Partition::from_labels(&self.labels[j * n..(j + 1) * n])
    }

    #[inline]
    pub fn label(&self, n: usize, i: usize, j: usize) -> u32 {
        self.labels[j * n + i]
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainArchive {
    pub meta: ArchiveMeta,
    pub draws: Vec<Draw>,
}

impl ChainArchive {
    /// Gzip-compressed JSON lines: metadata, then one draw per line.
    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut gz = GzEncoder::new(BufWriter::new(writer), Compression::default());
        serde_json::to_writer(&mut gz, &self.meta)?;
        gz.write_all(b"\n")?;
        for d in &self.draws {
            serde_json::to_writer(&mut gz, d)?;
            gz.write_all(b"\n")?;
        }
        gz.finish()?.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(GzDecoder::new(reader)).lines();
        let first = lines.next().ok_or_else(|| Error::Serde("empty archive".into()))??;
        let meta: ArchiveMeta = serde_json::from_str(&first)?;
        if meta.format != ARCHIVE_FORMAT {
            return Err(Error::Serde(format!("unsupported archive format {}", meta.format)));
        }
        let mut draws = Vec::new();
        for line in lines {
            let line = line?;
            if !line.is_empty() {
                draws.push(serde_json::from_str(&line)?);
            }
        }
        Ok(ChainArchive { meta, draws })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomically(path, |f| self.write_to(f))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub fingerprint: String,
    /// Sweeps completed so far.
    pub sweep: usize,
    pub stream: RngStream,
    pub state: ModelState,
    pub draws: Vec<Draw>,
}

impl Checkpoint {
    pub fn new(fingerprint: String, sweep: usize, stream: RngStream, state: ModelState, draws: Vec<Draw>) -> Self {
        Checkpoint { magic: CHECKPOINT_MAGIC.into(), version: CHECKPOINT_VERSION, fingerprint, sweep, stream, state, draws }
    }

    /// CBOR encoding.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomically(path, |f| {
            let mut w = BufWriter::new(f);
            ciborium::into_writer(self, &mut w).map_err(|e| Error::Serde(e.to_string()))?;
            w.flush()?;
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let ck: Checkpoint =
            ciborium::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Serde(e.to_string()))?;
        if ck.magic != CHECKPOINT_MAGIC {
            return Err(Error::Serde(format!("{} is not a checkpoint", path.display())));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }
}

/// Write through a sibling temporary file and rename into place.
fn write_atomically(path: &Path, body: impl FnOnce(File) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    body(File::create(&tmp)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
