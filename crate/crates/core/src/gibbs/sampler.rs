use std::path::PathBuf;

use super::archive::{fingerprint, ArchiveMeta, ChainArchive, Checkpoint, Draw, ARCHIVE_FORMAT};
use super::data::FitData;
use super::state::ModelState;
use super::updates::Conditionals;
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, PanelDataset, TimeMap};
use crate::random::RngStream;
use crate::spline::SplineBasis;

/// Where and how often to write checkpoints.
#[derive(Debug, Clone)]
pub struct CheckpointPolicy {
    pub path: PathBuf,
    pub every: usize,
}

/// A single Markov chain. Sweep `s` (1-based) draws from stream
/// `split(s)` of the seed, so a chain restarted from a checkpoint continues
/// exactly as an uninterrupted one.
pub struct Sampler<'a> {
    cond: Conditionals<'a>,
    hyper: Hyperparameters,
    fingerprint: String,
    state: ModelState,
    stream: RngStream,
    sweep: usize,
    draws: Vec<Draw>,
}

impl<'a> Sampler<'a> {
    /// Fresh chain from the null state.
    pub fn new(data: &'a FitData, hyper: &Hyperparameters) -> Result<Self> {
        let state = ModelState::initial(hyper.variant, data.n, data.periods, data.q, data.d_z, data.d_x);
        Self::with_state(data, hyper, state)
    }

    /// Fresh chain from a caller-supplied state.
    pub fn with_state(data: &'a FitData, hyper: &Hyperparameters, state: ModelState) -> Result<Self> {
        if hyper.q != data.q {
            return Err(Error::InvalidHyper(format!("q = {} but the design has {} columns", hyper.q, data.q)));
        }
        let priors = hyper.validate_priors(data.d_z, data.d_x)?;
        state.check().map_err(Error::arg)?;
        Ok(Sampler {
            cond: Conditionals::new(data, hyper, &priors)?,
            hyper: hyper.clone(),
            fingerprint: fingerprint(hyper, data)?,
            state,
            stream: RngStream::new(hyper.mcmc.seed),
            sweep: 0,
            draws: Vec::new(),
        })
    }

    /// Continue from a checkpoint written by a chain with the same data and
    /// hyperparameters.
    pub fn resume(data: &'a FitData, hyper: &Hyperparameters, ck: Checkpoint) -> Result<Self> {
        let mut s = Self::with_state(data, hyper, ck.state)?;
        if ck.fingerprint != s.fingerprint {
            return Err(Error::ResumeMismatch("data or hyperparameters differ from the checkpointed run".into()));
        }
        if ck.stream != s.stream {
            return Err(Error::ResumeMismatch("random stream differs from the checkpointed run".into()));
        }
        s.sweep = ck.sweep;
        s.draws = ck.draws;
        Ok(s)
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn conditionals(&self) -> &Conditionals<'a> {
        &self.cond
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Sweeps completed.
    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn is_done(&self) -> bool {
        self.sweep >= self.hyper.mcmc.iterations
    }

    /// Run one sweep, recording a draw if it is retained.
    pub fn step(&mut self) -> Result<()> {
        let s = self.sweep + 1;
        let mut rng = self.stream.split(s as u64).rng();
        self.cond.sweep(&mut self.state, &mut rng).map_err(|e| match e {
            Error::Numeric { what, .. } => Error::Numeric { sweep: s, what },
            other => other,
        })?;
        let clamped = self.cond.take_clamp_count();
        if clamped > 0 {
            log::debug!("sweep {s}: clamped {clamped} linear predictors");
        }
        self.sweep = s;
        if self.hyper.mcmc.keeps(s) {
            let loglik = self.cond.cell_logliks(&self.state)?;
            self.draws.push(Draw::from_state(&self.state, s, loglik));
        }
        Ok(())
    }

    /// Sweep until `target` sweeps are done (capped at the configured
    /// iterations), checkpointing on the way if asked.
    pub fn run_until(&mut self, target: usize, policy: Option<&CheckpointPolicy>) -> Result<()> {
        let target = target.min(self.hyper.mcmc.iterations);
        while self.sweep < target {
            self.step()?;
            if let Some(p) = policy {
                if p.every > 0 && self.sweep.is_multiple_of(p.every) {
                    self.checkpoint().write(&p.path)?;
                }
            }
        }
        Ok(())
    }

    pub fn run(&mut self, policy: Option<&CheckpointPolicy>) -> Result<()> {
        self.run_until(self.hyper.mcmc.iterations, policy)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.fingerprint.clone(), self.sweep, self.stream.clone(), self.state.clone(), self.draws.clone())
    }

    /// Package the retained draws with run metadata. Identifiers default to
    /// `1..=n` and `1..=J` with identity time scaling.
    pub fn into_archive(self) -> ChainArchive {
        let data = self.cond.data();
        let meta = ArchiveMeta {
            format: ARCHIVE_FORMAT,
            variant: self.hyper.variant,
            n: data.n,
            periods: data.periods,
            q: data.q,
            d_z: data.d_z,
            d_x: data.d_x,
            seed: self.hyper.mcmc.seed,
            fingerprint: self.fingerprint,
            hyper: self.hyper,
            participant_ids: (1..=data.n as i64).collect(),
            period_ids: (1..=data.periods as i64).collect(),
            time_map: TimeMap::IDENTITY,
        };
        ChainArchive { meta, draws: self.draws }
    }
}

/// Design for `data` under the spline dimension of `hyper`.
pub fn fit_data(data: &PanelDataset, hyper: &Hyperparameters) -> Result<FitData> {
    hyper.validate(data.d_z, data.d_x)?;
    FitData::from_panel(data, &SplineBasis::new(hyper.q)?)
}

/// Attach dataset identifiers and time scaling to an archive.
pub fn label_archive(mut archive: ChainArchive, data: &PanelDataset) -> ChainArchive {
    archive.meta.participant_ids = data.participant_ids.clone();
    archive.meta.period_ids = data.period_ids.clone();
    archive.meta.time_map = data.time_map;
    archive
}

/// Run a complete chain on validated data.
pub fn run_chain(data: &PanelDataset, hyper: &Hyperparameters) -> Result<ChainArchive> {
    let fit = fit_data(data, hyper)?;
    let mut sampler = Sampler::new(&fit, hyper)?;
    sampler.run(None)?;
    Ok(label_archive(sampler.into_archive(), data))
}
