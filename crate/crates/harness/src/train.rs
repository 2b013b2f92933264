//! Training loop: `L_total = L_main + weight · L_reg`, AdamW under a
//! warmup-cosine schedule, hard-quantization evaluation after every epoch.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simplexvq::grad::AdamW;
use simplexvq::{Tape, Tensor};

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, Task, TemperatureMode};
use crate::data::{gen_clusters, gen_sequences, ClusterData, SequenceData};
use crate::eval::{evaluate, EvalData, EvalMetrics};
use crate::model::Model;
use crate::runlog::{EpochRecord, RunFiles, StepRecord, TimingRecord, CHECKPOINT_FILE, CONFIG_FILE};
use crate::schedule::WarmupCosine;
use crate::tasks::{ae_step, contrastive_step};
use crate::Result;

/// Independent random streams derived from the run seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
enum Stream {
    Data = 1,
    Init = 2,
    Train = 3,
}

/// Seed of the fixed evaluation noise and masks.
pub fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_e7a1
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Clusters(ClusterData),
    Sequences(SequenceData),
}

impl Dataset {
    pub fn generate(cfg: &RunConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let d = &cfg.data;
        Ok(match cfg.task {
            Task::Ae => Self::Clusters(gen_clusters(n, d.dim, d.clusters, d.noise, rng)?),
            Task::Contrastive => Self::Sequences(gen_sequences(
                n,
                cfg.contrastive.seq_len,
                d.dim,
                d.clusters,
                cfg.contrastive.stay_prob,
                d.noise,
                rng,
            )?),
        })
    }

    /// Items (AE) or sequences (contrastive).
    pub fn len(&self) -> usize {
        match self {
            Self::Clusters(d) => d.items.rows(),
            Self::Sequences(d) => d.n_seq,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_eval(&self) -> EvalData<'_> {
        match self {
            Self::Clusters(d) => EvalData::Clusters(d),
            Self::Sequences(d) => EvalData::Sequences(d),
        }
    }

    fn batch(&self, ids: &[usize]) -> Tensor {
        match self {
            Self::Clusters(d) => {
                let rows: Vec<Vec<f64>> = ids.iter().map(|&i| d.items.row(i).to_vec()).collect();
                Tensor::from_rows(&rows).expect("equal row widths")
            }
            Self::Sequences(d) => d.batch(ids),
        }
    }
}

/// Train and eval data of a run, regenerated from the config and seed.
pub fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    // Cluster centers must agree, so both sets come from one generator call.
    let (n, m) = (cfg.data.items, cfg.data.eval_items);
    let mut rng = stream(cfg.seed, Stream::Data);
    let all = Dataset::generate(cfg, n + m, &mut rng)?;
    Ok(match all {
        Dataset::Clusters(d) => {
            let cols = d.items.cols();
            let split = |range: std::ops::Range<usize>| ClusterData {
                items: Tensor::matrix(range.len(), cols, d.items.data()[range.start * cols..range.end * cols].to_vec()),
                labels: d.labels[range.clone()].to_vec(),
                centers: d.centers.clone(),
            };
            (Dataset::Clusters(split(0..n)), Dataset::Clusters(split(n..n + m)))
        }
        Dataset::Sequences(d) => {
            let cols = d.frames.cols();
            let t = d.seq_len;
            let split = |range: std::ops::Range<usize>| SequenceData {
                frames: Tensor::matrix(
                    range.len() * t,
                    cols,
                    d.frames.data()[range.start * t * cols..range.end * t * cols].to_vec(),
                ),
                states: d.states[range.start * t..range.end * t].to_vec(),
                n_seq: range.len(),
                seq_len: t,
                centers: d.centers.clone(),
            };
            (Dataset::Sequences(split(0..n)), Dataset::Sequences(split(n..n + m)))
        }
    })
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub model: Model,
    pub train_data: Dataset,
    pub eval_data: Dataset,
    optimizer: AdamW,
    rng: ChaCha8Rng,
    schedule: WarmupCosine,
    steps_per_epoch: usize,
    step: usize,
    epoch: usize,
    config_hash: String,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (train_data, eval_data) = datasets(&cfg)?;
        let model = Model::init(&cfg, &mut stream(cfg.seed, Stream::Init))?;
        let optimizer = AdamW::new(cfg.adam(), model.flat_params().iter());
        let steps_per_epoch = train_data.len() / cfg.batch_size;
        let schedule = WarmupCosine {
            peak: cfg.optimizer.peak_lr,
            final_lr: cfg.final_lr(),
            warmup: cfg.optimizer.warmup_steps,
            total: steps_per_epoch * cfg.epochs,
        };
        Ok(Self {
            rng: stream(cfg.seed, Stream::Train),
            config_hash: cfg.hash(),
            cfg,
            model,
            train_data,
            eval_data,
            optimizer,
            schedule,
            steps_per_epoch,
            step: 0,
            epoch: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn schedule(&self) -> &WarmupCosine {
        &self.schedule
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn evaluate(&self) -> Result<EvalMetrics> {
        evaluate(&self.model, &self.cfg, self.eval_data.as_eval(), eval_seed(self.cfg.seed))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, &self.cfg, self.epoch, self.step)
    }

    /// One optimizer step on a batch of item (or sequence) ids.
    pub fn train_step(&mut self, ids: &[usize]) -> Result<StepRecord> {
        self.step += 1;
        let lr = self.schedule.lr(self.step);
        let annealed = self.cfg.temperature.mode == TemperatureMode::Annealed;
        if annealed {
            let frac = (self.step - 1) as f64 / (self.schedule.total.max(2) - 1) as f64;
            self.model.set_temperature(self.cfg.temperature.at(frac))?;
        }
        let batch = self.train_data.batch(ids);
        let tape = Tape::new();
        let vars = self.model.on_tape(&tape, true);
        let losses = match self.cfg.task {
            Task::Ae => ae_step(&tape, &self.model, &vars, &batch, &self.cfg, &mut self.rng)?.0,
            Task::Contrastive => contrastive_step(&tape, &self.model, &vars, &batch, &self.cfg, &mut self.rng)?.0,
        };
        let mut record = StepRecord {
            step: self.step,
            epoch: self.epoch + 1,
            lr,
            main: losses.main.item(),
            reg: losses.reg.item(),
            total: losses.total.item(),
            aborted: false,
        };
        if !record.total.is_finite() {
            log::warn!("step {}: non-finite loss {}, update skipped", self.step, record.total);
            record.aborted = true;
            return Ok(record);
        }
        let grads = tape.backward(losses.total)?;
        let grads: Vec<Tensor> = vars.all().into_iter().map(|v| grads.get(v)).collect();
        let mut params = self.model.flat_params();
        let frozen = if annealed {
            self.model.temperature_mask()
        } else {
            vec![false; params.len()]
        };
        let report = self.optimizer.step(lr, &mut params, &grads, &frozen);
        if !report.skipped.is_empty() {
            log::warn!("step {}: non-finite gradient for parameters {:?}", self.step, report.skipped);
            record.aborted = true;
        }
        self.model.set_flat_params(params)?;
        Ok(record)
    }

    /// One pass over the shuffled training set followed by evaluation.
    pub fn run_epoch(&mut self, mut on_step: impl FnMut(&StepRecord) -> Result<()>) -> Result<EpochRecord> {
        let mut order: Vec<usize> = (0..self.train_data.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut main, mut reg, mut total, mut done, mut aborted) = (0.0, 0.0, 0.0, 0usize, 0usize);
        let mut lr = 0.0;
        for ids in order.chunks_exact(self.cfg.batch_size).take(self.steps_per_epoch) {
            let r = self.train_step(ids)?;
            on_step(&r)?;
            lr = r.lr;
            if r.aborted {
                aborted += 1;
            } else {
                main += r.main;
                reg += r.reg;
                total += r.total;
                done += 1;
            }
        }
        self.epoch += 1;
        let n = done.max(1) as f64;
        let m = self.evaluate()?;
        Ok(EpochRecord {
            epoch: self.epoch,
            steps: done + aborted,
            aborted_steps: aborted,
            lr,
            main_loss: main / n,
            reg_loss: reg / n,
            reg_weight: self.cfg.regularizer.weight,
            total_loss: total / n,
            temperature: self.model.codebooks.groups().iter().map(|g| g.temperature()).collect(),
            usage: m.usage,
            onehotness: m.onehotness,
            mean_perplexity: m.mean_perplexity,
            hard_rmse: m.hard_rmse,
            soft_rmse: m.soft_rmse,
            accuracy: m.accuracy,
            config_hash: self.config_hash.clone(),
        })
    }
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub model: Model,
    pub checkpoint: Checkpoint,
}

/// Runs every epoch. With `out` set, writes the config, JSONL logs and the
/// final checkpoint there.
pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut files = out.map(RunFiles::create).transpose()?;
    if let Some(f) = &files {
        std::fs::write(f.dir().join(CONFIG_FILE), cfg.to_toml())?;
    }
    let mut records = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let start = Instant::now();
        let record = trainer.run_epoch(|s| match files.as_mut() {
            Some(f) => f.step(s),
            None => Ok(()),
        })?;
        log::info!(
            "epoch {} total {:.5} main {:.5} reg {:.5} usage {:?}",
            record.epoch,
            record.total_loss,
            record.main_loss,
            record.reg_loss,
            record.usage.iter().map(|u| u.used_count).collect::<Vec<_>>()
        );
        if let Some(f) = files.as_mut() {
            f.epoch(&record)?;
            f.timing(&TimingRecord {
                epoch: record.epoch,
                seconds: start.elapsed().as_secs_f64(),
            })?;
        }
        records.push(record);
    }
    let checkpoint = trainer.checkpoint();
    if let Some(f) = &files {
        checkpoint.save(f.dir().join(CHECKPOINT_FILE))?;
    }
    Ok(TrainOutcome {
        records,
        model: trainer.model,
        checkpoint,
    })
}
