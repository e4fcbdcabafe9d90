use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::adversarial::LossReport;
use crate::codec::FlipPairs;
use crate::dataset::{PckResult, Reference, Sample};
use crate::error::{contract, Error, Result};
use crate::network::save_checkpoint;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{evaluate, Augmenter, Batch, InferSettings, Trainer};

pub const LOG_HEADER: &str = "iter,epoch,l_mse,l_adv,l_g,l_real,l_fake,l_d,k_t,conv,wall_ms";
pub const LOG_FILE: &str = "log.csv";

const TAG_SHUFFLE: u64 = 3;
const TAG_AUGMENT: u64 = 4;

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRecord {
    pub iteration: u64,
    pub epoch: usize,
    pub report: LossReport,
    /// Learning rate used by this iteration (not part of the CSV row).
    pub lr: f64,
    pub wall_ms: u64,
}

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

impl TrainLogRecord {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        let vals = [r.l_mse, r.l_adv, r.l_g, r.l_real, r.l_fake, r.l_d, r.k_t, r.convergence].map(sig9).join(",");
        format!("{},{},{vals},{}", self.iteration, self.epoch, self.wall_ms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    pub mean_l_mse: f64,
    /// Held-out PCK at the configured threshold, when held-out data exists.
    pub heldout: Option<PckResult>,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub records: Vec<TrainLogRecord>,
    pub epochs: Vec<EpochSummary>,
    pub stopped_early: bool,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("ckpt_epoch_{epoch}.bin"))
}

pub fn discriminator_checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("disc_epoch_{epoch}.bin"))
}

/// Crops, targets and batches for one epoch, derived only from the master
/// seed, the epoch and each sample's index.
pub fn epoch_batches<'a, T: Scalar>(
    samples: &'a [Sample<T>],
    augmenter: &Augmenter,
    seed: u64,
    epoch: usize,
    batch_size: usize,
) -> impl Iterator<Item = Result<Batch<T>>> + 'a {
    let root = RngStream::new(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    root.derive(&[TAG_SHUFFLE, epoch as u64]).shuffle(&mut order);
    let full = samples.len() / batch_size;
    let aug = augmenter.clone();
    (0..full).map(move |b| {
        let mut inputs = Vec::with_capacity(batch_size);
        let mut targets = Vec::with_capacity(batch_size);
        for &i in &order[b * batch_size..(b + 1) * batch_size] {
            let s = &samples[i];
            let mut rng = root.derive(&[TAG_AUGMENT, epoch as u64, i as u64]);
            let p = aug.augment_sample(&s.image, &s.keypoints(), &s.record.person()?, &mut rng)?;
            inputs.push(p.input);
            targets.push(p.target);
        }
        Ok(Batch { images: Tensor::stack(&inputs)?, targets: Tensor::stack(&targets)? })
    })
}

struct LogSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogSink {
    fn create(path: PathBuf) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = LogSink { out: BufWriter::new(f), path };
        sink.line(LOG_HEADER)?;
        Ok(sink)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Runs the configured epochs over `train`, logging every iteration and
/// scoring `heldout` after each epoch. With `out_dir`, writes `log.csv` and
/// per-epoch checkpoints there.
pub fn train_loop<T: Scalar>(
    trainer: &mut Trainer<T>,
    train: &[Sample<T>],
    heldout: &[Sample<T>],
    pairs: &FlipPairs,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<TrainSummary> {
    let cfg = trainer.cfg.clone();
    contract!(!train.is_empty(), "training set is empty");
    contract!(train.len() >= cfg.batch_size, "{} training samples do not fill one batch of {}", train.len(), cfg.batch_size);
    let augmenter = Augmenter::new(&trainer.net, &cfg, pairs.clone())?;
    let settings = InferSettings::new(trainer.net.input_res, pairs.clone());
    let mut sink = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            Some(LogSink::create(d.join(LOG_FILE))?)
        }
        None => None,
    };
    let start = Instant::now();
    let mut records = Vec::new();
    let mut epochs = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        trainer.set_learning_rate(lr);
        let mut mse_sum = 0.0;
        let mut count = 0usize;
        for batch in epoch_batches(train, &augmenter, cfg.seed, epoch, cfg.batch_size) {
            let iteration = trainer.iteration();
            let out = trainer.train_iteration(&batch?)?;
            let wall_ms = if cfg.record_wall_clock { start.elapsed().as_millis() as u64 } else { 0 };
            let rec = TrainLogRecord { iteration, epoch, report: out.report, lr, wall_ms };
            if let Some(s) = &mut sink {
                s.line(&rec.csv_row())?;
            }
            mse_sum += rec.report.l_mse;
            count += 1;
            records.push(rec);
        }
        if let Some(s) = &mut sink {
            s.flush()?;
        }
        if let Some(d) = out_dir {
            save_checkpoint(&checkpoint_path(d, epoch), &trainer.generator)?;
            if let Some(disc) = &trainer.discriminator {
                save_checkpoint(&discriminator_checkpoint_path(d, epoch), disc)?;
            }
        }
        let heldout_pck = if heldout.is_empty() {
            None
        } else {
            Some(evaluate(&mut trainer.generator, heldout, &settings, &[cfg.eval_threshold], Reference::Torso)?.remove(0))
        };
        let summary = EpochSummary { epoch, lr, mean_l_mse: mse_sum / count as f64, heldout: heldout_pck };
        on_epoch(&summary);
        let score = summary.heldout.as_ref().and_then(|p| p.total);
        epochs.push(summary);
        if let (Some(patience), Some(score)) = (cfg.patience, score) {
            if score > best {
                best = score;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainSummary { records, epochs, stopped_early })
}
