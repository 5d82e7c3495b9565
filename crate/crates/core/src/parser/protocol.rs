//! Multi-seed training with per-epoch dev evaluation and best-epoch
//! averaging.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ParserConfig, ParserModel};
use crate::analysis::{las, pair_treebanks};
use crate::conllu::Treebank;
use crate::error::{Error, Result};
use crate::representation::Pretrained;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub best_epochs_kept: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 30,
            seeds: vec![1, 2, 3],
            best_epochs_kept: 5,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.seeds.is_empty() || self.best_epochs_kept == 0 {
            return Err(Error::Config("schedule needs at least one epoch, seed and kept epoch".into()));
        }
        if self.best_epochs_kept > self.epochs {
            return Err(Error::Config(format!(
                "cannot keep {} best epochs out of {}",
                self.best_epochs_kept, self.epochs
            )));
        }
        Ok(())
    }
}

/// One line of the epoch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    /// 1-based.
    pub epoch: usize,
    pub dev_las: f64,
    pub train_loss: f64,
    /// Written when the epoch entered its seed's best set; the file is
    /// removed again once it drops out.
    pub checkpoint: Option<String>,
}

/// Throughput of one epoch, reported outside the deterministic log.
#[derive(Clone, Copy, Debug)]
pub struct EpochTiming {
    pub train_sentences_per_sec: f64,
    pub parse_sentences_per_sec: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Mean dev LAS of the best epochs.
    pub best_mean: f64,
    /// Mean dev LAS over all epochs.
    pub mean: f64,
    pub best_epochs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub per_seed: Vec<SeedSummary>,
    /// Mean over the best epochs of every seed.
    pub grand_mean: f64,
    pub records: Vec<EpochRecord>,
}

pub const LOG_NAME: &str = "epochs.jsonl";

/// Indices of the `k` best scores; earlier entries win ties.
fn best_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Trains one model per seed, evaluating on `dev` after every epoch. With
/// an output directory, the epoch log and the best-epoch checkpoints are
/// written there.
pub fn run_protocol(
    train: &Treebank,
    dev: &Treebank,
    config: &ParserConfig,
    schedule: &TrainSchedule,
    pretrained: Option<&Pretrained>,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord, &EpochTiming),
) -> Result<ProtocolSummary> {
    schedule.validate()?;
    config.validate()?;
    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let tmp = dir.join(format!("{LOG_NAME}.partial"));
            let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            Some((BufWriter::new(f), tmp))
        }
        None => None,
    };

    let mut records = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &schedule.seeds {
        let mut model = ParserModel::new(train, config.clone(), pretrained, seed)?;
        let mut scores = Vec::new();
        // (score, epoch, checkpoint path) of the current best set
        let mut kept: Vec<(f64, usize, Option<PathBuf>)> = Vec::new();
        for epoch in 1..=schedule.epochs {
            let stats = model.train_epoch(train)?;
            let start = Instant::now();
            let predicted = model.parse_treebank(dev)?;
            let parse_secs = start.elapsed().as_secs_f64();
            let dev_las = las(&pair_treebanks(dev, &predicted)?)?;
            scores.push(dev_las);

            let enters = kept.len() < schedule.best_epochs_kept
                || kept.iter().any(|(s, _, _)| dev_las > *s);
            let mut checkpoint = None;
            if enters {
                let path = out_dir.map(|d| d.join(format!("seed{seed}_epoch{epoch}.ckpt")));
                if let Some(p) = &path {
                    model.save(p)?;
                    checkpoint = Some(p.display().to_string());
                }
                kept.push((dev_las, epoch, path));
                if kept.len() > schedule.best_epochs_kept {
                    // drop the lowest score, the later epoch on ties
                    let worst = (0..kept.len())
                        .min_by(|&a, &b| kept[a].0.total_cmp(&kept[b].0).then(kept[b].1.cmp(&kept[a].1)))
                        .unwrap();
                    let (_, _, path) = kept.remove(worst);
                    if let Some(p) = path {
                        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                    }
                }
            }

            let record = EpochRecord {
                seed,
                epoch,
                dev_las,
                train_loss: stats.avg_loss,
                checkpoint,
            };
            if let Some((w, tmp)) = &mut log {
                serde_json::to_writer(&mut *w, &record)?;
                writeln!(w).map_err(|e| Error::io(&*tmp, e))?;
                w.flush().map_err(|e| Error::io(&*tmp, e))?;
            }
            let timing = EpochTiming {
                train_sentences_per_sec: stats.sentences as f64 / stats.seconds.max(1e-9),
                parse_sentences_per_sec: dev.sentences.len() as f64 / parse_secs.max(1e-9),
            };
            log::info!(
                "seed {seed} epoch {epoch}: loss {:.4}, dev LAS {dev_las:.2}",
                stats.avg_loss
            );
            on_epoch(&record, &timing);
            records.push(record);
        }
        let best = best_k(&scores, schedule.best_epochs_kept);
        per_seed.push(SeedSummary {
            seed,
            best_mean: best.iter().map(|&i| scores[i]).sum::<f64>() / best.len() as f64,
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            best_epochs: best.iter().map(|&i| i + 1).collect(),
        });
    }

    if let (Some((w, tmp)), Some(dir)) = (log, out_dir) {
        drop(w);
        let dst = dir.join(LOG_NAME);
        fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
    }
    let grand_mean = per_seed.iter().map(|s| s.best_mean).sum::<f64>() / per_seed.len() as f64;
    Ok(ProtocolSummary {
        per_seed,
        grand_mean,
        records,
    })
}
