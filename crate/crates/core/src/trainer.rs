//! Adversarial training loop.
//!
//! Each batch: draw fake samples from the current circuit, take one
//! discriminator step on real+fake, then one generator step on the
//! analytic loss `-sum_j p_j log D(g_j)`.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::DiscreteSeries;
use crate::discriminator::{
    bce_adjoints, bce_loss, clamp_score, forward_batch, gradient_penalty, DiscriminatorConfig,
    DiscriminatorParams, DropoutMode,
};
use crate::error::{Error, Result};
use crate::generator::{bin_center, AnsatzConfig, Generator, ParameterVector};
use crate::metrics::js_divergence;
use crate::optim::{AmsgradConfig, AmsgradState};
use crate::statevector::ProbVector;

/// Stream labels; each purpose draws from its own ChaCha stream.
pub mod streams {
    pub const INIT_GENERATOR: u64 = 1;
    pub const INIT_DISCRIMINATOR: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const PENALTY: u64 = 6;
}

pub fn stream_rng(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub disc_updates_per_batch: usize,
    pub gen_updates_per_batch: usize,
    pub penalty_weight: f64,
    pub generator_optimizer: AmsgradConfig,
    pub discriminator_optimizer: AmsgradConfig,
    /// Record JSD between `p_theta` and the training distribution each epoch.
    pub track_jsd: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 500,
            seed: 0,
            disc_updates_per_batch: 1,
            gen_updates_per_batch: 1,
            penalty_weight: 0.1,
            generator_optimizer: AmsgradConfig::default(),
            discriminator_optimizer: AmsgradConfig::default(),
            track_jsd: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be at least 1"));
        }
        if self.disc_updates_per_batch == 0 || self.gen_updates_per_batch == 0 {
            return Err(Error::config("update counts per batch must be at least 1"));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::config(format!(
                "penalty weight {} must be >= 0",
                self.penalty_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub wall_time_s: f64,
    pub jsd: Option<f64>,
}

/// Wall time is ignored: two runs with equal losses compare equal.
impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.gen_loss.to_bits() == other.gen_loss.to_bits()
            && self.disc_loss.to_bits() == other.disc_loss.to_bits()
            && self.jsd.map(f64::to_bits) == other.jsd.map(f64::to_bits)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,gen_loss,disc_loss,wall_time_s[,jsd]`, losses at 9 significant
    /// digits. With `record_time = false` the time column is written as 0.
    pub fn write_csv<W: Write>(&self, mut out: W, record_time: bool) -> std::io::Result<()> {
        let with_jsd = self.records.iter().any(|r| r.jsd.is_some());
        write!(out, "epoch,gen_loss,disc_loss,wall_time_s")?;
        if with_jsd {
            write!(out, ",jsd")?;
        }
        writeln!(out)?;
        for r in &self.records {
            let time = if record_time { r.wall_time_s } else { 0.0 };
            write!(out, "{},{:.8e},{:.8e},{:.3}", r.epoch, r.gen_loss, r.disc_loss, time)?;
            if with_jsd {
                match r.jsd {
                    Some(j) => write!(out, ",{j:.8e}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub theta: ParameterVector,
    pub phi: DiscriminatorParams,
    pub log: TrainingLog,
    pub circuit_evaluations: usize,
}

impl TrainingOutcome {
    pub fn checkpoint(&self, generator: AnsatzConfig, discriminator: DiscriminatorConfig) -> Checkpoint {
        Checkpoint {
            generator,
            theta: self.theta.clone(),
            discriminator,
            phi: self.phi.clone(),
        }
    }
}

/// `m` draws from `p_theta` mapped to bin centers. With `input_length > 1`
/// consecutive draws are grouped into `m` sequences.
pub fn make_fake_batch<R: rand::Rng + ?Sized>(
    probs: &ProbVector,
    m: usize,
    input_length: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let levels = probs.len();
    probs
        .sample(m * input_length, rng)
        .chunks(input_length)
        .map(|c| c.iter().map(|&i| bin_center(i, levels)).collect())
        .collect()
}

struct Rngs {
    dropout: ChaCha8Rng,
    sampling: ChaCha8Rng,
    shuffle: ChaCha8Rng,
    penalty: ChaCha8Rng,
}

fn refs(batch: &[Vec<f64>]) -> Vec<&[f64]> {
    batch.iter().map(Vec::as_slice).collect()
}

fn real_samples(dataset: &DiscreteSeries, input_length: usize) -> Result<Vec<Vec<f64>>> {
    let values = dataset.values();
    if input_length == 1 {
        return Ok(values.into_iter().map(|v| vec![v]).collect());
    }
    crate::data::make_sequences(&values, input_length, input_length)
}

/// Trains from a fresh initialization drawn from `config.seed`.
pub fn train(
    gen_config: AnsatzConfig,
    disc_config: &DiscriminatorConfig,
    config: &TrainingConfig,
    dataset: &DiscreteSeries,
) -> Result<TrainingOutcome> {
    let theta = ParameterVector::random(&gen_config, &mut stream_rng(config.seed, streams::INIT_GENERATOR));
    let phi = DiscriminatorParams::init(disc_config, &mut stream_rng(config.seed, streams::INIT_DISCRIMINATOR));
    train_from(gen_config, disc_config, config, dataset, theta, phi)
}

/// Trains starting from the given parameters.
pub fn train_from(
    gen_config: AnsatzConfig,
    disc_config: &DiscriminatorConfig,
    config: &TrainingConfig,
    dataset: &DiscreteSeries,
    mut theta: ParameterVector,
    mut phi: DiscriminatorParams,
) -> Result<TrainingOutcome> {
    config.validate()?;
    disc_config.validate()?;
    theta.validate(&gen_config)?;
    if dataset.is_empty() {
        return Err(Error::config("empty training dataset"));
    }
    if dataset.levels != gen_config.levels() {
        return Err(Error::config(format!(
            "dataset has {} levels but the generator produces {}",
            dataset.levels,
            gen_config.levels()
        )));
    }
    let target = dataset.distribution()?;
    let mut real = real_samples(dataset, disc_config.input_length)?;

    let generator = Generator::new(gen_config);
    let mut gen_opt = AmsgradState::new(config.generator_optimizer, theta.len());
    let mut disc_opt = AmsgradState::new(config.discriminator_optimizer, phi.len());
    let mut rngs = Rngs {
        dropout: stream_rng(config.seed, streams::DROPOUT),
        sampling: stream_rng(config.seed, streams::SAMPLING),
        shuffle: stream_rng(config.seed, streams::SHUFFLE),
        penalty: stream_rng(config.seed, streams::PENALTY),
    };

    let start = Instant::now();
    let mut log = TrainingLog::default();
    for epoch in 1..=config.epochs {
        real.shuffle(&mut rngs.shuffle);
        let (mut gen_sum, mut disc_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, real_batch) in real.chunks(config.batch_size).enumerate() {
            let context = |what: &str, v: f64| {
                Error::Numeric(format!("{what} loss {v} at epoch {epoch}, batch {}", b + 1))
            };
            let mut probs = generator.output_distribution(&theta)?;
            let fake = make_fake_batch(&probs, real_batch.len(), disc_config.input_length, &mut rngs.sampling);

            let mut disc_loss = 0.0;
            for _ in 0..config.disc_updates_per_batch {
                let loss = discriminator_step(
                    &mut phi,
                    disc_config,
                    &mut disc_opt,
                    real_batch,
                    &fake,
                    config.penalty_weight,
                    &mut rngs,
                )?;
                if !loss.is_finite() {
                    return Err(context("discriminator", loss));
                }
                disc_loss += loss;
            }

            let mut gen_loss = 0.0;
            for u in 0..config.gen_updates_per_batch {
                if u > 0 {
                    probs = generator.output_distribution(&theta)?;
                }
                let (loss, grad) = generator_step(&generator, &theta, &probs, &phi, disc_config, real_batch.len(), &mut rngs)?;
                if !loss.is_finite() {
                    return Err(context("generator", loss));
                }
                gen_opt.step(&mut theta.0, &grad)?;
                gen_loss += loss;
            }
            gen_sum += gen_loss / config.gen_updates_per_batch as f64;
            disc_sum += disc_loss / config.disc_updates_per_batch as f64;
            batches += 1;
        }
        let jsd = if config.track_jsd {
            let p = generator.output_distribution(&theta)?;
            Some(js_divergence(p.as_slice(), &target)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            gen_loss: gen_sum / batches as f64,
            disc_loss: disc_sum / batches as f64,
            wall_time_s: start.elapsed().as_secs_f64(),
            jsd,
        };
        if epoch % 50 == 0 || epoch == config.epochs {
            log::info!(
                "epoch {epoch}: gen {:.5} disc {:.5}{}",
                record.gen_loss,
                record.disc_loss,
                jsd.map_or(String::new(), |j| format!(" jsd {j:.6}"))
            );
        }
        log.records.push(record);
    }
    Ok(TrainingOutcome {
        theta,
        phi,
        log,
        circuit_evaluations: generator.circuit_evaluations(),
    })
}

fn discriminator_step(
    phi: &mut DiscriminatorParams,
    cfg: &DiscriminatorConfig,
    opt: &mut AmsgradState,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    penalty_weight: f64,
    rngs: &mut Rngs,
) -> Result<f64> {
    let (real_scores, mut real_tape) = forward_batch(phi, cfg, &refs(real), DropoutMode::Train, &mut rngs.dropout)?;
    let (fake_scores, mut fake_tape) = forward_batch(phi, cfg, &refs(fake), DropoutMode::Train, &mut rngs.dropout)?;
    let loss = bce_loss(&real_scores, &fake_scores)?;
    let (real_adj, fake_adj) = bce_adjoints(&real_scores, &fake_scores)?;
    let mut grad = real_tape.backward_batch(&real_adj)?;
    for (g, f) in grad.iter_mut().zip(fake_tape.backward_batch(&fake_adj)?) {
        *g += f;
    }
    let mut total = loss;
    if penalty_weight > 0.0 {
        let pen = gradient_penalty(phi, cfg, &refs(real), DropoutMode::Train, &mut rngs.penalty, penalty_weight)?;
        for (g, p) in grad.iter_mut().zip(&pen.gradient) {
            *g += p;
        }
        total += pen.penalty;
    }
    opt.step(phi.values_mut(), &grad)?;
    Ok(total)
}

/// Loss and gradient at `theta`, where `probs = p_theta`. Costs `2P`
/// circuit evaluations for the shift-rule Jacobian.
fn generator_step(
    generator: &Generator,
    theta: &ParameterVector,
    probs: &ProbVector,
    phi: &DiscriminatorParams,
    cfg: &DiscriminatorConfig,
    batch: usize,
    rngs: &mut Rngs,
) -> Result<(f64, Vec<f64>)> {
    let levels = probs.len();
    if cfg.input_length == 1 {
        let centers: Vec<Vec<f64>> = (0..levels).map(|j| vec![bin_center(j, levels)]).collect();
        let (scores, _) = forward_batch(phi, cfg, &refs(&centers), DropoutMode::Eval, &mut rngs.dropout)?;
        let scores: Vec<f64> = scores.into_iter().map(clamp_score).collect();
        let loss = crate::generator::generator_loss(probs, &scores)?;
        let grad = generator.generator_gradient(theta, &scores)?;
        return Ok((loss, grad));
    }

    // Sequence inputs: score-function estimate over fresh sequences with a
    // batch-mean baseline.
    let draws = probs.sample(batch * cfg.input_length, &mut rngs.sampling);
    let seqs: Vec<Vec<f64>> = draws
        .chunks(cfg.input_length)
        .map(|c| c.iter().map(|&i| bin_center(i, levels)).collect())
        .collect();
    let (scores, _) = forward_batch(phi, cfg, &refs(&seqs), DropoutMode::Eval, &mut rngs.dropout)?;
    let log_d: Vec<f64> = scores.iter().map(|&d| clamp_score(d).ln()).collect();
    let m = batch as f64;
    let loss = -log_d.iter().sum::<f64>() / m;
    let baseline = -loss;
    let jacobian = generator.probability_jacobian(theta)?;
    let p = probs.as_slice();
    let grad = jacobian
        .iter()
        .map(|dp| {
            let score = |c: &[usize]| c.iter().map(|&j| dp[j] / p[j]).sum::<f64>();
            -draws
                .chunks(cfg.input_length)
                .zip(&log_d)
                .map(|(c, l)| (l - baseline) * score(c))
                .sum::<f64>()
                / m
        })
        .collect();
    Ok((loss, grad))
}
