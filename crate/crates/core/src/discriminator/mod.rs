//! Classical discriminator: network, reverse-mode autodiff, losses.

pub mod autodiff;
mod network;

use rand::Rng;

pub use network::{
    forward, forward_batch, Architecture, Block, DiscriminatorConfig, DiscriminatorParams,
    DiscriminatorTape, DropoutMode,
};

use crate::error::{Error, Result};
use autodiff::Matrix;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before any logarithm.
pub const SCORE_CLAMP: f64 = 1e-7;

pub fn clamp_score(d: f64) -> f64 {
    d.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

/// Binary cross-entropy of a real/fake batch pair:
/// `-(1/m) sum [log D(x) + log(1 - D(g))]`.
pub fn bce_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    check_batches(real_scores, fake_scores)?;
    let m = real_scores.len() as f64;
    let total: f64 = real_scores
        .iter()
        .zip(fake_scores)
        .map(|(&r, &f)| clamp_score(r).ln() + (1.0 - clamp_score(f)).ln())
        .sum();
    Ok(-total / m)
}

/// Derivatives of [`bce_loss`] w.r.t. each real and fake score. A clamped
/// score has zero derivative.
pub fn bce_adjoints(real_scores: &[f64], fake_scores: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_batches(real_scores, fake_scores)?;
    let m = real_scores.len() as f64;
    let inside = |d: f64| (SCORE_CLAMP..=1.0 - SCORE_CLAMP).contains(&d);
    let real = real_scores
        .iter()
        .map(|&d| if inside(d) { -1.0 / (m * d) } else { 0.0 })
        .collect();
    let fake = fake_scores
        .iter()
        .map(|&d| if inside(d) { 1.0 / (m * (1.0 - d)) } else { 0.0 })
        .collect();
    Ok((real, fake))
}

fn check_batches(real: &[f64], fake: &[f64]) -> Result<()> {
    if real.is_empty() {
        return Err(Error::config("empty batch"));
    }
    if real.len() != fake.len() {
        return Err(Error::Shape {
            expected: real.len(),
            got: fake.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOutcome {
    pub penalty: f64,
    /// Gradient of the penalty w.r.t. the flat parameters.
    pub gradient: Vec<f64>,
    /// Per-sample input-gradient norms.
    pub input_grad_norms: Vec<f64>,
}

/// Input-gradient penalty `lambda * mean_b (||grad_x D(x_b~)||_2 - 1)^2`
/// at perturbed real samples `x~ = x + u`, `u ~ U[-s, s]`, with
/// `s = 0.1 * std(real batch)`.
///
/// The parameter gradient differentiates through the input gradient itself
/// (second-order adjoints recorded on the tape). `lambda = 0` returns zeros
/// without running the network.
pub fn gradient_penalty<R: Rng + ?Sized>(
    params: &DiscriminatorParams,
    config: &DiscriminatorConfig,
    real_batch: &[&[f64]],
    mode: DropoutMode,
    rng: &mut R,
    penalty_weight: f64,
) -> Result<PenaltyOutcome> {
    if penalty_weight < 0.0 || !penalty_weight.is_finite() {
        return Err(Error::config(format!("penalty weight {penalty_weight} must be >= 0")));
    }
    if penalty_weight == 0.0 {
        return Ok(PenaltyOutcome {
            penalty: 0.0,
            gradient: vec![0.0; params.len()],
            input_grad_norms: Vec::new(),
        });
    }
    let all: Vec<f64> = real_batch.iter().flat_map(|s| s.iter().copied()).collect();
    let noise_scale = 0.1 * sample_std(&all);
    let perturbed: Vec<Vec<f64>> = real_batch
        .iter()
        .map(|s| {
            s.iter()
                .map(|&x| {
                    if noise_scale > 0.0 {
                        x + rng.random_range(-noise_scale..=noise_scale)
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = perturbed.iter().map(Vec::as_slice).collect();
    penalty_at(params, config, &refs, mode, rng, penalty_weight)
}

/// Penalty evaluated at exactly the given points (no perturbation).
pub fn penalty_at<R: Rng + ?Sized>(
    params: &DiscriminatorParams,
    config: &DiscriminatorConfig,
    points: &[&[f64]],
    mode: DropoutMode,
    rng: &mut R,
    penalty_weight: f64,
) -> Result<PenaltyOutcome> {
    let (_, mut dt) = forward_batch(params, config, points, mode, rng)?;
    let batch = points.len();
    let ones = dt.tape.constant(Matrix::filled(1, batch, 1.0));
    let gx = dt.tape.grad_graph(dt.output, ones, dt.input)?;
    let grads = dt.tape.value(gx).clone();
    let len = grads.rows();
    let norms: Vec<f64> = (0..batch)
        .map(|b| (0..len).map(|t| grads.get(t, b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let m = batch as f64;
    let penalty = penalty_weight * norms.iter().map(|n| (n - 1.0).powi(2)).sum::<f64>() / m;

    // d penalty / d gx[:, b] = lambda/m * 2 (n_b - 1) gx[:, b] / n_b
    let mut seed = vec![0.0; len * batch];
    for (b, &n) in norms.iter().enumerate() {
        if n > 0.0 {
            let k = penalty_weight / m * 2.0 * (n - 1.0) / n;
            for t in 0..len {
                seed[t * batch + b] = k * grads.get(t, b);
            }
        }
    }
    let adj = dt.tape.backward(gx, Matrix::from_vec(len, batch, seed))?;
    Ok(PenaltyOutcome {
        penalty,
        gradient: dt.gather(&adj),
        input_grad_norms: norms,
    })
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
