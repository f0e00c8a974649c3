//! Variational quantum generator.
//!
//! The circuit acting on `|0...0>` is a rotation layer followed by `L`
//! blocks of (ring CX, rotation layer). A rotation layer applies `RY` then
//! `RZ` to every qubit. The ring connects qubit `i` (control) to qubit
//! `(i + 1) mod N` (target) for `i = 0..N`, applied in increasing `i`.
//! A single qubit has no ring.
//!
//! Angles are stored layer-major, then qubit-major, with the `RY` angle
//! before the `RZ` angle, so `2 * N * (L + 1)` parameters in total.

use std::f64::consts::FRAC_PI_2;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::statevector::{Axis, ProbVector, StateVector, MAX_QUBITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnsatzConfig {
    pub n_qubits: usize,
    pub layers: usize,
}

impl AnsatzConfig {
    pub fn new(n_qubits: usize, layers: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::config(format!(
                "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        Ok(Self { n_qubits, layers })
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.n_qubits * (self.layers + 1)
    }

    /// Number of computational basis states, `2^N`.
    pub fn levels(&self) -> usize {
        1 << self.n_qubits
    }

    /// Ring CX pairs `(control, target)`, 0-indexed.
    pub fn ring(&self) -> Vec<(usize, usize)> {
        if self.n_qubits < 2 {
            return Vec::new();
        }
        (0..self.n_qubits)
            .map(|i| (i, (i + 1) % self.n_qubits))
            .collect()
    }

    /// Flat index of the `RY` (`axis = Y`) or `RZ` angle on `qubit` in rotation layer `layer`.
    pub fn param_index(&self, layer: usize, qubit: usize, axis: Axis) -> usize {
        layer * 2 * self.n_qubits + 2 * qubit + usize::from(axis == Axis::Z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(config: &AnsatzConfig) -> Self {
        Self(vec![0.0; config.parameter_count()])
    }

    /// I.i.d. uniform angles on `[-pi, pi]`.
    pub fn random<R: Rng + ?Sized>(config: &AnsatzConfig, rng: &mut R) -> Self {
        let pi = std::f64::consts::PI;
        Self(
            (0..config.parameter_count())
                .map(|_| rng.random_range(-pi..=pi))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, config: &AnsatzConfig) -> Result<()> {
        if self.0.len() != config.parameter_count() {
            return Err(Error::config(format!(
                "parameter vector has {} angles, ansatz {}x{} needs {}",
                self.0.len(),
                config.n_qubits,
                config.layers,
                config.parameter_count()
            )));
        }
        if let Some(t) = self.0.iter().find(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("non-finite angle {t}")));
        }
        Ok(())
    }
}

/// A generator draw: the measured basis index and its `[0, 1]` bin center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSample {
    pub basis_index: usize,
    pub value: f64,
}

/// Center of level `index` among `levels` uniform bins on `[0, 1]`.
pub fn bin_center(index: usize, levels: usize) -> f64 {
    (index as f64 + 0.5) / levels as f64
}

/// Circuit evaluator with an evaluation counter.
///
/// Every full statevector construction increments the counter, which the
/// trainer uses to check its evaluation budget.
#[derive(Debug)]
pub struct Generator {
    config: AnsatzConfig,
    evaluations: AtomicUsize,
}

impl Clone for Generator {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            evaluations: AtomicUsize::new(self.circuit_evaluations()),
        }
    }
}

impl Generator {
    pub fn new(config: AnsatzConfig) -> Self {
        Self {
            config,
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &AnsatzConfig {
        &self.config
    }

    pub fn circuit_evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    pub fn build_state(&self, theta: &ParameterVector) -> Result<StateVector> {
        theta.validate(&self.config)?;
        self.build_unchecked(theta.as_slice())
    }

    fn build_unchecked(&self, theta: &[f64]) -> Result<StateVector> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let n = self.config.n_qubits;
        let ring = self.config.ring();
        let mut state = StateVector::zero(n)?;
        for layer in 0..=self.config.layers {
            if layer > 0 {
                for &(c, t) in &ring {
                    state.cx(c, t)?;
                }
            }
            let angles = &theta[layer * 2 * n..(layer + 1) * 2 * n];
            for q in 0..n {
                state.rotate(Axis::Y, q, angles[2 * q])?;
                state.rotate(Axis::Z, q, angles[2 * q + 1])?;
            }
        }
        Ok(state)
    }

    pub fn output_distribution(&self, theta: &ParameterVector) -> Result<ProbVector> {
        Ok(self.build_state(theta)?.probabilities())
    }

    /// `dp/dtheta_i = (p(theta + pi/2 e_i) - p(theta - pi/2 e_i)) / 2`.
    pub fn shift_prob_gradient(&self, theta: &ParameterVector, param_index: usize) -> Result<Vec<f64>> {
        theta.validate(&self.config)?;
        if param_index >= theta.len() {
            return Err(Error::Index {
                index: param_index,
                limit: theta.len(),
            });
        }
        let mut shifted = theta.0.clone();
        shifted[param_index] = theta.0[param_index] + FRAC_PI_2;
        let plus = self.build_unchecked(&shifted)?.probabilities();
        shifted[param_index] = theta.0[param_index] - FRAC_PI_2;
        let minus = self.build_unchecked(&shifted)?.probabilities();
        Ok(plus
            .as_slice()
            .iter()
            .zip(minus.as_slice())
            .map(|(p, m)| 0.5 * (p - m))
            .collect())
    }

    /// Jacobian rows `dp/dtheta_i` for every parameter (2 evaluations each).
    pub fn probability_jacobian(&self, theta: &ParameterVector) -> Result<Vec<Vec<f64>>> {
        (0..self.config.parameter_count())
            .map(|i| self.shift_prob_gradient(theta, i))
            .collect()
    }

    /// Gradient of [`generator_loss`]: `-sum_j dp_j/dtheta_i * log D(g_j)`.
    pub fn generator_gradient(&self, theta: &ParameterVector, disc_outputs: &[f64]) -> Result<Vec<f64>> {
        let log_d = log_scores(disc_outputs, self.config.levels())?;
        let jacobian = self.probability_jacobian(theta)?;
        Ok(jacobian
            .iter()
            .map(|row| -row.iter().zip(&log_d).map(|(dp, l)| dp * l).sum::<f64>())
            .collect())
    }

    /// Draws `m` samples mapped to their bin centers.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        probs: &ProbVector,
        m: usize,
        rng: &mut R,
    ) -> Vec<GeneratorSample> {
        let levels = self.config.levels();
        probs
            .sample(m, rng)
            .into_iter()
            .map(|basis_index| GeneratorSample {
                basis_index,
                value: bin_center(basis_index, levels),
            })
            .collect()
    }
}

fn log_scores(disc_outputs: &[f64], levels: usize) -> Result<Vec<f64>> {
    if disc_outputs.len() != levels {
        return Err(Error::Shape {
            expected: levels,
            got: disc_outputs.len(),
        });
    }
    disc_outputs
        .iter()
        .map(|&d| {
            if d > 0.0 && d <= 1.0 {
                Ok(d.ln())
            } else {
                Err(Error::Domain(format!("discriminator output {d} outside (0, 1]")))
            }
        })
        .collect()
}

/// Non-saturating generator loss in expectation form:
/// `L_G = -sum_j p_j log D(g_j)`.
///
/// A score of exactly 1 is accepted (it contributes zero loss); anything
/// outside `(0, 1]` is a domain error.
pub fn generator_loss(probs: &ProbVector, disc_outputs: &[f64]) -> Result<f64> {
    let log_d = log_scores(disc_outputs, probs.len())?;
    Ok(-probs
        .as_slice()
        .iter()
        .zip(&log_d)
        .map(|(p, l)| p * l)
        .sum::<f64>())
}
