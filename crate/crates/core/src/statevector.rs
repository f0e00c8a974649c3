//! Dense statevector simulation for small qubit registers.
//!
//! Basis ordering: index `j` has qubit 0 as its most significant bit, so for
//! `n` qubits the mask of qubit `q` is `1 << (n - 1 - q)`. The generator and
//! the discretization layer both rely on this ordering to map basis states to
//! velocity levels.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 20;

/// Tolerance used when validating externally supplied normalized vectors.
const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::Shape {
                expected: 1 << n_qubits,
                got: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Domain(format!("state norm {norm} is not 1")));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_rotation(&self, axis: Axis, qubit: usize, theta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.rotate(axis, qubit, theta)?;
        Ok(out)
    }

    pub fn apply_cx(&self, control: usize, target: usize) -> Result<Self> {
        let mut out = self.clone();
        out.cx(control, target)?;
        Ok(out)
    }

    pub fn probabilities(&self) -> ProbVector {
        ProbVector(self.amplitudes.iter().map(|a| a.norm_sqr()).collect())
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::Index {
                index: qubit,
                limit: self.n_qubits,
            });
        }
        Ok(())
    }

    /// In-place single-qubit rotation.
    ///
    /// `RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]` and
    /// `RZ(t) = diag(e^{-it/2}, e^{it/2})`.
    pub(crate) fn rotate(&mut self, axis: Axis, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        if !theta.is_finite() {
            return Err(Error::Numeric(format!("rotation angle {theta} is not finite")));
        }
        let mask = self.mask(qubit);
        let (s, c) = (theta / 2.0).sin_cos();
        match axis {
            Axis::Y => {
                for j in 0..self.amplitudes.len() {
                    if j & mask == 0 {
                        let a0 = self.amplitudes[j];
                        let a1 = self.amplitudes[j | mask];
                        self.amplitudes[j] = a0 * c - a1 * s;
                        self.amplitudes[j | mask] = a0 * s + a1 * c;
                    }
                }
            }
            Axis::Z => {
                let lower = Complex64::new(c, -s);
                let upper = Complex64::new(c, s);
                for (j, a) in self.amplitudes.iter_mut().enumerate() {
                    *a *= if j & mask == 0 { lower } else { upper };
                }
            }
        }
        Ok(())
    }

    pub(crate) fn cx(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::config(format!(
                "CX control and target are both qubit {control}"
            )));
        }
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        for j in 0..self.amplitudes.len() {
            if j & cmask != 0 && j & tmask == 0 {
                self.amplitudes.swap(j, j | tmask);
            }
        }
        Ok(())
    }
}

fn check_qubit_count(n_qubits: usize) -> Result<()> {
    if !(1..=MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::config(format!(
            "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// Born-rule outcome probabilities over the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegativity and unit sum (within 1e-10).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::config("empty probability vector"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Domain(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(Self(probs))
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Draws `count` i.i.d. basis indices.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.0).expect("validated probability vector");
        (0..count).map(|_| dist.sample(rng)).collect()
    }
}

/// Free-function form of [`ProbVector::sample`].
pub fn sample_outcomes<R: Rng + ?Sized>(probs: &ProbVector, count: usize, rng: &mut R) -> Vec<usize> {
    probs.sample(count, rng)
}
