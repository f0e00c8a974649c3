//! Kernel-density Markov baseline: a Gaussian product-kernel estimate of the
//! one-step conditional density, discretized into a transition matrix.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::uniform_edges;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SUPPORT_FLOOR: f64 = 1e-300;
const MIDPOINT_NODES: usize = 64;

/// Standard normal density.
pub fn kernel(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

fn normal_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u / std::f64::consts::SQRT_2)
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `1.06 * std * (n - 1)^(-1/5)`.
pub fn silverman_rule(std: f64, n: usize) -> f64 {
    1.06 * std * inv_fifth_root((n - 1) as f64)
}

/// `x^(-1/5)` with a Newton step on `r^5 x = 1` to clean up `powf` rounding.
fn inv_fifth_root(x: f64) -> f64 {
    let r = x.powf(-0.2);
    let r4 = r * r * r * r;
    r - (r4 * r * x - 1.0) / (5.0 * r4 * x)
}

/// [`silverman_rule`] with the sample std (denominator `n - 1`).
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::config(format!(
            "bandwidth needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let std = sample_std(samples);
    if !(std > 0.0) {
        return Err(Error::DegenerateData("constant series has zero spread".into()));
    }
    Ok(silverman_rule(std, samples.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Vec<f64>,
    bandwidth: f64,
    sample_std: f64,
}

impl KdeModel {
    /// Fits with the Silverman bandwidth.
    pub fn fit(samples: Vec<f64>) -> Result<Self> {
        let bandwidth = silverman_bandwidth(&samples)?;
        let sample_std = sample_std(&samples);
        Ok(Self {
            samples,
            bandwidth,
            sample_std,
        })
    }

    pub fn with_bandwidth(samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::config("KDE needs at least 2 samples"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::config(format!("bandwidth {bandwidth} must be positive")));
        }
        let sample_std = sample_std(&samples);
        Ok(Self {
            samples,
            bandwidth,
            sample_std,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_std(&self) -> f64 {
        self.sample_std
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.windows(2).map(|w| (w[0], w[1]))
    }

    fn n_pairs(&self) -> f64 {
        (self.samples.len() - 1) as f64
    }

    /// Joint density of `(x_cur, x_next)` over consecutive pairs.
    pub fn joint_density(&self, x_next: f64, x_cur: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .pairs()
            .map(|(cur, next)| kernel((x_next - next) / h) * kernel((x_cur - cur) / h))
            .sum();
        sum / (self.n_pairs() * h * h)
    }

    /// Density of the conditioning value over the first `n - 1` samples.
    pub fn marginal_density(&self, x_cur: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.pairs().map(|(cur, _)| kernel((x_cur - cur) / h)).sum();
        sum / (self.n_pairs() * h)
    }

    pub fn conditional_density(&self, x_next: f64, x_cur: f64) -> Result<f64> {
        let marginal = self.marginal_density(x_cur);
        if marginal < SUPPORT_FLOOR {
            return Err(Error::OutOfSupport(format!(
                "no data mass near conditioning value {x_cur}"
            )));
        }
        Ok(self.joint_density(x_next, x_cur) / marginal)
    }
}

/// How bin-to-bin probabilities are extracted from the density estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditioningRule {
    /// Joint kernel mass over (from-bin x to-bin), divided by the from-bin
    /// mass. Closed form via the normal CDF; outer bins extend to infinity.
    #[default]
    BinAverage,
    /// Conditional density at the from-bin midpoint, integrated over the
    /// to-bin with a 64-node midpoint rule.
    BinMidpoint,
}

impl std::str::FromStr for ConditioningRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bin-average" => Ok(Self::BinAverage),
            "bin-midpoint" => Ok(Self::BinMidpoint),
            other => Err(Error::config(format!("unknown conditioning rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConditioningRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BinAverage => "bin-average",
            Self::BinMidpoint => "bin-midpoint",
        })
    }
}

/// Row-stochastic `probs[from][to]` over uniform bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    bin_edges: Vec<f64>,
    probs: Vec<Vec<f64>>,
}

const ROW_TOLERANCE: f64 = 1e-9;

impl TransitionMatrix {
    pub fn new(bin_edges: Vec<f64>, probs: Vec<Vec<f64>>) -> Result<Self> {
        let n = probs.len();
        if n < 2 {
            return Err(Error::config(format!("{n} states; need at least 2")));
        }
        if bin_edges.len() != n + 1 {
            return Err(Error::Shape {
                expected: n + 1,
                got: bin_edges.len(),
            });
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("bin edges must be strictly increasing"));
        }
        for (j, row) in probs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Domain(format!("row {j} has an invalid entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Domain(format!("row {j} sums to {total}")));
            }
        }
        Ok(Self { bin_edges, probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.probs[from][to]
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Lines: `n_states`, comma-separated edges, then one row per state,
    /// all at 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.11e}")).collect::<Vec<_>>().join(",");
        writeln!(out, "{}", self.n_states())?;
        writeln!(out, "{}", fmt(&self.bin_edges))?;
        for row in &self.probs {
            writeln!(out, "{}", fmt(row))?;
        }
        Ok(())
    }

    /// Parses [`TransitionMatrix::write_csv`] output. Rows are renormalized
    /// to absorb rounding from the 12-digit format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::parse(i + 1, e.to_string())),
                None => Err(Error::parse(0, format!("missing {what}"))),
            }
        };
        let parse_row = |line_no: usize, line: &str| -> Result<Vec<f64>> {
            line.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(line_no, format!("bad number `{v}`")))
                })
                .collect()
        };
        let (ln, first) = next_line("state count")?;
        let n: usize = first
            .trim()
            .parse()
            .map_err(|_| Error::parse(ln, format!("bad state count `{first}`")))?;
        let (ln, edges) = next_line("bin edges")?;
        let edges = parse_row(ln, &edges)?;
        let mut probs = Vec::with_capacity(n);
        for j in 0..n {
            let (ln, row) = next_line(&format!("row {j}"))?;
            let mut row = parse_row(ln, &row)?;
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::parse(ln, format!("row sums to {total}")));
            }
            row.iter_mut().for_each(|p| *p /= total);
            probs.push(row);
        }
        Self::new(edges, probs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}

/// Bin index with half-open bins, the last closed, out-of-range clamped.
pub fn state_of(x: f64, bin_edges: &[f64]) -> usize {
    let n = bin_edges.len() - 1;
    bin_edges.partition_point(|&e| e <= x).saturating_sub(1).min(n - 1)
}

pub fn build_transition_matrix(
    model: &KdeModel,
    n_states: usize,
    rule: ConditioningRule,
) -> Result<TransitionMatrix> {
    if n_states < 2 {
        return Err(Error::config(format!("{n_states} states; need at least 2")));
    }
    let samples = model.samples();
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = uniform_edges(lo, hi, n_states)
        .map_err(|_| Error::DegenerateData("samples span an empty range".into()))?;
    let mut rows = match rule {
        ConditioningRule::BinAverage => bin_average_rows(model, &edges),
        ConditioningRule::BinMidpoint => bin_midpoint_rows(model, &edges),
    };

    let mut fallback: Option<Vec<f64>> = None;
    for (j, row) in rows.iter_mut().enumerate() {
        let total: f64 = row.iter().sum();
        if total > 0.0 && total.is_finite() {
            row.iter_mut().for_each(|p| *p /= total);
        } else {
            log::warn!("state {j} has no data mass; using the marginal histogram");
            *row = fallback
                .get_or_insert_with(|| marginal_histogram(samples, &edges))
                .clone();
        }
    }
    TransitionMatrix::new(edges, rows)
}

fn marginal_histogram(samples: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; edges.len() - 1];
    for &x in samples {
        counts[state_of(x, edges)] += 1.0;
    }
    let n = samples.len() as f64;
    counts.iter().map(|c| c / n).collect()
}

/// Unnormalized rows `sum_k A_j(x_k) A_i(x_{k+1})`, `A_i` the kernel mass
/// of bin `i` around a sample.
fn bin_average_rows(model: &KdeModel, edges: &[f64]) -> Vec<Vec<f64>> {
    let n = edges.len() - 1;
    let h = model.bandwidth();
    let mass = |x: f64| -> Vec<f64> {
        let cdf: Vec<f64> = (0..=n)
            .map(|e| match e {
                0 => 0.0,
                e if e == n => 1.0,
                e => normal_cdf((edges[e] - x) / h),
            })
            .collect();
        cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
    };
    let masses: Vec<Vec<f64>> = model.samples().iter().map(|&x| mass(x)).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for w in masses.windows(2) {
        let (from, to) = (&w[0], &w[1]);
        for (row, &a) in rows.iter_mut().zip(from) {
            if a > 0.0 {
                for (t, &b) in row.iter_mut().zip(to) {
                    *t += a * b;
                }
            }
        }
    }
    rows
}

fn bin_midpoint_rows(model: &KdeModel, edges: &[f64]) -> Vec<Vec<f64>> {
    let n = edges.len() - 1;
    let h = model.bandwidth();
    let samples = model.samples();
    (0..n)
        .map(|j| {
            let mid = 0.5 * (edges[j] + edges[j + 1]);
            // Conditional density is a weighted mixture of kernels at the
            // successor samples.
            let weights: Vec<f64> = samples[..samples.len() - 1]
                .iter()
                .map(|&c| kernel((mid - c) / h))
                .collect();
            let total: f64 = weights.iter().sum();
            let marginal = total / (model.n_pairs() * h);
            if marginal < SUPPORT_FLOOR {
                return vec![0.0; n];
            }
            (0..n)
                .map(|i| {
                    let width = (edges[i + 1] - edges[i]) / MIDPOINT_NODES as f64;
                    (0..MIDPOINT_NODES)
                        .map(|q| {
                            let x = edges[i] + (q as f64 + 0.5) * width;
                            let mix: f64 = weights
                                .iter()
                                .zip(&samples[1..])
                                .map(|(w, &nx)| w * kernel((x - nx) / h))
                                .sum();
                            mix / (total * h) * width
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// State path with bin-center values.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSeries {
    pub states: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn generate_series<R: Rng + ?Sized>(
    matrix: &TransitionMatrix,
    start_state: usize,
    length: usize,
    rng: &mut R,
) -> Result<MarkovSeries> {
    let n = matrix.n_states();
    if start_state >= n {
        return Err(Error::Index {
            index: start_state,
            limit: n,
        });
    }
    if length == 0 {
        return Err(Error::config("series length must be at least 1"));
    }
    let rows: Vec<WeightedIndex<f64>> = matrix
        .rows()
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::Domain(e.to_string())))
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(length);
    let mut s = start_state;
    states.push(s);
    for _ in 1..length {
        s = rows[s].sample(rng);
        states.push(s);
    }
    let centers = matrix.bin_centers();
    let values = states.iter().map(|&s| centers[s]).collect();
    Ok(MarkovSeries { states, values })
}
