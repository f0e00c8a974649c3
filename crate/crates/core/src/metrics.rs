//! Divergences, histograms and moment statistics.
//!
//! All logarithms are natural. Kurtosis is reported as excess (Fisher)
//! kurtosis.

use crate::error::{Error, Result};

/// Floor applied to `Q` where `P > 0` and `Q = 0` in [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Domain(format!("{name} has invalid entry {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Domain(format!("{name} sums to {total}")));
    }
    Ok(())
}

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            expected: p.len(),
            got: q.len(),
        });
    }
    check_distribution(p, "P")?;
    check_distribution(q, "Q")
}

fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// `KL(P || Q) = sum_i P_i ln(P_i / Q_i)`.
///
/// Bins with `P > 0` and `Q = 0` get `Q` floored at [`KL_FLOOR`], after
/// which `Q` is renormalized.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let needs_floor = p.iter().zip(q).any(|(pi, qi)| *pi > 0.0 && *qi == 0.0);
    let value = if needs_floor {
        let floored: Vec<f64> = p
            .iter()
            .zip(q)
            .map(|(pi, qi)| if *pi > 0.0 && *qi == 0.0 { KL_FLOOR } else { *qi })
            .collect();
        let total: f64 = floored.iter().sum();
        let renorm: Vec<f64> = floored.iter().map(|x| x / total).collect();
        kl_unchecked(p, &renorm)
    } else {
        kl_unchecked(p, q)
    };
    Ok(value.max(0.0))
}

/// Jensen-Shannon divergence `KL(P||M)/2 + KL(Q||M)/2`, `M = (P + Q)/2`.
/// Lies in `[0, ln 2]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    // Each term is accumulated so that swapping P and Q yields the same
    // floating-point sum.
    let value: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            let term = |x: f64| if x > 0.0 { x * (x / m).ln() } else { 0.0 };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            0.5 * (term(lo) + term(hi))
        })
        .sum();
    Ok(value.clamp(0.0, std::f64::consts::LN_2))
}

/// Sums adjacent groups of `factor` bins (e.g. 16 levels down to 8).
pub fn coarsen(p: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || p.len() % factor != 0 {
        return Err(Error::config(format!(
            "cannot merge {} bins in groups of {factor}",
            p.len()
        )));
    }
    Ok(p.chunks(factor).map(|c| c.iter().sum()).collect())
}

/// `n` uniform bins spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(hi > lo) {
        return Err(Error::config(format!("cannot build {n} bins on [{lo}, {hi}]")));
    }
    let width = (hi - lo) / n as f64;
    let mut edges: Vec<f64> = (0..n).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values below the first edge, counted into the first bin.
    pub clamped_low: u64,
    /// Values above the last edge, counted into the last bin.
    pub clamped_high: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Bin probabilities, `None` for an empty histogram.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        Some(self.counts.iter().map(|&c| c as f64 / total as f64).collect())
    }
}

/// Counts `data` into half-open bins `[e_i, e_{i+1})`, the last bin closed.
/// Out-of-range values go to the boundary bins and are tallied.
pub fn histogram(data: &[f64], bin_edges: &[f64]) -> Result<Histogram> {
    if bin_edges.len() < 2 {
        return Err(Error::config("histogram needs at least two edges"));
    }
    if bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("histogram edges must be strictly increasing"));
    }
    let n_bins = bin_edges.len() - 1;
    let (first, last) = (bin_edges[0], bin_edges[n_bins]);
    let mut hist = Histogram {
        bin_edges: bin_edges.to_vec(),
        counts: vec![0; n_bins],
        clamped_low: 0,
        clamped_high: 0,
    };
    for &x in data {
        let bin = if x < first {
            hist.clamped_low += 1;
            0
        } else if x > last {
            hist.clamped_high += 1;
            n_bins - 1
        } else {
            // index of the last edge <= x, capped to the final bin
            bin_edges.partition_point(|&e| e <= x).saturating_sub(1).min(n_bins - 1)
        };
        hist.counts[bin] += 1;
    }
    if hist.clamped_low + hist.clamped_high > 0 {
        log::debug!(
            "histogram clamped {} low and {} high values",
            hist.clamped_low,
            hist.clamped_high
        );
    }
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub mean: f64,
    /// Sample standard deviation (denominator `n - 1`).
    pub std_dev: f64,
    /// `m3 / m2^{3/2}` with central moments over `n`.
    pub skewness: f64,
    /// Excess kurtosis `m4 / m2^2 - 3`.
    pub kurtosis: f64,
}

/// Fewest points accepted by [`moment_report`].
pub const MIN_MOMENT_POINTS: usize = 3;

pub fn moment_report(data: &[f64]) -> Result<MomentReport> {
    if data.len() < MIN_MOMENT_POINTS {
        return Err(Error::config(format!(
            "moment report needs at least {MIN_MOMENT_POINTS} points, got {}",
            data.len()
        )));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in data {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std_dev = (m2 / (n - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(MomentReport {
        mean,
        std_dev,
        skewness,
        kurtosis,
    })
}

/// `ln(max(x, floor))` elementwise.
pub fn log_transform_view(data: &[f64], epsilon_floor: f64) -> Vec<f64> {
    data.iter().map(|&x| x.max(epsilon_floor).ln()).collect()
}

pub const DEFAULT_LOG_FLOOR: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    #[test]
    fn kl_values() {
        let p = [0.5, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        let got = kl_divergence(&p, &[0.25, 0.75]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.14384).abs() < 1e-5);
    }

    #[test]
    fn kl_floors_missing_support() {
        let got = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(got.is_finite() && got > 10.0);
        assert!(matches!(kl_divergence(&[1.0], &[0.5, 0.5]), Err(Error::Shape { .. })));
        assert!(matches!(kl_divergence(&[0.7, 0.7], &[0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn jsd_values() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - LN_2).abs() < 1e-15);

        // composed from two KL terms against the mixture
        let (a, b) = ([0.5, 0.5], [0.25, 0.75]);
        let m = [0.375, 0.625];
        let kl = |x: &[f64; 2]| x.iter().zip(&m).map(|(xi, mi)| xi * (xi / mi).ln()).sum::<f64>();
        let oracle = 0.5 * kl(&a) + 0.5 * kl(&b);
        assert!((js_divergence(&a, &b).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn coarsen_pairs() {
        assert_eq!(coarsen(&[0.1, 0.2, 0.3, 0.4], 2).unwrap(), vec![0.30000000000000004, 0.7]);
        assert!(coarsen(&[0.5, 0.3, 0.2], 2).is_err());
    }

    #[test]
    fn histogram_basics() {
        let h = histogram(&[0.1, 0.6], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.normalized().unwrap(), vec![0.5, 0.5]);

        let empty = histogram(&[], &[0.0, 1.0]).unwrap();
        assert!(empty.is_empty());
        assert!(empty.normalized().is_none());

        let edges = histogram(&[0.0, 0.5, 1.0, -3.0, 7.0], &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(edges.counts, vec![2, 3]);
        assert_eq!((edges.clamped_low, edges.clamped_high), (1, 1));

        assert!(histogram(&[0.1], &[0.0, 0.0, 1.0]).is_err());
        assert!(histogram(&[0.1], &[0.0]).is_err());
    }

    #[test]
    fn moments_small() {
        let r = moment_report(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mean, r.std_dev, r.skewness), (2.0, 1.0, 0.0));
        let r = moment_report(&[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r.std_dev - 0.894_427_190_999_915_9).abs() < 1e-15);
        assert!(moment_report(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn log_view() {
        let out = log_transform_view(&[1.0, E, E * E], DEFAULT_LOG_FLOOR);
        for (o, e) in out.iter().zip([0.0, 1.0, 2.0]) {
            assert!((o - e).abs() < 1e-15);
        }
        let floored = log_transform_view(&[0.0], 1e-9);
        assert!((floored[0] + 20.723_265_836_946_41).abs() < 1e-12);
    }
}
