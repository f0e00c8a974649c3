//! The circuit simulator checked against explicit Kronecker-product
//! unitaries, and the shift-rule gradient against finite differences.

use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qgaze_core::generator::{generator_loss, AnsatzConfig, Generator, ParameterVector};
use qgaze_core::statevector::{Axis, ProbVector};

type Mat = Vec<Vec<C>>;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn identity(d: usize) -> Mat {
    (0..d).map(|i| (0..d).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect()).collect()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn mul(a: &Mat, b: &Mat) -> Mat {
    let d = a.len();
    (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn single(n: usize, q: usize, g: &Mat) -> Mat {
    // qubit 0 is the leftmost factor (most significant bit)
    let id = identity(2);
    (0..n).fold(vec![vec![c(1.0)]], |acc, k| kron(&acc, if k == q { g } else { &id }))
}

fn ry(t: f64) -> Mat {
    let (s, co) = (t / 2.0).sin_cos();
    vec![vec![c(co), c(-s)], vec![c(s), c(co)]]
}

fn rz(t: f64) -> Mat {
    vec![
        vec![C::from_polar(1.0, -t / 2.0), c(0.0)],
        vec![c(0.0), C::from_polar(1.0, t / 2.0)],
    ]
}

fn cnot(n: usize, control: usize, target: usize) -> Mat {
    let d = 1 << n;
    let bit = |q: usize| 1 << (n - 1 - q);
    let mut m = vec![vec![c(0.0); d]; d];
    for j in 0..d {
        let out = if j & bit(control) != 0 { j ^ bit(target) } else { j };
        m[out][j] = c(1.0);
    }
    m
}

fn oracle_probs(n: usize, layers: usize, theta: &[f64]) -> Vec<f64> {
    let mut u = identity(1 << n);
    for layer in 0..=layers {
        if layer > 0 && n > 1 {
            for q in 0..n {
                u = mul(&cnot(n, q, (q + 1) % n), &u);
            }
        }
        for q in 0..n {
            let base = layer * 2 * n + 2 * q;
            u = mul(&single(n, q, &ry(theta[base])), &u);
            u = mul(&single(n, q, &rz(theta[base + 1])), &u);
        }
    }
    // first column is U|0>
    u.iter().map(|row| row[0].norm_sqr()).collect()
}

#[test]
fn matches_dense_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, layers) in [(2, 1), (2, 2), (3, 1), (1, 2)] {
        let cfg = AnsatzConfig::new(n, layers).unwrap();
        let gen = Generator::new(cfg);
        for _ in 0..5 {
            let theta = ParameterVector::random(&cfg, &mut rng);
            let got = gen.output_distribution(&theta).unwrap();
            let want = oracle_probs(n, layers, theta.as_slice());
            for (g, w) in got.as_slice().iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{n}x{layers}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn parameter_layout_is_layer_then_qubit_then_axis() {
    let cfg = AnsatzConfig::new(3, 2).unwrap();
    assert_eq!(cfg.param_index(0, 0, Axis::Y), 0);
    assert_eq!(cfg.param_index(0, 0, Axis::Z), 1);
    assert_eq!(cfg.param_index(0, 2, Axis::Z), 5);
    assert_eq!(cfg.param_index(1, 0, Axis::Y), 6);
    assert_eq!(cfg.param_index(2, 2, Axis::Z), 17);
}

#[test]
fn shift_rule_matches_finite_differences() {
    let cfg = AnsatzConfig::new(3, 2).unwrap();
    let gen = Generator::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let theta = ParameterVector::random(&cfg, &mut rng);
        let jac = gen.probability_jacobian(&theta).unwrap();
        for (i, row) in jac.iter().enumerate() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus.0[i] += eps;
            minus.0[i] -= eps;
            let pp = gen.output_distribution(&plus).unwrap();
            let pm = gen.output_distribution(&minus).unwrap();
            for (j, dp) in row.iter().enumerate() {
                let fd = (pp.as_slice()[j] - pm.as_slice()[j]) / (2.0 * eps);
                worst = worst.max((fd - dp).abs());
            }
            assert!(row.iter().sum::<f64>().abs() < 1e-10);
        }
    }
    assert!(worst < 1e-6, "max abs error {worst}");
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let cfg = AnsatzConfig::new(2, 2).unwrap();
    let gen = Generator::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let theta = ParameterVector::random(&cfg, &mut rng);
    let d = [0.3, 0.9, 0.55, 0.12];
    let grad = gen.generator_gradient(&theta, &d).unwrap();
    let loss = |t: &ParameterVector| generator_loss(&gen.output_distribution(t).unwrap(), &d).unwrap();
    for (i, g) in grad.iter().enumerate() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus.0[i] += 1e-5;
        minus.0[i] -= 1e-5;
        let fd = (loss(&plus) - loss(&minus)) / 2e-5;
        assert!((fd - g).abs() < 1e-8, "param {i}: {fd} vs {g}");
    }
}

#[test]
fn sampling_frequencies_follow_probabilities() {
    let p = ProbVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = p.sample(100_000, &mut rng);
    for (j, want) in p.as_slice().iter().enumerate() {
        let f = draws.iter().filter(|&&d| d == j).count() as f64 / 1e5;
        assert!((f - want).abs() < 0.01);
    }
}
