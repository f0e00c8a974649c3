use rand::Rng;

use super::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Mlp,
    Lstm,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "lstm" => Ok(Self::Lstm),
            other => Err(Error::config(format!("unknown discriminator architecture `{other}`"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mlp => "mlp",
            Self::Lstm => "lstm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub architecture: Architecture,
    pub input_length: usize,
    pub hidden_size: usize,
    pub num_recurrent_layers: usize,
    pub bidirectional: bool,
    pub dropout_rate: f64,
    /// Hidden widths of the MLP; for the LSTM the first entry is the width
    /// of the readout's intermediate linear layer (64 when empty).
    pub mlp_hidden: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::mlp()
    }
}

impl DiscriminatorConfig {
    /// Per-sample MLP: one scalar in, hidden `[64, 32]`, dropout 0.3.
    pub fn mlp() -> Self {
        Self {
            architecture: Architecture::Mlp,
            input_length: 1,
            hidden_size: 128,
            num_recurrent_layers: 3,
            bidirectional: true,
            dropout_rate: 0.3,
            mlp_hidden: vec![64, 32],
        }
    }

    /// Three-layer bidirectional LSTM with 128 hidden units over length-100 sequences.
    pub fn lstm() -> Self {
        Self {
            architecture: Architecture::Lstm,
            input_length: 100,
            ..Self::mlp()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.input_length == 0 || self.mlp_hidden.contains(&0) {
            return Err(Error::config("layer widths and input length must be at least 1"));
        }
        if self.architecture == Architecture::Lstm
            && (self.hidden_size == 0 || self.num_recurrent_layers == 0)
        {
            return Err(Error::config("LSTM needs hidden_size >= 1 and at least one layer"));
        }
        Ok(())
    }

    fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    fn readout_width(&self) -> usize {
        self.mlp_hidden.first().copied().unwrap_or(64)
    }

    /// Ordered weight blocks. Biases are column vectors.
    pub fn layout(&self) -> Vec<Block> {
        let mut blocks = Vec::new();
        let mut push = |name: String, rows: usize, cols: usize, fan_in: usize| {
            blocks.push(Block {
                name,
                rows,
                cols,
                fan_in,
            })
        };
        match self.architecture {
            Architecture::Mlp => {
                let mut widths = vec![self.input_length];
                widths.extend(&self.mlp_hidden);
                widths.push(1);
                for (k, w) in widths.windows(2).enumerate() {
                    push(format!("linear{k}.weight"), w[1], w[0], w[0]);
                    push(format!("linear{k}.bias"), w[1], 1, w[0]);
                }
            }
            Architecture::Lstm => {
                let h = self.hidden_size;
                let dirs = self.directions();
                for layer in 0..self.num_recurrent_layers {
                    let input = if layer == 0 { 1 } else { h * dirs };
                    for dir in 0..dirs {
                        let tag = format!("lstm{layer}.{}", if dir == 0 { "fwd" } else { "bwd" });
                        push(format!("{tag}.w_ih"), 4 * h, input, h);
                        push(format!("{tag}.w_hh"), 4 * h, h, h);
                        push(format!("{tag}.bias"), 4 * h, 1, h);
                    }
                }
                let r = self.readout_width();
                push("readout0.weight".into(), r, h * dirs, h * dirs);
                push("readout0.bias".into(), r, 1, h * dirs);
                push("readout1.weight".into(), 1, r, r);
                push("readout1.bias".into(), 1, 1, r);
            }
        }
        blocks
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|b| b.rows * b.cols).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    fan_in: usize,
}

/// Flat discriminator weights with the layout derived from a config.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    values: Vec<f64>,
}

impl DiscriminatorParams {
    pub fn zeros(config: &DiscriminatorConfig) -> Self {
        Self {
            values: vec![0.0; config.parameter_count()],
        }
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per block.
    pub fn init<R: Rng + ?Sized>(config: &DiscriminatorConfig, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(config.parameter_count());
        for block in config.layout() {
            let bound = 1.0 / (block.fan_in as f64).sqrt();
            values.extend((0..block.rows * block.cols).map(|_| rng.random_range(-bound..=bound)));
        }
        Self { values }
    }

    pub fn from_values(config: &DiscriminatorConfig, values: Vec<f64>) -> Result<Self> {
        let expected = config.parameter_count();
        if values.len() != expected {
            return Err(Error::Shape {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite discriminator weight".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A recorded batched forward pass. Column `b` of the input holds sample `b`.
#[derive(Debug)]
pub struct DiscriminatorTape {
    pub(crate) tape: Tape,
    pub(crate) params: Vec<(Var, usize)>,
    pub(crate) input: Var,
    pub(crate) output: Var,
    n_params: usize,
}

impl DiscriminatorTape {
    pub fn scores(&self) -> Vec<f64> {
        self.tape.value(self.output).data().to_vec()
    }

    pub fn batch_size(&self) -> usize {
        self.tape.shape(self.output).1
    }

    /// Gradient of `sum_b seed[b] * score[b]` w.r.t. the flat parameters.
    /// Consumes the tape.
    pub fn backward_batch(&mut self, seeds: &[f64]) -> Result<Vec<f64>> {
        if seeds.len() != self.batch_size() {
            return Err(Error::Shape {
                expected: self.batch_size(),
                got: seeds.len(),
            });
        }
        let adj = self
            .tape
            .backward(self.output, Matrix::from_vec(1, seeds.len(), seeds.to_vec()))?;
        Ok(self.gather(&adj))
    }

    /// Single-sample form of [`Self::backward_batch`].
    pub fn backward(&mut self, seed_adjoint: f64) -> Result<Vec<f64>> {
        self.backward_batch(&[seed_adjoint])
    }

    pub(crate) fn gather(&self, adj: &super::autodiff::Adjoints) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params];
        for &(var, offset) in &self.params {
            if let Some(m) = adj.get(var) {
                grad[offset..offset + m.data().len()].copy_from_slice(m.data());
            }
        }
        grad
    }
}

/// Scores a batch of sequences (each `input_length` long). In train mode
/// dropout masks are drawn from `rng`; eval mode never touches `rng`.
pub fn forward_batch<R: Rng + ?Sized>(
    params: &DiscriminatorParams,
    config: &DiscriminatorConfig,
    sequences: &[&[f64]],
    mode: DropoutMode,
    rng: &mut R,
) -> Result<(Vec<f64>, DiscriminatorTape)> {
    if sequences.is_empty() {
        return Err(Error::config("empty discriminator batch"));
    }
    let len = config.input_length;
    let mut data = vec![0.0; len * sequences.len()];
    for (b, seq) in sequences.iter().enumerate() {
        if seq.len() != len {
            return Err(Error::Shape {
                expected: len,
                got: seq.len(),
            });
        }
        for (t, &x) in seq.iter().enumerate() {
            data[t * sequences.len() + b] = x;
        }
    }
    let tape = record(params, config, Matrix::from_vec(len, sequences.len(), data), mode, rng)?;
    Ok((tape.scores(), tape))
}

/// Scores one sequence.
pub fn forward<R: Rng + ?Sized>(
    params: &DiscriminatorParams,
    config: &DiscriminatorConfig,
    sequence: &[f64],
    mode: DropoutMode,
    rng: &mut R,
) -> Result<(f64, DiscriminatorTape)> {
    let (scores, tape) = forward_batch(params, config, &[sequence], mode, rng)?;
    Ok((scores[0], tape))
}

/// Builds the graph for an `input_length x batch` input matrix.
pub(crate) fn record<R: Rng + ?Sized>(
    params: &DiscriminatorParams,
    config: &DiscriminatorConfig,
    input: Matrix,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<DiscriminatorTape> {
    config.validate()?;
    if params.len() != config.parameter_count() {
        return Err(Error::Shape {
            expected: config.parameter_count(),
            got: params.len(),
        });
    }
    let batch = input.cols();
    let mut tape = Tape::new();
    let mut param_vars = Vec::new();
    let mut offset = 0;
    for block in config.layout() {
        let n = block.rows * block.cols;
        let m = Matrix::from_vec(block.rows, block.cols, params.values[offset..offset + n].to_vec());
        param_vars.push((tape.leaf(m), offset));
        offset += n;
    }
    let x = tape.leaf(input);
    let mut weights = param_vars.iter().map(|&(v, _)| v);
    let mut next = || weights.next().expect("layout covers every block");

    let dropout = |tape: &mut Tape, h: Var, rng: &mut R| -> Var {
        if mode == DropoutMode::Eval || config.dropout_rate == 0.0 {
            return h;
        }
        let keep = 1.0 - config.dropout_rate;
        let (rows, cols) = tape.shape(h);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = tape.constant(Matrix::from_vec(rows, cols, mask));
        tape.mul(h, m)
    };

    let logits = match config.architecture {
        Architecture::Mlp => {
            let n_linear = config.mlp_hidden.len() + 1;
            let mut h = x;
            for k in 0..n_linear {
                let (w, b) = (next(), next());
                let z = tape.matmul(w, h);
                let z = tape.add_bias(z, b);
                if k + 1 == n_linear {
                    h = z;
                } else {
                    h = tape.tanh(z);
                    if k == 0 {
                        h = dropout(&mut tape, h, rng);
                    }
                }
            }
            h
        }
        Architecture::Lstm => {
            let steps = config.input_length;
            let hsz = config.hidden_size;
            let dirs = config.directions();
            let mut layer_input: Vec<Var> = (0..steps).map(|t| tape.slice_rows(x, t, 1)).collect();
            let mut finals = Vec::new();
            for _ in 0..config.num_recurrent_layers {
                let mut outputs: Vec<Vec<Var>> = Vec::with_capacity(dirs);
                finals.clear();
                for dir in 0..dirs {
                    let (w_ih, w_hh, bias) = (next(), next(), next());
                    let zero = tape.constant(Matrix::zeros(hsz, batch));
                    let (mut h, mut c) = (zero, zero);
                    let mut seq_out = vec![zero; steps];
                    let order: Vec<usize> = if dir == 0 {
                        (0..steps).collect()
                    } else {
                        (0..steps).rev().collect()
                    };
                    for t in order {
                        let a = tape.matmul(w_ih, layer_input[t]);
                        let r = tape.matmul(w_hh, h);
                        let gates = tape.add(a, r);
                        let gates = tape.add_bias(gates, bias);
                        let i = tape.slice_rows(gates, 0, hsz);
                        let i = tape.sigmoid(i);
                        let f = tape.slice_rows(gates, hsz, hsz);
                        let f = tape.sigmoid(f);
                        let g = tape.slice_rows(gates, 2 * hsz, hsz);
                        let g = tape.tanh(g);
                        let o = tape.slice_rows(gates, 3 * hsz, hsz);
                        let o = tape.sigmoid(o);
                        let fc = tape.mul(f, c);
                        let ig = tape.mul(i, g);
                        c = tape.add(fc, ig);
                        let tc = tape.tanh(c);
                        h = tape.mul(o, tc);
                        seq_out[t] = h;
                    }
                    finals.push(h);
                    outputs.push(seq_out);
                }
                layer_input = if dirs == 2 {
                    (0..steps)
                        .map(|t| tape.concat_rows(outputs[0][t], outputs[1][t]))
                        .collect()
                } else {
                    outputs.pop().expect("one direction")
                };
            }
            let features = if dirs == 2 {
                tape.concat_rows(finals[0], finals[1])
            } else {
                finals[0]
            };
            let (w0, b0, w1, b1) = (next(), next(), next(), next());
            let z = tape.matmul(w0, features);
            let z = tape.add_bias(z, b0);
            let z = dropout(&mut tape, z, rng);
            let z = tape.matmul(w1, z);
            tape.add_bias(z, b1)
        }
    };
    let output = tape.sigmoid(logits);
    if !tape.value(output).all_finite() {
        return Err(Error::Numeric("non-finite discriminator activation".into()));
    }
    Ok(DiscriminatorTape {
        tape,
        params: param_vars,
        input: x,
        output,
        n_params: params.len(),
    })
}
