//! Plain-text checkpoints for trained parameters.
//!
//! ```text
//! # generator
//! 3,2
//! <one angle per line>
//! # discriminator
//! architecture=mlp input_length=1 ...
//! <one weight per line>
//! ```
//!
//! Values use 17 significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::discriminator::{DiscriminatorConfig, DiscriminatorParams};
use crate::error::{Error, Result};
use crate::generator::{AnsatzConfig, ParameterVector};

const GENERATOR_SECTION: &str = "# generator";
const DISCRIMINATOR_SECTION: &str = "# discriminator";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: AnsatzConfig,
    pub theta: ParameterVector,
    pub discriminator: DiscriminatorConfig,
    pub phi: DiscriminatorParams,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{GENERATOR_SECTION}");
        let _ = writeln!(s, "{},{}", self.generator.n_qubits, self.generator.layers);
        for v in self.theta.as_slice() {
            let _ = writeln!(s, "{v:.16e}");
        }
        let _ = writeln!(s, "{DISCRIMINATOR_SECTION}");
        let _ = writeln!(s, "{}", disc_header(&self.discriminator));
        for v in self.phi.values() {
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let find = |name: &str| lines.iter().position(|(_, l)| *l == name);
        let g = find(GENERATOR_SECTION)
            .ok_or_else(|| Error::parse(lines.len(), format!("missing section `{GENERATOR_SECTION}`")))?;
        let last_line = lines.last().map_or(0, |(n, _)| *n);
        let d = find(DISCRIMINATOR_SECTION).ok_or_else(|| {
            Error::parse(last_line, format!("missing section `{DISCRIMINATOR_SECTION}`"))
        })?;
        if d < g {
            return Err(Error::parse(lines[d].0, "discriminator section precedes generator"));
        }

        let gen_body = &lines[g + 1..d];
        let (&(hl, header), angles) = gen_body
            .split_first()
            .ok_or_else(|| Error::parse(lines[g].0, "generator section has no header"))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::parse(hl, format!("bad generator header `{header}`"))))
            .collect::<Result<_>>()?;
        let [n_qubits, layers] = dims[..] else {
            return Err(Error::parse(hl, format!("generator header needs `n_qubits,layers`, got `{header}`")));
        };
        let generator = AnsatzConfig::new(n_qubits, layers)?;
        let theta = ParameterVector(parse_values(angles)?);
        if theta.len() != generator.parameter_count() {
            return Err(Error::parse(
                lines[d].0,
                format!("expected {} generator angles, got {}", generator.parameter_count(), theta.len()),
            ));
        }

        let disc_body = &lines[d + 1..];
        let (&(hl, header), weights) = disc_body
            .split_first()
            .ok_or_else(|| Error::parse(lines[d].0, "discriminator section has no header"))?;
        let discriminator = parse_disc_header(hl, header)?;
        let values = parse_values(weights)?;
        if values.len() != discriminator.parameter_count() {
            return Err(Error::parse(
                last_line,
                format!(
                    "expected {} discriminator weights, got {}",
                    discriminator.parameter_count(),
                    values.len()
                ),
            ));
        }
        let phi = DiscriminatorParams::from_values(&discriminator, values)?;
        Ok(Self {
            generator,
            theta,
            discriminator,
            phi,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Loads and checks that the stored architecture matches the expected one.
    pub fn restore(
        path: &Path,
        generator: &AnsatzConfig,
        discriminator: &DiscriminatorConfig,
    ) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.generator != *generator {
            return Err(Error::config(format!(
                "checkpoint generator is {}x{}, expected {}x{}",
                ck.generator.n_qubits, ck.generator.layers, generator.n_qubits, generator.layers
            )));
        }
        if ck.discriminator != *discriminator {
            return Err(Error::config(format!(
                "checkpoint discriminator `{}` differs from `{}`",
                disc_header(&ck.discriminator),
                disc_header(discriminator)
            )));
        }
        Ok(ck)
    }
}

fn parse_values(lines: &[(usize, &str)]) -> Result<Vec<f64>> {
    lines
        .iter()
        .map(|&(n, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(n, format!("bad value `{l}`")))
        })
        .collect()
}

fn disc_header(c: &DiscriminatorConfig) -> String {
    let hidden: Vec<String> = c.mlp_hidden.iter().map(ToString::to_string).collect();
    format!(
        "architecture={} input_length={} hidden_size={} num_recurrent_layers={} bidirectional={} dropout_rate={:?} mlp_hidden={}",
        c.architecture,
        c.input_length,
        c.hidden_size,
        c.num_recurrent_layers,
        c.bidirectional,
        c.dropout_rate,
        hidden.join(";")
    )
}

fn parse_disc_header(line: usize, header: &str) -> Result<DiscriminatorConfig> {
    let mut c = DiscriminatorConfig::mlp();
    let mut seen = 0;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected key=value, got `{field}`")))?;
        let bad = || Error::parse(line, format!("bad value for `{key}`: `{value}`"));
        match key {
            "architecture" => c.architecture = value.parse().map_err(|_| bad())?,
            "input_length" => c.input_length = value.parse().map_err(|_| bad())?,
            "hidden_size" => c.hidden_size = value.parse().map_err(|_| bad())?,
            "num_recurrent_layers" => c.num_recurrent_layers = value.parse().map_err(|_| bad())?,
            "bidirectional" => c.bidirectional = value.parse().map_err(|_| bad())?,
            "dropout_rate" => c.dropout_rate = value.parse().map_err(|_| bad())?,
            "mlp_hidden" => {
                c.mlp_hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(';').map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?
                }
            }
            other => return Err(Error::parse(line, format!("unknown discriminator field `{other}`"))),
        }
        seen += 1;
    }
    if seen != 7 {
        return Err(Error::parse(line, "discriminator header is incomplete"));
    }
    c.validate()?;
    Ok(c)
}
