use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use qgaze_core::checkpoint::Checkpoint;
use qgaze_core::config::{parse_grid, RunConfig};
use qgaze_core::data::{
    compute_velocity, discretize, discretize_value, load_series_csv, resample_mean,
    scale_with, write_discrete_csv, write_series_csv, DiscreteSeries, Eye, MinMax, VelocitySeries,
};
use qgaze_core::generator::{bin_center, AnsatzConfig, Generator};
use qgaze_core::markov::{build_transition_matrix, generate_series, KdeModel, TransitionMatrix};
use qgaze_core::metrics::{
    coarsen, histogram, js_divergence, log_transform_view, moment_report, uniform_edges,
};
use qgaze_core::statevector::ProbVector;
use qgaze_core::trainer::{stream_rng, streams, train};
use qgaze_core::Error;

use crate::{Common, EvaluateArgs, GenerateArgs, IngestArgs, MarkovArgs, TrainArgs};

pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        self.code
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Attaches the file a data error came from.
fn in_file<T>(path: &Path, r: qgaze_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        if !err.message.starts_with(&path.display().to_string()) {
            err.message = format!("{}: {}", path.display(), err.message);
        }
        err
    })
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => in_file(p, RunConfig::load(p)).map_err(|e| CliError::usage(e.message))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn finish_config(cfg: &RunConfig) -> CliResult {
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|()| out.flush()).map_err(|e| io_err(path, e))
}

fn write_config(dir: &Path, cfg: &RunConfig) -> CliResult {
    write_file(&dir.join("config.txt"), |w| w.write_all(cfg.to_text().as_bytes()))
}

fn read_series(path: &Path) -> CliResult<Vec<f64>> {
    let values = in_file(path, load_series_csv(path))?;
    if values.is_empty() {
        return Err(CliError {
            code: 1,
            message: format!("{}: series is empty", path.display()),
        });
    }
    Ok(values)
}

/// Series already in `[0, 1]` are taken as scaled.
fn scaled_series(path: &Path) -> CliResult<VelocitySeries> {
    let values = read_series(path)?;
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CliError {
            code: 1,
            message: format!("{}: values must be MinMax-scaled to [0, 1]", path.display()),
        });
    }
    Ok(VelocitySeries {
        values,
        sample_rate: qgaze_core::data::DEFAULT_SAMPLE_RATE,
        scaled: true,
        scale_min: 0.0,
        scale_max: 1.0,
    })
}

pub fn ingest(args: &IngestArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.resample_interval {
        cfg.resample_interval = v;
    }
    if let Some(v) = args.sample_rate {
        cfg.sample_rate = v;
    }
    if let Some(v) = args.levels {
        cfg.levels = v;
    }
    finish_config(&cfg)?;

    let bytes = fs::read(&args.input).map_err(|e| io_err(&args.input, e))?;
    let records = in_file(&args.input, qgaze_core::data::read_gaze_csv(bytes.as_slice()))?;
    let dt = 1.0 / cfg.sample_rate;
    let out = &args.common.out_dir;
    create_dir(out)?;

    let mut eyes = Vec::new();
    for (eye, name) in [(Eye::Left, "left"), (Eye::Right, "right")] {
        match compute_velocity(&records, eye, dt) {
            Ok(v) => {
                write_file(&out.join(format!("velocity_{name}.csv")), |w| write_series_csv(w, &v.values))?;
                eyes.push((name, resample_mean(&v, cfg.resample_interval)?));
            }
            Err(Error::Data(msg)) => log::warn!("skipping {name} eye: {msg}"),
            Err(e) => return in_file(&args.input, Err(e)),
        }
    }
    if eyes.is_empty() {
        return Err(CliError {
            code: 1,
            message: format!("{}: no eye has two consecutive samples", args.input.display()),
        });
    }

    let pooled: Vec<f64> = eyes.iter().flat_map(|(_, s)| s.values.iter().copied()).collect();
    let fit = MinMax::fit(&pooled)?;
    let pooled = scale_with(&VelocitySeries::raw(pooled, eyes[0].1.sample_rate), fit);
    write_file(&out.join("scaled.csv"), |w| write_series_csv(w, &pooled.values))?;
    for (name, series) in &eyes {
        let scaled = scale_with(series, fit);
        write_file(&out.join(format!("scaled_{name}.csv")), |w| write_series_csv(w, &scaled.values))?;
    }
    let discrete = discretize(&pooled, cfg.levels)?;
    write_file(&out.join(format!("discrete_{}.csv", cfg.levels)), |w| write_discrete_csv(w, &discrete))?;

    let digest = hex::encode(Sha256::digest(&bytes));
    write_file(&out.join("provenance.txt"), |w| {
        writeln!(w, "input = {}", args.input.display())?;
        writeln!(w, "input_sha256 = {digest}")?;
        writeln!(w, "records = {}", records.len())?;
        writeln!(w, "sample_rate = {:?}", cfg.sample_rate)?;
        writeln!(w, "resample_interval = {:?}", cfg.resample_interval)?;
        writeln!(w, "levels = {}", cfg.levels)?;
        writeln!(w, "scale_min = {:?}", fit.min)?;
        writeln!(w, "scale_max = {:?}", fit.max)?;
        writeln!(w, "eyes = {}", eyes.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","))
    })?;
    write_config(out, &cfg)
}

pub fn run_dir_name(qubits: usize, layers: usize) -> String {
    format!("q{qubits}_l{layers}")
}

pub fn train_qgan(args: &TrainArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    let usage = |e: Error| CliError::usage(e.to_string());
    if let Some(v) = &args.qubits {
        cfg.qubits = parse_grid(v).map_err(usage)?;
    }
    if let Some(v) = &args.layers {
        cfg.layers = parse_grid(v).map_err(usage)?;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.seq_len {
        cfg.seq_len = v;
    }
    if let Some(v) = &args.disc_arch {
        cfg.disc_arch = v.parse().map_err(usage)?;
    }
    if let Some(v) = args.penalty_weight {
        cfg.penalty_weight = v;
    }
    finish_config(&cfg)?;

    let data = scaled_series(&args.data)?;
    let out = &args.common.out_dir;
    create_dir(out)?;
    write_config(out, &cfg)?;
    let disc = cfg.discriminator();
    let training = cfg.training();
    for &q in &cfg.qubits {
        let dataset = discretize(&data, 1 << q)?;
        let target = dataset.distribution()?;
        for &l in &cfg.layers {
            let gen = AnsatzConfig::new(q, l)?;
            log::info!("training {q} qubits, {l} layers");
            let result = train(gen, &disc, &training, &dataset)?;
            let dir = out.join(run_dir_name(q, l));
            create_dir(&dir)?;
            write_config(&dir, &cfg)?;
            let ck = result.checkpoint(gen, disc.clone());
            ck.save(&dir.join("checkpoint.txt"))?;
            write_file(&dir.join("training_log.csv"), |w| result.log.write_csv(w, args.record_time))?;
            let probs = Generator::new(gen).output_distribution(&result.theta)?;
            write_probabilities(&dir.join("probabilities.csv"), &probs)?;
            let jsd = js_divergence(probs.as_slice(), &target)?;
            write_file(&dir.join("final_jsd.csv"), |w| {
                writeln!(w, "qubits,layers,jsd")?;
                writeln!(w, "{q},{l},{jsd:.8e}")
            })?;
        }
    }
    Ok(())
}

fn write_probabilities(path: &Path, probs: &ProbVector) -> CliResult {
    write_file(path, |w| {
        writeln!(w, "index,probability")?;
        for (i, p) in probs.as_slice().iter().enumerate() {
            writeln!(w, "{i},{p:.16e}")?;
        }
        Ok(())
    })
}

pub fn fit_markov(args: &MarkovArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.states {
        cfg.states = v;
    }
    if let Some(v) = args.length {
        cfg.markov_length = v;
    }
    finish_config(&cfg)?;
    let values = read_series(&args.data)?;
    let model = in_file(&args.data, KdeModel::fit(values))?;
    let matrix = build_transition_matrix(&model, cfg.states, cfg.markov_rule)?;
    let start = qgaze_core::markov::state_of(model.samples()[0], matrix.bin_edges());
    let series = generate_series(&matrix, start, cfg.markov_length, &mut stream_rng(cfg.seed, streams::SAMPLING))?;

    let out = &args.common.out_dir;
    create_dir(out)?;
    write_config(out, &cfg)?;
    write_file(&out.join("transition_matrix.csv"), |w| matrix.write_csv(w))?;
    write_file(&out.join("markov_series.csv"), |w| write_series_csv(w, &series.values))?;
    write_file(&out.join("markov_states.csv"), |w| {
        writeln!(w, "index,level")?;
        for (i, s) in series.states.iter().enumerate() {
            writeln!(w, "{i},{s}")?;
        }
        Ok(())
    })?;
    write_file(&out.join("bandwidth.txt"), |w| writeln!(w, "{:?}", model.bandwidth()))
}

pub fn generate(args: &GenerateArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    finish_config(&cfg)?;
    if args.samples == 0 {
        return Err(CliError::usage("--samples must be at least 1"));
    }
    let out = &args.common.out_dir;
    let mut rng = stream_rng(cfg.seed, streams::SAMPLING);
    if let Some(path) = &args.checkpoint {
        let path = &checkpoint_path(path);
        let ck = in_file(path, Checkpoint::load(path))?;
        let probs = Generator::new(ck.generator).output_distribution(&ck.theta)?;
        let values: Vec<f64> = probs
            .sample(args.samples, &mut rng)
            .into_iter()
            .map(|i| bin_center(i, probs.len()))
            .collect();
        create_dir(out)?;
        write_config(out, &cfg)?;
        write_probabilities(&out.join("probabilities.csv"), &probs)?;
        write_file(&out.join("generated_qgan.csv"), |w| write_series_csv(w, &values))
    } else {
        let path = args.matrix.as_ref().expect("clap requires one source");
        let matrix = in_file(path, TransitionMatrix::load(path))?;
        let series = generate_series(&matrix, args.start, args.samples, &mut rng)
            .map_err(|e| CliError::usage(e.to_string()))?;
        create_dir(out)?;
        write_config(out, &cfg)?;
        write_file(&out.join("generated_markov.csv"), |w| write_series_csv(w, &series.values))
    }
}

struct Model {
    name: String,
    qubits: String,
    layers: String,
    /// Distribution on the shared support.
    dist: Vec<f64>,
    samples: Vec<f64>,
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("checkpoint.txt")
    } else {
        p.to_path_buf()
    }
}

fn discrete_dist(values: &[f64], levels: usize) -> qgaze_core::Result<Vec<f64>> {
    let indices = values.iter().map(|&x| discretize_value(x, levels)).collect();
    DiscreteSeries::new(indices, levels)?.distribution()
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.levels {
        cfg.levels = v;
    }
    if let Some(v) = args.hist_bins {
        cfg.hist_bins = v;
    }
    finish_config(&cfg)?;
    let levels = cfg.levels;
    let real = scaled_series(&args.real)?.values;
    let target = discrete_dist(&real, levels)?;
    let mut rng = stream_rng(cfg.seed, streams::SAMPLING);

    let mut models = Vec::new();
    for p in &args.qgan {
        let path = checkpoint_path(p);
        let ck = in_file(&path, Checkpoint::load(&path))?;
        let probs = Generator::new(ck.generator).output_distribution(&ck.theta)?;
        let native = probs.len();
        if native < levels || native % levels != 0 {
            return Err(CliError::usage(format!(
                "{}: {native} generator levels cannot be merged onto {levels} shared bins",
                path.display()
            )));
        }
        let samples = probs
            .sample(real.len(), &mut rng)
            .into_iter()
            .map(|i| bin_center(i, native))
            .collect();
        models.push(Model {
            name: "qgan".into(),
            qubits: ck.generator.n_qubits.to_string(),
            layers: ck.generator.layers.to_string(),
            dist: coarsen(probs.as_slice(), native / levels)?,
            samples,
        });
    }
    let mut plain = |name: String, path: &Path| -> CliResult {
        let samples = scaled_series(path)?.values;
        models.push(Model {
            name,
            qubits: "-".into(),
            layers: "-".into(),
            dist: discrete_dist(&samples, levels)?,
            samples,
        });
        Ok(())
    };
    if let Some(p) = &args.markov {
        plain("markov".into(), p)?;
    }
    for p in &args.series {
        let stem = p.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned());
        plain(stem, p)?;
    }
    if models.is_empty() {
        return Err(CliError::usage("nothing to evaluate; pass --qgan, --markov or --series"));
    }

    let out = &args.common.out_dir;
    create_dir(out)?;
    write_config(out, &cfg)?;
    write_file(&out.join("report_jsd.csv"), |w| {
        writeln!(w, "model,qubits,layers,jsd")?;
        for m in &models {
            let jsd = js_divergence(&m.dist, &target).map_err(std::io::Error::other)?;
            writeln!(w, "{},{},{},{jsd:.8e}", m.name, m.qubits, m.layers)?;
        }
        Ok(())
    })?;

    let mut moment_rows = vec![("real".to_string(), moment_report(&real)?)];
    for m in &models {
        moment_rows.push((model_label(m), moment_report(&m.samples)?));
    }
    write_file(&out.join("report_moments.csv"), |w| {
        writeln!(w, "model,mean,std_dev,skewness,kurtosis")?;
        for (name, r) in &moment_rows {
            writeln!(w, "{name},{:.8e},{:.8e},{:.8e},{:.8e}", r.mean, r.std_dev, r.skewness, r.kurtosis)?;
        }
        Ok(())
    })?;

    let edges = uniform_edges(0.0, 1.0, cfg.hist_bins)?;
    let log_real = log_transform_view(&real, cfg.log_floor);
    let lo = log_real.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = log_real.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_edges = uniform_edges(lo, if hi > lo { hi } else { lo + 1.0 }, cfg.hist_bins)?;
    let dump = |label: &str, values: &[f64]| -> CliResult {
        write_histogram(&out.join(format!("hist_{label}.csv")), values, &edges)?;
        write_histogram(
            &out.join(format!("hist_log_{label}.csv")),
            &log_transform_view(values, cfg.log_floor),
            &log_edges,
        )
    };
    dump("real", &real)?;
    for m in &models {
        dump(&model_label(m), &m.samples)?;
    }
    Ok(())
}

fn model_label(m: &Model) -> String {
    if m.name == "qgan" {
        format!("qgan_q{}_l{}", m.qubits, m.layers)
    } else {
        m.name.clone()
    }
}

fn write_histogram(path: &Path, values: &[f64], edges: &[f64]) -> CliResult {
    let h = histogram(values, edges)?;
    let probs = h.normalized().unwrap_or_else(|| vec![0.0; h.counts.len()]);
    write_file(path, |w| {
        writeln!(w, "bin_left,bin_right,count,probability")?;
        for (i, (c, p)) in h.counts.iter().zip(&probs).enumerate() {
            writeln!(w, "{:.8e},{:.8e},{c},{p:.8e}", edges[i], edges[i + 1])?;
        }
        Ok(())
    })
}
