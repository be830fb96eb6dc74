use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hybridpf::trace::TraceWriter;
use hybridpf::{ModelKind, RunRecord, SarimaxCoeffs, SarimaxSpec};
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode, Series};
use crate::{CliError, SynthArgs, SynthKind};

/// Command-line values that replace config-file entries.
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub passes: Option<usize>,
}

fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &o.out {
        cfg.output = Some(out.clone());
    }
    if let Some(model) = o.model {
        cfg.model = Some(model);
    }
    if let Some(passes) = o.passes {
        cfg.protocol.passes = passes;
    }
    Ok(cfg)
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(hybridpf::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Metric of one finished run.
#[derive(Debug, Clone, Copy, Serialize)]
struct Score {
    steps: usize,
    final_cum_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mape: Option<f64>,
    runtime_secs: f64,
}

impl Score {
    fn headline(&self) -> f64 {
        self.mape.unwrap_or(self.final_cum_mse)
    }
}

fn execute<F>(
    cfg: &ExperimentConfig,
    series: &Series,
    model: ModelKind,
    mut sink: F,
) -> Result<Score, CliError>
where
    F: FnMut(&RunRecord) -> hybridpf::Result<()>,
{
    let pipeline = cfg.pipeline(model, series.train.n_exog());
    let start = Instant::now();
    let (steps, final_cum_mse, mape) = match &series.test {
        None => {
            let mut last = (0, 0.0);
            hybridpf::run_online_with(&series.train, &pipeline, |r| {
                last = (last.0 + 1, r.cum_mse);
                sink(r)
            })?;
            (last.0, last.1, None)
        }
        Some(test) => {
            let outcome =
                hybridpf::run_offline(&series.train, test, cfg.protocol.passes, &pipeline)?;
            for r in &outcome.records {
                sink(r)?;
            }
            let last = outcome.records.last().map_or(0.0, |r| r.cum_mse);
            (outcome.records.len(), last, Some(outcome.mape))
        }
    };
    Ok(Score {
        steps,
        final_cum_mse,
        mape,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    model: ModelKind,
    protocol: Mode,
    #[serde(flatten)]
    score: Score,
    seed: u64,
    trace: String,
    config: &'a str,
}

pub fn run(config_path: &Path, overrides: Overrides) -> Result<(), CliError> {
    let cfg = load_config(config_path, &overrides)?;
    let model = cfg
        .model
        .ok_or_else(|| CliError::Config("no model given (set `model` or pass --model)".into()))?;
    cfg.validate(model)?;
    let out = cfg.output.clone().ok_or_else(|| {
        CliError::Config("no output path given (set `output` or pass --out)".into())
    })?;
    let series = cfg.load_series()?;

    let to_stdout = out.as_os_str() == "-";
    let sink: Box<dyn Write> = if to_stdout {
        Box::new(std::io::stdout().lock())
    } else {
        Box::new(BufWriter::new(
            File::create(&out).map_err(|e| io_error(&out, e))?,
        ))
    };
    let mut writer = TraceWriter::new(sink);
    let score = execute(&cfg, &series, model, |r| {
        writer.write(r).map_err(|source| hybridpf::Error::Io {
            path: out.clone(),
            source,
        })
    })?;
    drop(writer);

    let echo = cfg.to_toml();
    let summary = RunSummary {
        model,
        protocol: cfg.protocol.mode,
        score,
        seed: cfg.seed,
        trace: out.display().to_string(),
        config: &echo,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if to_stdout {
        eprintln!("{text}");
    } else {
        let _ = writeln!(std::io::stdout(), "{text}");
        let path = summary_path(&out);
        std::fs::write(&path, format!("{text}\n")).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

/// `<trace>.summary.json`
pub fn summary_path(trace: &Path) -> PathBuf {
    let mut name = trace.as_os_str().to_owned();
    name.push(".summary.json");
    PathBuf::from(name)
}

#[derive(Serialize)]
struct BenchRow {
    model: ModelKind,
    #[serde(flatten)]
    score: Score,
}

#[derive(Serialize)]
struct BenchReport<'a> {
    metric: &'static str,
    seed: u64,
    rows: Vec<BenchRow>,
    config: &'a str,
}

pub fn bench(config_path: &Path, overrides: Overrides) -> Result<(), CliError> {
    let cfg = load_config(config_path, &overrides)?;
    if cfg.models.is_empty() {
        return Err(CliError::Config(
            "bench needs a non-empty `models` list".into(),
        ));
    }
    let mut seen = HashSet::new();
    for m in &cfg.models {
        if !seen.insert(*m) {
            return Err(CliError::Config(format!(
                "model {m} is listed more than once"
            )));
        }
    }
    for m in &cfg.models {
        cfg.validate(*m)?;
    }
    let series = cfg.load_series()?;
    let metric = if series.test.is_some() {
        "mape"
    } else {
        "final_cum_mse"
    };

    let mut rows = Vec::new();
    for &model in &cfg.models {
        let score = execute(&cfg, &series, model, |_| Ok(()))?;
        rows.push(BenchRow { model, score });
    }

    let width = rows
        .iter()
        .map(|r| r.model.name().len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{:<width$}  {metric:>14}", "model");
    for r in &rows {
        let _ = writeln!(
            stdout,
            "{:<width$}  {:>14.6}",
            r.model.name(),
            r.score.headline()
        );
    }
    drop(stdout);
    if let Some(out) = &cfg.output {
        let echo = cfg.to_toml();
        let report = BenchReport {
            metric,
            seed: cfg.seed,
            rows,
            config: &echo,
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out, format!("{text}\n")).map_err(|e| io_error(out, e))?;
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let series = match args.kind {
        SynthKind::Hybrid => hybridpf::synth_hybrid_with(hybridpf::HybridFixture {
            len: args.length,
            period: args.period.unwrap_or(24),
            noise: args.noise,
            seed: args.seed,
        })?,
        SynthKind::Sarimax => {
            let spec = SarimaxSpec {
                p: args.ar.len(),
                d: args.d,
                q: args.ma.len(),
                seasonal_p: args.seasonal_ar.len(),
                seasonal_d: args.seasonal_d,
                seasonal_q: args.seasonal_ma.len(),
                period: args.period.unwrap_or(1),
                n_exog: args.beta.len(),
            };
            let coeffs = SarimaxCoeffs {
                ar: args.ar.clone(),
                seasonal_ar: args.seasonal_ar.clone(),
                ma: args.ma.clone(),
                seasonal_ma: args.seasonal_ma.clone(),
                exog: args.beta.clone(),
            };
            hybridpf::synth_sarimax(&spec, &coeffs, args.sigma, args.length, args.seed)?
        }
    };
    series
        .dataset
        .write_csv(&args.out, "y", &[("oracle_mean", &series.oracle_mean)])?;
    let mut sidecar = args.out.as_os_str().to_owned();
    sidecar.push(".meta");
    series.write_sidecar(Path::new(&sidecar))?;
    let _ = writeln!(
        std::io::stdout(),
        "wrote {} rows to {} (metadata in {})",
        series.dataset.len(),
        args.out.display(),
        Path::new(&sidecar).display()
    );
    Ok(())
}
