//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use hybridpf::{
    CellKind, Dataset, FilterConfig, InitSpec, ModelKind, NoiseSpec, PipelineConfig,
    PredictionMode, SarimaxCoeffs, SarimaxSpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model for `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    /// Models compared by `bench`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub seed: u64,
    /// Trace path; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub rnn: RnnConfig,
    #[serde(default)]
    pub sarimax: SarimaxSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Csv {
        path: PathBuf,
        #[serde(default = "default_target")]
        target: String,
        #[serde(default)]
        exog: Vec<String>,
    },
    M4 {
        train: PathBuf,
        test: PathBuf,
        series_id: String,
    },
    /// Seasonal plus nonlinear benchmark series.
    SynthHybrid {
        length: usize,
        #[serde(default = "default_period")]
        period: usize,
        #[serde(default = "one")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Simulated from the `[sarimax]` orders with these coefficients.
    SynthSarimax {
        length: usize,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        ar: Vec<f64>,
        #[serde(default)]
        ma: Vec<f64>,
        #[serde(default)]
        seasonal_ar: Vec<f64>,
        #[serde(default)]
        seasonal_ma: Vec<f64>,
        #[serde(default)]
        beta: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_target() -> String {
    "y".into()
}

fn default_period() -> usize {
    24
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RnnConfig {
    pub cell: CellKind,
    pub hidden: usize,
    /// Lagged targets appended to the cell input.
    pub lag_window: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            cell: CellKind::Lstm,
            hidden: 2,
            lag_window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub particles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_threshold: Option<f64>,
    pub parallel: bool,
    pub prediction: PredictionMode,
    pub warmup: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            particles: 100,
            resample_threshold: None,
            parallel: false,
            prediction: PredictionMode::ParticleMean,
            warmup: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Online,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub mode: Mode,
    /// Offline test length; taken from the test file for M4 data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub passes: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            mode: Mode::Online,
            horizon: None,
            passes: 1,
        }
    }
}

/// Loaded series split per protocol.
pub struct Series {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataConfig::Csv { path, .. } => fix(path),
            DataConfig::M4 { train, test, .. } => {
                fix(train);
                fix(test);
            }
            _ => {}
        }
        if let Some(out) = &mut self.output {
            fix(out);
        }
    }

    /// The config as TOML; loading it reproduces the run.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self, model: ModelKind) -> Result<(), CliError> {
        let filter = self.filter_config();
        filter.validate().map_err(config_error)?;
        if self.protocol.passes == 0 {
            return Err(CliError::Config(
                "protocol.passes must be at least 1".into(),
            ));
        }
        if self.protocol.mode == Mode::Offline
            && self.protocol.horizon.is_none()
            && !matches!(self.data, DataConfig::M4 { .. })
        {
            return Err(CliError::Config(
                "offline runs need protocol.horizon".into(),
            ));
        }
        self.pipeline(model, self.sarimax.n_exog)
            .validate()
            .map_err(config_error)
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            particles: self.filter.particles,
            resample_threshold: self.filter.resample_threshold,
            parallel: self.filter.parallel,
            prediction: self.filter.prediction,
        }
    }

    pub fn pipeline(&self, model: ModelKind, n_exog: usize) -> PipelineConfig {
        PipelineConfig {
            model,
            cell: self.rnn.cell,
            hidden: self.rnn.hidden,
            lag_window: self.rnn.lag_window,
            sarimax: SarimaxSpec {
                n_exog,
                ..self.sarimax
            },
            noise: self.noise,
            init: self.init.clone(),
            filter: self.filter_config(),
            warmup: self.filter.warmup,
            seed: self.seed,
        }
    }

    /// Loads or generates the series. The exogenous dimension always comes
    /// from the data; a conflicting `sarimax.n_exog` is rejected.
    pub fn load_series(&self) -> Result<Series, CliError> {
        let data = match &self.data {
            DataConfig::Csv { path, target, exog } => hybridpf::load_csv(path, target, exog)?,
            DataConfig::M4 {
                train,
                test,
                series_id,
            } => {
                let (train, test) = hybridpf::load_m4_pair(train, test, series_id)?;
                if let Some(h) = self.protocol.horizon {
                    if h != test.len() {
                        return Err(CliError::Config(format!(
                            "protocol.horizon = {h} but the test split has {} values",
                            test.len()
                        )));
                    }
                }
                self.check_exog(0)?;
                return Ok(Series {
                    train,
                    test: (self.protocol.mode == Mode::Offline).then_some(test),
                });
            }
            DataConfig::SynthHybrid {
                length,
                period,
                noise,
                seed,
            } => {
                hybridpf::synth_hybrid_with(hybridpf::HybridFixture {
                    len: *length,
                    period: *period,
                    noise: *noise,
                    seed: *seed,
                })
                .map_err(config_error)?
                .dataset
            }
            DataConfig::SynthSarimax {
                length,
                sigma,
                ar,
                ma,
                seasonal_ar,
                seasonal_ma,
                beta,
                seed,
            } => {
                let spec = SarimaxSpec {
                    n_exog: beta.len(),
                    ..self.sarimax
                };
                let coeffs = SarimaxCoeffs {
                    ar: ar.clone(),
                    ma: ma.clone(),
                    seasonal_ar: seasonal_ar.clone(),
                    seasonal_ma: seasonal_ma.clone(),
                    exog: beta.clone(),
                };
                hybridpf::synth_sarimax(&spec, &coeffs, *sigma, *length, *seed)
                    .map_err(config_error)?
                    .dataset
            }
        };
        data.validate()?;
        self.check_exog(data.n_exog())?;
        match self.protocol.mode {
            Mode::Online => Ok(Series {
                train: data,
                test: None,
            }),
            Mode::Offline => {
                let h = self.protocol.horizon.unwrap_or(0);
                if h == 0 || h >= data.len() {
                    return Err(CliError::Config(format!(
                        "protocol.horizon must lie in 1..{} for this series",
                        data.len()
                    )));
                }
                let split = data.len() - h;
                Ok(Series {
                    train: data.slice(0..split),
                    test: Some(data.slice(split..data.len())),
                })
            }
        }
    }

    fn check_exog(&self, found: usize) -> Result<(), CliError> {
        if self.sarimax.n_exog != 0 && self.sarimax.n_exog != found {
            return Err(CliError::Config(format!(
                "sarimax.n_exog = {} but the data has {found} exogenous columns",
                self.sarimax.n_exog
            )));
        }
        Ok(())
    }
}

fn config_error(e: hybridpf::Error) -> CliError {
    match e {
        e if e.is_data_error() || e.is_numerical() => CliError::Core(e),
        other => CliError::Config(other.to_string()),
    }
}
