//! Online and offline experiment protocols, baselines and metrics.
//!
//! Targets are differenced with the SARIMAX `d`/`D` orders, then
//! standardized (online: running statistics; offline: training-split
//! statistics). The filter works on the standardized differenced scale;
//! predictions are mapped back to the raw scale before being recorded.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::filter::{Ensemble, FilterConfig, InitSpec};
use crate::model::{CellKind, NoiseSpec, RnnSpec, SarimaxSpec, StateVector};
use crate::regressor::{
    build_scaled_regressor, undifference, HistoryBuffer, LagBuffer, RegressorVector,
    ResidualBuffer, TargetScale,
};
use crate::statespace::{JointModel, TransitionInput};

/// Smallest standard deviation used for scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// Running per-feature mean and population standard deviation (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStandardizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl OnlineStandardizer {
    pub fn new(dim: usize) -> Self {
        OnlineStandardizer {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    /// Statistics of a batch of rows.
    pub fn fit(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut s = Self::new(dim);
        for row in rows {
            s.update(row)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, row: &[f64]) -> Result<()> {
        check_len("standardizer row", self.dim(), row.len())?;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(row) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population standard deviations, floored at [`STD_FLOOR`].
    pub fn std(&self) -> Vec<f64> {
        self.m2
            .iter()
            .map(|m2| {
                if self.count == 0 {
                    1.0
                } else {
                    (m2 / self.count as f64).sqrt().max(STD_FLOOR)
                }
            })
            .collect()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_len("standardizer row", self.dim(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(self.std())
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    /// Scale of feature `i` as a [`TargetScale`].
    pub fn scale(&self, i: usize) -> TargetScale {
        TargetScale {
            mean: self.mean[i],
            scale: self.std()[i],
        }
    }
}

/// One step of a prediction trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub t: usize,
    pub y: f64,
    pub y_hat: f64,
    pub cum_mse: f64,
}

/// Model family compared by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Last observation as the forecast.
    Naive,
    /// SARIMAX coefficients only.
    SxOnly,
    /// Recurrent cell only; differencing from the SARIMAX spec still applies.
    RnnOnly,
    /// Recurrent cell plus SARIMAX.
    Hybrid,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Naive,
        ModelKind::SxOnly,
        ModelKind::RnnOnly,
        ModelKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Naive => "Naive",
            ModelKind::SxOnly => "SxOnly",
            ModelKind::RnnOnly => "RnnOnly",
            ModelKind::Hybrid => "Hybrid",
        }
    }

    pub fn uses_rnn(self) -> bool {
        matches!(self, ModelKind::RnnOnly | ModelKind::Hybrid)
    }

    pub fn uses_sx(self) -> bool {
        matches!(self, ModelKind::SxOnly | ModelKind::Hybrid)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace(['-', '_'], "");
        match lower.as_str() {
            "naive" => Ok(ModelKind::Naive),
            "sxonly" | "sx" | "sarimax" => Ok(ModelKind::SxOnly),
            "rnnonly" | "rnn" | "lstm" | "gru" => Ok(ModelKind::RnnOnly),
            "hybrid" => Ok(ModelKind::Hybrid),
            _ => Err(Error::InvalidSpec(format!(
                "unknown model {s:?} (expected naive, sx_only, rnn_only or hybrid)"
            ))),
        }
    }
}

/// Everything needed to run one model on one series.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model: ModelKind,
    pub cell: CellKind,
    pub hidden: usize,
    /// Lagged standardized targets appended to the cell input.
    pub lag_window: usize,
    pub sarimax: SarimaxSpec,
    pub noise: NoiseSpec,
    pub init: InitSpec,
    pub filter: FilterConfig,
    /// Online only: differenced observations seen before the model starts
    /// predicting; earlier steps fall back to the naive forecast.
    pub warmup: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(model: ModelKind, sarimax: SarimaxSpec) -> Self {
        PipelineConfig {
            model,
            cell: CellKind::Lstm,
            hidden: 2,
            lag_window: 5,
            sarimax,
            noise: NoiseSpec::default(),
            init: InitSpec::default(),
            filter: FilterConfig::new(100),
            warmup: 10,
            seed: 0,
        }
    }

    /// Recurrent spec implied by the model kind and the exogenous dimension.
    pub fn rnn_spec(&self) -> Result<Option<RnnSpec>> {
        if !self.model.uses_rnn() {
            return Ok(None);
        }
        RnnSpec::new(
            self.cell,
            self.hidden,
            self.sarimax.n_exog + self.lag_window,
        )
        .map(Some)
    }

    /// SARIMAX spec used in the state; RnnOnly keeps only the differencing
    /// (exogenous features still reach the cell input).
    pub fn state_sarimax(&self) -> SarimaxSpec {
        if self.model.uses_sx() {
            self.sarimax
        } else {
            SarimaxSpec {
                p: 0,
                q: 0,
                seasonal_p: 0,
                seasonal_q: 0,
                n_exog: 0,
                ..self.sarimax
            }
        }
    }

    pub fn joint_model(&self) -> Result<Option<JointModel>> {
        if self.model == ModelKind::Naive {
            return Ok(None);
        }
        JointModel::new(self.rnn_spec()?, self.state_sarimax(), self.noise).map(Some)
    }

    pub fn validate(&self) -> Result<()> {
        self.sarimax.validate()?;
        self.noise.validate()?;
        if self.model != ModelKind::Naive {
            self.filter.validate()?;
            self.joint_model()?;
            if self.warmup == 0 {
                return Err(Error::InvalidSpec("warmup must be at least 1".into()));
            }
        }
        Ok(())
    }
}

enum Scaling {
    Running {
        target: OnlineStandardizer,
        exog: OnlineStandardizer,
    },
    Fixed {
        target: TargetScale,
        exog: OnlineStandardizer,
    },
}

impl Scaling {
    fn target(&self) -> TargetScale {
        match self {
            Scaling::Running { target, .. } => target.scale(0),
            Scaling::Fixed { target, .. } => *target,
        }
    }

    fn exog(&self) -> &OnlineStandardizer {
        match self {
            Scaling::Running { exog, .. } | Scaling::Fixed { exog, .. } => exog,
        }
    }
}

/// Per-series forecasting state shared by both protocols.
struct Forecaster {
    config: PipelineConfig,
    sx: SarimaxSpec,
    ensemble: Option<Ensemble>,
    raw: Vec<f64>,
    diffed: HistoryBuffer,
    residuals: ResidualBuffer,
    seen: usize,
    scaling: Scaling,
}

/// A model forecast with the ingredients needed to update afterwards.
struct Forecast {
    y_hat: f64,
    model: Option<(TransitionInput, f64)>,
}

impl Forecaster {
    fn new(config: &PipelineConfig, scaling: Scaling) -> Result<Self> {
        config.validate()?;
        let ensemble = match config.joint_model()? {
            Some(model) => Some(Ensemble::init(
                model,
                &config.init,
                config.filter,
                config.seed,
            )?),
            None => None,
        };
        let sx = config.state_sarimax();
        let lag_cap = sx.max_target_lag().max(if config.model.uses_rnn() {
            config.lag_window
        } else {
            0
        });
        Ok(Forecaster {
            config: config.clone(),
            sx,
            ensemble,
            raw: Vec::new(),
            diffed: LagBuffer::with_capacity(lag_cap),
            residuals: LagBuffer::with_capacity(sx.max_residual_lag()),
            seen: 0,
            scaling,
        })
    }

    fn model_ready(&self) -> bool {
        self.ensemble.is_some()
            && self.raw.len() >= self.sx.difference_offset()
            && match &self.scaling {
                Scaling::Running { .. } => self.seen >= self.config.warmup,
                Scaling::Fixed { .. } => true,
            }
    }

    fn build_input(&self, exog_row: &[f64]) -> Result<TransitionInput> {
        let exog = self.scaling.exog().transform(exog_row)?;
        let scale = self.scaling.target();
        let r = if self.config.model.uses_sx() {
            build_scaled_regressor(&self.diffed, &self.residuals, &exog, &self.sx, scale)?
        } else {
            RegressorVector::empty()
        };
        let x = if self.config.model.uses_rnn() {
            let mut x = exog;
            x.extend(
                (1..=self.config.lag_window)
                    .map(|lag| self.diffed.get(lag).map_or(0.0, |z| scale.target(z))),
            );
            x
        } else {
            Vec::new()
        };
        Ok(TransitionInput { x, r })
    }

    fn undiff(&self, z: f64) -> Result<f64> {
        let m = self.sx.effective_period();
        undifference(z, &self.raw, self.sx.d, self.sx.seasonal_d, m)
    }

    fn differenced(&self, y: f64) -> Option<f64> {
        let offset = self.sx.difference_offset();
        if self.raw.len() < offset {
            return None;
        }
        let m = self.sx.effective_period();
        // z_t = y_t + sum_j c_j y_{t-j} = y_t - undifference(0)
        undifference(0.0, &self.raw, self.sx.d, self.sx.seasonal_d, m)
            .ok()
            .map(|base| y - base)
    }

    /// Forecast for the next observation; `None` before any observation.
    fn forecast(&self, exog_row: &[f64]) -> Result<Option<Forecast>> {
        let Some(&last) = self.raw.last() else {
            return Ok(None);
        };
        if !self.model_ready() {
            return Ok(Some(Forecast {
                y_hat: last,
                model: None,
            }));
        }
        let ens = self
            .ensemble
            .as_ref()
            .expect("model_ready checks the ensemble");
        let input = self.build_input(exog_row)?;
        let scale = self.scaling.target();
        let z_hat = scale.mean + scale.scale * ens.predict(&input)?;
        let y_hat = self.undiff(z_hat)?;
        Ok(Some(Forecast {
            y_hat,
            model: Some((input, z_hat)),
        }))
    }

    fn check_finite(&self, step: usize, y: f64, exog_row: &[f64]) -> Result<()> {
        if !y.is_finite() || exog_row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "input series",
                step,
            });
        }
        check_len(
            "exogenous features",
            self.config.sarimax.n_exog,
            exog_row.len(),
        )
    }

    /// Predict-then-observe step while learning. Returns the forecast made
    /// before `y` was revealed.
    fn learn_step(&mut self, step: usize, y: f64, exog_row: &[f64]) -> Result<Option<f64>> {
        self.check_finite(step, y, exog_row)?;
        if let Scaling::Running { exog, .. } = &mut self.scaling {
            exog.update(exog_row)?;
        }
        let forecast = self.forecast(exog_row)?;
        let z = self.differenced(y);
        if let (
            Some(z),
            Some(Forecast {
                model: Some((input, z_hat)),
                ..
            }),
        ) = (z, &forecast)
        {
            let scale = self.scaling.target();
            let ens = self
                .ensemble
                .as_mut()
                .expect("model forecast implies an ensemble");
            ens.filter_step(input, scale.target(z))
                .map_err(|e| with_step(e, step))?;
            self.residuals.push(z - z_hat);
        } else if z.is_some() {
            self.residuals.push(0.0);
        }
        self.reveal(y, z)?;
        Ok(forecast.map(|f| f.y_hat))
    }

    /// Forecast-then-observe step with all weights and parameters frozen.
    fn frozen_step(&mut self, step: usize, y: f64, exog_row: &[f64]) -> Result<f64> {
        self.check_finite(step, y, exog_row)?;
        let forecast = self
            .forecast(exog_row)?
            .ok_or_else(|| Error::TooShort("frozen forecasting needs a training history".into()))?;
        let z = self.differenced(y);
        match (&forecast.model, z) {
            (Some((input, z_hat)), Some(z)) => {
                self.residuals.push(z - z_hat);
                let x = input.x.clone();
                let ens = self
                    .ensemble
                    .as_mut()
                    .expect("model forecast implies an ensemble");
                ens.propagate_frozen(&x).map_err(|e| with_step(e, step))?;
            }
            (None, Some(_)) => self.residuals.push(0.0),
            _ => {}
        }
        self.reveal(y, z)?;
        Ok(forecast.y_hat)
    }

    fn reveal(&mut self, y: f64, z: Option<f64>) -> Result<()> {
        if let Some(z) = z {
            self.diffed.push(z);
            self.seen += 1;
            if let Scaling::Running { target, .. } = &mut self.scaling {
                target.update(&[z])?;
            }
        }
        self.raw.push(y);
        Ok(())
    }

    /// Clears lag buffers and recurrent states before another training pass.
    fn restart_stream(&mut self) {
        self.raw.clear();
        self.diffed.clear();
        self.residuals.clear();
        self.seen = 0;
        if let Some(ens) = &mut self.ensemble {
            let layout = ens.model().layout.clone();
            for s in ens.particles_mut() {
                s.segment_mut(layout.cell).fill(0.0);
                s.segment_mut(layout.hidden).fill(0.0);
            }
        }
    }
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite { what, step },
        Error::WeightUnderflow { observation, .. } => Error::WeightUnderflow { step, observation },
        other => other,
    }
}

/// Appends records for `(t, y, y_hat)` with a running CumMSE.
fn push_record(records: &mut Vec<RunRecord>, sse: &mut f64, t: usize, y: f64, y_hat: f64) {
    *sse += (y - y_hat).powi(2);
    let cum_mse = *sse / (records.len() + 1) as f64;
    records.push(RunRecord {
        t,
        y,
        y_hat,
        cum_mse,
    });
}

/// Online protocol: at every step forecast the next value, reveal it and
/// update. One record per step from `t = 1` on.
pub fn run_online(data: &Dataset, config: &PipelineConfig) -> Result<Vec<RunRecord>> {
    let mut records = Vec::with_capacity(data.len().saturating_sub(1));
    run_online_with(data, config, |r| {
        records.push(*r);
        Ok(())
    })?;
    Ok(records)
}

/// [`run_online`] handing each record to `sink` as soon as it exists.
pub fn run_online_with<F>(data: &Dataset, config: &PipelineConfig, mut sink: F) -> Result<()>
where
    F: FnMut(&RunRecord) -> Result<()>,
{
    if data.len() < 2 {
        return Err(Error::TooShort(format!(
            "online runs need at least 2 observations, got {}",
            data.len()
        )));
    }
    check_len("exogenous rows", data.len(), data.exog.len())?;
    let n_exog = config.sarimax.n_exog;
    let scaling = Scaling::Running {
        target: OnlineStandardizer::new(1),
        exog: OnlineStandardizer::new(n_exog),
    };
    let mut fc = Forecaster::new(config, scaling)?;
    let mut sse = 0.0;
    let mut count = 0usize;
    for (t, (&y, row)) in data.target.iter().zip(&data.exog).enumerate() {
        if let Some(y_hat) = fc.learn_step(t, y, row)? {
            sse += (y - y_hat).powi(2);
            count += 1;
            sink(&RunRecord {
                t,
                y,
                y_hat,
                cum_mse: sse / count as f64,
            })?;
        }
    }
    Ok(())
}

/// Result of [`run_offline`].
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineOutcome {
    pub mape: f64,
    /// Test-phase records; `t` counts from the start of the test split.
    pub records: Vec<RunRecord>,
}

/// Offline protocol without an observer; see [`run_offline_with`].
pub fn run_offline(
    train: &Dataset,
    test: &Dataset,
    passes: usize,
    config: &PipelineConfig,
) -> Result<OfflineOutcome> {
    run_offline_with(train, test, passes, config, |_, _| {})
}

/// Offline protocol: scale with training statistics, stream the training
/// split `passes` times (lag buffers and recurrent states restart each
/// pass), then forecast the test split one step at a time with frozen
/// weights and parameters; true test values are revealed as they come.
///
/// `observe(h, particles)` is called before the forecast of test step `h`
/// and once more after the last step.
pub fn run_offline_with<F>(
    train: &Dataset,
    test: &Dataset,
    passes: usize,
    config: &PipelineConfig,
    mut observe: F,
) -> Result<OfflineOutcome>
where
    F: FnMut(usize, &[StateVector]),
{
    if train.is_empty() || test.is_empty() {
        return Err(Error::TooShort(
            "offline runs need non-empty train and test splits".into(),
        ));
    }
    if passes == 0 {
        return Err(Error::InvalidSpec("passes must be at least 1".into()));
    }
    check_len("exogenous rows", train.len(), train.exog.len())?;
    check_len("exogenous rows", test.len(), test.exog.len())?;
    config.validate()?;

    let sx = config.state_sarimax();
    let m = sx.effective_period();
    let z_train = if sx.difference_offset() > 0 {
        crate::regressor::difference(&train.target, sx.d, sx.seasonal_d, m)?
    } else {
        train.target.clone()
    };
    let target_stats =
        OnlineStandardizer::fit(&z_train.iter().map(|z| vec![*z]).collect::<Vec<_>>(), 1)?;
    let scaling = Scaling::Fixed {
        target: target_stats.scale(0),
        exog: OnlineStandardizer::fit(&train.exog, config.sarimax.n_exog)?,
    };
    let mut fc = Forecaster::new(config, scaling)?;
    for pass in 0..passes {
        if pass > 0 {
            fc.restart_stream();
        }
        for (t, (&y, row)) in train.target.iter().zip(&train.exog).enumerate() {
            fc.learn_step(t, y, row)?;
        }
    }

    let empty: &[StateVector] = &[];
    let mut records = Vec::with_capacity(test.len());
    let mut sse = 0.0;
    for (h, (&y, row)) in test.target.iter().zip(&test.exog).enumerate() {
        observe(h, fc.ensemble.as_ref().map_or(empty, |e| e.particles()));
        let y_hat = fc.frozen_step(train.len() + h, y, row)?;
        push_record(&mut records, &mut sse, h, y, y_hat);
    }
    observe(
        test.len(),
        fc.ensemble.as_ref().map_or(empty, |e| e.particles()),
    );
    let y: Vec<f64> = records.iter().map(|r| r.y).collect();
    let y_hat: Vec<f64> = records.iter().map(|r| r.y_hat).collect();
    Ok(OfflineOutcome {
        mape: mape(&y, &y_hat)?,
        records,
    })
}

/// Running mean of squared errors.
pub fn cum_mse(y: &[f64], y_hat: &[f64]) -> Result<Vec<f64>> {
    check_len("predictions", y.len(), y_hat.len())?;
    if y.is_empty() {
        return Err(Error::TooShort("cum_mse needs at least one value".into()));
    }
    let mut sse = 0.0;
    Ok(y.iter()
        .zip(y_hat)
        .enumerate()
        .map(|(i, (a, b))| {
            sse += (a - b).powi(2);
            sse / (i + 1) as f64
        })
        .collect())
}

/// Mean absolute percentage error; a zero truth value is an error.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_len("predictions", y.len(), y_hat.len())?;
    if y.is_empty() {
        return Err(Error::TooShort("mape needs at least one value".into()));
    }
    let mut total = 0.0;
    for (index, (a, b)) in y.iter().zip(y_hat).enumerate() {
        if *a == 0.0 {
            return Err(Error::ZeroTruth { index });
        }
        total += ((a - b) / a).abs();
    }
    Ok(total / y.len() as f64)
}

/// The last observed value.
pub fn naive_predict(history: &[f64]) -> Result<f64> {
    history
        .last()
        .copied()
        .ok_or_else(|| Error::TooShort("naive forecast needs a non-empty history".into()))
}
