//! Dataset loading (generic CSV, M4 ragged CSV) and synthetic series.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::model::SarimaxSpec;
use crate::regressor::undifference;

/// A target series with aligned exogenous features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub target: Vec<f64>,
    /// One row of `n_exog` features per time step.
    pub exog: Vec<Vec<f64>>,
    pub exog_names: Vec<String>,
    /// Seasonality hint.
    pub period: Option<usize>,
}

impl Dataset {
    /// Target-only dataset.
    pub fn univariate(name: impl Into<String>, target: Vec<f64>) -> Self {
        let n = target.len();
        Dataset {
            name: name.into(),
            target,
            exog: vec![Vec::new(); n],
            exog_names: Vec::new(),
            period: None,
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn n_exog(&self) -> usize {
        self.exog_names.len()
    }

    /// Checks shape and finiteness.
    pub fn validate(&self) -> Result<()> {
        check_len("exogenous rows", self.target.len(), self.exog.len())?;
        for (t, (y, row)) in self.target.iter().zip(&self.exog).enumerate() {
            check_len("exogenous features", self.n_exog(), row.len())?;
            if !y.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "input data",
                    step: t,
                });
            }
        }
        Ok(())
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            name: self.name.clone(),
            target: self.target[range.clone()].to_vec(),
            exog: self.exog[range].to_vec(),
            exog_names: self.exog_names.clone(),
            period: self.period,
        }
    }

    /// Writes a headered CSV (`t`, target, exog columns and any `extra`
    /// columns) that [`load_csv`] reads back exactly.
    pub fn write_csv(
        &self,
        path: &Path,
        target_name: &str,
        extra: &[(&str, &[f64])],
    ) -> Result<()> {
        for (name, col) in extra {
            if col.len() != self.len() {
                return Err(Error::InvalidSpec(format!(
                    "column {name} has the wrong length"
                )));
            }
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["t".to_string(), target_name.to_string()];
        header.extend(self.exog_names.iter().cloned());
        header.extend(extra.iter().map(|(n, _)| n.to_string()));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for t in 0..self.len() {
            let mut rec = vec![t.to_string(), self.target[t].to_string()];
            rec.extend(self.exog[t].iter().map(f64::to_string));
            rec.extend(extra.iter().map(|(_, col)| col[t].to_string()));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, format!("{other:?}")),
    }
}

fn parse_cell(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    let trimmed = cell.trim();
    let fail = |message: String| Error::Parse {
        path: path.to_path_buf(),
        row: line,
        column: column.to_string(),
        message,
    };
    if trimmed.is_empty() {
        return Err(fail("empty cell".into()));
    }
    let v: f64 = trimmed
        .parse()
        .map_err(|_| fail(format!("not a number: {trimmed:?}")))?;
    if !v.is_finite() {
        return Err(fail(format!("non-finite value {trimmed:?}")));
    }
    Ok(v)
}

/// Loads `target_column` and `exog_columns` from a headered CSV. Rows keep
/// file order; the reported row of a parse error is the file line number.
pub fn load_csv(path: &Path, target_column: &str, exog_columns: &[String]) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::data(path, format!("missing column {name:?}")))
    };
    let target_idx = find(target_column)?;
    let exog_idx = exog_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut target = Vec::new();
    let mut exog = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |idx: usize, name: &str| {
            let raw = record.get(idx).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            parse_cell(path, line, name, raw)
        };
        target.push(cell(target_idx, target_column)?);
        exog.push(
            exog_idx
                .iter()
                .zip(exog_columns)
                .map(|(&i, name)| cell(i, name))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let name = path.file_stem().map_or_else(
        || "series".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    Ok(Dataset {
        name,
        target,
        exog,
        exog_names: exog_columns.to_vec(),
        period: None,
    })
}

/// M4 frequency subset, identified by the series-id prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum M4Frequency {
    Hourly,
    Daily,
    Weekly,
    Monthly,
    Quarterly,
    Yearly,
}

impl M4Frequency {
    pub fn from_id(id: &str) -> Option<Self> {
        match id.chars().next()? {
            'H' => Some(M4Frequency::Hourly),
            'D' => Some(M4Frequency::Daily),
            'W' => Some(M4Frequency::Weekly),
            'M' => Some(M4Frequency::Monthly),
            'Q' => Some(M4Frequency::Quarterly),
            'Y' => Some(M4Frequency::Yearly),
            _ => None,
        }
    }

    /// Competition forecast horizon.
    pub fn horizon(self) -> usize {
        match self {
            M4Frequency::Hourly => 48,
            M4Frequency::Daily => 14,
            M4Frequency::Weekly => 13,
            M4Frequency::Monthly => 18,
            M4Frequency::Quarterly => 8,
            M4Frequency::Yearly => 6,
        }
    }

    pub fn period(self) -> Option<usize> {
        match self {
            M4Frequency::Hourly => Some(24),
            M4Frequency::Daily => Some(7),
            M4Frequency::Weekly => Some(52),
            M4Frequency::Monthly => Some(12),
            M4Frequency::Quarterly => Some(4),
            M4Frequency::Yearly => None,
        }
    }
}

fn m4_row(path: &Path, series_id: &str) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.get(0).map(str::trim) != Some(series_id) {
            continue;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cells: Vec<&str> = record.iter().skip(1).collect();
        // ragged rows are padded with empty trailing cells
        let used = cells
            .iter()
            .rposition(|c| !c.trim().is_empty())
            .map_or(0, |i| i + 1);
        if used == 0 {
            return Err(Error::data(
                path,
                format!("series {series_id} has no values"),
            ));
        }
        return cells[..used]
            .iter()
            .enumerate()
            .map(|(i, c)| parse_cell(path, line, &format!("V{}", i + 2), c))
            .collect();
    }
    Err(Error::data(
        path,
        format!("series id {series_id:?} not found"),
    ))
}

/// Loads one series from an M4-layout train/test file pair. The test length
/// must equal the horizon of the subset named by the id prefix.
pub fn load_m4_pair(
    train_path: &Path,
    test_path: &Path,
    series_id: &str,
) -> Result<(Dataset, Dataset)> {
    let freq = M4Frequency::from_id(series_id).ok_or_else(|| {
        Error::data(
            train_path,
            format!("cannot infer M4 frequency from id {series_id:?}"),
        )
    })?;
    let train = m4_row(train_path, series_id)?;
    let test = m4_row(test_path, series_id)?;
    if test.len() != freq.horizon() {
        return Err(Error::data(
            test_path,
            format!(
                "series {series_id}: test length {} does not match the {:?} horizon {}",
                test.len(),
                freq,
                freq.horizon()
            ),
        ));
    }
    let mut train = Dataset::univariate(series_id, train);
    let mut test = Dataset::univariate(series_id, test);
    train.period = freq.period();
    test.period = freq.period();
    Ok((train, test))
}

/// Coefficients of a synthetic SARIMAX process.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SarimaxCoeffs {
    pub ar: Vec<f64>,
    pub seasonal_ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
    pub exog: Vec<f64>,
}

/// A generated series plus its true one-step conditional means.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub dataset: Dataset,
    /// `E[y_t | past]` on the raw scale, aligned with `dataset.target`.
    pub oracle_mean: Vec<f64>,
    /// Key-value description of the generator.
    pub metadata: Vec<(String, String)>,
}

impl SyntheticSeries {
    /// `key = value` lines.
    pub fn metadata_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.metadata_text()).map_err(|e| Error::io(path, e))
    }
}

/// Lag coefficients `a_1..a_L` of the additive lag polynomial.
fn lag_coefficients(regular: &[f64], seasonal: &[f64], m: usize) -> Vec<f64> {
    let len = regular.len().max(seasonal.len() * m);
    let mut a = vec![0.0; len];
    for (i, c) in regular.iter().enumerate() {
        a[i] += c;
    }
    for (j, c) in seasonal.iter().enumerate() {
        a[(j + 1) * m - 1] += c;
    }
    a
}

/// Largest modulus among the roots of `z^L - a_1 z^(L-1) - ... - a_L`.
pub fn spectral_radius(lags: &[f64]) -> f64 {
    let n = lags.len();
    if n == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for (j, a) in lags.iter().enumerate() {
        companion[(0, j)] = *a;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Simulates `y_t = sum a_j y_{t-j} + sum b_j e_{t-j} + beta . x_t + e_t`,
/// where the AR and MA lags are the regular lags `1..p` / `1..q` plus the
/// seasonal lags `m..mP` / `m..mQ`, `e_t ~ N(0, noise_sigma^2)` and
/// `x_t ~ N(0, I)`. The series is integrated when `d` or `D` is positive.
pub fn synth_sarimax(
    spec: &SarimaxSpec,
    coeffs: &SarimaxCoeffs,
    noise_sigma: f64,
    len: usize,
    seed: u64,
) -> Result<SyntheticSeries> {
    spec.validate()?;
    check_len("AR coefficients", spec.p, coeffs.ar.len())?;
    check_len(
        "seasonal AR coefficients",
        spec.seasonal_p,
        coeffs.seasonal_ar.len(),
    )?;
    check_len("MA coefficients", spec.q, coeffs.ma.len())?;
    check_len(
        "seasonal MA coefficients",
        spec.seasonal_q,
        coeffs.seasonal_ma.len(),
    )?;
    check_len("exogenous coefficients", spec.n_exog, coeffs.exog.len())?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidSpec(
            "noise sigma must be non-negative".into(),
        ));
    }
    let all = coeffs
        .ar
        .iter()
        .chain(&coeffs.seasonal_ar)
        .chain(&coeffs.ma)
        .chain(&coeffs.seasonal_ma)
        .chain(&coeffs.exog);
    if all.clone().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSpec("coefficients must be finite".into()));
    }
    let m = spec.effective_period();
    let ar = lag_coefficients(&coeffs.ar, &coeffs.seasonal_ar, m);
    let ma = lag_coefficients(&coeffs.ma, &coeffs.seasonal_ma, m);
    let radius = spectral_radius(&ar);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::Unstable(format!(
            "AR polynomial has a root of modulus {radius:.6} on or outside the unit circle (must be < 1)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn_in = 10 * (ar.len().max(ma.len()) + 1) + 100;
    let total = len + burn_in;
    let mut z = vec![0.0; total];
    let mut shocks = vec![0.0; total];
    let mut mean = vec![0.0; total];
    let mut exog = vec![vec![0.0; spec.n_exog]; total];
    for t in 0..total {
        for v in exog[t].iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sigma;
        let mut mu: f64 = exog[t].iter().zip(&coeffs.exog).map(|(x, b)| x * b).sum();
        for (j, a) in ar.iter().enumerate() {
            if t > j {
                mu += a * z[t - j - 1];
            }
        }
        for (j, b) in ma.iter().enumerate() {
            if t > j {
                mu += b * shocks[t - j - 1];
            }
        }
        mean[t] = mu;
        shocks[t] = e;
        z[t] = mu + e;
    }
    let z = &z[burn_in..];
    let mean = &mean[burn_in..];
    let exog = exog[burn_in..].to_vec();

    let offset = spec.difference_offset();
    let (target, oracle_mean) = if offset == 0 {
        (z.to_vec(), mean.to_vec())
    } else {
        let mut raw = vec![0.0; len];
        let mut raw_mean = vec![0.0; len];
        for t in offset..len {
            raw[t] = undifference(z[t], &raw[..t], spec.d, spec.seasonal_d, m)?;
            raw_mean[t] = undifference(mean[t], &raw[..t], spec.d, spec.seasonal_d, m)?;
        }
        (raw, raw_mean)
    };

    let exog_names = (1..=spec.n_exog).map(|i| format!("x{i}")).collect();
    let fmt = |v: &[f64]| format!("{v:?}");
    let metadata = vec![
        ("generator".into(), "sarimax".into()),
        ("formula".into(), "y_t = sum ar_i y_{t-i} + sum sar_j y_{t-jm} + sum ma_i e_{t-i} + sum sma_j e_{t-jm} + exog . x_t + e_t".into()),
        ("order".into(), format!("({}, {}, {})", spec.p, spec.d, spec.q)),
        ("seasonal_order".into(), format!("({}, {}, {}, {})", spec.seasonal_p, spec.seasonal_d, spec.seasonal_q, spec.period)),
        ("ar".into(), fmt(&coeffs.ar)),
        ("seasonal_ar".into(), fmt(&coeffs.seasonal_ar)),
        ("ma".into(), fmt(&coeffs.ma)),
        ("seasonal_ma".into(), fmt(&coeffs.seasonal_ma)),
        ("exog".into(), fmt(&coeffs.exog)),
        ("noise_sigma".into(), noise_sigma.to_string()),
        ("length".into(), len.to_string()),
        ("burn_in".into(), burn_in.to_string()),
        ("seed".into(), seed.to_string()),
    ];
    Ok(SyntheticSeries {
        dataset: Dataset {
            name: "synth_sarimax".into(),
            target,
            exog,
            exog_names,
            period: spec.is_seasonal().then_some(spec.period),
        },
        oracle_mean,
        metadata,
    })
}

/// Parameters of the seasonal + nonlinear benchmark series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridFixture {
    pub len: usize,
    pub period: usize,
    /// Multiplier on every stochastic shock of the target.
    pub noise: f64,
    pub seed: u64,
}

impl HybridFixture {
    /// AR(1) coefficient of the two unit-variance drivers.
    pub const DRIVER_AR: f64 = 0.3;
    /// `L_t = LIN_AR L_{t-1} + LIN_SAR L_{t-m} + LIN_SIGMA * noise * e_t`.
    pub const LIN_AR: f64 = 0.1;
    pub const LIN_SAR: f64 = 0.8;
    pub const LIN_SIGMA: f64 = 0.4;
    pub const OBS_SIGMA: f64 = 0.1;

    /// Deterministic seasonal pattern.
    pub fn seasonal(t: usize, m: usize) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / m as f64;
        phase.sin() + 0.5 * (2.0 * phase).cos()
    }

    /// Contribution of the (already lagged) drivers.
    pub fn exog_effect(x1: f64, x2: f64) -> f64 {
        0.5 * x1 + 0.8 * (1.5 * x1).tanh() * x2
    }
}

/// See [`synth_hybrid_with`]; unit noise.
pub fn synth_hybrid(len: usize, period: usize, seed: u64) -> Result<SyntheticSeries> {
    synth_hybrid_with(HybridFixture {
        len,
        period,
        noise: 1.0,
        seed,
    })
}

/// `y_t = S(t) + L_t + g(x1_t, x2_t) + OBS_SIGMA * noise * n_t` where `S` is
/// the deterministic seasonal pattern, `L` a seasonal AR process, and the
/// exogenous columns `x1_t = a_{t-1}`, `x2_t = b_{t-1}` are lagged AR(1)
/// drivers. `oracle_mean` holds `E[y_t | past, x_t]`.
pub fn synth_hybrid_with(fx: HybridFixture) -> Result<SyntheticSeries> {
    if fx.period < 2 || fx.len <= 4 * fx.period {
        return Err(Error::InvalidSpec(format!(
            "hybrid fixture needs m >= 2 and T > 4m (T = {}, m = {})",
            fx.len, fx.period
        )));
    }
    let m = fx.period;
    let burn_in = 20 * m;
    let total = fx.len + burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(fx.seed);
    let rho = HybridFixture::DRIVER_AR;
    let innov = (1.0 - rho * rho).sqrt();
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut lin = vec![0.0; total];
    let mut target = Vec::with_capacity(fx.len);
    let mut exog = Vec::with_capacity(fx.len);
    let mut oracle = Vec::with_capacity(fx.len);
    for t in 0..total {
        let (x1, x2) = (a, b);
        a = rho * a + innov * rng.sample::<f64, _>(StandardNormal);
        b = rho * b + innov * rng.sample::<f64, _>(StandardNormal);
        let lin_mean = HybridFixture::LIN_AR * if t >= 1 { lin[t - 1] } else { 0.0 }
            + HybridFixture::LIN_SAR * if t >= m { lin[t - m] } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        let n: f64 = rng.sample(StandardNormal);
        lin[t] = lin_mean + HybridFixture::LIN_SIGMA * fx.noise * e;
        let step = t.wrapping_sub(burn_in);
        if t >= burn_in {
            let mean =
                HybridFixture::seasonal(step, m) + lin_mean + HybridFixture::exog_effect(x1, x2);
            let y = HybridFixture::seasonal(step, m)
                + lin[t]
                + HybridFixture::exog_effect(x1, x2)
                + HybridFixture::OBS_SIGMA * fx.noise * n;
            target.push(y);
            exog.push(vec![x1, x2]);
            oracle.push(mean);
        }
    }
    let metadata = vec![
        ("generator".into(), "hybrid".into()),
        ("formula".into(), "y_t = sin(2 pi t/m) + 0.5 cos(4 pi t/m) + L_t + 0.5 x1_t + 0.8 tanh(1.5 x1_t) x2_t + obs_sigma * noise * n_t".into()),
        ("seasonal_component".into(), format!("L_t = {} L_(t-1) + {} L_(t-m) + {} * noise * e_t", HybridFixture::LIN_AR, HybridFixture::LIN_SAR, HybridFixture::LIN_SIGMA)),
        ("drivers".into(), format!("x1_t = a_(t-1), x2_t = b_(t-1); a, b AR(1) with coefficient {rho} and unit variance")),
        ("obs_sigma".into(), HybridFixture::OBS_SIGMA.to_string()),
        ("noise".into(), fx.noise.to_string()),
        ("period".into(), m.to_string()),
        ("length".into(), fx.len.to_string()),
        ("burn_in".into(), burn_in.to_string()),
        ("seed".into(), fx.seed.to_string()),
    ];
    Ok(SyntheticSeries {
        dataset: Dataset {
            name: "synth_hybrid".into(),
            target,
            exog,
            exog_names: vec!["x1".into(), "x2".into()],
            period: Some(m),
        },
        oracle_mean: oracle,
        metadata,
    })
}
