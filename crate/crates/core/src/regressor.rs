//! SARIMAX regressor construction, lag buffers and (un)differencing.

use std::collections::VecDeque;

use crate::error::{check_len, Error, Result};
use crate::model::SarimaxSpec;

/// Fixed-capacity buffer of past values with most-recent-first lag access.
///
/// Lags beyond the stored history read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LagBuffer {
    values: VecDeque<f64>,
    capacity: usize,
}

/// Past (differenced) targets.
pub type HistoryBuffer = LagBuffer;
/// Past estimated shocks `y - y_hat`.
pub type ResidualBuffer = LagBuffer;

impl LagBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        LagBuffer {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.values.len() == self.capacity {
            self.values.pop_back();
        }
        self.values.push_front(value);
    }

    /// Value `lag` steps back (`lag >= 1`), if stored.
    pub fn get(&self, lag: usize) -> Option<f64> {
        lag.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    /// Value `lag` steps back, zero during warm-up.
    pub fn lag(&self, lag: usize) -> f64 {
        self.get(lag).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }
}

/// Known regressor `[y lags 1..p, y lags m..mP, e lags 1..q, e lags m..mQ, exog]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorVector(Vec<f64>);

impl RegressorVector {
    pub fn new(values: Vec<f64>) -> Self {
        RegressorVector(values)
    }

    pub fn empty() -> Self {
        RegressorVector(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Affine rescaling applied to buffered values when building a regressor:
/// targets map to `(y - mean) / scale` and residuals to `e / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScale {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScale {
    pub const IDENTITY: TargetScale = TargetScale {
        mean: 0.0,
        scale: 1.0,
    };

    #[inline]
    pub fn target(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    #[inline]
    pub fn residual(&self, e: f64) -> f64 {
        e / self.scale
    }
}

/// Builds the regressor straight from the buffered values.
pub fn build_regressor(
    hist: &HistoryBuffer,
    res: &ResidualBuffer,
    exog: &[f64],
    spec: &SarimaxSpec,
) -> Result<RegressorVector> {
    build_scaled_regressor(hist, res, exog, spec, TargetScale::IDENTITY)
}

/// Like [`build_regressor`], rescaling stored targets and residuals.
/// Warm-up lags stay exactly zero; `exog` is used as given.
pub fn build_scaled_regressor(
    hist: &HistoryBuffer,
    res: &ResidualBuffer,
    exog: &[f64],
    spec: &SarimaxSpec,
    scale: TargetScale,
) -> Result<RegressorVector> {
    check_len("exogenous features", spec.n_exog, exog.len())?;
    let m = spec.effective_period();
    let mut out = Vec::with_capacity(spec.sx_state_dim());
    let y_lag = |lag| hist.get(lag).map_or(0.0, |y| scale.target(y));
    let e_lag = |lag| res.get(lag).map_or(0.0, |e| scale.residual(e));
    out.extend((1..=spec.p).map(y_lag));
    out.extend((1..=spec.seasonal_p).map(|j| y_lag(j * m)));
    out.extend((1..=spec.q).map(e_lag));
    out.extend((1..=spec.seasonal_q).map(|j| e_lag(j * m)));
    out.extend_from_slice(exog);
    Ok(RegressorVector(out))
}

/// Stores the observation and its shock estimate `y - y_hat`.
pub fn record_step(res: &mut ResidualBuffer, hist: &mut HistoryBuffer, y: f64, y_hat: f64) {
    hist.push(y);
    res.push(y - y_hat);
}

/// Coefficients `c_0..c_n` of `(1 - B)^d (1 - B^m)^D` with `c_0 = 1`.
fn difference_polynomial(d: usize, seasonal_d: usize, m: usize) -> Result<Vec<f64>> {
    if d > 1 || seasonal_d > 1 {
        return Err(Error::InvalidSpec(format!(
            "difference orders above 1 are not supported (d = {d}, D = {seasonal_d})"
        )));
    }
    if seasonal_d > 0 && m == 0 {
        return Err(Error::InvalidSpec(
            "seasonal period must be positive".into(),
        ));
    }
    let mut poly = vec![1.0];
    let mut multiply = |lag: usize| {
        let mut next = vec![0.0; poly.len() + lag];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + lag] -= c;
        }
        poly = next;
    };
    if d == 1 {
        multiply(1);
    }
    if seasonal_d == 1 {
        multiply(m);
    }
    Ok(poly)
}

/// Applies `(1 - B)^d` then `(1 - B^m)^D`; the output is `d + D*m` shorter.
pub fn difference(series: &[f64], d: usize, seasonal_d: usize, m: usize) -> Result<Vec<f64>> {
    let poly = difference_polynomial(d, seasonal_d, m)?;
    let offset = poly.len() - 1;
    if series.len() <= offset {
        return Err(Error::TooShort(format!(
            "differencing with d = {d}, D = {seasonal_d}, m = {m} needs more than {offset} values, got {}",
            series.len()
        )));
    }
    Ok((offset..series.len())
        .map(|t| {
            poly.iter()
                .enumerate()
                .map(|(j, c)| c * series[t - j])
                .sum()
        })
        .collect())
}

/// Maps a differenced-scale value at time `t` back to the raw scale given the
/// raw values up to `t - 1` (last element most recent).
pub fn undifference(
    pred: f64,
    raw_history: &[f64],
    d: usize,
    seasonal_d: usize,
    m: usize,
) -> Result<f64> {
    let poly = difference_polynomial(d, seasonal_d, m)?;
    let needed = poly.len() - 1;
    if raw_history.len() < needed {
        return Err(Error::TooShort(format!(
            "undifferencing needs {needed} raw values, got {}",
            raw_history.len()
        )));
    }
    let n = raw_history.len();
    Ok(pred
        - poly
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, c)| c * raw_history[n - j])
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_differences() {
        assert_eq!(
            difference(&[1.0, 2.0, 4.0], 1, 0, 1).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn seasonal_difference_of_constant() {
        assert_eq!(
            difference(&[5.0, 5.0, 5.0, 5.0], 0, 1, 2).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn zero_orders_are_identity() {
        let s = [3.0, -1.5, 2.25];
        assert_eq!(difference(&s, 0, 0, 12).unwrap(), s.to_vec());
        assert_eq!(undifference(2.5, &[], 0, 0, 12).unwrap(), 2.5);
    }

    #[test]
    fn difference_errors() {
        assert!(matches!(
            difference(&[1.0, 2.0, 3.0], 2, 0, 1),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            difference(&[1.0, 2.0], 0, 1, 2),
            Err(Error::TooShort(_))
        ));
        assert!(matches!(
            undifference(1.0, &[1.0], 1, 1, 4),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn undifference_first_order() {
        assert_eq!(undifference(2.0, &[1.0, 4.0], 1, 0, 1).unwrap(), 6.0);
    }

    #[test]
    fn regressor_placement() {
        let spec = SarimaxSpec {
            p: 2,
            q: 1,
            n_exog: 1,
            ..Default::default()
        };
        let mut hist = HistoryBuffer::with_capacity(2);
        let mut res = ResidualBuffer::with_capacity(1);
        hist.push(5.0);
        hist.push(3.0);
        res.push(0.2);
        let r = build_regressor(&hist, &res, &[7.0], &spec).unwrap();
        assert_eq!(r.as_slice(), &[3.0, 5.0, 0.2, 7.0]);
    }

    #[test]
    fn regressor_exog_only() {
        let spec = SarimaxSpec {
            n_exog: 2,
            ..Default::default()
        };
        let empty = LagBuffer::with_capacity(0);
        let r = build_regressor(&empty, &empty, &[1.5, -2.0], &spec).unwrap();
        assert_eq!(r.as_slice(), &[1.5, -2.0]);
        assert!(matches!(
            build_regressor(&empty, &empty, &[1.0], &spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn regressor_warm_up_zero_fill() {
        let spec = SarimaxSpec::arma(3, 0);
        let mut hist = HistoryBuffer::with_capacity(3);
        hist.push(0.75);
        let r = build_regressor(&hist, &LagBuffer::default(), &[], &spec).unwrap();
        assert_eq!(r.as_slice(), &[0.75, 0.0, 0.0]);
    }

    #[test]
    fn regressor_seasonal_lags() {
        let spec = SarimaxSpec {
            p: 1,
            seasonal_p: 2,
            seasonal_q: 1,
            period: 3,
            ..Default::default()
        };
        let mut hist = HistoryBuffer::with_capacity(6);
        let mut res = ResidualBuffer::with_capacity(3);
        for v in 1..=7 {
            record_step(&mut res, &mut hist, v as f64, 0.5 * v as f64);
        }
        // most recent value is 7, so lag j is 8 - j
        let r = build_regressor(&hist, &res, &[], &spec).unwrap();
        assert_eq!(r.as_slice(), &[7.0, 5.0, 2.0, 2.5]);
    }

    #[test]
    fn scaled_regressor_keeps_warm_up_zero() {
        let spec = SarimaxSpec::arma(2, 1);
        let mut hist = HistoryBuffer::with_capacity(2);
        let mut res = ResidualBuffer::with_capacity(1);
        record_step(&mut res, &mut hist, 3.0, 2.0);
        let scale = TargetScale {
            mean: 1.0,
            scale: 2.0,
        };
        let r = build_scaled_regressor(&hist, &res, &[], &spec, scale).unwrap();
        assert_eq!(r.as_slice(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn record_step_residuals_and_capacity() {
        let mut hist = HistoryBuffer::with_capacity(3);
        let mut res = ResidualBuffer::with_capacity(3);
        record_step(&mut res, &mut hist, 1.0, 0.4);
        assert!((res.lag(1) - 0.6).abs() < 1e-15);
        record_step(&mut res, &mut hist, 2.0, 2.0);
        assert_eq!(res.lag(1), 0.0);
        for t in 0..10 {
            record_step(&mut res, &mut hist, t as f64, 0.0);
            assert_eq!(hist.len(), (t + 3).min(3));
        }
        assert_eq!(hist.lag(1), 9.0);
        assert_eq!(hist.lag(4), 0.0);
    }

    proptest! {
        #[test]
        fn difference_roundtrip(
            raw in prop::collection::vec(-100.0f64..100.0, 30..60),
            d in 0usize..2,
            sd in 0usize..2,
            m in prop::sample::select(vec![2usize, 4, 12]),
        ) {
            let z = difference(&raw, d, sd, m).unwrap();
            let offset = d + sd * m;
            prop_assert_eq!(z.len(), raw.len() - offset);
            for (i, zt) in z.iter().enumerate() {
                let t = i + offset;
                let back = undifference(*zt, &raw[..t], d, sd, m).unwrap();
                prop_assert!((back - raw[t]).abs() <= 1e-12 * raw[t].abs().max(1.0));
            }
        }
    }
}
