//! Model specifications, the flat recurrent-parameter vector and the joint
//! state layout.
//!
//! The joint state is a single flat vector
//!
//! ```text
//! [ c (k) | h (k) | theta (n_theta) | phi (p + P) | theta_ma (q + Q) | beta (n_exog) ]
//! ```
//!
//! where `theta` holds every gate matrix, gate bias and the dense readout of
//! the recurrent cell, and the last three segments are the time-varying
//! SARIMAX coefficients. Models without a recurrent part have empty `c`, `h`
//! and `theta` segments.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Recurrent cell family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of gated affine maps of shape `k x (k + l)` in one cell.
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    /// Names of the gates in packing order.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Lstm => &["forget", "input", "block", "output"],
            CellKind::Gru => &["update", "reset", "candidate"],
        }
    }
}

/// Shape of the recurrent cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnSpec {
    pub cell: CellKind,
    /// Hidden state size `k`.
    pub hidden: usize,
    /// Input size `l`.
    pub input: usize,
}

impl RnnSpec {
    pub fn new(cell: CellKind, hidden: usize, input: usize) -> Result<Self> {
        let spec = RnnSpec {
            cell,
            hidden,
            input,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidSpec("hidden size must be at least 1".into()));
        }
        if self.input == 0 {
            return Err(Error::InvalidSpec("input size must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of the concatenated `[h_prev; x]` vector.
    pub fn concat_len(&self) -> usize {
        self.hidden + self.input
    }

    /// Scalars per gate: a `k x (k + l)` matrix plus a length-`k` bias.
    pub fn gate_len(&self) -> usize {
        self.hidden * self.concat_len() + self.hidden
    }

    /// Total number of recurrent parameters including the readout vector.
    pub fn n_theta(&self) -> usize {
        self.cell.gate_count() * self.gate_len() + self.hidden
    }
}

/// SARIMAX orders `(p, d, q)(P, D, Q, m)` plus the exogenous dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarimaxSpec {
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub d: usize,
    #[serde(default)]
    pub q: usize,
    #[serde(default, rename = "P")]
    pub seasonal_p: usize,
    #[serde(default, rename = "D")]
    pub seasonal_d: usize,
    #[serde(default, rename = "Q")]
    pub seasonal_q: usize,
    /// Seasonal period `m`; ignored when every seasonal order is zero.
    #[serde(default = "default_period", rename = "m")]
    pub period: usize,
    #[serde(default)]
    pub n_exog: usize,
}

fn default_period() -> usize {
    1
}

impl Default for SarimaxSpec {
    fn default() -> Self {
        SarimaxSpec {
            p: 0,
            d: 0,
            q: 0,
            seasonal_p: 0,
            seasonal_d: 0,
            seasonal_q: 0,
            period: 1,
            n_exog: 0,
        }
    }
}

impl SarimaxSpec {
    /// Non-seasonal ARMA(p, q) with no differencing or exogenous input.
    pub fn arma(p: usize, q: usize) -> Self {
        SarimaxSpec {
            p,
            q,
            ..Default::default()
        }
    }

    pub fn is_seasonal(&self) -> bool {
        self.seasonal_p > 0 || self.seasonal_q > 0 || self.seasonal_d > 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_seasonal() && self.period < 2 {
            return Err(Error::InvalidSpec(format!(
                "seasonal period must be at least 2 when seasonal orders are positive (m = {})",
                self.period
            )));
        }
        if self.d > 1 || self.seasonal_d > 1 {
            return Err(Error::InvalidSpec(format!(
                "difference orders above 1 are not supported (d = {}, D = {})",
                self.d, self.seasonal_d
            )));
        }
        Ok(())
    }

    /// Number of SARIMAX coefficients carried in the joint state.
    pub fn sx_state_dim(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q + self.n_exog
    }

    /// Length of the combined AR coefficient segment.
    pub fn ar_len(&self) -> usize {
        self.p + self.seasonal_p
    }

    /// Length of the combined MA coefficient segment.
    pub fn ma_len(&self) -> usize {
        self.q + self.seasonal_q
    }

    /// Effective seasonal period (1 when non-seasonal).
    pub fn effective_period(&self) -> usize {
        if self.is_seasonal() {
            self.period
        } else {
            1
        }
    }

    /// Largest target lag read by the regressor.
    pub fn max_target_lag(&self) -> usize {
        self.p.max(self.effective_period() * self.seasonal_p)
    }

    /// Largest residual lag read by the regressor.
    pub fn max_residual_lag(&self) -> usize {
        self.q.max(self.effective_period() * self.seasonal_q)
    }

    /// Number of leading raw observations consumed by differencing.
    pub fn difference_offset(&self) -> usize {
        self.d + self.seasonal_d * self.effective_period()
    }
}

/// A contiguous `(offset, len)` slice of the joint state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Memory map of the joint state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    pub cell: Segment,
    pub hidden: Segment,
    pub theta: Segment,
    pub phi: Segment,
    pub theta_ma: Segment,
    pub beta: Segment,
    pub total_dim: usize,
}

impl StateLayout {
    /// Lays out `[c, h, theta, phi, theta_ma, beta]` contiguously.
    ///
    /// `rnn = None` produces a linear-only layout whose first three segments
    /// are empty.
    pub fn new(rnn: Option<&RnnSpec>, sx: &SarimaxSpec) -> Result<Self> {
        if let Some(rnn) = rnn {
            rnn.validate()?;
        }
        sx.validate()?;
        let (k, n_theta) = rnn.map_or((0, 0), |r| (r.hidden, r.n_theta()));
        let lens = [k, k, n_theta, sx.ar_len(), sx.ma_len(), sx.n_exog];
        let mut segs = [Segment::default(); 6];
        let mut offset = 0;
        for (seg, len) in segs.iter_mut().zip(lens) {
            *seg = Segment { offset, len };
            offset += len;
        }
        let [cell, hidden, theta, phi, theta_ma, beta] = segs;
        Ok(StateLayout {
            cell,
            hidden,
            theta,
            phi,
            theta_ma,
            beta,
            total_dim: offset,
        })
    }

    pub fn segments(&self) -> [Segment; 6] {
        [
            self.cell,
            self.hidden,
            self.theta,
            self.phi,
            self.theta_ma,
            self.beta,
        ]
    }

    /// The SARIMAX coefficients `[phi; theta_ma; beta]` as one segment.
    pub fn sx(&self) -> Segment {
        Segment {
            offset: self.phi.offset,
            len: self.phi.len + self.theta_ma.len + self.beta.len,
        }
    }

    /// Everything that is a parameter rather than a recurrent state.
    pub fn parameters(&self) -> Segment {
        Segment {
            offset: self.theta.offset,
            len: self.total_dim - self.theta.offset,
        }
    }
}

/// Per-segment transition noise and measurement noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub sigma_c: f64,
    pub sigma_h: f64,
    pub sigma_theta: f64,
    pub sigma_sx: f64,
    pub sigma_y: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_c: 1e-2,
            sigma_h: 1e-2,
            sigma_theta: 1e-3,
            sigma_sx: 1e-3,
            sigma_y: 0.1,
        }
    }
}

impl NoiseSpec {
    /// No transition noise; measurement noise kept at `sigma_y`.
    pub fn noiseless(sigma_y: f64) -> Self {
        NoiseSpec {
            sigma_c: 0.0,
            sigma_h: 0.0,
            sigma_theta: 0.0,
            sigma_sx: 0.0,
            sigma_y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_y.is_finite() && self.sigma_y > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "sigma_y must be positive and finite (got {})",
                self.sigma_y
            )));
        }
        for (name, v) in [
            ("sigma_c", self.sigma_c),
            ("sigma_h", self.sigma_h),
            ("sigma_theta", self.sigma_theta),
            ("sigma_sx", self.sigma_sx),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "{name} must be non-negative and finite (got {v})"
                )));
            }
        }
        Ok(())
    }
}

/// One realization of the joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn zeros(layout: &StateLayout) -> Self {
        StateVector(vec![0.0; layout.total_dim])
    }

    pub fn from_vec(layout: &StateLayout, values: Vec<f64>) -> Result<Self> {
        check_len("state vector", layout.total_dim, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "state vector",
                step: 0,
            });
        }
        Ok(StateVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn segment(&self, seg: Segment) -> &[f64] {
        &self.0[seg.range()]
    }

    pub fn segment_mut(&mut self, seg: Segment) -> &mut [f64] {
        &mut self.0[seg.range()]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        StateVector(values)
    }
}

/// Read access to gate weights, gate biases and the readout vector.
///
/// Implemented both by the owned [`RnnParams`] and by [`ParamsView`], which
/// reads straight out of a packed `theta` slice.
pub trait CellParams {
    fn spec(&self) -> &RnnSpec;
    /// Row-major `k x (k + l)` matrix of gate `g`.
    fn weights(&self, gate: usize) -> &[f64];
    fn bias(&self, gate: usize) -> &[f64];
    fn readout(&self) -> &[f64];
}

/// Weights and bias of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// Row-major `k x (k + l)`; columns `0..k` multiply `h_prev`, the rest `x`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gate {
    pub fn zeros(spec: &RnnSpec) -> Self {
        Gate {
            weights: vec![0.0; spec.hidden * spec.concat_len()],
            bias: vec![0.0; spec.hidden],
        }
    }
}

/// Unpacked recurrent-cell parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub spec: RnnSpec,
    /// Gates in packing order: `f, i, c, o` for LSTM, `z, q, h` for GRU.
    pub gates: Vec<Gate>,
    pub readout: Vec<f64>,
}

impl RnnParams {
    pub fn zeros(spec: RnnSpec) -> Self {
        RnnParams {
            gates: (0..spec.cell.gate_count())
                .map(|_| Gate::zeros(&spec))
                .collect(),
            readout: vec![0.0; spec.hidden],
            spec,
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let spec = &self.spec;
        check_len("gate count", spec.cell.gate_count(), self.gates.len())?;
        for gate in &self.gates {
            check_len(
                "gate weights",
                spec.hidden * spec.concat_len(),
                gate.weights.len(),
            )?;
            check_len("gate bias", spec.hidden, gate.bias.len())?;
        }
        check_len("readout", spec.hidden, self.readout.len())
    }
}

impl CellParams for RnnParams {
    fn spec(&self) -> &RnnSpec {
        &self.spec
    }
    fn weights(&self, gate: usize) -> &[f64] {
        &self.gates[gate].weights
    }
    fn bias(&self, gate: usize) -> &[f64] {
        &self.gates[gate].bias
    }
    fn readout(&self) -> &[f64] {
        &self.readout
    }
}

/// Zero-copy view of a packed parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct ParamsView<'a> {
    spec: &'a RnnSpec,
    theta: &'a [f64],
}

impl<'a> ParamsView<'a> {
    pub fn new(spec: &'a RnnSpec, theta: &'a [f64]) -> Result<Self> {
        check_len("theta", spec.n_theta(), theta.len())?;
        Ok(ParamsView { spec, theta })
    }

    fn gate_offset(&self, gate: usize) -> usize {
        gate * self.spec.gate_len()
    }
}

impl CellParams for ParamsView<'_> {
    fn spec(&self) -> &RnnSpec {
        self.spec
    }
    fn weights(&self, gate: usize) -> &[f64] {
        let start = self.gate_offset(gate);
        &self.theta[start..start + self.spec.hidden * self.spec.concat_len()]
    }
    fn bias(&self, gate: usize) -> &[f64] {
        let start = self.gate_offset(gate) + self.spec.hidden * self.spec.concat_len();
        &self.theta[start..start + self.spec.hidden]
    }
    fn readout(&self) -> &[f64] {
        let start = self.spec.cell.gate_count() * self.spec.gate_len();
        &self.theta[start..start + self.spec.hidden]
    }
}

/// Flattens gate parameters into `theta`: for each gate its row-major matrix
/// then its bias, and the readout vector last.
pub fn pack_params(params: &RnnParams) -> Result<Vec<f64>> {
    params.spec.validate()?;
    params.check_shapes()?;
    let mut theta = Vec::with_capacity(params.spec.n_theta());
    for gate in &params.gates {
        theta.extend_from_slice(&gate.weights);
        theta.extend_from_slice(&gate.bias);
    }
    theta.extend_from_slice(&params.readout);
    Ok(theta)
}

/// Exact inverse of [`pack_params`].
pub fn unpack_params(theta: &[f64], spec: &RnnSpec) -> Result<RnnParams> {
    spec.validate()?;
    let view = ParamsView::new(spec, theta)?;
    Ok(RnnParams {
        spec: *spec,
        gates: (0..spec.cell.gate_count())
            .map(|g| Gate {
                weights: view.weights(g).to_vec(),
                bias: view.bias(g).to_vec(),
            })
            .collect(),
        readout: view.readout().to_vec(),
    })
}
