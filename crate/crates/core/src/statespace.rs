//! The joint transition map with additive Gaussian noise, the joint
//! measurement and the Gaussian observation likelihood.
//!
//! Transition: the recurrent segments `(c, h)` go through one deterministic
//! cell step driven by the parameters stored in `theta`, then receive noise;
//! every parameter segment is a Gaussian random walk. Measurement:
//! `y = w . h + r . [phi; theta_ma; beta]`, where `w` is the readout stored at
//! the end of `theta`. The measurement is bilinear in the state, so it is
//! evaluated directly rather than as an explicit coefficient vector.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cells::{gru_forward_into, lstm_forward_into};
use crate::error::{check_len, Error, Result};
use crate::model::{
    CellKind, NoiseSpec, ParamsView, RnnSpec, SarimaxSpec, Segment, StateLayout, StateVector,
};
use crate::regressor::RegressorVector;

/// Data consumed by one transition and measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionInput {
    /// Recurrent-cell input, length `l` (empty for linear-only models).
    pub x: Vec<f64>,
    /// SARIMAX regressor.
    pub r: RegressorVector,
}

/// The concatenated recurrent + SARIMAX state-space model.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub rnn: Option<RnnSpec>,
    pub sx: SarimaxSpec,
    pub noise: NoiseSpec,
    pub layout: StateLayout,
}

impl JointModel {
    pub fn new(rnn: Option<RnnSpec>, sx: SarimaxSpec, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        let layout = StateLayout::new(rnn.as_ref(), &sx)?;
        Ok(JointModel {
            rnn,
            sx,
            noise,
            layout,
        })
    }

    pub fn input_size(&self) -> usize {
        self.rnn.map_or(0, |r| r.input)
    }

    /// Draws the next state from `p(s_t | s_{t-1})` using `self.noise`.
    pub fn transition<R: Rng + ?Sized>(
        &self,
        s: &StateVector,
        x: &[f64],
        rng: &mut R,
    ) -> Result<StateVector> {
        let mut next = s.clone();
        self.transition_in_place(&mut next, x, &self.noise, rng)?;
        Ok(next)
    }

    /// In-place transition with an explicit noise level.
    ///
    /// Zero standard deviations draw nothing from `rng`, so a noiseless spec
    /// gives the deterministic map and leaves the stream untouched.
    pub fn transition_in_place<R: Rng + ?Sized>(
        &self,
        s: &mut StateVector,
        x: &[f64],
        noise: &NoiseSpec,
        rng: &mut R,
    ) -> Result<()> {
        check_len("state vector", self.layout.total_dim, s.len())?;
        let layout = &self.layout;
        if let Some(rnn) = &self.rnn {
            check_len("cell input", rnn.input, x.len())?;
            self.step_cell(rnn, s.as_mut_slice(), x)?;
            add_noise(
                s.segment_mut(layout.cell),
                noise.sigma_c,
                rng,
                rnn.cell == CellKind::Lstm,
            );
            add_noise(s.segment_mut(layout.hidden), noise.sigma_h, rng, true);
            add_noise(s.segment_mut(layout.theta), noise.sigma_theta, rng, true);
        }
        add_noise(s.segment_mut(layout.sx()), noise.sigma_sx, rng, true);
        if s.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "state transition",
                step: 0,
            });
        }
        Ok(())
    }

    /// Runs the deterministic cell step on the `(c, h)` segments.
    fn step_cell(&self, rnn: &RnnSpec, state: &mut [f64], x: &[f64]) -> Result<()> {
        let layout = &self.layout;
        let (head, params) = state.split_at_mut(layout.theta.offset);
        let view = ParamsView::new(rnn, &params[..layout.theta.len])?;
        let (c, h) = head.split_at_mut(layout.hidden.offset);
        let h_prev = h.to_vec();
        match rnn.cell {
            CellKind::Lstm => {
                let c_prev = c.to_vec();
                lstm_forward_into(&view, x, &c_prev, &h_prev, c, h)
            }
            CellKind::Gru => gru_forward_into(&view, x, &h_prev, h),
        }
    }

    /// Noiseless conditional mean `w . h + r . s_sx`.
    pub fn measure(&self, s: &StateVector, r: &RegressorVector) -> Result<f64> {
        check_len("state vector", self.layout.total_dim, s.len())?;
        check_len("regressor", self.layout.sx().len, r.len())?;
        Ok(self.measure_unchecked(s.as_slice(), r.as_slice()))
    }

    pub(crate) fn measure_unchecked(&self, s: &[f64], r: &[f64]) -> f64 {
        let linear = dot(&s[self.layout.sx().range()], r);
        match &self.rnn {
            Some(rnn) => {
                let readout = readout_segment(&self.layout, rnn);
                linear + dot(&s[readout.range()], &s[self.layout.hidden.range()])
            }
            None => linear,
        }
    }
}

/// Position of the readout vector `w` inside the state.
pub fn readout_segment(layout: &StateLayout, rnn: &RnnSpec) -> Segment {
    Segment {
        offset: layout.theta.end() - rnn.hidden,
        len: rnn.hidden,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_noise<R: Rng + ?Sized>(seg: &mut [f64], sigma: f64, rng: &mut R, enabled: bool) {
    if !enabled || sigma == 0.0 {
        return;
    }
    for v in seg {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log N(y_obs; y_pred, sigma_y^2)`.
pub fn log_likelihood(y_obs: f64, y_pred: f64, sigma_y: f64) -> f64 {
    let z = (y_obs - y_pred) / sigma_y;
    -0.5 * z * z - sigma_y.ln() - HALF_LN_2PI
}
