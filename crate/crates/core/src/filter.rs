//! Bootstrap particle filter over the joint state.
//!
//! Each step propagates every particle through the prior transition, adds
//! the observation log-likelihood to its log-weight, normalizes with a
//! max-shifted log-sum-exp and resamples systematically when the effective
//! sample size drops below the threshold.
//!
//! Randomness: particle slot `i` owns ChaCha stream `i + 1` of the master
//! seed and resampling uses stream 0. Slots keep their streams across
//! resampling, so results do not depend on whether particles are evaluated
//! in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{NoiseSpec, StateVector};
use crate::statespace::{log_likelihood, readout_segment, JointModel, TransitionInput};

/// How the one-step forecast is formed from the weighted particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Propagate and measure each particle, then average the measurements.
    #[default]
    ParticleMean,
    /// Propagate and measure the weighted-mean state.
    MeanState,
}

/// Particle-cloud initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSpec {
    /// Standard deviation of the initial SARIMAX coefficients.
    pub sx_std: f64,
    /// Mean of the initial SARIMAX coefficients; empty means all zero.
    pub sx_mean: Vec<f64>,
    /// Multiplier on the recurrent weight and readout standard deviations.
    pub rnn_gain: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            sx_std: 0.1,
            sx_mean: Vec::new(),
            rnn_gain: 1.0,
        }
    }
}

/// Filter size and behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when `N_eff` falls below this; `None` means `N / 2`.
    pub resample_threshold: Option<f64>,
    /// Evaluate particles on the rayon pool.
    pub parallel: bool,
    pub prediction: PredictionMode,
}

impl FilterConfig {
    pub fn new(particles: usize) -> Self {
        FilterConfig {
            particles,
            resample_threshold: None,
            parallel: false,
            prediction: PredictionMode::ParticleMean,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.resample_threshold
            .unwrap_or(self.particles as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidSpec(format!(
                "particle count must be at least 2 (got {})",
                self.particles
            )));
        }
        let t = self.threshold();
        if !(t.is_finite() && t >= 0.0 && t <= self.particles as f64) {
            return Err(Error::InvalidSpec(format!(
                "resampling threshold must lie in [0, N] (got {t})"
            )));
        }
        Ok(())
    }
}

/// Summary of one filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Effective sample size after normalization, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    /// `log p(y_t | y_{0:t-1})` estimate.
    pub log_evidence: f64,
}

/// Weighted particle approximation of the filtering distribution.
#[derive(Debug, Clone)]
pub struct Ensemble {
    model: JointModel,
    particles: Vec<StateVector>,
    /// Normalized log-weights.
    log_weights: Vec<f64>,
    streams: Vec<ChaCha8Rng>,
    resampler: ChaCha8Rng,
    config: FilterConfig,
    steps: usize,
    resamples: usize,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let z: f64 = rng.sample(StandardNormal);
    mean + std * z
}

impl Ensemble {
    /// Draws `N` particles: zero recurrent states, gate matrices
    /// `~ N(0, 1/(k + l))`, zero biases, readout `~ N(0, 1/k)` and SARIMAX
    /// coefficients `~ N(sx_mean, sx_std^2)`; uniform weights.
    pub fn init(
        model: JointModel,
        init: &InitSpec,
        config: FilterConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let sx = model.layout.sx();
        if !init.sx_mean.is_empty() {
            check_len("initial SARIMAX mean", sx.len, init.sx_mean.len())?;
        }
        if !(init.sx_std.is_finite()
            && init.sx_std >= 0.0
            && init.rnn_gain.is_finite()
            && init.rnn_gain >= 0.0)
        {
            return Err(Error::InvalidSpec(
                "initial spreads must be non-negative".into(),
            ));
        }
        let mut streams: Vec<ChaCha8Rng> = (0..config.particles as u64)
            .map(|i| stream(seed, i + 1))
            .collect();
        let particles = streams
            .iter_mut()
            .map(|rng| {
                let mut s = StateVector::zeros(&model.layout);
                if let Some(rnn) = &model.rnn {
                    let k = rnn.hidden;
                    let w_std = init.rnn_gain / (rnn.concat_len() as f64).sqrt();
                    let theta = s.segment_mut(model.layout.theta);
                    for gate in
                        theta[..rnn.cell.gate_count() * rnn.gate_len()].chunks_mut(rnn.gate_len())
                    {
                        let (weights, _bias) = gate.split_at_mut(k * rnn.concat_len());
                        for w in weights {
                            *w = draw_normal(rng, 0.0, w_std);
                        }
                    }
                    let r_std = init.rnn_gain / (k as f64).sqrt();
                    let readout = readout_segment(&model.layout, rnn);
                    for w in s.segment_mut(readout) {
                        *w = draw_normal(rng, 0.0, r_std);
                    }
                }
                for (j, v) in s.segment_mut(sx).iter_mut().enumerate() {
                    let mean = init.sx_mean.get(j).copied().unwrap_or(0.0);
                    *v = draw_normal(rng, mean, init.sx_std);
                }
                s
            })
            .collect();
        Ok(Self::assemble(model, particles, streams, config, seed))
    }

    /// Builds an ensemble with equal weights from explicit particles.
    pub fn from_particles(
        model: JointModel,
        particles: Vec<StateVector>,
        config: FilterConfig,
        seed: u64,
    ) -> Result<Self> {
        let config = FilterConfig {
            particles: particles.len(),
            ..config
        };
        if particles.is_empty() {
            return Err(Error::InvalidSpec(
                "ensemble needs at least one particle".into(),
            ));
        }
        for p in &particles {
            check_len("particle", model.layout.total_dim, p.len())?;
        }
        let streams = (0..particles.len() as u64)
            .map(|i| stream(seed, i + 1))
            .collect();
        Ok(Self::assemble(model, particles, streams, config, seed))
    }

    fn assemble(
        model: JointModel,
        particles: Vec<StateVector>,
        streams: Vec<ChaCha8Rng>,
        config: FilterConfig,
        seed: u64,
    ) -> Self {
        let n = particles.len();
        Ensemble {
            model,
            particles,
            log_weights: vec![-(n as f64).ln(); n],
            streams,
            resampler: stream(seed, 0),
            config,
            steps: 0,
            resamples: 0,
        }
    }

    pub fn model(&self) -> &JointModel {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[StateVector] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn effective_size(&self) -> f64 {
        effective_size(&self.log_weights)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn resample_count(&self) -> usize {
        self.resamples
    }

    /// Mutable access to the particle states, e.g. to reset recurrent state
    /// between offline passes. Weights are untouched.
    pub fn particles_mut(&mut self) -> &mut [StateVector] {
        &mut self.particles
    }

    /// One observe-and-update step with observation `y`.
    pub fn filter_step(&mut self, input: &TransitionInput, y: f64) -> Result<StepReport> {
        let step = self.steps;
        if !y.is_finite() {
            return Err(Error::NonFinite {
                what: "input observation",
                step,
            });
        }
        check_len("regressor", self.model.layout.sx().len, input.r.len())?;
        let model = &self.model;
        let noise = model.noise;
        let sigma_y = noise.sigma_y;
        let update =
            |(s, (lw, rng)): (&mut StateVector, (&mut f64, &mut ChaCha8Rng))| -> Result<f64> {
                model.transition_in_place(s, &input.x, &noise, rng)?;
                let pred = model.measure_unchecked(s.as_slice(), input.r.as_slice());
                let ll = log_likelihood(y, pred, sigma_y);
                *lw += if ll.is_nan() { f64::NEG_INFINITY } else { ll };
                Ok(ll)
            };
        let outcome: Result<()> = if self.config.parallel {
            self.particles
                .par_iter_mut()
                .zip(
                    self.log_weights
                        .par_iter_mut()
                        .zip(self.streams.par_iter_mut()),
                )
                .map(update)
                .collect::<Result<Vec<_>>>()
                .map(|_| ())
        } else {
            self.particles
                .iter_mut()
                .zip(self.log_weights.iter_mut().zip(self.streams.iter_mut()))
                .try_for_each(|item| update(item).map(|_| ()))
        };
        outcome.map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { what, step },
            other => other,
        })?;

        let log_evidence =
            normalize_log_weights(&mut self.log_weights).ok_or(Error::WeightUnderflow {
                step,
                observation: y,
            })?;
        let ess = effective_size(&self.log_weights);
        let resampled = ess < self.config.threshold();
        if resampled {
            self.resample();
        }
        self.steps += 1;
        Ok(StepReport {
            ess,
            resampled,
            log_evidence,
        })
    }

    /// Propagates recurrent states without noise and without touching the
    /// weights or any parameter segment.
    pub fn propagate_frozen(&mut self, x: &[f64]) -> Result<()> {
        if self.model.rnn.is_none() {
            return Ok(());
        }
        let model = &self.model;
        let quiet = NoiseSpec::noiseless(model.noise.sigma_y);
        let mut unused = stream(0, u64::MAX);
        for s in &mut self.particles {
            model.transition_in_place(s, x, &quiet, &mut unused)?;
        }
        self.steps += 1;
        Ok(())
    }

    /// Systematic resampling with the ensemble's resampling stream; weights
    /// become uniform.
    pub fn resample(&mut self) {
        let weights = self.weights();
        let picks = systematic_resample(&weights, &mut self.resampler);
        self.particles = picks.iter().map(|&i| self.particles[i].clone()).collect();
        let n = self.particles.len();
        self.log_weights
            .iter_mut()
            .for_each(|lw| *lw = -(n as f64).ln());
        self.resamples += 1;
    }

    /// Weighted mean of the particles.
    pub fn estimate_state(&self) -> StateVector {
        let mut mean = vec![0.0; self.model.layout.total_dim];
        for (s, lw) in self.particles.iter().zip(&self.log_weights) {
            let w = lw.exp();
            for (m, v) in mean.iter_mut().zip(s.as_slice()) {
                *m += w * v;
            }
        }
        StateVector::from_raw(mean)
    }

    /// One-step forecast from the current weighted particles.
    ///
    /// Particles are propagated with `input.x` without any noise before the
    /// measurement with `input.r`; the ensemble itself is not modified.
    pub fn predict(&self, input: &TransitionInput) -> Result<f64> {
        check_len("regressor", self.model.layout.sx().len, input.r.len())?;
        let model = &self.model;
        let quiet = NoiseSpec::noiseless(model.noise.sigma_y);
        let measure_next = |s: &StateVector| -> Result<f64> {
            if model.rnn.is_none() {
                return Ok(model.measure_unchecked(s.as_slice(), input.r.as_slice()));
            }
            let mut next = s.clone();
            let mut unused = stream(0, u64::MAX);
            model.transition_in_place(&mut next, &input.x, &quiet, &mut unused)?;
            Ok(model.measure_unchecked(next.as_slice(), input.r.as_slice()))
        };
        match self.config.prediction {
            PredictionMode::MeanState => measure_next(&self.estimate_state()),
            PredictionMode::ParticleMean => {
                let preds: Vec<f64> = if self.config.parallel {
                    self.particles
                        .par_iter()
                        .map(measure_next)
                        .collect::<Result<_>>()?
                } else {
                    self.particles
                        .iter()
                        .map(measure_next)
                        .collect::<Result<_>>()?
                };
                Ok(preds
                    .iter()
                    .zip(&self.log_weights)
                    .map(|(p, lw)| p * lw.exp())
                    .sum())
            }
        }
    }
}

/// Normalizes log-weights in place; returns `log sum exp` of the input, or
/// `None` when every weight is zero.
pub fn normalize_log_weights(log_weights: &mut [f64]) -> Option<f64> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let sum: f64 = log_weights
        .iter()
        .map(|lw| if lw.is_nan() { 0.0 } else { (lw - max).exp() })
        .sum();
    let lse = max + sum.ln();
    for lw in log_weights.iter_mut() {
        *lw = if lw.is_nan() {
            f64::NEG_INFINITY
        } else {
            *lw - lse
        };
    }
    Some(lse)
}

/// `1 / sum(w_i^2)` from normalized log-weights.
pub fn effective_size(log_weights: &[f64]) -> f64 {
    let sq: f64 = log_weights.iter().map(|lw| (2.0 * lw).exp()).sum();
    1.0 / sq
}

/// Offspring indices for normalized `weights` using one draw `u ~ U[0, 1)`
/// and the strata `(u + j) / N`.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let u: f64 = rng.random();
    systematic_indices(weights, u)
}

/// Deterministic core of [`systematic_resample`] for a given offset
/// `u in [0, 1)`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    // points landing on a cumulative boundary (up to rounding) go to the
    // right, so uniform weights map one-to-one for every offset
    let tol = 4.0 * n as f64 * f64::EPSILON;
    let mut picks = Vec::with_capacity(n);
    let mut cumulative = weights.first().copied().unwrap_or(0.0);
    let mut idx = 0;
    for j in 0..n {
        let point = (u + j as f64) / n as f64;
        while cumulative - point <= tol && idx + 1 < n {
            idx += 1;
            cumulative += weights[idx];
        }
        picks.push(idx);
    }
    picks
}
