//! Shared setup for the benchmarks.

use hybridpf::regressor::build_regressor;
use hybridpf::{
    synth_hybrid, CellKind, Ensemble, FilterConfig, HistoryBuffer, InitSpec, JointModel, NoiseSpec,
    ResidualBuffer, RnnSpec, SarimaxSpec, TransitionInput,
};

/// An LSTM-SARIMAX ensemble over the seasonal benchmark series with the
/// inputs and observations of its first `steps` steps.
pub fn hybrid_workload(
    particles: usize,
    parallel: bool,
    steps: usize,
) -> (Ensemble, Vec<(TransitionInput, f64)>) {
    let data = synth_hybrid(steps.max(100), 24, 0)
        .expect("fixture")
        .dataset;
    let sx = SarimaxSpec {
        p: 1,
        seasonal_p: 1,
        period: 24,
        n_exog: 2,
        ..Default::default()
    };
    let rnn = RnnSpec::new(CellKind::Lstm, 2, 2).expect("rnn spec");
    let noise = NoiseSpec {
        sigma_y: 1.0,
        ..NoiseSpec::default()
    };
    let model = JointModel::new(Some(rnn), sx, noise).expect("model");
    let config = FilterConfig {
        parallel,
        ..FilterConfig::new(particles)
    };
    let ens = Ensemble::init(model, &InitSpec::default(), config, 0).expect("ensemble");
    let mut hist = HistoryBuffer::with_capacity(24);
    let res = ResidualBuffer::with_capacity(0);
    let inputs = data
        .target
        .iter()
        .zip(&data.exog)
        .take(steps)
        .map(|(y, x)| {
            let r = build_regressor(&hist, &res, x, &sx).expect("regressor");
            hist.push(*y);
            (TransitionInput { x: x.clone(), r }, *y)
        })
        .collect();
    (ens, inputs)
}
