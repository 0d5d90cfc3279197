//! Shared inputs for the benchmarks.

use carbcal::simstudy::three_phase_fixture;
use carbcal::{default_hyperparameters, run_chain, CalibrationCurve, ChainConfig, Determination, Hyperparameters};
use carbcal::{PosteriorSamples, SamplerKind};

/// The bundled three-phase determinations and their default hyperparameters.
pub fn three_phase(curve: &CalibrationCurve) -> (Vec<Determination>, Hyperparameters) {
    let dets = three_phase_fixture(curve).expect("fixture").dets;
    let hyper = default_hyperparameters(&dets, curve).expect("hyperparameters");
    (dets, hyper)
}

/// A short stored chain on the three-phase data.
pub fn short_chain(curve: &CalibrationCurve, kind: SamplerKind, stored: usize) -> PosteriorSamples {
    let (dets, hyper) = three_phase(curve);
    let cfg = ChainConfig::new(hyper)
        .iterations(1_000 + 5 * stored, 1_000, 5)
        .sampler(kind)
        .seed(1);
    run_chain(&dets, curve, &cfg).expect("chain")
}
