//! Shared inputs for the benchmarks in `benches/`.

use tweettopic::synth::{generate, SynthConfig, SynthCorpus};

/// Deterministic synthetic corpus of `n` labeled tweets.
pub fn corpus(n: usize) -> SynthCorpus {
    generate(&SynthConfig { n, seed: 99, ..SynthConfig::default() })
}
