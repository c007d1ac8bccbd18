//! Fixtures shared by the benchmarks.

use pcmotion_core::{generate_sequence, FrameSequence, SynthConfig};

/// Synthetic sequence at the default rate and motion; at least two frames.
pub fn fixture_sequence(seed: u64, frame_count: usize) -> FrameSequence {
    generate_sequence(&SynthConfig { seed, frame_count, amplitude_m: 0.02, ..SynthConfig::default() })
        .expect("default synthetic config is valid")
}
