//! Multi-tone sinusoidal frequency modulated (MTSFM) waveform design for
//! MIMO transmit beampattern shaping.
//!
//! The crate evaluates generalized Bessel functions, builds waveform
//! correlation matrices and beampatterns from modulation indices, optimizes
//! those indices under an RMS bandwidth constraint, and measures the
//! resulting ambiguity functions.

pub mod ambiguity;
pub mod bessel;
mod error;
pub mod gbf;
pub mod mimo;
pub mod optimizer;
pub mod waveform;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gbf.md")]
    mod gbf {}
    #[doc = include_str!("../../../book/src/waveforms.md")]
    mod waveforms {}
    #[doc = include_str!("../../../book/src/beampatterns.md")]
    mod beampatterns {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/ambiguity.md")]
    mod ambiguity {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
