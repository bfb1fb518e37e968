//! Tools for finite-horizon two-player zero-sum Markov games: game
//! construction and serialization, a dense simplex solver with matrix-game
//! and coarse-correlated-equilibrium oracles, exact Nash solutions by
//! backward induction, a stage-based optimistic Q-learner with
//! reference-advantage variance reduction, and certified output policies
//! with exact and Monte Carlo evaluation.
//!
//! Everything is deterministic given a master seed: random draws come from
//! counter-based streams (see [`rng`]), and the data-parallel paths (feature
//! `parallel`, on by default) produce the same results as the sequential
//! fallbacks.

pub mod error;
pub mod exact;
pub mod exec;
pub mod game;
pub mod learner;
pub mod lp;
pub mod metrics;
pub mod replay;
pub mod rng;
pub mod stage;

pub use error::{Error, Result};

pub mod jsonfmt {
    use std::io;

    use serde::Serialize;

    /// JSON formatter that writes every f64 with 17 significant digits, so
    /// serialized values round-trip bit-exactly and files diff cleanly.
    pub struct SigFig17;

    impl serde_json::ser::Formatter for SigFig17 {
        fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            write!(writer, "{:.16e}", value)
        }
    }

    pub fn to_string<T: Serialize>(value: &T) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFig17);
        value
            .serialize(&mut ser)
            .expect("in-memory json serialization cannot fail");
        String::from_utf8(out).expect("serde_json emits utf8")
    }
}
