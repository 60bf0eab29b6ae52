#![allow(clippy::needless_range_loop)]

pub mod lie_core;
pub mod linalg;
pub mod rng;
pub mod platycosm;
pub mod smith;
pub mod char_variety;
pub mod higgs_harmonic;
pub mod spectral_cover;
pub mod g2_structures;
pub mod kronheimer_ale;
pub mod fixtures;
