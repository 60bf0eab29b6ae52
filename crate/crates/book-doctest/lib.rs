// mdbook cannot run examples that need crate dependencies, so every chapter
// is pulled in here as the docs of an empty module and `cargo test --doc`
// runs the snippets. One module per chapter keeps failures traceable.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../book/src/platycosms.md")]
pub mod platycosms {}
#[doc = include_str!("../../book/src/character-varieties.md")]
pub mod character_varieties {}
#[doc = include_str!("../../book/src/harmonic-metrics.md")]
pub mod harmonic_metrics {}
#[doc = include_str!("../../book/src/spectral-covers.md")]
pub mod spectral_covers {}
#[doc = include_str!("../../book/src/g2-structures.md")]
pub mod g2_structures {}
#[doc = include_str!("../../book/src/ale-quotient.md")]
pub mod ale_quotient {}
#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}
