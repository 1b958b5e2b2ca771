//! Every Rust code block in the book runs as a doc-test of this crate, so
//! `cargo test --workspace` fails whenever the guide drifts from the
//! library. One module per chapter keeps failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/events-and-taxonomies.md")]
pub mod events_and_taxonomies {}

#[doc = include_str!("../../../book/src/network-statistics.md")]
pub mod network_statistics {}

#[doc = include_str!("../../../book/src/tensor-decomposition.md")]
pub mod tensor_decomposition {}

#[doc = include_str!("../../../book/src/wavelet-analysis.md")]
pub mod wavelet_analysis {}

#[doc = include_str!("../../../book/src/user-turnover.md")]
pub mod user_turnover {}

#[doc = include_str!("../../../book/src/synthetic-streams.md")]
pub mod synthetic_streams {}

#[doc = include_str!("../../../book/src/cli-reference.md")]
pub mod cli_reference {}
