//! Analysis toolkit for temporal bipartite co-occurrence data.
//!
//! The crate ingests event streams in which a nature feature and a human
//! activity co-occur on a calendar day, and reconstructs the full analysis
//! chain used to study such records: weighted bipartite network statistics,
//! higher-order singular value decomposition of the feature x activity x day
//! count tensor, Morlet wavelet and cross-wavelet spectra with red-noise
//! significance testing, and user-turnover dynamics. A deterministic
//! synthetic generator produces event streams with injected perturbations so
//! every stage can be verified end to end.
//!
//! Modules follow the processing order:
//!
//! * [`ingest`] - event and taxonomy parsing, daily count aggregation
//! * [`net`] - weighted bipartite networks and their global/node statistics
//! * [`tensor`] - the count tensor, HOSVD, and leading outer products
//! * [`spectral`] - continuous wavelet transform, significance, cross-wavelet
//! * [`turnover`] - user-based network weights and new-user ratios
//! * [`stringency`] - government-response index ingestion and alignment
//! * [`synth`] - seeded synthetic event-stream generation

pub mod ingest;
pub mod net;
pub mod spectral;
pub mod stringency;
pub mod synth;
pub mod tensor;
pub mod turnover;

pub use ingest::{DailyCounts, DayRange, EventRecord, Grouping, Taxonomy};
pub use net::{BipartiteNetwork, NetworkStats, NodeScores};
pub use spectral::{CrossSpectrum, TimeSeries, WaveletParams, WaveletSpectrum};
pub use stringency::StringencySeries;
pub use synth::SynthConfig;
pub use tensor::{CesTensor, Hosvd};
pub use turnover::{TurnoverScope, TurnoverSeries};
