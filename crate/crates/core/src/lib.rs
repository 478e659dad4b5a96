//! Delay–distance correlation analysis and correlation-aware IP
//! geolocation.
//!
//! The crate covers geodesic distances, the delay–distance correlation
//! measure and its analytic path-factor model, RTT dataset handling, a
//! deterministic topology/delay simulator, and the GeoGet and CBG
//! geolocation algorithms with error metrics.

pub mod corr_model;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod geodesy;
pub mod geoloc;
pub mod netsim;

pub use corr_model::{
    classify_corr, corr_matrix, pearson_corr, rtd_model_corr, CorrMatrix, CorrStrength, CorrValue,
    DelayDistanceSample, PathFactors, ProbeCorrReport, RichSubnets, Speed,
    DEFAULT_STRONG_THRESHOLD,
};
pub use dataset::{HostRecord, MinRtts, Registry, Role, RttObservation};
pub use error::{Error, Result};
pub use geodesy::{geodesic_distance, Coordinate, Kilometers};
pub use geoloc::{
    Bestline, BestlineScope, ErrorReport, GeolocationResult, Mode, Outcome, DEFAULT_GRID_KM,
};
pub use netsim::{PathModelConfig, Topology, TopologyConfig};
