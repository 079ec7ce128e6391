//! Multiple-frame two-stage survey estimation.
//!
//! A population of second-stage units (ssus) is covered by several
//! overlapping frames, each partitioning its units into primary sampling
//! units (psus). Independent two-stage simple random samples are drawn per
//! frame and combined with multiplicity-adjusted weights.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cluster;
pub mod design;
pub mod error;
pub mod estimate;
pub mod frame;
pub mod io;
mod kv;
pub mod numeric;
pub mod raster;
pub mod rng;
pub mod simulate;
pub mod weights;

pub use cluster::{
    build_satellite_frame, frame_from_labels, kmeans, sse, ClusterModel, KMeansConfig, KMeansInit,
    SatelliteFrame,
};
pub use design::{
    draw_sample, enumerate_samples, for_each_sample, impose_shared_sample, inclusion,
    inclusion_probability, sample_space_size, Allocation, DesignSpec, FrameDesign, FrameSample,
    PsuSample, SampleDraw, DEFAULT_ENUMERATION_CAP,
};
pub use error::{Error, Result};
pub use estimate::*;
pub use frame::{
    build_population, domain_of, DomainKey, Frame, FrameId, FrameSpec, Population, Psu, PsuId,
    PsuSpec, UnitId, UnitRecord,
};
pub use raster::{GeoTransform, LabelRaster, Raster};
pub use simulate::{
    generate_population, monte_carlo, monte_carlo_replications, unbiasedness_oracle, DeskInstance,
    OracleMethod, OracleReport, Replication, SatelliteSpec, SynthSpec, SyntheticPopulation,
};
pub use weights::{
    compute_weights, compute_weights_with, population_weights, star_probability, PopulationWeights,
    StarProbability, WeightEntry, WeightForm, WeightTable,
};
