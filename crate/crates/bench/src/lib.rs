//! Inputs shared by the benchmarks.

use mfs_core::{
    generate_population, Allocation, DesignSpec, FrameDesign, Raster, SynthSpec,
    SyntheticPopulation,
};

/// The default synthetic study area.
pub fn synthetic() -> SyntheticPopulation {
    generate_population(&SynthSpec::default()).expect("default spec is valid")
}

/// A larger study area for clustering, `side × side` pixels.
pub fn raster(side: usize) -> Raster {
    let spec = SynthSpec {
        width: side,
        height: side,
        ..SynthSpec::default()
    };
    generate_population(&spec)
        .expect("valid spec")
        .rasters
        .swap_remove(0)
        .1
}

/// Independent two-stage draws in all three synthetic frames.
pub fn independent_design(seed: u64) -> DesignSpec {
    let fixed = |n, m| FrameDesign::Fixed {
        n,
        m: Allocation::Uniform(m),
    };
    DesignSpec::new(seed)
        .with_frame(1, fixed(4, 10))
        .with_frame(2, fixed(5, 6))
        .with_frame(3, fixed(3, 10))
}
