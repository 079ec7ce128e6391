//! Synthetic populations and the verification harness: an exhaustive
//! enumeration oracle for the multiple-frame estimator and a Monte-Carlo
//! counterpart.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::cluster::{frame_from_labels, kmeans, ClusterModel, KMeansConfig, KMeansInit};
use crate::design::{draw_sample, for_each_sample, DesignSpec, FrameDesign, SampleDraw};
use crate::error::{Error, Result};
use crate::estimate::{
    mf_mean, mf_variance_est, mf_variance_population, EstimateOptions, VarianceForm,
};
use crate::frame::{FrameId, FrameSpec, Population, PsuSpec, UnitRecord};
use crate::kv;
use crate::numeric::NeumaierSum;
use crate::raster::{GeoTransform, Raster};
use crate::rng::{self, derive_seed, tag};
use crate::weights::compute_weights_with;

/// A satellite frame made of `tiles_x × tiles_y` spectrally distinct tiles,
/// clustered with `K = tiles_x · tiles_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteSpec {
    pub frame: u16,
    pub name: Option<String>,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl SatelliteSpec {
    pub fn k(&self) -> usize {
        self.tiles_x * self.tiles_y
    }
}

/// Synthetic study area. Every pixel is one unit located at its centre.
///
/// The list frame (id 1) orders pixels by vertical bands `list_band_width`
/// pixels wide (row-major inside each band, bands left to right), and cuts
/// the first `Σ sizes` of them into `list_psus` runs with sizes uniform on
/// `list_size`, so each psu is a compact block; later pixels are off the
/// list. Each satellite frame clusters its own raster, whose bands are
/// affine in the frame's tile effect plus uniform noise.
///
/// `y = base_yield + trend · (col/(W−1) − ½) + Σ_α effect_α + U(−noise, noise)`,
/// with the `K_α` tile effects of frame `α` evenly spaced on
/// `±tile_effect / (number of satellite frames)` and shuffled over tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub pixel_size: f64,
    pub list_psus: usize,
    pub list_size: (usize, usize),
    pub list_band_width: usize,
    pub satellites: Vec<SatelliteSpec>,
    pub base_yield: f64,
    pub trend: f64,
    pub tile_effect: f64,
    pub noise: f64,
    pub band_noise: f64,
    /// List-frame `n` and `m` of the shared sample; `n · m` units in all.
    pub shared_n: usize,
    pub shared_m: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 30,
            height: 30,
            bands: 3,
            pixel_size: 10.0,
            list_psus: 20,
            list_size: (45, 45),
            list_band_width: 5,
            satellites: vec![
                SatelliteSpec {
                    frame: 2,
                    name: Some("satellite fine".into()),
                    tiles_x: 6,
                    tiles_y: 5,
                },
                SatelliteSpec {
                    frame: 3,
                    name: Some("satellite coarse".into()),
                    tiles_x: 3,
                    tiles_y: 3,
                },
            ],
            base_yield: 2000.0,
            trend: 400.0,
            tile_effect: 600.0,
            noise: 150.0,
            band_noise: 0.005,
            shared_n: 4,
            shared_m: 10,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("synthetic spec: {msg}")));
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return bad("grid dimensions and band count must be positive".into());
        }
        let (lo, hi) = self.list_size;
        if self.list_psus == 0 || lo == 0 || lo > hi || self.list_band_width == 0 {
            return bad(format!(
                "list frame needs psus ≥ 1, band width ≥ 1 and 1 ≤ min ≤ max size, got {lo}..{hi}"
            ));
        }
        let pixels = self.width * self.height;
        if self.list_psus * hi > pixels {
            return bad(format!(
                "{} list psus of up to {hi} units exceed the {pixels} units",
                self.list_psus
            ));
        }
        for s in &self.satellites {
            if s.frame == 1 || s.k() == 0 || s.k() > pixels {
                return bad(format!(
                    "satellite frame {} needs id ≠ 1 and 1 ≤ K ≤ pixels",
                    s.frame
                ));
            }
        }
        if self.shared_n == 0
            || self.shared_n > self.list_psus
            || self.shared_m == 0
            || self.shared_m > lo
        {
            return bad(format!(
                "shared sample n = {}, m = {} does not fit the list frame",
                self.shared_n, self.shared_m
            ));
        }
        if !(self.pixel_size > 0.0) {
            return bad("pixel size must be positive".into());
        }
        Ok(())
    }

    /// List frame drawn by two-stage srswor, satellite frames realized from
    /// the shared units.
    pub fn shared_design(&self) -> DesignSpec {
        let mut design = DesignSpec::new(self.seed)
            .with_frame(1, FrameDesign::fixed(self.shared_n, self.shared_m));
        for s in &self.satellites {
            design = design.with_frame(s.frame, FrameDesign::Realized);
        }
        design
    }
}

impl SynthSpec {
    /// Applies a flat key-value section on top of `self`. Keys are the field
    /// names, with `list_size_min`/`list_size_max` for the size range and
    /// `satellite.<α>.tiles_x`, `.tiles_y`, `.name` per satellite frame. Any
    /// satellite key replaces the whole satellite list.
    pub fn with_pairs<'a>(
        mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut satellites: BTreeMap<u16, SatelliteSpec> = BTreeMap::new();
        for (key, value) in pairs {
            match key {
                "width" => self.width = kv::parse(key, value)?,
                "height" => self.height = kv::parse(key, value)?,
                "bands" => self.bands = kv::parse(key, value)?,
                "pixel_size" => self.pixel_size = kv::parse(key, value)?,
                "list_psus" => self.list_psus = kv::parse(key, value)?,
                "list_size_min" => self.list_size.0 = kv::parse(key, value)?,
                "list_size_max" => self.list_size.1 = kv::parse(key, value)?,
                "list_band_width" => self.list_band_width = kv::parse(key, value)?,
                "base_yield" => self.base_yield = kv::parse(key, value)?,
                "trend" => self.trend = kv::parse(key, value)?,
                "tile_effect" => self.tile_effect = kv::parse(key, value)?,
                "noise" => self.noise = kv::parse(key, value)?,
                "band_noise" => self.band_noise = kv::parse(key, value)?,
                "shared_n" => self.shared_n = kv::parse(key, value)?,
                "shared_m" => self.shared_m = kv::parse(key, value)?,
                "seed" => self.seed = kv::parse(key, value)?,
                _ => {
                    let parts: Vec<&str> = key.split('.').collect();
                    let ["satellite", id, field] = parts.as_slice() else {
                        return Err(kv::unknown(key));
                    };
                    let frame: u16 = kv::parse(key, id)?;
                    let sat = satellites.entry(frame).or_insert(SatelliteSpec {
                        frame,
                        name: None,
                        tiles_x: 1,
                        tiles_y: 1,
                    });
                    match *field {
                        "tiles_x" => sat.tiles_x = kv::parse(key, value)?,
                        "tiles_y" => sat.tiles_y = kv::parse(key, value)?,
                        "name" => sat.name = Some(value.trim().to_string()),
                        _ => return Err(kv::unknown(key)),
                    }
                }
            }
        }
        if !satellites.is_empty() {
            self.satellites = satellites.into_values().collect();
        }
        Ok(self)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = [
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("bands", self.bands.to_string()),
            ("pixel_size", format!("{:?}", self.pixel_size)),
            ("list_psus", self.list_psus.to_string()),
            ("list_size_min", self.list_size.0.to_string()),
            ("list_size_max", self.list_size.1.to_string()),
            ("list_band_width", self.list_band_width.to_string()),
            ("base_yield", format!("{:?}", self.base_yield)),
            ("trend", format!("{:?}", self.trend)),
            ("tile_effect", format!("{:?}", self.tile_effect)),
            ("noise", format!("{:?}", self.noise)),
            ("band_noise", format!("{:?}", self.band_noise)),
            ("shared_n", self.shared_n.to_string()),
            ("shared_m", self.shared_m.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for s in &self.satellites {
            out.push((
                format!("satellite.{}.tiles_x", s.frame),
                s.tiles_x.to_string(),
            ));
            out.push((
                format!("satellite.{}.tiles_y", s.frame),
                s.tiles_y.to_string(),
            ));
            if let Some(name) = &s.name {
                out.push((format!("satellite.{}.name", s.frame), name.clone()));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub population: Population,
    /// One raster per satellite frame, in spec order.
    pub rasters: Vec<(FrameId, Raster)>,
    pub models: Vec<(FrameId, ClusterModel)>,
}

fn evenly_spaced(k: usize, half_width: f64) -> Vec<f64> {
    if k == 1 {
        return vec![0.0];
    }
    (0..k)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (k - 1) as f64)
        .collect()
}

pub fn generate_population(spec: &SynthSpec) -> Result<SyntheticPopulation> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[tag::SYNTH]);
    let (w, h) = (spec.width, spec.height);
    let pixels = w * h;
    let georef = GeoTransform {
        origin_x: 0.0,
        origin_y: 0.0,
        psize_x: spec.pixel_size,
        psize_y: spec.pixel_size,
    };

    // Tile effects per satellite frame, on a unit scale.
    let mut tile_of: Vec<Vec<usize>> = Vec::new();
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for s in &spec.satellites {
        let mut l = evenly_spaced(s.k(), 1.0);
        l.shuffle(&mut rng);
        levels.push(l);
        tile_of.push(
            (0..pixels)
                .map(|i| {
                    let (row, col) = (i / w, i % w);
                    (row * s.tiles_y / h) * s.tiles_x + col * s.tiles_x / w
                })
                .collect(),
        );
    }

    let share = spec.tile_effect / spec.satellites.len().max(1) as f64;
    let mut units = Vec::with_capacity(pixels);
    for i in 0..pixels {
        let (row, col) = (i / w, i % w);
        let slope = if w > 1 {
            col as f64 / (w - 1) as f64 - 0.5
        } else {
            0.0
        };
        let effects: f64 = (0..spec.satellites.len())
            .map(|a| levels[a][tile_of[a][i]] * share)
            .sum();
        let noise = if spec.noise > 0.0 {
            rng.random_range(-spec.noise..=spec.noise)
        } else {
            0.0
        };
        let (x, y) = georef.pixel_center(row, col);
        units.push(
            UnitRecord::new(i as u64 + 1)
                .at(x, y)
                .with_yield(spec.base_yield + spec.trend * slope + effects + noise),
        );
    }

    let band = spec.list_band_width.min(w);
    let order: Vec<u64> = (0..w.div_ceil(band))
        .flat_map(|b| {
            let cols = b * band..((b + 1) * band).min(w);
            (0..h).flat_map(move |row| cols.clone().map(move |col| (row * w + col) as u64 + 1))
        })
        .collect();
    let mut specs = Vec::new();
    let mut next = 0;
    let mut list = Vec::with_capacity(spec.list_psus);
    for p in 0..spec.list_psus {
        let size = rng.random_range(spec.list_size.0..=spec.list_size.1);
        list.push(PsuSpec::new(
            p as u32 + 1,
            order[next..next + size].iter().copied(),
        ));
        next += size;
    }
    specs.push(FrameSpec::new(1, list).named("list"));

    let mut rasters = Vec::new();
    let mut models = Vec::new();
    for (a, s) in spec.satellites.iter().enumerate() {
        let frame = FrameId(s.frame);
        let mut values = Vec::with_capacity(pixels * spec.bands);
        for i in 0..pixels {
            let signal = levels[a][tile_of[a][i]];
            for b in 0..spec.bands {
                let noise = if spec.band_noise > 0.0 {
                    rng.random_range(-spec.band_noise..=spec.band_noise)
                } else {
                    0.0
                };
                values.push(0.1 * (b + 1) as f64 + (0.2 + 0.1 * b as f64) * signal + noise);
            }
        }
        let raster = Raster::new(w, h, spec.bands, values, georef)?;
        let mut config =
            KMeansConfig::new(s.k(), derive_seed(spec.seed, &[tag::SYNTH, s.frame as u64]));
        config.init = KMeansInit::Spread;
        let model = kmeans(&raster, &config)?;
        let sat = frame_from_labels(&units, &model.labels(w, h), &georef, frame)?;
        let mut fspec = sat.spec;
        fspec.name = s.name.clone();
        specs.push(fspec);
        rasters.push((frame, raster));
        models.push((frame, model));
    }

    Ok(SyntheticPopulation {
        population: Population::from_partitions(units, specs)?,
        rasters,
        models,
    })
}

/// Desk-scale population and design used by the oracles.
#[derive(Debug, Clone)]
pub struct DeskInstance {
    pub name: &'static str,
    pub population: Population,
    pub design: DesignSpec,
}

fn yield_for(id: u64) -> f64 {
    2000.0 + ((id * 7919) % 101) as f64 * 13.0 + (id % 5) as f64 * 41.5
}

/// Units `1..=count` with irregular yields, partitioned per frame by the
/// given psu member lists.
fn desk(
    name: &'static str,
    count: u64,
    frames: Vec<Vec<Vec<u64>>>,
    design: DesignSpec,
) -> DeskInstance {
    let units = (1..=count)
        .map(|i| UnitRecord::new(i).with_yield(yield_for(i)))
        .collect();
    let specs = frames
        .into_iter()
        .enumerate()
        .map(|(a, psus)| {
            FrameSpec::new(
                a as u16 + 1,
                psus.into_iter()
                    .enumerate()
                    .map(|(i, m)| PsuSpec::new(i as u32 + 1, m))
                    .collect(),
            )
        })
        .collect();
    DeskInstance {
        name,
        population: Population::from_partitions(units, specs).expect("desk instances are valid"),
        design,
    }
}

fn chunks(ids: impl IntoIterator<Item = u64>, size: usize) -> Vec<Vec<u64>> {
    let ids: Vec<u64> = ids.into_iter().collect();
    ids.chunks(size).map(<[u64]>::to_vec).collect()
}

/// Self-weighting instances: complete frames, equal psu sizes within each
/// frame and a fixed `m`, so `Σ raw` is the same on every draw.
pub fn self_weighting_instances() -> Vec<DeskInstance> {
    // 4 × 4 grid numbered row-major from 1.
    let grid_rows = chunks(1..=16, 4);
    let grid_cols: Vec<Vec<u64>> = (0..4)
        .map(|c| (0..4).map(|r| r * 4 + c + 1).collect())
        .collect();
    let grid_tiles: Vec<Vec<u64>> = (0..4)
        .map(|t| {
            let (r0, c0) = (t / 2 * 2, t % 2 * 2);
            [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .map(|(dr, dc)| ((r0 + dr) * 4 + c0 + dc + 1) as u64)
                .collect()
        })
        .collect();
    vec![
        desk(
            "two frames, 8 units",
            8,
            vec![chunks(1..=8, 2), vec![vec![1, 3, 5, 7], vec![2, 4, 6, 8]]],
            DesignSpec::new(0)
                .with_frame(1, FrameDesign::fixed(2, 1))
                .with_frame(2, FrameDesign::fixed(1, 2)),
        ),
        desk(
            "three frames, 12 units",
            12,
            vec![
                chunks(1..=12, 3),
                vec![vec![1, 5, 9, 12], vec![2, 6, 10, 3], vec![4, 7, 8, 11]],
                vec![
                    vec![1, 2, 7],
                    vec![3, 4, 8],
                    vec![5, 6, 9],
                    vec![10, 11, 12],
                ],
            ],
            DesignSpec::new(0)
                .with_frame(1, FrameDesign::fixed(2, 2))
                .with_frame(2, FrameDesign::fixed(2, 1))
                .with_frame(3, FrameDesign::fixed(1, 1)),
        ),
        desk(
            "three frames on a 4 x 4 grid",
            16,
            vec![grid_rows, grid_tiles, grid_cols],
            DesignSpec::new(0)
                .with_frame(1, FrameDesign::fixed(2, 1))
                .with_frame(2, FrameDesign::fixed(1, 2))
                .with_frame(3, FrameDesign::fixed(1, 1)),
        ),
    ]
}

/// Instances where the population variance formula is exact: one complete
/// frame of equal psus with `n · m = 1`, or every psu drawn with `m = 1`.
pub fn exact_variance_instances() -> Vec<DeskInstance> {
    vec![
        desk(
            "single frame, n = 1, m = 1",
            12,
            vec![chunks(1..=12, 3)],
            DesignSpec::new(0).with_frame(1, FrameDesign::fixed(1, 1)),
        ),
        desk(
            "single frame, n = N, m = 1",
            12,
            vec![chunks(1..=12, 4)],
            DesignSpec::new(0).with_frame(1, FrameDesign::fixed(3, 1)),
        ),
    ]
}

/// Instances outside both families above, reported for information.
pub fn general_instances() -> Vec<DeskInstance> {
    vec![
        desk(
            "single frame, n = 2, m = 2",
            12,
            vec![chunks(1..=12, 3)],
            DesignSpec::new(0).with_frame(1, FrameDesign::fixed(2, 2)),
        ),
        desk(
            "incomplete list, unequal psus",
            10,
            vec![
                vec![vec![1, 2, 3], vec![4, 5], vec![6, 7, 8, 9]],
                vec![vec![1, 4, 6, 10], vec![2, 5, 7], vec![3, 8, 9]],
            ],
            DesignSpec::new(0)
                .with_frame(1, FrameDesign::fixed(2, 1))
                .with_frame(2, FrameDesign::fixed(2, 2)),
        ),
    ]
}

pub fn census_instance() -> DeskInstance {
    desk(
        "census",
        6,
        vec![chunks(1..=6, 2), chunks(1..=6, 3)],
        DesignSpec::new(0)
            .with_frame(
                1,
                FrameDesign::Fixed {
                    n: 3,
                    m: crate::design::Allocation::Uniform(2),
                },
            )
            .with_frame(
                2,
                FrameDesign::Fixed {
                    n: 2,
                    m: crate::design::Allocation::Uniform(3),
                },
            ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Enumeration { draws: u128 },
    MonteCarlo { replications: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub method: OracleMethod,
    /// `E[ŷ]` over the enumeration, or the mean of ŷ over replications.
    pub expected_estimate: f64,
    pub population_mean: f64,
    /// `|expected − truth| / |truth|`.
    pub relative_error: f64,
    /// Population variance formula with the derived `(1 − f2)` factor;
    /// `None` when some frame is realized.
    pub analytic_variance: Option<f64>,
    /// The same with the `(1 − f2²)` factor.
    pub analytic_variance_printed: Option<f64>,
    /// `Σ P · (ŷ − E[ŷ])²` over the enumeration.
    pub exact_variance: Option<f64>,
    /// Sample variance of ŷ over replications.
    pub empirical_variance: Option<f64>,
    /// `sd(ŷ)/√R`.
    pub se_of_mean: Option<f64>,
    /// Mean of the sample variance estimator over draws where it is defined.
    pub var_est_mean: Option<f64>,
    /// Draws on which the sample variance estimator was undefined.
    pub var_est_undefined: u128,
    /// Whether the weight normalizer `Σ raw` was the same on every draw.
    pub normalizer_constant: bool,
}

impl OracleReport {
    fn reference_variance(&self) -> Option<f64> {
        self.exact_variance.or(self.empirical_variance)
    }

    fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
        match (num, den) {
            (Some(a), Some(b)) if b != 0.0 => Some(a / b),
            _ => None,
        }
    }

    /// Analytic over exact (or empirical) variance.
    pub fn analytic_ratio(&self) -> Option<f64> {
        Self::ratio(self.analytic_variance, self.reference_variance())
    }

    pub fn printed_ratio(&self) -> Option<f64> {
        Self::ratio(self.analytic_variance_printed, self.reference_variance())
    }

    /// Mean sample variance estimate over exact (or empirical) variance.
    pub fn var_est_ratio(&self) -> Option<f64> {
        Self::ratio(self.var_est_mean, self.reference_variance())
    }

    /// `|mean(ŷ) − truth| / se_of_mean`; Monte Carlo only.
    pub fn z_score(&self) -> Option<f64> {
        self.se_of_mean
            .map(|se| (self.expected_estimate - self.population_mean).abs() / se)
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let num = |v: f64| format!("{v:.15e}");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), num);
        let (method, count) = match self.method {
            OracleMethod::Enumeration { draws } => ("enumeration", draws.to_string()),
            OracleMethod::MonteCarlo { replications } => ("monte_carlo", replications.to_string()),
        };
        vec![
            ("method", method.to_string()),
            ("draws", count),
            ("expected_estimate_kg_ha", num(self.expected_estimate)),
            ("population_mean_kg_ha", num(self.population_mean)),
            ("relative_error", num(self.relative_error)),
            ("analytic_variance_kg2_ha2", opt(self.analytic_variance)),
            (
                "analytic_variance_printed_kg2_ha2",
                opt(self.analytic_variance_printed),
            ),
            ("exact_variance_kg2_ha2", opt(self.exact_variance)),
            ("empirical_variance_kg2_ha2", opt(self.empirical_variance)),
            ("se_of_mean_kg_ha", opt(self.se_of_mean)),
            ("var_est_mean_kg2_ha2", opt(self.var_est_mean)),
            (
                "var_est_undefined_draws",
                self.var_est_undefined.to_string(),
            ),
            ("analytic_ratio", opt(self.analytic_ratio())),
            ("printed_ratio", opt(self.printed_ratio())),
            ("var_est_ratio", opt(self.var_est_ratio())),
            ("normalizer_constant", self.normalizer_constant.to_string()),
        ]
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn csv_header() -> String {
        let empty = OracleReport {
            method: OracleMethod::Enumeration { draws: 0 },
            expected_estimate: 0.0,
            population_mean: 0.0,
            relative_error: 0.0,
            analytic_variance: None,
            analytic_variance_printed: None,
            exact_variance: None,
            empirical_variance: None,
            se_of_mean: None,
            var_est_mean: None,
            var_est_undefined: 0,
            normalizer_constant: true,
        };
        empty
            .fields()
            .iter()
            .map(|(k, _)| *k)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn truth(population: &Population) -> Result<f64> {
    population
        .true_mean()
        .ok_or_else(|| Error::InvalidInput("every unit needs a yield to run an oracle".into()))
}

fn analytic(
    population: &Population,
    design: &DesignSpec,
    options: EstimateOptions,
) -> Result<(Option<f64>, Option<f64>)> {
    if design
        .frames
        .values()
        .any(|d| matches!(d, FrameDesign::Realized))
    {
        return Ok((None, None));
    }
    Ok((
        Some(mf_variance_population(
            population,
            design,
            options.weight_form,
            VarianceForm::Derived,
        )?),
        Some(mf_variance_population(
            population,
            design,
            options.weight_form,
            VarianceForm::Printed,
        )?),
    ))
}

struct DrawOutcome {
    estimate: f64,
    var_est: Option<f64>,
    norm: f64,
}

fn evaluate(
    draw: &SampleDraw,
    population: &Population,
    options: EstimateOptions,
) -> Result<DrawOutcome> {
    let weights = compute_weights_with(draw, population, options.weight_form)?;
    let estimate = mf_mean(draw, &weights)?;
    let var_est = match mf_variance_est(draw, &weights, options.variance_form) {
        Ok(v) => Some(v),
        Err(Error::BetweenPsuUndefined { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(DrawOutcome {
        estimate,
        var_est,
        norm: weights.norm(),
    })
}

fn norms_constant(norms: impl Iterator<Item = f64>) -> bool {
    let (lo, hi) = norms.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo <= 1e-12 * hi.abs()
}

/// Walks every draw, recomputing weights per draw, and compares
/// `Σ P · ŷ` with the population mean and the exact variance of ŷ with the
/// analytic and sample variance formulas.
pub fn unbiasedness_oracle(
    population: &Population,
    design: &DesignSpec,
    options: EstimateOptions,
    cap: u128,
) -> Result<OracleReport> {
    let truth = truth(population)?;
    let mut outcomes: Vec<(DrawOutcome, f64)> = Vec::new();
    let draws = for_each_sample(population, design, cap, |draw, p| {
        outcomes.push((evaluate(draw, population, options)?, p));
        Ok(())
    })?;
    let expected: f64 = outcomes
        .iter()
        .map(|(o, p)| p * o.estimate)
        .collect::<NeumaierSum>()
        .value();
    let exact: f64 = outcomes
        .iter()
        .map(|(o, p)| p * (o.estimate - expected).powi(2))
        .collect::<NeumaierSum>()
        .value();
    let defined: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|(o, p)| o.var_est.map(|v| (v, *p)))
        .collect();
    let var_est_undefined = (outcomes.len() - defined.len()) as u128;
    let var_est_mean = (!defined.is_empty()).then(|| {
        let mass = defined
            .iter()
            .map(|(_, p)| *p)
            .collect::<NeumaierSum>()
            .value();
        defined
            .iter()
            .map(|(v, p)| v * p)
            .collect::<NeumaierSum>()
            .value()
            / mass
    });
    let (analytic_variance, analytic_variance_printed) = analytic(population, design, options)?;
    Ok(OracleReport {
        method: OracleMethod::Enumeration { draws },
        expected_estimate: expected,
        population_mean: truth,
        relative_error: (expected - truth).abs() / truth.abs(),
        analytic_variance,
        analytic_variance_printed,
        exact_variance: Some(exact),
        empirical_variance: None,
        se_of_mean: None,
        var_est_mean,
        var_est_undefined,
        normalizer_constant: norms_constant(outcomes.iter().map(|(o, _)| o.norm)),
    })
}

/// One Monte-Carlo replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub estimate: f64,
    pub var_est: Option<f64>,
    pub norm: f64,
}

/// Replication `r` draws with seed `derive_seed(seed, [r])`, so the first
/// `R` replications do not depend on how many follow.
pub fn monte_carlo_replications(
    population: &Population,
    design: &DesignSpec,
    replications: usize,
    seed: u64,
    options: EstimateOptions,
) -> Result<Vec<Replication>> {
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let draw = draw_sample(
                population,
                design,
                derive_seed(seed, &[tag::REPLICATION, r as u64]),
            )?;
            let o = evaluate(&draw, population, options)?;
            Ok(Replication {
                estimate: o.estimate,
                var_est: o.var_est,
                norm: o.norm,
            })
        })
        .collect()
}

pub fn monte_carlo(
    population: &Population,
    design: &DesignSpec,
    replications: usize,
    seed: u64,
    options: EstimateOptions,
) -> Result<OracleReport> {
    if replications < 2 {
        return Err(Error::InvalidInput(
            "Monte Carlo needs at least 2 replications".into(),
        ));
    }
    let truth = truth(population)?;
    let reps = monte_carlo_replications(population, design, replications, seed, options)?;
    let r = replications as f64;
    let mean = reps
        .iter()
        .map(|x| x.estimate)
        .collect::<NeumaierSum>()
        .value()
        / r;
    let var = reps
        .iter()
        .map(|x| (x.estimate - mean).powi(2))
        .collect::<NeumaierSum>()
        .value()
        / (r - 1.0);
    let defined: Vec<f64> = reps.iter().filter_map(|x| x.var_est).collect();
    let var_est_undefined = (reps.len() - defined.len()) as u128;
    let var_est_mean = (!defined.is_empty())
        .then(|| defined.iter().copied().collect::<NeumaierSum>().value() / defined.len() as f64);
    let (analytic_variance, analytic_variance_printed) = analytic(population, design, options)?;
    Ok(OracleReport {
        method: OracleMethod::MonteCarlo { replications },
        expected_estimate: mean,
        population_mean: truth,
        relative_error: (mean - truth).abs() / truth.abs(),
        analytic_variance,
        analytic_variance_printed,
        exact_variance: None,
        empirical_variance: Some(var),
        se_of_mean: Some((var / r).sqrt()),
        var_est_mean,
        var_est_undefined,
        normalizer_constant: norms_constant(reps.iter().map(|x| x.norm)),
    })
}
