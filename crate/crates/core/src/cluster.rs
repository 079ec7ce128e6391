//! K-means clustering of multiband rasters and the satellite frames built
//! from the resulting partitions.
//!
//! Lloyd iteration minimizing `E = Σ_k Σ_{x_i ∈ k} D²(x_i, z_k)`, with
//! squared Euclidean distances throughout. Pixels go to the nearest centre,
//! ties to the lowest cluster id. Iteration stops once no centre moves by
//! `epsilon` or more, or after `max_iter` centre updates; a final assignment
//! against the final centres makes the result a fixed point.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{FrameId, FrameSpec, PsuId, PsuSpec, UnitId, UnitRecord};
use crate::numeric::NeumaierSum;
use crate::raster::{GeoTransform, LabelRaster, Raster};
use crate::rng::{self, tag};

/// Pixels per rayon task in the assignment step.
const ASSIGN_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KMeansInit {
    /// `K` distinct pixel vectors drawn uniformly at random.
    #[default]
    Random,
    /// One random pixel, then repeatedly the pixel farthest from every
    /// centre chosen so far.
    Spread,
}

impl std::str::FromStr for KMeansInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "spread" => Ok(Self::Spread),
            _ => Err(Error::InvalidInput(format!(
                "unknown k-means init `{s}` (random|spread)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: KMeansInit,
    /// Cluster per-band z-scores instead of raw band values.
    pub standardize: bool,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            epsilon: 1e-6,
            max_iter: 300,
            seed,
            init: KMeansInit::Random,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// `z_k`, in the clustering space (z-scores when `standardized`).
    pub centers: Vec<Vec<f64>>,
    /// 1-based cluster id of each pixel, row-major.
    pub assignment: Vec<u32>,
    /// Pixel count per cluster, index `k − 1`.
    pub sizes: Vec<usize>,
    pub sse: f64,
    /// `T`, the number of centre updates performed.
    pub iterations: usize,
    pub epsilon: f64,
    pub converged: bool,
    pub standardized: bool,
    /// SSE after the initial assignment and after every later one.
    pub sse_log: Vec<f64>,
}

impl ClusterModel {
    pub fn labels(&self, width: usize, height: usize) -> LabelRaster {
        LabelRaster {
            width,
            height,
            labels: self.assignment.clone(),
        }
    }

    /// Centre table as CSV: `cluster,size,band_1,…,band_p`.
    pub fn centers_csv(&self) -> String {
        let bands = self.centers.first().map_or(0, Vec::len);
        let mut out = String::from("cluster,size");
        for b in 1..=bands {
            out.push_str(&format!(",band_{b}"));
        }
        out.push('\n');
        for (k, (c, size)) in self.centers.iter().zip(&self.sizes).enumerate() {
            out.push_str(&format!("{},{}", k + 1, size));
            for v in c {
                out.push_str(&format!(",{v:.15e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Per-iteration SSE log as CSV: `iteration,sse`.
    pub fn sse_log_csv(&self) -> String {
        let mut out = String::from("iteration,sse\n");
        for (t, e) in self.sse_log.iter().enumerate() {
            out.push_str(&format!("{t},{e:.15e}\n"));
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(pixel: &[f64], centers: &[Vec<f64>]) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(pixel, c);
        if d < best.1 {
            best = (k as u32, d);
        }
    }
    best
}

struct Assignment {
    labels: Vec<u32>,
    dist: Vec<f64>,
}

impl Assignment {
    fn sse(&self) -> f64 {
        self.dist.iter().copied().collect::<NeumaierSum>().value()
    }

    fn sizes(&self, k: usize) -> Vec<usize> {
        let mut sizes = vec![0; k];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Each pixel is independent, so the parallel result equals the sequential one.
fn assign(raster: &Raster, centers: &[Vec<f64>]) -> Assignment {
    let bands = raster.bands();
    let pairs: Vec<(u32, f64)> = raster
        .values()
        .par_chunks(ASSIGN_CHUNK * bands)
        .flat_map_iter(|chunk| chunk.chunks_exact(bands).map(|p| nearest(p, centers)))
        .collect();
    let (labels, dist) = pairs.into_iter().unzip();
    Assignment { labels, dist }
}

/// Assigns pixels, then reseeds empty clusters with the pixel farthest from
/// its centre until no cluster is empty. Each reseed sets one positive
/// distance to zero and no pixel moves farther, so the SSE strictly decreases.
fn assign_nonempty(raster: &Raster, centers: &mut [Vec<f64>]) -> Result<Assignment> {
    let k = centers.len();
    let mut current = assign(raster, centers);
    loop {
        let sizes = current.sizes(k);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return Ok(current);
        };
        let (far, d) =
            current
                .dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                });
        if !(d > 0.0) {
            return Err(Error::Cluster(format!(
                "cluster {} is empty and every pixel sits on a centre",
                empty + 1
            )));
        }
        centers[empty] = raster.pixel(far).to_vec();
        current = assign(raster, centers);
    }
}

fn update(raster: &Raster, labels: &[u32], k: usize, previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let bands = raster.bands();
    // Sums are shifted by each cluster's first pixel, so a cluster of
    // identical vectors keeps that vector exactly.
    let mut first: Vec<Option<&[f64]>> = vec![None; k];
    let mut sums = vec![vec![NeumaierSum::new(); bands]; k];
    let mut counts = vec![0usize; k];
    for (pixel, &l) in raster.pixels().zip(labels) {
        let l = l as usize;
        let base = *first[l].get_or_insert(pixel);
        for b in 0..bands {
            sums[l][b].add(pixel[b] - base[b]);
        }
        counts[l] += 1;
    }
    (0..k)
        .map(|c| match first[c] {
            Some(base) => (0..bands)
                .map(|b| base[b] + sums[c][b].value() / counts[c] as f64)
                .collect(),
            None => previous[c].clone(),
        })
        .collect()
}

fn distinct_at_least(raster: &Raster, k: usize) -> bool {
    let mut seen = HashSet::new();
    for p in raster.pixels() {
        seen.insert(p.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>());
        if seen.len() >= k {
            return true;
        }
    }
    false
}

fn initial_centers(raster: &Raster, config: &KMeansConfig) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(config.seed, &[tag::KMEANS_INIT]);
    let mut order: Vec<usize> = (0..raster.len()).collect();
    order.shuffle(&mut rng);
    match config.init {
        KMeansInit::Random => {
            let mut centers: Vec<Vec<f64>> = Vec::with_capacity(config.k);
            for i in order {
                let p = raster.pixel(i);
                if !centers.iter().any(|c| c.as_slice() == p) {
                    centers.push(p.to_vec());
                    if centers.len() == config.k {
                        break;
                    }
                }
            }
            centers
        }
        KMeansInit::Spread => {
            let mut centers = vec![raster.pixel(order[0]).to_vec()];
            let mut closest: Vec<f64> = raster.pixels().map(|p| sq_dist(p, &centers[0])).collect();
            while centers.len() < config.k {
                let (far, _) =
                    closest
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                            if d > best.1 {
                                (i, d)
                            } else {
                                best
                            }
                        });
                let c = raster.pixel(far).to_vec();
                for (d, p) in closest.iter_mut().zip(raster.pixels()) {
                    *d = d.min(sq_dist(p, &c));
                }
                centers.push(c);
            }
            centers
        }
    }
}

pub fn kmeans(raster: &Raster, config: &KMeansConfig) -> Result<ClusterModel> {
    if config.k == 0 {
        return Err(Error::Cluster("K must be at least 1".into()));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Cluster(format!(
            "epsilon {} must be positive",
            config.epsilon
        )));
    }
    if config.max_iter == 0 {
        return Err(Error::Cluster("max_iter must be at least 1".into()));
    }
    if let Some(i) = raster.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::Cluster(format!(
            "pixel {} has a non-finite band value",
            i / raster.bands()
        )));
    }
    if !distinct_at_least(raster, config.k) {
        return Err(Error::Cluster(format!(
            "K = {} exceeds the number of distinct pixel vectors",
            config.k
        )));
    }
    let standardized;
    let space = if config.standardize {
        standardized = raster.standardized();
        &standardized
    } else {
        raster
    };

    let mut centers = initial_centers(space, config);
    let mut current = assign_nonempty(space, &mut centers)?;
    let mut sse_log = vec![current.sse()];
    let eps2 = config.epsilon * config.epsilon;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        let next = update(space, &current.labels, config.k, &centers);
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max);
        centers = next;
        current = assign_nonempty(space, &mut centers)?;
        sse_log.push(current.sse());
        if shift < eps2 {
            converged = true;
            break;
        }
    }

    let sizes = current.sizes(config.k);
    Ok(ClusterModel {
        k: config.k,
        centers,
        assignment: current.labels.iter().map(|l| l + 1).collect(),
        sizes,
        sse: *sse_log.last().expect("log holds the initial assignment"),
        iterations,
        epsilon: config.epsilon,
        converged,
        standardized: config.standardize,
        sse_log,
    })
}

/// `E` for `model`'s assignment and centres over `raster`.
pub fn sse(raster: &Raster, model: &ClusterModel) -> Result<f64> {
    if model.assignment.len() != raster.len() {
        return Err(Error::DimensionMismatch(format!(
            "model covers {} pixels, raster has {}",
            model.assignment.len(),
            raster.len()
        )));
    }
    if model.centers.iter().any(|c| c.len() != raster.bands()) {
        return Err(Error::DimensionMismatch(format!(
            "model centres do not have {} bands",
            raster.bands()
        )));
    }
    let standardized;
    let space = if model.standardized {
        standardized = raster.standardized();
        &standardized
    } else {
        raster
    };
    let mut total = NeumaierSum::new();
    for (p, &l) in space.pixels().zip(&model.assignment) {
        let c = model.centers.get(l as usize - 1).ok_or_else(|| {
            Error::DimensionMismatch(format!("label {l} exceeds K = {}", model.k))
        })?;
        total.add(sq_dist(p, c));
    }
    Ok(total.value())
}

/// A frame whose psus are clusters and whose ssus are pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteFrame {
    /// Psu `k` has declared size equal to its pixel count and lists the
    /// units located in it.
    pub spec: FrameSpec,
    pub memberships: Vec<(UnitId, PsuId)>,
    /// Units per cluster, for clusters holding at least one unit.
    pub realized: BTreeMap<PsuId, usize>,
}

impl SatelliteFrame {
    /// `n` of the realized allocation: the number of clusters holding units.
    pub fn sampled_psus(&self) -> usize {
        self.realized.len()
    }

    /// `M_α0`.
    pub fn total_pixels(&self) -> usize {
        self.spec.psus.iter().filter_map(|p| p.size).sum()
    }

    /// Writes the frame's memberships onto `units`.
    pub fn apply(&self, units: &mut [UnitRecord]) {
        let by_id: BTreeMap<UnitId, PsuId> = self.memberships.iter().copied().collect();
        for unit in units {
            if let Some(&psu) = by_id.get(&unit.id) {
                unit.memberships.insert(self.spec.id, psu);
            }
        }
    }
}

pub fn build_satellite_frame(
    points: &[UnitRecord],
    raster: &Raster,
    model: &ClusterModel,
    frame: FrameId,
) -> Result<SatelliteFrame> {
    if model.assignment.len() != raster.len() {
        return Err(Error::DimensionMismatch(format!(
            "model covers {} pixels, raster has {}",
            model.assignment.len(),
            raster.len()
        )));
    }
    frame_from_labels(
        points,
        &model.labels(raster.width(), raster.height()),
        &raster.georef,
        frame,
    )
}

/// Builds the satellite frame from a stored label raster.
pub fn frame_from_labels(
    points: &[UnitRecord],
    labels: &LabelRaster,
    georef: &GeoTransform,
    frame: FrameId,
) -> Result<SatelliteFrame> {
    let k = labels.labels.iter().copied().max().unwrap_or(0) as usize;
    let mut sizes = vec![0usize; k];
    for &l in &labels.labels {
        if l == 0 {
            return Err(Error::InvalidInput("label raster contains id 0".into()));
        }
        sizes[l as usize - 1] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!(
            "label raster has no pixel for cluster {}",
            empty + 1
        )));
    }
    let mut members: Vec<Vec<u64>> = vec![Vec::new(); k];
    let mut memberships = Vec::with_capacity(points.len());
    for unit in points {
        let (x, y) = unit
            .location
            .ok_or_else(|| Error::InvalidInput(format!("unit {} has no location", unit.id)))?;
        let (row, col) = georef.locate(x, y, labels.width, labels.height)?;
        let label = labels.labels[row * labels.width + col];
        members[label as usize - 1].push(unit.id.0);
        memberships.push((unit.id, PsuId(label)));
    }
    let realized = members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(i, m)| (PsuId(i as u32 + 1), m.len()))
        .collect();
    let psus = members
        .into_iter()
        .zip(&sizes)
        .enumerate()
        .map(|(i, (mut m, &size))| {
            m.sort_unstable();
            PsuSpec::new(i as u32 + 1, m).with_size(size)
        })
        .collect();
    Ok(SatelliteFrame {
        spec: FrameSpec {
            id: frame,
            name: None,
            psus,
        },
        memberships,
        realized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> Raster {
        Raster::new(values.len(), 1, 1, values.to_vec(), GeoTransform::default()).unwrap()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let values: Vec<f64> = (0..37)
            .map(|i| (i as f64 * 0.37).sin() * 100.0 + 3.0)
            .collect();
        let r = line(&values);
        let model = kmeans(&r, &KMeansConfig::new(1, 5)).unwrap();
        let mean = values.iter().copied().collect::<NeumaierSum>().value() / 37.0;
        assert!((model.centers[0][0] - mean).abs() < 1e-12);
        let scatter: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        assert!((model.sse - scatter).abs() < 1e-9 * scatter);
        assert!(model.assignment.iter().all(|&l| l == 1));
    }

    #[test]
    fn k_equal_to_distinct_vectors_has_zero_sse() {
        let r = line(&[1.0, 4.0, 4.0, 9.0, 1.0, 9.0]);
        let model = kmeans(&r, &KMeansConfig::new(3, 2)).unwrap();
        assert_eq!(model.sse, 0.0);
        assert!(matches!(
            kmeans(&r, &KMeansConfig::new(4, 2)),
            Err(Error::Cluster(_))
        ));
    }

    #[test]
    fn four_pixel_hand_value() {
        // {0, 2} and {10, 12}: centres 1 and 11, E = 4 · 1² = 4.
        let r = line(&[0.0, 2.0, 10.0, 12.0]);
        for seed in 0..10 {
            let model = kmeans(&r, &KMeansConfig::new(2, seed)).unwrap();
            assert_eq!(model.sse, 4.0, "seed {seed}");
            assert_eq!(sse(&r, &model).unwrap(), 4.0);
        }
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let centers = vec![vec![0.0], vec![2.0]];
        assert_eq!(nearest(&[1.0], &centers).0, 0);
    }

    #[test]
    fn empty_cluster_is_repaired() {
        let r = line(&[0.0, 0.0, 0.0, 1.0, 10.0]);
        let mut centers = vec![vec![0.0], vec![100.0], vec![200.0]];
        let fixed = assign_nonempty(&r, &mut centers).unwrap();
        assert!(fixed.sizes(3).iter().all(|&s| s > 0));
    }

    #[test]
    fn rejects_bad_input() {
        let r = line(&[0.0, f64::NAN]);
        assert!(kmeans(&r, &KMeansConfig::new(1, 0)).is_err());
        let ok = line(&[0.0, 1.0]);
        let mut c = KMeansConfig::new(1, 0);
        c.epsilon = 0.0;
        assert!(kmeans(&ok, &c).is_err());
        assert!(kmeans(&ok, &KMeansConfig::new(0, 0)).is_err());
    }

    #[test]
    fn satellite_frame_counts() {
        let r = line(&[0.0, 0.1, 10.0, 10.1, 10.2]);
        let model = kmeans(&r, &KMeansConfig::new(2, 1)).unwrap();
        let points = vec![
            UnitRecord::new(1).at(0.5, 0.5),
            UnitRecord::new(2).at(3.2, 0.9),
            UnitRecord::new(3).at(4.0, 0.0),
        ];
        let sat = build_satellite_frame(&points, &r, &model, FrameId(2)).unwrap();
        assert_eq!(sat.total_pixels(), 5);
        assert_eq!(sat.spec.psus.len(), 2);
        assert_eq!(sat.sampled_psus(), 2);
        let low = model.assignment[0];
        assert_eq!(sat.realized[&PsuId(low)], 1);
        assert_eq!(sat.realized[&PsuId(3 - low)], 2);

        let one = build_satellite_frame(&points[1..], &r, &model, FrameId(2)).unwrap();
        assert_eq!(one.sampled_psus(), 1);

        let outside = [UnitRecord::new(9).at(7.0, 0.5)];
        assert!(build_satellite_frame(&outside, &r, &model, FrameId(2)).is_err());
    }
}
