//! Two-stage srswor design per frame.
//!
//! A frame is either drawn independently ([`FrameDesign::Fixed`]: `n` psus by
//! srswor, then `m_i` ssus by srswor inside each selected psu) or has its
//! sample induced ([`FrameDesign::Realized`]): the units drawn in the fixed
//! frames are located in the frame's psus and the resulting allocation is
//! treated as that frame's two-stage sample.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use itertools::Itertools;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameId, Population, PsuId, UnitId};
use crate::kv;
use crate::numeric::binomial;
use crate::rng::{self, tag};

/// Default ceiling on the number of draws [`enumerate_samples`] will walk.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Allocation {
    /// The same `m` in every psu.
    Uniform(usize),
    /// `m_αi` in the frame's psu order.
    PerPsu(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameDesign {
    Fixed { n: usize, m: Allocation },
    Realized,
}

impl FrameDesign {
    pub fn fixed(n: usize, m: usize) -> Self {
        FrameDesign::Fixed {
            n,
            m: Allocation::Uniform(m),
        }
    }

    /// `m_αi` for the psu at `position`, when the design fixes it.
    pub fn m_at(&self, position: usize) -> Option<usize> {
        match self {
            FrameDesign::Fixed {
                m: Allocation::Uniform(m),
                ..
            } => Some(*m),
            FrameDesign::Fixed {
                m: Allocation::PerPsu(ms),
                ..
            } => ms.get(position).copied(),
            FrameDesign::Realized => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub frames: BTreeMap<FrameId, FrameDesign>,
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            frames: BTreeMap::new(),
            seed,
        }
    }

    pub fn with_frame(mut self, frame: u16, design: FrameDesign) -> Self {
        self.frames.insert(FrameId(frame), design);
        self
    }

    pub fn frame(&self, id: FrameId) -> Option<&FrameDesign> {
        self.frames.get(&id)
    }

    /// Checks `1 ≤ n ≤ N` and `1 ≤ m_i ≤ M_i` for every fixed frame.
    pub fn validate(&self, population: &Population) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidInput("design names no frames".into()));
        }
        let mut any_fixed = false;
        for (&id, design) in &self.frames {
            let frame = population.frame(id).ok_or(Error::UnknownFrame(id))?;
            let bad = |reason: String| Error::InvalidDesign { frame: id, reason };
            match design {
                FrameDesign::Realized => {}
                FrameDesign::Fixed { n, m } => {
                    any_fixed = true;
                    if *n == 0 || *n > frame.n_psus() {
                        return Err(bad(format!("n = {} outside 1..={}", n, frame.n_psus())));
                    }
                    if let Allocation::PerPsu(ms) = m {
                        if ms.len() != frame.n_psus() {
                            return Err(bad(format!(
                                "{} second-stage sizes given for {} psus",
                                ms.len(),
                                frame.n_psus()
                            )));
                        }
                    }
                    for (pos, psu) in frame.psus().iter().enumerate() {
                        let mi = design.m_at(pos).unwrap_or(0);
                        if mi == 0 || mi > psu.size() {
                            return Err(bad(format!(
                                "m = {} outside 1..={} for psu {}",
                                mi,
                                psu.size(),
                                psu.id
                            )));
                        }
                    }
                }
            }
        }
        if !any_fixed {
            return Err(Error::InvalidInput(
                "a realized allocation needs at least one independently drawn frame".into(),
            ));
        }
        Ok(())
    }

    /// Reads a flat key-value section: `seed`, `frame.<α>.n` and
    /// `frame.<α>.m`, where `m` is one integer, a comma list in psu order,
    /// or `realized` (in which case `n` must be absent).
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut seed = 0;
        let mut ns: BTreeMap<FrameId, usize> = BTreeMap::new();
        let mut ms: BTreeMap<FrameId, &str> = BTreeMap::new();
        for (key, value) in pairs {
            if key == "seed" {
                seed = kv::parse(key, value)?;
                continue;
            }
            let parts: Vec<&str> = key.split('.').collect();
            let ["frame", id, field] = parts.as_slice() else {
                return Err(kv::unknown(key));
            };
            let id = FrameId(kv::parse(key, id)?);
            match *field {
                "n" => {
                    ns.insert(id, kv::parse(key, value)?);
                }
                "m" => {
                    ms.insert(id, value.trim());
                }
                _ => return Err(kv::unknown(key)),
            }
        }
        let mut spec = DesignSpec::new(seed);
        for (id, m) in ms {
            let design = if m == "realized" {
                if ns.remove(&id).is_some() {
                    return Err(Error::InvalidDesign {
                        frame: id,
                        reason: "a realized frame takes no n".into(),
                    });
                }
                FrameDesign::Realized
            } else {
                let n = ns.remove(&id).ok_or_else(|| Error::InvalidDesign {
                    frame: id,
                    reason: "missing n".into(),
                })?;
                let values = m
                    .split(',')
                    .map(|v| kv::parse::<usize>(&format!("frame.{id}.m"), v))
                    .collect::<Result<Vec<_>>>()?;
                let m = match values.as_slice() {
                    [single] => Allocation::Uniform(*single),
                    _ => Allocation::PerPsu(values),
                };
                FrameDesign::Fixed { n, m }
            };
            spec.frames.insert(id, design);
        }
        if let Some(id) = ns.keys().next() {
            return Err(Error::InvalidDesign {
                frame: *id,
                reason: "missing m".into(),
            });
        }
        Ok(spec)
    }

    /// Inverse of [`DesignSpec::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("seed".to_string(), self.seed.to_string())];
        for (id, design) in &self.frames {
            match design {
                FrameDesign::Realized => out.push((format!("frame.{id}.m"), "realized".into())),
                FrameDesign::Fixed { n, m } => {
                    out.push((format!("frame.{id}.n"), n.to_string()));
                    let m = match m {
                        Allocation::Uniform(m) => m.to_string(),
                        Allocation::PerPsu(ms) => ms.iter().join(","),
                    };
                    out.push((format!("frame.{id}.m"), m));
                }
            }
        }
        out
    }
}

/// `π_α(i,j) = (n_α/N_α)·(m_αi/M_αi)`.
pub fn inclusion(n: usize, big_n: usize, m: usize, big_m: usize) -> f64 {
    (n as f64 / big_n as f64) * (m as f64 / big_m as f64)
}

/// Inclusion probability of any ssu of `psu` under a fixed frame design.
pub fn inclusion_probability(frame: &Frame, psu: PsuId, design: &FrameDesign) -> Result<f64> {
    let pos = frame.psu_position(psu).ok_or(Error::UnknownPsu {
        frame: frame.id,
        psu,
    })?;
    let n = match design {
        FrameDesign::Fixed { n, .. } => *n,
        FrameDesign::Realized => {
            return Err(Error::InvalidDesign {
                frame: frame.id,
                reason: "realized allocation has no design-level inclusion probability".into(),
            })
        }
    };
    let m = design.m_at(pos).ok_or_else(|| Error::InvalidDesign {
        frame: frame.id,
        reason: format!("no m for psu {psu}"),
    })?;
    Ok(inclusion(n, frame.n_psus(), m, frame.psus()[pos].size()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsuSample {
    pub psu: PsuId,
    /// `M_αi`.
    pub size: usize,
    pub units: Vec<UnitId>,
    pub y: Vec<f64>,
}

impl PsuSample {
    /// `m_αi`.
    pub fn m(&self) -> usize {
        self.units.len()
    }

    /// `f_α2i = m_αi / M_αi`.
    pub fn f2(&self) -> f64 {
        self.m() as f64 / self.size as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
enum KnownAllocation {
    /// Design `m` for every psu, by frame position.
    Design(Arc<Vec<usize>>),
    /// Only the selected psus have an `m`: their realized counts.
    Realized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub frame: FrameId,
    /// `N_α`.
    pub psus_total: usize,
    /// `M_α0`.
    pub ssus_total: usize,
    pub selected: Vec<PsuSample>,
    allocation: KnownAllocation,
}

impl FrameSample {
    /// `n_α`.
    pub fn n(&self) -> usize {
        self.selected.len()
    }

    /// `f_α1 = n_α / N_α`.
    pub fn f1(&self) -> f64 {
        self.n() as f64 / self.psus_total as f64
    }

    /// `m̄_α = (1/n_α) Σ m_αi`.
    pub fn mbar(&self) -> f64 {
        self.selected.iter().map(PsuSample::m).sum::<usize>() as f64 / self.n() as f64
    }

    /// `M̄_α = M_α0 / N_α`.
    pub fn mean_psu_size(&self) -> f64 {
        self.ssus_total as f64 / self.psus_total as f64
    }

    pub fn is_realized(&self) -> bool {
        self.allocation == KnownAllocation::Realized
    }

    pub fn observation_count(&self) -> usize {
        self.selected.iter().map(PsuSample::m).sum()
    }

    /// `m_αi` for `psu`: the design value for fixed frames, the realized
    /// count for induced frames (`None` when that psu holds no shared unit).
    pub fn allocation_of(&self, frame: &Frame, psu: PsuId) -> Option<usize> {
        match &self.allocation {
            KnownAllocation::Design(ms) => frame.psu_position(psu).map(|p| ms[p]),
            KnownAllocation::Realized => self
                .selected
                .iter()
                .find(|s| s.psu == psu)
                .map(PsuSample::m),
        }
    }

    /// Inclusion probability with this draw's `n_α` and `m_αi`.
    pub fn inclusion_of(&self, frame: &Frame, psu: PsuId) -> Option<f64> {
        let m = self.allocation_of(frame, psu)?;
        let big_m = frame.psu(psu)?.size();
        Some(inclusion(self.n(), self.psus_total, m, big_m))
    }

    fn map_yields(&self, f: &impl Fn(f64) -> f64) -> FrameSample {
        let mut out = self.clone();
        for psu in &mut out.selected {
            for y in &mut psu.y {
                *y = f(*y);
            }
        }
        out
    }
}

/// One realized two-stage selection across frames, ordered by frame id.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    frames: Vec<FrameSample>,
}

impl SampleDraw {
    pub fn from_frames(mut frames: Vec<FrameSample>) -> Self {
        frames.sort_by_key(|f| f.frame);
        Self { frames }
    }

    pub fn frames(&self) -> &[FrameSample] {
        &self.frames
    }

    pub fn frame(&self, id: FrameId) -> Option<&FrameSample> {
        self.frames.iter().find(|f| f.frame == id)
    }

    pub fn frame_ids(&self) -> Vec<FrameId> {
        self.frames.iter().map(|f| f.frame).collect()
    }

    /// The sub-draw holding only `ids`, as used for one frame combination.
    pub fn restrict(&self, ids: &[FrameId]) -> SampleDraw {
        SampleDraw {
            frames: self
                .frames
                .iter()
                .filter(|f| ids.contains(&f.frame))
                .cloned()
                .collect(),
        }
    }

    /// Every `(frame, psu, unit, y)` observation in canonical order.
    pub fn observations(&self) -> impl Iterator<Item = (FrameId, PsuId, UnitId, f64)> + '_ {
        self.frames.iter().flat_map(|f| {
            f.selected.iter().flat_map(move |p| {
                p.units
                    .iter()
                    .zip(&p.y)
                    .map(move |(&u, &y)| (f.frame, p.psu, u, y))
            })
        })
    }

    /// Same selection with every observed yield replaced by `f(y)`.
    pub fn map_yields(&self, f: impl Fn(f64) -> f64) -> SampleDraw {
        SampleDraw {
            frames: self.frames.iter().map(|fs| fs.map_yields(&f)).collect(),
        }
    }
}

/// srswor of `n` positions out of `0..len` by partial Fisher-Yates shuffle,
/// returned in ascending order.
pub fn srswor<R: rand::Rng + ?Sized>(rng: &mut R, len: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let (chosen, _) = idx.partial_shuffle(rng, n);
    let mut out = chosen.to_vec();
    out.sort_unstable();
    out
}

fn design_allocation(frame: &Frame, design: &FrameDesign) -> Arc<Vec<usize>> {
    Arc::new(
        (0..frame.n_psus())
            .map(|p| design.m_at(p).unwrap_or(0))
            .collect(),
    )
}

fn psu_sample(
    population: &Population,
    frame: &Frame,
    position: usize,
    picks: &[usize],
) -> Result<PsuSample> {
    let psu = &frame.psus()[position];
    if !psu.is_enumerated() {
        return Err(Error::PsuNotEnumerated {
            frame: frame.id,
            psu: psu.id,
            listed: psu.ssu_ids.len(),
            size: psu.size(),
        });
    }
    let units: Vec<UnitId> = picks.iter().map(|&j| psu.ssu_ids[j]).collect();
    let y = units
        .iter()
        .map(|&u| population.yield_of(u))
        .collect::<Result<Vec<_>>>()?;
    Ok(PsuSample {
        psu: psu.id,
        size: psu.size(),
        units,
        y,
    })
}

fn check_enumerated(frame: &Frame) -> Result<()> {
    match frame.psus().iter().find(|p| !p.is_enumerated()) {
        Some(psu) => Err(Error::PsuNotEnumerated {
            frame: frame.id,
            psu: psu.id,
            listed: psu.ssu_ids.len(),
            size: psu.size(),
        }),
        None => Ok(()),
    }
}

fn draw_fixed_frame(
    population: &Population,
    frame: &Frame,
    design: &FrameDesign,
    seed: u64,
) -> Result<FrameSample> {
    let FrameDesign::Fixed { n, .. } = design else {
        unreachable!("caller passes fixed frames only")
    };
    check_enumerated(frame)?;
    let mut first = rng::stream(seed, &[tag::FIRST_STAGE, u64::from(frame.id.0)]);
    let positions = srswor(&mut first, frame.n_psus(), *n);
    let allocation = design_allocation(frame, design);
    let selected = positions
        .into_iter()
        .map(|pos| {
            let psu = &frame.psus()[pos];
            let mut second = rng::stream(
                seed,
                &[
                    tag::SECOND_STAGE,
                    u64::from(frame.id.0),
                    u64::from(psu.id.0),
                ],
            );
            let picks = srswor(&mut second, psu.size(), allocation[pos]);
            psu_sample(population, frame, pos, &picks)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSample {
        frame: frame.id,
        psus_total: frame.n_psus(),
        ssus_total: frame.total_ssus(),
        selected,
        allocation: KnownAllocation::Design(allocation),
    })
}

/// Induced sample of one frame: the distinct psus holding shared units,
/// with `m_αi` = number of shared units in psu `i`.
fn impose_on_frame(
    population: &Population,
    frame: &Frame,
    shared: &[UnitId],
) -> Result<FrameSample> {
    let mut groups: BTreeMap<PsuId, Vec<UnitId>> = BTreeMap::new();
    for &id in shared {
        let unit = population.unit(id).ok_or(Error::UnknownUnit(id))?;
        let psu = unit
            .memberships
            .get(&frame.id)
            .ok_or(Error::MembershipMismatch {
                unit: id,
                frame: frame.id,
            })?;
        groups.entry(*psu).or_default().push(id);
    }
    let selected = groups
        .into_iter()
        .map(|(psu, mut units)| {
            units.sort_unstable();
            let y = units
                .iter()
                .map(|&u| population.yield_of(u))
                .collect::<Result<Vec<_>>>()?;
            let size = frame
                .psu(psu)
                .ok_or(Error::UnknownPsu {
                    frame: frame.id,
                    psu,
                })?
                .size();
            Ok(PsuSample {
                psu,
                size,
                units,
                y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSample {
        frame: frame.id,
        psus_total: frame.n_psus(),
        ssus_total: frame.total_ssus(),
        selected,
        allocation: KnownAllocation::Realized,
    })
}

fn check_shared(shared: &[UnitId]) -> Result<()> {
    if shared.is_empty() {
        return Err(Error::InvalidInput("shared sample is empty".into()));
    }
    let distinct: BTreeSet<&UnitId> = shared.iter().collect();
    if distinct.len() != shared.len() {
        return Err(Error::InvalidInput(
            "shared sample lists a unit twice".into(),
        ));
    }
    Ok(())
}

/// Treats `shared` as a two-stage sample of every frame of the population.
pub fn impose_shared_sample(population: &Population, shared: &[UnitId]) -> Result<SampleDraw> {
    check_shared(shared)?;
    let frames = population
        .frames()
        .iter()
        .map(|f| impose_on_frame(population, f, shared))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleDraw::from_frames(frames))
}

fn impose_realized(
    population: &Population,
    design: &DesignSpec,
    fixed: Vec<FrameSample>,
) -> Result<SampleDraw> {
    let realized: Vec<FrameId> = design
        .frames
        .iter()
        .filter(|(_, d)| matches!(d, FrameDesign::Realized))
        .map(|(&id, _)| id)
        .collect();
    let mut frames = fixed;
    if !realized.is_empty() {
        let shared: Vec<UnitId> = frames
            .iter()
            .flat_map(|f| f.selected.iter().flat_map(|p| p.units.iter().copied()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for id in realized {
            let frame = population.frame(id).ok_or(Error::UnknownFrame(id))?;
            frames.push(impose_on_frame(population, frame, &shared)?);
        }
    }
    Ok(SampleDraw::from_frames(frames))
}

/// Draws every fixed frame independently by two-stage srswor, then imposes
/// the union of the drawn units on the realized frames.
///
/// Frame `α` uses its own ChaCha streams under `seed` (one for the first
/// stage, one per selected psu), so the result does not depend on the order
/// or number of other frames.
pub fn draw_sample(population: &Population, design: &DesignSpec, seed: u64) -> Result<SampleDraw> {
    design.validate(population)?;
    let fixed = design
        .frames
        .iter()
        .filter(|(_, d)| matches!(d, FrameDesign::Fixed { .. }))
        .map(|(&id, d)| {
            let frame = population.frame(id).ok_or(Error::UnknownFrame(id))?;
            draw_fixed_frame(population, frame, d, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    impose_realized(population, design, fixed)
}

/// Number of distinct joint draws: the product over fixed frames of
/// `Σ_{S ⊂ psus, |S| = n} Π_{i∈S} C(M_i, m_i)`.
pub fn sample_space_size(population: &Population, design: &DesignSpec) -> Result<u128> {
    design.validate(population)?;
    let overflow = || Error::SampleSpaceOverflow;
    let mut total: u128 = 1;
    for (&id, d) in &design.frames {
        let FrameDesign::Fixed { n, .. } = d else {
            continue;
        };
        let frame = population.frame(id).ok_or(Error::UnknownFrame(id))?;
        // Elementary symmetric polynomial e_n of the per-psu counts.
        let mut e = vec![0u128; n + 1];
        e[0] = 1;
        for (pos, psu) in frame.psus().iter().enumerate() {
            let c = binomial(psu.size(), d.m_at(pos).unwrap_or(0)).ok_or_else(overflow)?;
            for k in (1..=*n).rev() {
                e[k] = e[k]
                    .checked_add(e[k - 1].checked_mul(c).ok_or_else(overflow)?)
                    .ok_or_else(overflow)?;
            }
        }
        total = total.checked_mul(e[*n]).ok_or_else(overflow)?;
    }
    Ok(total)
}

fn frame_outcomes(
    population: &Population,
    frame: &Frame,
    design: &FrameDesign,
) -> Result<Vec<FrameSample>> {
    let FrameDesign::Fixed { n, .. } = design else {
        unreachable!("caller passes fixed frames only")
    };
    check_enumerated(frame)?;
    let allocation = design_allocation(frame, design);
    let mut out = Vec::new();
    for positions in (0..frame.n_psus()).combinations(*n) {
        let per_psu: Vec<Vec<PsuSample>> = positions
            .iter()
            .map(|&pos| {
                (0..frame.psus()[pos].size())
                    .combinations(allocation[pos])
                    .map(|picks| psu_sample(population, frame, pos, &picks))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for selected in per_psu.into_iter().multi_cartesian_product() {
            out.push(FrameSample {
                frame: frame.id,
                psus_total: frame.n_psus(),
                ssus_total: frame.total_ssus(),
                selected,
                allocation: KnownAllocation::Design(allocation.clone()),
            });
        }
    }
    Ok(out)
}

/// Walks the full sample space, calling `visit(draw, probability)` once per
/// two-stage srswor outcome. Returns the number of draws visited.
pub fn for_each_sample<F>(
    population: &Population,
    design: &DesignSpec,
    cap: u128,
    mut visit: F,
) -> Result<u128>
where
    F: FnMut(&SampleDraw, f64) -> Result<()>,
{
    let cardinality = sample_space_size(population, design)?;
    if cardinality > cap {
        return Err(Error::EnumerationCap { cardinality, cap });
    }
    let probability = 1.0 / cardinality as f64;
    let per_frame: Vec<Vec<FrameSample>> = design
        .frames
        .iter()
        .filter(|(_, d)| matches!(d, FrameDesign::Fixed { .. }))
        .map(|(&id, d)| {
            let frame = population.frame(id).ok_or(Error::UnknownFrame(id))?;
            frame_outcomes(population, frame, d)
        })
        .collect::<Result<_>>()?;
    let mut visited = 0u128;
    for joint in per_frame.iter().map(|v| v.iter()).multi_cartesian_product() {
        let draw = impose_realized(population, design, joint.into_iter().cloned().collect())?;
        visit(&draw, probability)?;
        visited += 1;
    }
    debug_assert_eq!(visited, cardinality);
    Ok(visited)
}

/// Every draw with its selection probability. All outcomes are equally
/// likely under two-stage srswor with fixed sizes.
pub fn enumerate_samples(
    population: &Population,
    design: &DesignSpec,
    cap: u128,
) -> Result<Vec<(SampleDraw, f64)>> {
    let mut out = Vec::new();
    for_each_sample(population, design, cap, |draw, p| {
        out.push((draw.clone(), p));
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FrameSpec, PsuSpec, UnitRecord};
    use std::collections::HashMap;

    #[test]
    fn design_pairs_round_trip() {
        let pairs = [
            ("seed", "11"),
            ("frame.1.n", "4"),
            ("frame.1.m", "10"),
            ("frame.2.n", "2"),
            ("frame.2.m", "1,2,3"),
            ("frame.3.m", "realized"),
        ];
        let spec = DesignSpec::from_pairs(pairs).unwrap();
        assert_eq!(spec.seed, 11);
        assert_eq!(spec.frame(FrameId(1)), Some(&FrameDesign::fixed(4, 10)));
        assert_eq!(
            spec.frame(FrameId(2)),
            Some(&FrameDesign::Fixed {
                n: 2,
                m: Allocation::PerPsu(vec![1, 2, 3])
            })
        );
        assert_eq!(spec.frame(FrameId(3)), Some(&FrameDesign::Realized));
        let back = spec.to_pairs();
        let again =
            DesignSpec::from_pairs(back.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(again, spec);

        assert!(DesignSpec::from_pairs([("frame.1.n", "2")]).is_err());
        assert!(DesignSpec::from_pairs([("frame.1.n", "2"), ("frame.1.m", "realized")]).is_err());
        assert!(DesignSpec::from_pairs([("frame.x.m", "1")]).is_err());
        assert!(DesignSpec::from_pairs([("depth", "1")]).is_err());
    }

    fn one_frame(sizes: &[usize]) -> Population {
        let mut next = 0u64;
        let mut units = Vec::new();
        let psus = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let members: Vec<u64> = (0..s)
                    .map(|_| {
                        next += 1;
                        units.push(UnitRecord::new(next).with_yield(next as f64));
                        next
                    })
                    .collect();
                PsuSpec::new(i as u32 + 1, members)
            })
            .collect();
        Population::from_partitions(units, vec![FrameSpec::new(1, psus)]).unwrap()
    }

    #[test]
    fn inclusion_probability_examples() {
        assert!((inclusion(2, 20, 36, 147) - 0.024_489_795_918_367_35).abs() < 1e-15);
        assert_eq!(inclusion(5, 5, 3, 3), 1.0);
        assert_eq!(inclusion(1, 2, 1, 2), 0.25);

        let pop = one_frame(&[2, 2]);
        let frame = pop.frame(FrameId(1)).unwrap();
        assert_eq!(
            inclusion_probability(frame, PsuId(1), &FrameDesign::fixed(1, 1)).unwrap(),
            0.25
        );
        assert!(matches!(
            inclusion_probability(frame, PsuId(9), &FrameDesign::fixed(1, 1)),
            Err(Error::UnknownPsu { .. })
        ));
    }

    #[test]
    fn draws_are_deterministic() {
        let pop = one_frame(&[4, 5, 3, 6]);
        let design = DesignSpec::new(0).with_frame(1, FrameDesign::fixed(2, 2));
        let a = draw_sample(&pop, &design, 99).unwrap();
        let b = draw_sample(&pop, &design, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames()[0].n(), 2);
        assert!(a.frames()[0].selected.iter().all(|p| p.m() == 2));
    }

    #[test]
    fn census_draw_contains_every_unit_once() {
        let pop = one_frame(&[2, 3, 1]);
        let design = DesignSpec::new(0).with_frame(
            1,
            FrameDesign::Fixed {
                n: 3,
                m: Allocation::PerPsu(vec![2, 3, 1]),
            },
        );
        let draw = draw_sample(&pop, &design, 5).unwrap();
        let mut units: Vec<u64> = draw.observations().map(|(_, _, u, _)| u.0).collect();
        units.sort_unstable();
        assert_eq!(units, (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_design_is_rejected() {
        let pop = one_frame(&[2, 2]);
        let too_many = DesignSpec::new(0).with_frame(1, FrameDesign::fixed(3, 1));
        assert!(matches!(
            draw_sample(&pop, &too_many, 1),
            Err(Error::InvalidDesign { .. })
        ));
        let too_deep = DesignSpec::new(0).with_frame(1, FrameDesign::fixed(1, 3));
        assert!(matches!(
            draw_sample(&pop, &too_deep, 1),
            Err(Error::InvalidDesign { .. })
        ));
    }

    #[test]
    fn first_stage_frequencies_are_uniform() {
        let pop = one_frame(&[1, 1, 1]);
        let design = DesignSpec::new(0).with_frame(1, FrameDesign::fixed(1, 1));
        let reps = 100_000u64;
        let mut counts: HashMap<PsuId, u64> = HashMap::new();
        for r in 0..reps {
            let draw = draw_sample(&pop, &design, rng::derive_seed(2024, &[r])).unwrap();
            *counts.entry(draw.frames()[0].selected[0].psu).or_default() += 1;
        }
        for c in counts.values() {
            let freq = *c as f64 / reps as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn enumeration_of_small_design() {
        let pop = one_frame(&[2, 2, 2]);
        let design = DesignSpec::new(0).with_frame(1, FrameDesign::fixed(2, 1));
        assert_eq!(sample_space_size(&pop, &design).unwrap(), 12);
        let all = enumerate_samples(&pop, &design, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 12);
        assert!(all.iter().all(|(_, p)| (p - 1.0 / 12.0).abs() < 1e-15));
        let total: f64 = crate::numeric::sum(all.iter().map(|(_, p)| *p));
        assert!((total - 1.0).abs() < 1e-12);
        let distinct: BTreeSet<Vec<u64>> = all
            .iter()
            .map(|(d, _)| d.observations().map(|(_, _, u, _)| u.0).collect())
            .collect();
        assert_eq!(distinct.len(), 12);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let pop = one_frame(&[4, 4, 4, 4]);
        let design = DesignSpec::new(0).with_frame(1, FrameDesign::fixed(2, 2));
        // C(4,2) · 6 · 6 = 216
        assert_eq!(
            enumerate_samples(&pop, &design, 100).unwrap_err(),
            Error::EnumerationCap {
                cardinality: 216,
                cap: 100
            }
        );
    }

    fn two_frame_points() -> Population {
        // Six units; frame 1 has districts {1,2,3},{4,5,6}; frame 2 has clusters {1,4},{2,5,6},{3}.
        let units = (1..=6)
            .map(|i| UnitRecord::new(i).with_yield(10.0 * i as f64))
            .collect();
        Population::from_partitions(
            units,
            vec![
                FrameSpec::new(
                    1,
                    vec![PsuSpec::new(1, [1, 2, 3]), PsuSpec::new(2, [4, 5, 6])],
                ),
                FrameSpec::new(
                    2,
                    vec![
                        PsuSpec::new(1, [1, 4]),
                        PsuSpec::new(2, [2, 5, 6]),
                        PsuSpec::new(3, [3]),
                    ],
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shared_sample_induces_realized_allocation() {
        let pop = two_frame_points();
        let draw =
            impose_shared_sample(&pop, &[UnitId(1), UnitId(2), UnitId(5), UnitId(6)]).unwrap();
        let wifs = draw.frame(FrameId(2)).unwrap();
        assert_eq!(wifs.n(), 2);
        let ms: Vec<usize> = wifs.selected.iter().map(PsuSample::m).collect();
        assert_eq!(ms, vec![1, 3]);
        assert!(wifs.is_realized());
        let frame = pop.frame(FrameId(2)).unwrap();
        assert_eq!(wifs.allocation_of(frame, PsuId(3)), None);

        let single = impose_shared_sample(&pop, &[UnitId(3)]).unwrap();
        assert!(single
            .frames()
            .iter()
            .all(|f| f.n() == 1 && f.selected[0].m() == 1));
    }

    #[test]
    fn shared_unit_without_membership_is_an_error() {
        let units = vec![
            UnitRecord::new(1).with_yield(1.0),
            UnitRecord::new(2).with_yield(2.0),
        ];
        let pop = Population::from_partitions(
            units,
            vec![
                FrameSpec::new(1, vec![PsuSpec::new(1, [1, 2])]),
                FrameSpec::new(2, vec![PsuSpec::new(1, [1])]),
            ],
        )
        .unwrap();
        assert!(matches!(
            impose_shared_sample(&pop, &[UnitId(2)]),
            Err(Error::MembershipMismatch { .. })
        ));
    }

    #[test]
    fn realized_frames_follow_fixed_draws() {
        let pop = two_frame_points();
        let design = DesignSpec::new(3)
            .with_frame(1, FrameDesign::fixed(1, 2))
            .with_frame(2, FrameDesign::Realized);
        let draw = draw_sample(&pop, &design, 3).unwrap();
        let list_units: BTreeSet<UnitId> = draw.frames()[0]
            .selected
            .iter()
            .flat_map(|p| p.units.clone())
            .collect();
        let sat_units: BTreeSet<UnitId> = draw.frames()[1]
            .selected
            .iter()
            .flat_map(|p| p.units.clone())
            .collect();
        assert_eq!(list_units, sat_units);
        // 2 districts × C(3,2) = 6 draws, realized frame adds no randomness.
        assert_eq!(sample_space_size(&pop, &design).unwrap(), 6);
    }
}
