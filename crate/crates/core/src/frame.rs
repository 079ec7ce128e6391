//! Finite population, its overlapping frames, and the psu/ssu hierarchy.
//!
//! Units are global: a crop-cutting plot observed under the list frame and
//! under two satellite frames is one [`UnitRecord`] with three memberships.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PsuId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitId(pub u64);

macro_rules! display_newtype {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}
display_newtype!(FrameId, PsuId, UnitId);

#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: UnitId,
    pub memberships: BTreeMap<FrameId, PsuId>,
    pub location: Option<(f64, f64)>,
    pub y: Option<f64>,
}

impl UnitRecord {
    pub fn new(id: u64) -> Self {
        Self {
            id: UnitId(id),
            memberships: BTreeMap::new(),
            location: None,
            y: None,
        }
    }

    pub fn with_yield(mut self, y: f64) -> Self {
        self.y = Some(y);
        self
    }

    pub fn at(mut self, x: f64, y: f64) -> Self {
        self.location = Some((x, y));
        self
    }

    pub fn member_of(mut self, frame: u16, psu: u32) -> Self {
        self.memberships.insert(FrameId(frame), PsuId(psu));
        self
    }
}

/// The set of frames containing a unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DomainKey(pub BTreeSet<FrameId>);

impl fmt::Display for DomainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|id| id.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

/// Exact frame membership of a unit.
pub fn domain_of(unit: &UnitRecord) -> DomainKey {
    DomainKey(unit.memberships.keys().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Psu {
    pub id: PsuId,
    pub ssu_ids: Vec<UnitId>,
    size: usize,
}

impl Psu {
    /// `M_αi`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// True when every ssu of the psu is a unit of the population.
    pub fn is_enumerated(&self) -> bool {
        self.size == self.ssu_ids.len()
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub id: FrameId,
    pub name: Option<String>,
    psus: Vec<Psu>,
    psu_index: HashMap<PsuId, usize>,
    total_ssus: usize,
}

impl Frame {
    pub fn psus(&self) -> &[Psu] {
        &self.psus
    }

    /// `N_α`.
    pub fn n_psus(&self) -> usize {
        self.psus.len()
    }

    /// `M_α0`.
    pub fn total_ssus(&self) -> usize {
        self.total_ssus
    }

    /// `M̄_α = M_α0 / N_α`, at full precision.
    pub fn mean_psu_size(&self) -> f64 {
        self.total_ssus as f64 / self.psus.len() as f64
    }

    pub fn psu(&self, id: PsuId) -> Option<&Psu> {
        self.psu_index.get(&id).map(|&i| &self.psus[i])
    }

    pub fn psu_position(&self, id: PsuId) -> Option<usize> {
        self.psu_index.get(&id).copied()
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("frame {}", self.id))
    }
}

/// A psu as supplied to [`build_population`]. `size` defaults to the member
/// count; a larger declared size marks a psu whose ssus are only partly
/// listed (a spectral cluster of which only the sampled plots are units).
#[derive(Debug, Clone, PartialEq)]
pub struct PsuSpec {
    pub id: PsuId,
    pub members: Vec<UnitId>,
    pub size: Option<usize>,
}

impl PsuSpec {
    pub fn new(id: u32, members: impl IntoIterator<Item = u64>) -> Self {
        Self {
            id: PsuId(id),
            members: members.into_iter().map(UnitId).collect(),
            size: None,
        }
    }

    pub fn with_size(mut self, size: usize) -> Self {
        self.size = Some(size);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub id: FrameId,
    pub name: Option<String>,
    pub psus: Vec<PsuSpec>,
}

impl FrameSpec {
    pub fn new(id: u16, psus: Vec<PsuSpec>) -> Self {
        Self {
            id: FrameId(id),
            name: None,
            psus,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    units: Vec<UnitRecord>,
    index: HashMap<UnitId, usize>,
    frames: Vec<Frame>,
    true_mean: Option<f64>,
}

/// Validates units against frame partitions and derives every count.
pub fn build_population(units: Vec<UnitRecord>, frame_specs: Vec<FrameSpec>) -> Result<Population> {
    let mut index = HashMap::with_capacity(units.len());
    for (i, unit) in units.iter().enumerate() {
        if index.insert(unit.id, i).is_some() {
            return Err(Error::DuplicateUnit(unit.id));
        }
        if unit.memberships.is_empty() {
            return Err(Error::EmptyMembership(unit.id));
        }
    }

    let mut frames: Vec<Frame> = Vec::with_capacity(frame_specs.len());
    for spec in frame_specs {
        if frames.iter().any(|f| f.id == spec.id) {
            return Err(Error::DuplicateFrame(spec.id));
        }
        if spec.psus.is_empty() {
            return Err(Error::InvalidInput(format!(
                "frame {} has no psus",
                spec.id
            )));
        }
        let mut owner: HashMap<UnitId, PsuId> = HashMap::new();
        let mut psu_index = HashMap::with_capacity(spec.psus.len());
        let mut psus = Vec::with_capacity(spec.psus.len());
        let mut total = 0usize;
        for psu in spec.psus {
            if psu_index.insert(psu.id, psus.len()).is_some() {
                return Err(Error::DuplicatePsu {
                    frame: spec.id,
                    psu: psu.id,
                });
            }
            for &unit in &psu.members {
                let record = index
                    .get(&unit)
                    .map(|&i| &units[i])
                    .ok_or(Error::UnknownUnit(unit))?;
                if let Some(first) = owner.insert(unit, psu.id) {
                    return Err(Error::SsuInTwoPsus {
                        frame: spec.id,
                        unit,
                        first,
                        second: psu.id,
                    });
                }
                if record.memberships.get(&spec.id) != Some(&psu.id) {
                    return Err(Error::MembershipMismatch {
                        unit,
                        frame: spec.id,
                    });
                }
            }
            let size = psu.size.unwrap_or(psu.members.len());
            if size == 0 || size < psu.members.len() {
                return Err(Error::InvalidInput(format!(
                    "psu {} of frame {} has size {} with {} listed ssus",
                    psu.id,
                    spec.id,
                    size,
                    psu.members.len()
                )));
            }
            total += size;
            psus.push(Psu {
                id: psu.id,
                ssu_ids: psu.members,
                size,
            });
        }
        // Units declaring this frame must appear in its partition.
        for unit in &units {
            if unit.memberships.contains_key(&spec.id) && !owner.contains_key(&unit.id) {
                return Err(Error::MembershipMismatch {
                    unit: unit.id,
                    frame: spec.id,
                });
            }
        }
        frames.push(Frame {
            id: spec.id,
            name: spec.name,
            psus,
            psu_index,
            total_ssus: total,
        });
    }
    frames.sort_by_key(|f| f.id);

    for unit in &units {
        if let Some(frame) = unit
            .memberships
            .keys()
            .find(|id| frames.binary_search_by_key(*id, |f| f.id).is_err())
        {
            return Err(Error::UnknownFrame(*frame));
        }
    }

    let true_mean = if !units.is_empty() && units.iter().all(|u| u.y.is_some()) {
        Some(crate::numeric::sum(units.iter().filter_map(|u| u.y)) / units.len() as f64)
    } else {
        None
    };

    Ok(Population {
        units,
        index,
        frames,
        true_mean,
    })
}

impl Population {
    /// Builds a population whose memberships are read off the partitions.
    /// Any membership already present on a unit is replaced.
    pub fn from_partitions(
        mut units: Vec<UnitRecord>,
        frame_specs: Vec<FrameSpec>,
    ) -> Result<Self> {
        let positions: HashMap<UnitId, usize> =
            units.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
        for unit in &mut units {
            unit.memberships.clear();
        }
        for spec in &frame_specs {
            for psu in &spec.psus {
                for id in &psu.members {
                    let &i = positions.get(id).ok_or(Error::UnknownUnit(*id))?;
                    units[i].memberships.insert(spec.id, psu.id);
                }
            }
        }
        build_population(units, frame_specs)
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn unit(&self, id: UnitId) -> Option<&UnitRecord> {
        self.index.get(&id).map(|&i| &self.units[i])
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, id: FrameId) -> Option<&Frame> {
        self.frames
            .binary_search_by_key(&id, |f| f.id)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn frame_ids(&self) -> Vec<FrameId> {
        self.frames.iter().map(|f| f.id).collect()
    }

    /// Mean of `y` over every unit, when all yields are known.
    pub fn true_mean(&self) -> Option<f64> {
        self.true_mean
    }

    pub fn yield_of(&self, id: UnitId) -> Result<f64> {
        let unit = self.unit(id).ok_or(Error::UnknownUnit(id))?;
        unit.y.ok_or(Error::MissingYield(id))
    }

    /// Census of domains: each unit listed under exactly one key.
    pub fn domains(&self) -> BTreeMap<DomainKey, Vec<UnitId>> {
        let mut out: BTreeMap<DomainKey, Vec<UnitId>> = BTreeMap::new();
        for unit in &self.units {
            out.entry(domain_of(unit)).or_default().push(unit.id);
        }
        out
    }

    /// Same population with every yield replaced by `f(y)`.
    pub fn map_yields(&self, f: impl Fn(f64) -> f64) -> Population {
        let mut out = self.clone();
        for unit in &mut out.units {
            unit.y = unit.y.map(&f);
        }
        out.true_mean = if !out.units.is_empty() && out.units.iter().all(|u| u.y.is_some()) {
            Some(crate::numeric::sum(out.units.iter().filter_map(|u| u.y)) / out.units.len() as f64)
        } else {
            None
        };
        out
    }
}
