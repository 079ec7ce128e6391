//! Multiple-frame weights.
//!
//! Every sampled observation gets the inverse of the summed inclusion
//! probabilities of its unit over all frames that contain it, and the raw
//! weights are then divided by their grand total so they sum to one.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::design::{inclusion_probability, DesignSpec, FrameDesign, FrameSample, SampleDraw};
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameId, Population, PsuId, UnitId};
use crate::numeric::NeumaierSum;

/// Which per-frame probability is summed before inverting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightForm {
    /// `π*_α(i,j) = π_α(i,j) / M_α0`, the worked construction.
    #[default]
    FrameScaled,
    /// Plain `π_α(i,j)`, weights proportional to `(Σ_α π_α)⁻¹`.
    Inclusion,
}

impl WeightForm {
    fn term(self, pi: f64, total_ssus: usize) -> f64 {
        match self {
            WeightForm::FrameScaled => pi / total_ssus as f64,
            WeightForm::Inclusion => pi,
        }
    }
}

impl std::str::FromStr for WeightForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" | "frame-scaled" => Ok(WeightForm::FrameScaled),
            "inclusion" | "plain" => Ok(WeightForm::Inclusion),
            other => Err(Error::InvalidInput(format!(
                "unknown weight form {other:?}"
            ))),
        }
    }
}

/// `π*_α(i,j)`, bounded by `1/M_α0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StarProbability(pub f64);

pub fn star_probability(
    frame: &Frame,
    sample: &FrameSample,
    psu: PsuId,
) -> Result<StarProbability> {
    if frame.psu(psu).is_none() {
        return Err(Error::UnknownPsu {
            frame: frame.id,
            psu,
        });
    }
    let pi = sample
        .inclusion_of(frame, psu)
        .ok_or(Error::InvalidInput(format!(
            "psu {psu} of frame {} was not sampled",
            frame.id
        )))?;
    Ok(StarProbability(pi / frame.total_ssus() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub frame: FrameId,
    pub psu: PsuId,
    pub unit: UnitId,
    pub pi_star_sum: f64,
    pub raw: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct WeightTable {
    entries: Vec<WeightEntry>,
    index: HashMap<(FrameId, PsuId, UnitId), usize>,
    norm: f64,
    form: WeightForm,
}

impl WeightTable {
    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    /// `Σ raw`, the normalizing constant.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn form(&self) -> WeightForm {
        self.form
    }

    pub fn get(&self, frame: FrameId, psu: PsuId, unit: UnitId) -> Option<&WeightEntry> {
        self.index
            .get(&(frame, psu, unit))
            .map(|&i| &self.entries[i])
    }

    pub fn weight(&self, frame: FrameId, psu: PsuId, unit: UnitId) -> Result<f64> {
        self.get(frame, psu, unit)
            .map(|e| e.weight)
            .ok_or(Error::MissingWeight { frame, psu, unit })
    }

    pub fn total(&self) -> f64 {
        crate::numeric::sum(self.entries.iter().map(|e| e.weight))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,psu,unit,pi_star_sum,raw_weight,weight\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{:.15e},{:.15e},{:.15e}",
                e.frame, e.psu, e.unit, e.pi_star_sum, e.raw, e.weight
            );
        }
        out
    }
}

/// Sum over the frames of `sample` containing `unit` of its per-frame term.
fn probability_sum(
    population: &Population,
    sample: &SampleDraw,
    unit: UnitId,
    form: WeightForm,
) -> Result<f64> {
    let record = population.unit(unit).ok_or(Error::UnknownUnit(unit))?;
    let mut acc = NeumaierSum::new();
    for fs in sample.frames() {
        let Some(&psu) = record.memberships.get(&fs.frame) else {
            continue;
        };
        let frame = population
            .frame(fs.frame)
            .ok_or(Error::UnknownFrame(fs.frame))?;
        let pi = fs
            .inclusion_of(frame, psu)
            .ok_or(Error::MissingAllocation {
                frame: fs.frame,
                psu,
                unit,
            })?;
        acc.add(form.term(pi, frame.total_ssus()));
    }
    Ok(acc.value())
}

pub fn compute_weights(sample: &SampleDraw, population: &Population) -> Result<WeightTable> {
    compute_weights_with(sample, population, WeightForm::default())
}

/// Weights for every observation of `sample`. Only the frames present in
/// `sample` enter the probability sums, so a restricted draw yields the
/// weights of that frame combination.
pub fn compute_weights_with(
    sample: &SampleDraw,
    population: &Population,
    form: WeightForm,
) -> Result<WeightTable> {
    let mut cache: HashMap<UnitId, f64> = HashMap::new();
    let mut entries = Vec::new();
    let mut norm = NeumaierSum::new();
    for (frame, psu, unit, _) in sample.observations() {
        let pi_sum = match cache.get(&unit) {
            Some(&s) => s,
            None => {
                let s = probability_sum(population, sample, unit, form)?;
                cache.insert(unit, s);
                s
            }
        };
        let raw = 1.0 / pi_sum;
        norm.add(raw);
        entries.push(WeightEntry {
            frame,
            psu,
            unit,
            pi_star_sum: pi_sum,
            raw,
            weight: 0.0,
        });
    }
    if entries.is_empty() {
        return Err(Error::InvalidInput("sample has no observations".into()));
    }
    let norm = norm.value();
    let mut index = HashMap::with_capacity(entries.len());
    for (i, e) in entries.iter_mut().enumerate() {
        e.weight = e.raw / norm;
        index.insert((e.frame, e.psu, e.unit), i);
    }
    Ok(WeightTable {
        entries,
        index,
        norm,
        form,
    })
}

/// Design-level weights for every `(frame, unit)` pair of a fixed design:
/// `raw_u / E[Σ raw]`, where the expectation runs over the design. When the
/// realized normalizer is constant across draws these coincide with the
/// sample weights.
#[derive(Debug, Clone)]
pub struct PopulationWeights {
    weights: HashMap<(FrameId, UnitId), f64>,
    pub expected_norm: f64,
}

impl PopulationWeights {
    pub fn get(&self, frame: FrameId, unit: UnitId) -> Option<f64> {
        self.weights.get(&(frame, unit)).copied()
    }
}

pub fn population_weights(
    population: &Population,
    design: &DesignSpec,
    form: WeightForm,
) -> Result<PopulationWeights> {
    design.validate(population)?;
    let mut designs: Vec<(&Frame, &FrameDesign)> = Vec::new();
    for (&id, d) in &design.frames {
        if matches!(d, FrameDesign::Realized) {
            return Err(Error::InvalidDesign {
                frame: id,
                reason: "design-level weights need a fixed allocation".into(),
            });
        }
        designs.push((population.frame(id).ok_or(Error::UnknownFrame(id))?, d));
    }

    let mut raw: HashMap<UnitId, f64> = HashMap::new();
    for unit in population.units() {
        let mut acc = NeumaierSum::new();
        let mut member = false;
        for (frame, d) in &designs {
            if let Some(&psu) = unit.memberships.get(&frame.id) {
                member = true;
                acc.add(form.term(inclusion_probability(frame, psu, d)?, frame.total_ssus()));
            }
        }
        if member {
            raw.insert(unit.id, 1.0 / acc.value());
        }
    }

    let mut expected = NeumaierSum::new();
    for (frame, d) in &designs {
        for psu in frame.psus() {
            let pi = inclusion_probability(frame, psu.id, d)?;
            for unit in &psu.ssu_ids {
                expected.add(pi * raw[unit]);
            }
        }
    }
    let expected_norm = expected.value();
    let mut weights = HashMap::new();
    for (frame, _) in &designs {
        for psu in frame.psus() {
            for unit in &psu.ssu_ids {
                weights.insert((frame.id, *unit), raw[unit] / expected_norm);
            }
        }
    }
    Ok(PopulationWeights {
        weights,
        expected_norm,
    })
}
