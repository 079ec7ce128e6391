//! Multiple-frame mean and the z-transform variance formulas.
//!
//! With `z_αij = w_αij · y_αij`, the between-psu mean squares are centred on
//! `Σ_i m_αi z̄_αi / Σ_i m_αi` (sample) and `Σ_i M_αi Z̄_αi / M_α0`
//! (population), the size-weighted mean of the psu means.

use crate::design::{DesignSpec, FrameDesign, SampleDraw};
use crate::error::{Error, Result};
use crate::frame::{FrameId, Population, PsuId};
use crate::numeric::{sum, NeumaierSum};
use crate::weights::{population_weights, WeightForm, WeightTable};

/// Second-stage finite-population factor in the within-psu term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceForm {
    /// `(1 − f_α2i)`, as the variance derivation produces.
    #[default]
    Derived,
    /// `(1 − f²_α2i)`, as the displayed variance formulas print it.
    Printed,
}

impl VarianceForm {
    fn factor(self, f2: f64) -> f64 {
        match self {
            VarianceForm::Derived => 1.0 - f2,
            VarianceForm::Printed => 1.0 - f2 * f2,
        }
    }
}

impl std::str::FromStr for VarianceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(VarianceForm::Derived),
            "printed" => Ok(VarianceForm::Printed),
            other => Err(Error::InvalidInput(format!(
                "unknown variance form {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfEstimate {
    pub mean: f64,
    pub var_est: f64,
    pub se: f64,
}

/// `ŷ = Σ_α Σ_i Σ_j w_αij y_αij`.
pub fn mf_mean(sample: &SampleDraw, weights: &WeightTable) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    for (frame, psu, unit, y) in sample.observations() {
        acc.add(weights.weight(frame, psu, unit)? * y);
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsuZ {
    pub psu: PsuId,
    pub m: usize,
    pub size: usize,
    /// `z̄_αi`.
    pub zbar: f64,
    /// `s²_αwi`; zero for a single sampled ssu.
    pub s2w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameZStats {
    pub frame: FrameId,
    pub n: usize,
    pub psus_total: usize,
    pub mbar: f64,
    pub f1: f64,
    pub psus: Vec<PsuZ>,
    /// `z̿_α..`.
    pub zbarbar: f64,
    /// `s'²_αb`, undefined for `n_α < 2`.
    pub s2b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZStats {
    pub frames: Vec<FrameZStats>,
}

impl ZStats {
    pub fn from_sample(sample: &SampleDraw, weights: &WeightTable) -> Result<ZStats> {
        let mut frames = Vec::with_capacity(sample.frames().len());
        for fs in sample.frames() {
            let mut psus = Vec::with_capacity(fs.n());
            for p in &fs.selected {
                let z = p
                    .units
                    .iter()
                    .zip(&p.y)
                    .map(|(&u, &y)| Ok(weights.weight(fs.frame, p.psu, u)? * y))
                    .collect::<Result<Vec<f64>>>()?;
                psus.push(PsuZ {
                    psu: p.psu,
                    m: p.m(),
                    size: p.size,
                    zbar: sum(z.iter().copied()) / z.len() as f64,
                    s2w: crate::numeric::mean_square(&z),
                });
            }
            let m_total: usize = psus.iter().map(|p| p.m).sum();
            let zbarbar = sum(psus.iter().map(|p| p.m as f64 * p.zbar)) / m_total as f64;
            let s2b = (psus.len() >= 2).then(|| {
                sum(psus.iter().map(|p| (p.zbar - zbarbar).powi(2))) / (psus.len() - 1) as f64
            });
            frames.push(FrameZStats {
                frame: fs.frame,
                n: fs.n(),
                psus_total: fs.psus_total,
                mbar: fs.mbar(),
                f1: fs.f1(),
                psus,
                zbarbar,
                s2b,
            });
        }
        Ok(ZStats { frames })
    }
}

/// Sample variance estimator:
/// `Σ_α { m̄_α (1 − f_α1) s'²_αb + (n_α/N_α) Σ_i (1 − f_α2i) s²_αwi }`.
pub fn mf_variance_est(
    sample: &SampleDraw,
    weights: &WeightTable,
    form: VarianceForm,
) -> Result<f64> {
    let stats = ZStats::from_sample(sample, weights)?;
    let mut total = NeumaierSum::new();
    for f in &stats.frames {
        let s2b = f.s2b.ok_or(Error::BetweenPsuUndefined {
            frame: f.frame,
            n: f.n,
        })?;
        total.add(f.mbar * (1.0 - f.f1) * s2b);
        let within = sum(f
            .psus
            .iter()
            .map(|p| form.factor(p.m as f64 / p.size as f64) * p.s2w));
        total.add(f.n as f64 / f.psus_total as f64 * within);
    }
    Ok(total.value())
}

/// Point estimate, variance estimate and standard error together.
pub fn mf_estimate(
    sample: &SampleDraw,
    weights: &WeightTable,
    form: VarianceForm,
) -> Result<MfEstimate> {
    let mean = mf_mean(sample, weights)?;
    let var_est = mf_variance_est(sample, weights, form)?;
    Ok(MfEstimate {
        mean,
        var_est,
        se: var_est.max(0.0).sqrt(),
    })
}

/// Design variance `Σ_α { m̄_α (1 − f_α1) S'²_αb + (n_α/N_α) Σ_{i=1}^{N_α} (1 − f_α2i) S²_αwi }`
/// evaluated on a fully known population under a fixed design, with
/// design-level weights. `m̄_α` is the mean design allocation over all psus.
pub fn mf_variance_population(
    population: &Population,
    design: &DesignSpec,
    weight_form: WeightForm,
    form: VarianceForm,
) -> Result<f64> {
    let weights = population_weights(population, design, weight_form)?;
    let mut total = NeumaierSum::new();
    for (&id, d) in &design.frames {
        let FrameDesign::Fixed { n, .. } = d else {
            unreachable!("population_weights rejects realized frames")
        };
        let frame = population.frame(id).ok_or(Error::UnknownFrame(id))?;
        let big_n = frame.n_psus();
        let mut zbar = Vec::with_capacity(big_n);
        let mut s2w = Vec::with_capacity(big_n);
        let mut ms = Vec::with_capacity(big_n);
        for (pos, psu) in frame.psus().iter().enumerate() {
            let z = psu
                .ssu_ids
                .iter()
                .map(|&u| {
                    let w = weights.get(id, u).ok_or(Error::UnknownUnit(u))?;
                    Ok(w * population.yield_of(u)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            if !psu.is_enumerated() {
                return Err(Error::PsuNotEnumerated {
                    frame: id,
                    psu: psu.id,
                    listed: psu.ssu_ids.len(),
                    size: psu.size(),
                });
            }
            zbar.push(sum(z.iter().copied()) / z.len() as f64);
            s2w.push(crate::numeric::mean_square(&z));
            ms.push(d.m_at(pos).unwrap_or(0) as f64);
        }
        let zbarbar = sum(frame
            .psus()
            .iter()
            .zip(&zbar)
            .map(|(p, z)| p.size() as f64 * z))
            / frame.total_ssus() as f64;
        let s2b = if big_n < 2 {
            0.0
        } else {
            sum(zbar.iter().map(|z| (z - zbarbar).powi(2))) / (big_n - 1) as f64
        };
        let mbar = sum(ms.iter().copied()) / big_n as f64;
        let f1 = *n as f64 / big_n as f64;
        total.add(mbar * (1.0 - f1) * s2b);
        let within = sum(frame
            .psus()
            .iter()
            .zip(&ms)
            .zip(&s2w)
            .map(|((p, m), s)| form.factor(m / p.size() as f64) * s));
        total.add(f1 * within);
    }
    Ok(total.value())
}
