//! Conventional single-frame two-stage estimator:
//!
//! ```text
//! ŷ_α    = Σ_i M_αi ȳ_αi / (n_α M̄_α)
//! v(ŷ_α) = (1/n_α − 1/N_α) s²_b + 1/(n_α N_α) Σ_i (M_αi/M̄_α)(1/m_αi − 1/M_αi) s²_wi
//! ```
//!
//! Both can be evaluated from summary statistics alone, which is how
//! published tables are reproduced.

use crate::design::FrameSample;
use crate::error::{invalid, Result};
use crate::numeric::{mean_square, sum};

#[derive(Debug, Clone, PartialEq)]
pub struct SfPsuSummary {
    /// `M_αi`.
    pub size: f64,
    /// `m_αi`.
    pub m: f64,
    /// `ȳ_αi`.
    pub ybar: f64,
    /// `s²_αwi`.
    pub s2w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfSummary {
    /// `N_α`.
    pub psus_total: f64,
    /// `n_α`.
    pub n: usize,
    /// `M̄_α`.
    pub mean_psu_size: f64,
    pub psus: Vec<SfPsuSummary>,
    /// Between-psu mean square `s²_b`.
    pub s2b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfEstimate {
    pub mean: f64,
    pub s2_between: f64,
    pub s2_within: Vec<f64>,
    pub variance: f64,
    pub se: f64,
    /// Set when the variance formula came out negative (degenerate input);
    /// `se` is then computed from zero.
    pub negative_variance: bool,
}

fn check(summary: &SfSummary, min_n: usize) -> Result<()> {
    if summary.n < min_n {
        return Err(invalid(format!(
            "single-frame estimator needs n ≥ {min_n}, got {}",
            summary.n
        )));
    }
    if summary.psus.len() != summary.n {
        return Err(invalid(format!(
            "summary declares n = {} but lists {} psus",
            summary.n,
            summary.psus.len()
        )));
    }
    if summary.mean_psu_size <= 0.0 || summary.psus_total < summary.n as f64 {
        return Err(invalid("summary has N < n or a nonpositive M̄"));
    }
    if summary.psus.iter().any(|p| p.m < 1.0 || p.size < p.m) {
        return Err(invalid("summary has a psu with m < 1 or m > M"));
    }
    Ok(())
}

fn mean_of(summary: &SfSummary) -> f64 {
    sum(summary.psus.iter().map(|p| p.size * p.ybar)) / (summary.n as f64 * summary.mean_psu_size)
}

pub fn sf_from_summary(summary: &SfSummary) -> Result<SfEstimate> {
    check(summary, 2)?;
    let n = summary.n as f64;
    let big_n = summary.psus_total;
    let mbar = summary.mean_psu_size;
    let between = (1.0 / n - 1.0 / big_n) * summary.s2b;
    let within = sum(summary
        .psus
        .iter()
        .map(|p| p.size / mbar * (1.0 / p.m - 1.0 / p.size) * p.s2w))
        / (n * big_n);
    let variance = between + within;
    Ok(SfEstimate {
        mean: mean_of(summary),
        s2_between: summary.s2b,
        s2_within: summary.psus.iter().map(|p| p.s2w).collect(),
        variance,
        se: variance.max(0.0).sqrt(),
        negative_variance: variance < 0.0,
    })
}

/// Summary statistics of one frame's sample. `s²_b` is the mean square of
/// the estimated psu totals scaled by `1/M̄`, `M_αi ȳ_αi / M̄_α`, about the
/// estimated mean; it is zero when only one psu was drawn.
pub fn summarize_frame_sample(sample: &FrameSample) -> SfSummary {
    let mbar = sample.mean_psu_size();
    let psus: Vec<SfPsuSummary> = sample
        .selected
        .iter()
        .map(|p| SfPsuSummary {
            size: p.size as f64,
            m: p.m() as f64,
            ybar: sum(p.y.iter().copied()) / p.m() as f64,
            s2w: mean_square(&p.y),
        })
        .collect();
    let scaled: Vec<f64> = psus.iter().map(|p| p.size * p.ybar / mbar).collect();
    SfSummary {
        psus_total: sample.psus_total as f64,
        n: sample.n(),
        mean_psu_size: mbar,
        s2b: mean_square(&scaled),
        psus,
    }
}

pub fn sf_two_stage_mean(sample: &FrameSample) -> Result<f64> {
    let summary = summarize_frame_sample(sample);
    check(&summary, 1)?;
    Ok(mean_of(&summary))
}

pub fn sf_two_stage_variance(sample: &FrameSample) -> Result<SfEstimate> {
    sf_from_summary(&summarize_frame_sample(sample))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psu(size: f64, m: f64, ybar: f64, s2w: f64) -> SfPsuSummary {
        SfPsuSummary { size, m, ybar, s2w }
    }

    fn list_frame() -> SfSummary {
        SfSummary {
            psus_total: 20.0,
            n: 2,
            mean_psu_size: 337.0,
            psus: vec![
                psu(147.0, 36.0, 3440.0, 417_100.0),
                psu(247.0, 35.0, 3835.0, 460_100.0),
            ],
            s2b: 871_700.0,
        }
    }

    #[test]
    fn list_frame_column() {
        let est = sf_from_summary(&list_frame()).unwrap();
        assert!((est.mean - 2155.67507418398).abs() < 1e-9);
        assert!((est.variance - 392_567.147_608_449_9).abs() < 1e-6);
        assert!((est.se - 626.551_791_640_922_5).abs() < 1e-9);
        assert!((est.mean / 2151.0 - 1.0).abs() < 0.005);
        assert!((est.se / 626.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn wifs_column() {
        let sizes = [403.0, 402.0, 325.0, 335.0, 335.0, 397.0];
        let ms = [2.0, 3.0, 1.0, 1.0, 1.0, 63.0];
        let ybar = [3190.0, 3313.0, 4100.0, 3260.0, 2850.0, 3675.0];
        let s2w = [101_300.0, 1_447_000.0, 0.0, 0.0, 0.0, 472_400.0];
        let summary = SfSummary {
            psus_total: 500.0,
            n: 6,
            mean_psu_size: 524.0,
            psus: (0..6)
                .map(|i| psu(sizes[i], ms[i], ybar[i], s2w[i]))
                .collect(),
            s2b: 620_700.0,
        };
        let est = sf_from_summary(&summary).unwrap();
        assert!((est.mean - 2371.41253180662).abs() < 1e-9);
        assert!((est.se - 319.914_891_393_426_7).abs() < 1e-6);
    }

    #[test]
    fn single_psu_is_rejected_for_variance() {
        let mut s = list_frame();
        s.n = 1;
        s.psus.truncate(1);
        assert!(sf_from_summary(&s).is_err());
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let mut s = list_frame();
        s.n = 3;
        assert!(sf_from_summary(&s).is_err());
    }

    #[test]
    fn flat_summary_has_zero_variance() {
        let s = SfSummary {
            psus_total: 10.0,
            n: 3,
            mean_psu_size: 5.0,
            psus: vec![
                psu(4.0, 2.0, 7.0, 0.0),
                psu(6.0, 3.0, 7.0, 0.0),
                psu(5.0, 5.0, 7.0, 0.0),
            ],
            s2b: 0.0,
        };
        let est = sf_from_summary(&s).unwrap();
        assert!((est.mean - 7.0 * 15.0 / 15.0).abs() < 1e-12);
        assert_eq!(est.variance, 0.0);
    }
}
