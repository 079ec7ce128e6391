use mfs_core::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    yields: Vec<f64>,
    // per frame: psu index of every unit
    partitions: Vec<Vec<usize>>,
    seed: u64,
}

fn instance() -> impl Strategy<Value = Instance> {
    (6usize..24, 2usize..=3)
        .prop_flat_map(|(units, frames)| {
            (
                prop::collection::vec(0.0f64..6000.0, units),
                prop::collection::vec(
                    (2usize..=4, prop::collection::vec(0usize..4, units)),
                    frames,
                ),
                any::<u64>(),
            )
        })
        .prop_map(|(yields, frames, seed)| {
            let partitions = frames
                .into_iter()
                .map(|(k, raw)| {
                    raw.iter()
                        .enumerate()
                        .map(|(u, &p)| if u < k { u } else { p % k })
                        .collect()
                })
                .collect();
            Instance {
                yields,
                partitions,
                seed,
            }
        })
}

fn specs(inst: &Instance) -> Vec<FrameSpec> {
    inst.partitions
        .iter()
        .enumerate()
        .map(|(f, part)| {
            let k = part.iter().max().unwrap() + 1;
            let psus = (0..k)
                .map(|p| {
                    let members = part
                        .iter()
                        .enumerate()
                        .filter(|(_, &q)| q == p)
                        .map(|(u, _)| u as u64 + 1);
                    PsuSpec::new(p as u32 + 1, members)
                })
                .collect();
            FrameSpec::new(f as u16 + 1, psus)
        })
        .collect()
}

fn units(inst: &Instance) -> Vec<UnitRecord> {
    inst.yields
        .iter()
        .enumerate()
        .map(|(u, &y)| UnitRecord::new(u as u64 + 1).with_yield(y))
        .collect()
}

fn population(inst: &Instance) -> Population {
    Population::from_partitions(units(inst), specs(inst)).unwrap()
}

fn design(pop: &Population, seed: u64) -> DesignSpec {
    let mut d = DesignSpec::new(seed);
    for f in pop.frames() {
        let ms = f.psus().iter().map(|p| p.size().min(2)).collect();
        d = d.with_frame(
            f.id.0,
            FrameDesign::Fixed {
                n: 2,
                m: Allocation::PerPsu(ms),
            },
        );
    }
    d
}

fn estimate(pop: &Population, sample: &SampleDraw) -> (WeightTable, MfEstimate) {
    let w = compute_weights(sample, pop).unwrap();
    let e = mf_estimate(sample, &w, VarianceForm::Derived).unwrap();
    (w, e)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weights_sum_to_one(inst in instance()) {
        let pop = population(&inst);
        let d = design(&pop, inst.seed);
        let sample = draw_sample(&pop, &d, inst.seed).unwrap();
        for form in [WeightForm::FrameScaled, WeightForm::Inclusion] {
            let w = compute_weights_with(&sample, &pop, form).unwrap();
            prop_assert!((w.total() - 1.0).abs() <= 1e-12, "sum {}", w.total());
            prop_assert!(w.entries().iter().all(|e| e.weight > 0.0));
        }
    }

    #[test]
    fn scaling_yields_scales_mean_and_variance(inst in instance(), factor in prop::sample::select(vec![10.0, 100.0])) {
        let pop = population(&inst);
        let sample = draw_sample(&pop, &design(&pop, inst.seed), inst.seed).unwrap();
        let (_, base) = estimate(&pop, &sample);
        let (_, scaled) = estimate(&pop, &sample.map_yields(|y| y * factor));
        prop_assert!(close(scaled.mean, factor * base.mean, 1e-14), "{} vs {}", scaled.mean, factor * base.mean);
        prop_assert!(close(scaled.var_est, factor * factor * base.var_est, 1e-12),
            "{} vs {}", scaled.var_est, factor * factor * base.var_est);
    }

    #[test]
    fn shifting_yields_shifts_mean(inst in instance()) {
        let pop = population(&inst);
        let sample = draw_sample(&pop, &design(&pop, inst.seed), inst.seed).unwrap();
        let (_, base) = estimate(&pop, &sample);
        let (_, shifted) = estimate(&pop, &sample.map_yields(|y| y + 500.0));
        prop_assert!(close(shifted.mean, base.mean + 500.0, 1e-14), "{} vs {}", shifted.mean, base.mean + 500.0);
    }

    #[test]
    fn frame_order_changes_no_bit(inst in instance()) {
        let pop = population(&inst);
        let mut rev_specs = specs(&inst);
        rev_specs.reverse();
        let mut rev_units = units(&inst);
        rev_units.reverse();
        let rev = Population::from_partitions(rev_units, rev_specs).unwrap();
        let d = design(&pop, inst.seed);
        let a = draw_sample(&pop, &d, inst.seed).unwrap();
        let b = draw_sample(&rev, &d, inst.seed).unwrap();
        let (wa, ea) = estimate(&pop, &a);
        let (wb, eb) = estimate(&rev, &b);
        prop_assert_eq!(ea.mean.to_bits(), eb.mean.to_bits());
        prop_assert_eq!(ea.var_est.to_bits(), eb.var_est.to_bits());
        prop_assert_eq!(wa.to_csv(), wb.to_csv());
    }

    #[test]
    fn sub_combinations_also_normalize(inst in instance()) {
        let pop = population(&inst);
        let sample = draw_sample(&pop, &design(&pop, inst.seed), inst.seed).unwrap();
        for combo in frame_combinations(&sample.frame_ids()) {
            let w = compute_weights(&sample.restrict(&combo), &pop).unwrap();
            prop_assert!((w.total() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn desk_instances_have_normalized_weights() {
    let mut instances = mfs_core::simulate::self_weighting_instances();
    instances.extend(mfs_core::simulate::exact_variance_instances());
    instances.extend(mfs_core::simulate::general_instances());
    instances.push(mfs_core::simulate::census_instance());
    for inst in &instances {
        for draw in 0..20 {
            let sample = draw_sample(&inst.population, &inst.design, draw).unwrap();
            let w = compute_weights(&sample, &inst.population).unwrap();
            assert!(
                (w.total() - 1.0).abs() <= 1e-12,
                "{}: {}",
                inst.name,
                w.total()
            );
        }
    }
}
