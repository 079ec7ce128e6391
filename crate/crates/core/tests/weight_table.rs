//! Three frames over eight units with one shared sample of five units.
//! Frame 2 has a psu listed only partly (size 5, three units), frame 3 has
//! a psu with no listed units at all. Expected values worked by hand as
//! exact fractions.

use mfs_core::*;

fn population() -> Population {
    let units = (1..=8)
        .map(|u| UnitRecord::new(u).with_yield(1000.0 + 100.0 * u as f64))
        .collect();
    let specs = vec![
        FrameSpec::new(
            1,
            vec![
                PsuSpec::new(1, [1, 2, 3]),
                PsuSpec::new(2, [4, 5]),
                PsuSpec::new(3, [6, 7, 8]),
            ],
        ),
        FrameSpec::new(
            2,
            vec![
                PsuSpec::new(1, [1, 4, 6]),
                PsuSpec::new(2, [2, 5, 7]).with_size(5),
                PsuSpec::new(3, [3, 8]),
            ],
        ),
        FrameSpec::new(
            3,
            vec![
                PsuSpec::new(1, [1, 2, 4, 5]),
                PsuSpec::new(2, [3, 6, 7, 8]),
                PsuSpec::new(3, []).with_size(12),
            ],
        ),
    ];
    Population::from_partitions(units, specs).unwrap()
}

// Realized allocations of the shared sample {1, 2, 4, 6, 7}:
//   frame 1 (M0 = 8):  n = 3 of 3; m = 2/3, 1/2, 2/3
//   frame 2 (M0 = 10): n = 2 of 3; m = 3/3, 2/5
//   frame 3 (M0 = 20): n = 2 of 3; m = 3/4, 2/4
// raw_u = 1 / Σ_α (n/N)(m/M)/M0, weight = raw / (3 Σ_u raw).
const RAW: [(u64, f64); 5] = [
    (1, 40.0 / 7.0),
    (2, 200.0 / 27.0),
    (4, 240.0 / 37.0),
    (6, 6.0),
    (7, 150.0 / 19.0),
];
const WEIGHT: [(u64, f64); 5] = [
    (1, 31635.0 / 556429.0),
    (2, 123025.0 / 1669287.0),
    (4, 35910.0 / 556429.0),
    (6, 132867.0 / 2225716.0),
    (7, 174825.0 / 2225716.0),
];

#[test]
fn hand_computed_weights() {
    let pop = population();
    assert_eq!(pop.frame(FrameId(2)).unwrap().total_ssus(), 10);
    assert_eq!(pop.frame(FrameId(3)).unwrap().total_ssus(), 20);
    let shared: Vec<UnitId> = [1, 2, 4, 6, 7].map(UnitId).to_vec();
    let sample = impose_shared_sample(&pop, &shared).unwrap();
    let table = compute_weights(&sample, &pop).unwrap();
    assert_eq!(table.entries().len(), 15);
    for ((unit, raw), (_, weight)) in RAW.iter().zip(WEIGHT) {
        let entries: Vec<_> = table
            .entries()
            .iter()
            .filter(|e| e.unit == UnitId(*unit))
            .collect();
        assert_eq!(entries.len(), 3, "unit {unit} observed once per frame");
        for e in entries {
            assert!(
                (e.raw - raw).abs() <= 1e-12 * raw,
                "unit {unit} raw {} vs {raw}",
                e.raw
            );
            assert!(
                (e.weight - weight).abs() <= 1e-12,
                "unit {unit} weight {} vs {weight}",
                e.weight
            );
        }
    }
    assert!((table.total() - 1.0).abs() <= 1e-12);
}

#[test]
fn realized_allocation_matches_hand_counts() {
    let pop = population();
    let shared: Vec<UnitId> = [1, 2, 4, 6, 7].map(UnitId).to_vec();
    let sample = impose_shared_sample(&pop, &shared).unwrap();
    let n: Vec<usize> = sample.frames().iter().map(|f| f.n()).collect();
    assert_eq!(n, [3, 2, 2]);
    let f2 = sample.frame(FrameId(2)).unwrap();
    let frame2 = pop.frame(FrameId(2)).unwrap();
    assert_eq!(f2.allocation_of(frame2, PsuId(2)), Some(2));
    assert_eq!(f2.allocation_of(frame2, PsuId(3)), None);
}
