use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;

use mfs_cli::commands;
use mfs_cli::config::Config;
use mfs_core::io::{read_population, write_points, PointRecord};
use mfs_core::*;

fn fixture(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name]
        .iter()
        .collect()
}

fn config(file: Option<&str>, out: &Path, overrides: &[&str]) -> Config {
    let mut args: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    args.push("--output.dir".into());
    args.push(out.display().to_string());
    Config::load(file.map(fixture).as_deref(), &args).unwrap()
}

fn simulate_into(out: &Path, replications: &str) {
    let c = config(
        Some("synthetic.toml"),
        out,
        &["--simulate.replications", replications],
    );
    commands::simulate(&c, &mut Vec::new()).unwrap();
}

/// Member sets of every psu, sorted, so partitions compare regardless of ids.
fn partition(frame: &Frame) -> Vec<Vec<UnitId>> {
    let mut sets: Vec<Vec<UnitId>> = frame
        .psus()
        .iter()
        .map(|p| {
            let mut ids = p.ssu_ids.clone();
            ids.sort();
            ids
        })
        .collect();
    sets.sort();
    sets
}

fn write_all_points(pop: &Population, path: &Path) {
    let points: Vec<PointRecord> = pop
        .units()
        .iter()
        .map(|u| {
            let (x, y) = u.location.unwrap();
            PointRecord {
                unit: u.id,
                x,
                y,
                yield_value: u.y.unwrap(),
                list_psu: u.memberships.get(&FrameId(1)).copied(),
            }
        })
        .collect();
    write_points(&points, File::create(path).unwrap()).unwrap();
}

#[test]
fn synthetic_fixture_is_the_default_spec() {
    let c = Config::load(Some(&fixture("synthetic.toml")), &[]).unwrap();
    assert_eq!(commands::synth_spec(&c).unwrap(), SynthSpec::default());
    let mc = DesignSpec::from_pairs(c.section("simulate.design")).unwrap();
    let want = DesignSpec::new(11)
        .with_frame(
            1,
            FrameDesign::Fixed {
                n: 4,
                m: Allocation::Uniform(10),
            },
        )
        .with_frame(
            2,
            FrameDesign::Fixed {
                n: 5,
                m: Allocation::Uniform(6),
            },
        )
        .with_frame(
            3,
            FrameDesign::Fixed {
                n: 3,
                m: Allocation::Uniform(10),
            },
        );
    assert_eq!(mc, want);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_into(a.path(), "300");
    simulate_into(b.path(), "300");
    for name in [
        "monte_carlo.txt",
        "monte_carlo.csv",
        "population.txt",
        "labels_2.txt",
        "labels_3.txt",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn cluster_with_one_centre_labels_every_pixel_alike() {
    let sim = tempfile::tempdir().unwrap();
    simulate_into(sim.path(), "2");
    let out = tempfile::tempdir().unwrap();
    let raster = sim.path().join("raster_2.txt");
    let c = config(
        None,
        out.path(),
        &[
            "--input.raster",
            raster.to_str().unwrap(),
            "--cluster.k",
            "1",
        ],
    );
    let outcome = commands::cluster(&c, &mut Vec::new()).unwrap();
    assert!(outcome.passed());
    let (labels, _) = LabelRaster::read_text(BufReader::new(
        File::open(out.path().join("labels.txt")).unwrap(),
    ))
    .unwrap();
    assert_eq!(labels.labels.len(), 900);
    assert!(labels.labels.iter().all(|&l| l == labels.labels[0]));
}

#[test]
fn frames_from_points_rebuild_the_synthetic_population() {
    let sim = tempfile::tempdir().unwrap();
    simulate_into(sim.path(), "2");
    let synth = generate_population(&SynthSpec::default()).unwrap();
    let points = sim.path().join("points.csv");
    write_all_points(&synth.population, &points);

    let out = tempfile::tempdir().unwrap();
    let overrides = [
        "--input.points",
        points.to_str().unwrap(),
        "--input.labels.2",
        sim.path().join("labels_2.txt").to_str().unwrap(),
        "--input.labels.3",
        sim.path().join("labels_3.txt").to_str().unwrap(),
    ]
    .map(String::from);
    let overrides: Vec<&str> = overrides.iter().map(String::as_str).collect();
    let c = config(None, out.path(), &overrides);
    commands::frames(&c, &mut Vec::new()).unwrap();
    let rebuilt = read_population(BufReader::new(
        File::open(out.path().join("population.txt")).unwrap(),
    ))
    .unwrap();
    assert_eq!(rebuilt.frame_ids(), synth.population.frame_ids());
    for frame in synth.population.frames() {
        let other = rebuilt.frame(frame.id).unwrap();
        assert_eq!(other.total_ssus(), frame.total_ssus(), "frame {}", frame.id);
        assert_eq!(partition(other), partition(frame), "frame {}", frame.id);
    }

    commands::assign(&c, &mut Vec::new()).unwrap();
    let csv = fs::read_to_string(out.path().join("assignments.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 900);
}

#[test]
fn one_frame_estimate_has_one_fully_efficient_row() {
    let dir = tempfile::tempdir().unwrap();
    let synth = generate_population(&SynthSpec::default()).unwrap();
    let points = dir.path().join("points.csv");
    write_all_points(&synth.population, &points);
    let c = config(
        None,
        dir.path(),
        &["--input.points", points.to_str().unwrap()],
    );
    commands::frames(&c, &mut Vec::new()).unwrap();

    let population = dir.path().join("population.txt");
    let c = config(
        None,
        dir.path(),
        &[
            "--input.population",
            population.to_str().unwrap(),
            "--design.seed",
            "3",
            "--design.frame.1.n",
            "4",
            "--design.frame.1.m",
            "10",
        ],
    );
    commands::estimate(&c, &mut Vec::new()).unwrap();
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{csv}");
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let re = header.iter().position(|h| *h == "re").unwrap();
    let value: f64 = rows[0].split(',').nth(re).unwrap().parse().unwrap();
    assert_eq!(value, 1.0);
}

#[test]
fn empty_summary_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let c = config(
        None,
        dir.path(),
        &[
            "--input.summary",
            empty.to_str().unwrap(),
            "--reproduce.table",
            "single-frame",
        ],
    );
    assert!(commands::reproduce(&c, &mut Vec::new()).is_err());
}

#[test]
fn observed_sample_estimate_uses_units_with_yields() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        Some("synthetic.toml"),
        dir.path(),
        &["--estimate.sample", "observed"],
    );
    // every synthetic unit has a yield, so the observed sample is a census
    commands::estimate(&c, &mut Vec::new()).unwrap();
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
}

fn mfs(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mfs"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let reproduce = fixture("reproduce.toml");
    let reproduce = reproduce.to_str().unwrap();

    let (code, stdout) = mfs(&["reproduce", "-c", reproduce, "--output.dir", out]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("DISCREPANT"));

    let (code, _) = mfs(&[
        "reproduce",
        "-c",
        reproduce,
        "--output.dir",
        out,
        "--reproduce.se_tolerance",
        "0.01",
    ]);
    assert_eq!(code, 1);

    let (code, _) = mfs(&["oracle", "--output.dir", out, "--oracle.desk", "false"]);
    assert_eq!(code, 2);

    let (code, _) = mfs(&[
        "estimate",
        "-c",
        reproduce,
        "--output.dir",
        out,
        "--estimate.weight_form",
        "bogus",
    ]);
    assert_eq!(code, 2);
}
