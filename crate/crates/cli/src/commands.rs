//! Subcommands. Each writes its files under `output.dir`, prints a summary
//! to the given sink and returns the asserted checks it ran.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mfs_core::io::{
    read_comparison, read_points, read_population, read_psu_sizes, read_summary, write_population,
    PointRecord,
};
use mfs_core::simulate::{
    census_instance, exact_variance_instances, general_instances, self_weighting_instances,
};
use mfs_core::*;

/// Asserted checks of one command run, in order.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub checks: Vec<(String, bool)>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, passed: bool) {
        self.checks.push((name.into(), passed));
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

use crate::config::Config;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> mfs_core::Result<()>,
) -> Result<PathBuf> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_file(dir, name, &String::from_utf8(buf)?)
}

/// Text or binary raster, told apart by the binary magic.
pub fn read_raster(path: &Path) -> Result<Raster> {
    let mut reader = open(path)?;
    let mut magic = [0u8; 4];
    let is_binary = reader.read_exact(&mut magic).is_ok() && &magic == b"MFSR";
    let reader = open(path)?;
    let raster = if is_binary {
        Raster::read_binary(reader)
    } else {
        Raster::read_text(reader)
    };
    raster.with_context(|| format!("reading raster {}", path.display()))
}

fn read_labels(config: &Config) -> Result<Vec<(FrameId, LabelRaster, GeoTransform)>> {
    let mut out = Vec::new();
    for (key, _) in config.section("input.labels") {
        let frame: u16 = key
            .parse()
            .map_err(|_| anyhow!("input.labels.{key}: frame id must be an integer"))?;
        if frame == 1 {
            bail!("input.labels.1: frame 1 is the list frame");
        }
        let path = config.require_path(&format!("input.labels.{key}"))?;
        let (labels, georef) = LabelRaster::read_text(open(&path)?)
            .with_context(|| format!("reading label raster {}", path.display()))?;
        out.push((FrameId(frame), labels, georef));
    }
    Ok(out)
}

fn points(config: &Config) -> Result<Vec<PointRecord>> {
    let path = config.require_path("input.points")?;
    read_points(open(&path)?).with_context(|| format!("reading points {}", path.display()))
}

pub fn synth_spec(config: &Config) -> Result<SynthSpec> {
    let spec = SynthSpec::default().with_pairs(config.section("synth"))?;
    spec.validate()?;
    Ok(spec)
}

fn options(config: &Config) -> Result<EstimateOptions> {
    Ok(EstimateOptions {
        weight_form: config.parse_or("estimate.weight_form", WeightForm::default())?,
        variance_form: config.parse_or("estimate.variance_form", VarianceForm::default())?,
    })
}

fn design(config: &Config, prefix: &str) -> Result<Option<DesignSpec>> {
    if !config.has_section(prefix) {
        return Ok(None);
    }
    Ok(Some(
        DesignSpec::from_pairs(config.section(prefix)).with_context(|| format!("in [{prefix}]"))?,
    ))
}

/// The population file named by `input.population`, or else the synthetic
/// population of the `[synth]` section.
fn population(config: &Config) -> Result<(Population, Option<SynthSpec>)> {
    match config.path("input.population") {
        Some(path) => {
            let pop = read_population(open(&path)?)
                .with_context(|| format!("reading population {}", path.display()))?;
            Ok((pop, None))
        }
        None => {
            let spec = synth_spec(config)?;
            let synth = generate_population(&spec)?;
            Ok((synth.population, Some(spec)))
        }
    }
}

fn sig(v: f64) -> String {
    format!("{v:.15e}")
}

fn opt_sig(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), sig)
}

pub fn cluster(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let path = config.require_path("input.raster")?;
    let raster = read_raster(&path)?;
    let k: usize = config.require("cluster.k")?;
    let kc = KMeansConfig {
        epsilon: config.parse_or("cluster.epsilon", 1e-6)?,
        max_iter: config.parse_or("cluster.max_iter", 300)?,
        init: config.parse_or("cluster.init", KMeansInit::Random)?,
        standardize: config.parse_or("cluster.standardize", false)?,
        ..KMeansConfig::new(k, config.parse_or("cluster.seed", 0)?)
    };
    let model = kmeans(&raster, &kc).with_context(|| format!("clustering {}", path.display()))?;
    let dir = config.output_dir();
    write_with(&dir, "labels.txt", |w| {
        model
            .labels(raster.width(), raster.height())
            .write_text(&raster.georef, w)
    })?;
    write_file(&dir, "centers.csv", &model.centers_csv())?;
    write_file(&dir, "sse_log.csv", &model.sse_log_csv())?;

    writeln!(
        out,
        "clustered {} ({} x {} pixels, {} bands)",
        path.display(),
        raster.width(),
        raster.height(),
        raster.bands()
    )?;
    writeln!(
        out,
        "K = {}, iterations T = {}, converged = {}",
        model.k, model.iterations, model.converged
    )?;
    let unit = if model.standardized {
        "z-score units"
    } else {
        "band units"
    };
    writeln!(out, "SSE E = {} ({unit}, squared)", sig(model.sse))?;
    writeln!(out, "cluster sizes (pixels): {:?}", model.sizes)?;
    writeln!(
        out,
        "wrote labels.txt, centers.csv, sse_log.csv to {}",
        dir.display()
    )?;

    let mut outcome = Outcome::default();
    outcome.check(
        "SSE non-increasing over iterations",
        model.sse_log.windows(2).all(|w| w[1] <= w[0]),
    );
    Ok(outcome)
}

fn list_spec(units: &[UnitRecord], config: &Config) -> Result<Option<FrameSpec>> {
    let mut members: BTreeMap<PsuId, Vec<u64>> = BTreeMap::new();
    for u in units {
        if let Some(psu) = u.memberships.get(&FrameId(1)) {
            members.entry(*psu).or_default().push(u.id.0);
        }
    }
    let declared = match config.path("input.list_frame") {
        Some(p) => read_psu_sizes(open(&p)?).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    if members.is_empty() && declared.is_empty() {
        return Ok(None);
    }
    let sizes: BTreeMap<PsuId, usize> = declared.into_iter().collect();
    if !sizes.is_empty() {
        if let Some(psu) = members.keys().find(|p| !sizes.contains_key(p)) {
            bail!("list psu {psu} of the points is missing from input.list_frame");
        }
        for psu in sizes.keys() {
            members.entry(*psu).or_default();
        }
    }
    let psus = members
        .into_iter()
        .map(|(id, m)| {
            let spec = PsuSpec::new(id.0, m);
            match sizes.get(&id) {
                Some(&s) => spec.with_size(s),
                None => spec,
            }
        })
        .collect();
    Ok(Some(FrameSpec::new(1, psus).named("list")))
}

/// Units and frame specs from the points file and the label rasters.
type Realized = Vec<(FrameId, BTreeMap<PsuId, usize>)>;

fn point_frames(config: &Config) -> Result<(Vec<UnitRecord>, Vec<FrameSpec>, Realized)> {
    let points = points(config)?;
    let mut units: Vec<UnitRecord> = points.iter().map(PointRecord::to_unit).collect();
    let mut specs = Vec::new();
    let mut realized = Vec::new();
    if let Some(list) = list_spec(&units, config)? {
        let counts = list
            .psus
            .iter()
            .filter(|p| !p.members.is_empty())
            .map(|p| (p.id, p.members.len()))
            .collect();
        realized.push((FrameId(1), counts));
        specs.push(list);
    }
    for (frame, labels, georef) in read_labels(config)? {
        let sat = frame_from_labels(&units, &labels, &georef, frame)
            .with_context(|| format!("assigning points to frame {frame}"))?;
        sat.apply(&mut units);
        let name = config
            .get(&format!("frames.name.{frame}"))
            .map(str::to_string);
        realized.push((frame, sat.realized.clone()));
        specs.push(FrameSpec { name, ..sat.spec });
    }
    if specs.is_empty() {
        bail!("no frames: points carry no list psu and no input.labels.<frame> is given");
    }
    Ok((units, specs, realized))
}

fn allocation_lines(
    realized: &[(FrameId, BTreeMap<PsuId, usize>)],
    out: &mut dyn Write,
) -> Result<()> {
    for (frame, counts) in realized {
        let ms: Vec<String> = counts.values().map(usize::to_string).collect();
        writeln!(
            out,
            "frame {frame}: n = {} sampled psus; m = {}",
            counts.len(),
            ms.join(", ")
        )?;
    }
    Ok(())
}

pub fn assign(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let points = points(config)?;
    let labels = read_labels(config)?;
    let mut csv = String::from("unit_id,frame,psu_id,row,col\n");
    let mut realized: BTreeMap<FrameId, BTreeMap<PsuId, usize>> = BTreeMap::new();
    for p in &points {
        if let Some(psu) = p.list_psu {
            let _ = writeln!(csv, "{},1,{psu},,", p.unit);
            *realized
                .entry(FrameId(1))
                .or_default()
                .entry(psu)
                .or_default() += 1;
        }
        for (frame, raster, georef) in &labels {
            let (row, col) = georef
                .locate(p.x, p.y, raster.width, raster.height)
                .with_context(|| format!("point {} in frame {frame}", p.unit))?;
            let psu = PsuId(raster.labels[row * raster.width + col]);
            let _ = writeln!(csv, "{},{frame},{psu},{row},{col}", p.unit);
            *realized.entry(*frame).or_default().entry(psu).or_default() += 1;
        }
    }
    let dir = config.output_dir();
    write_file(&dir, "assignments.csv", &csv)?;
    writeln!(out, "assigned {} points", points.len())?;
    allocation_lines(&realized.into_iter().collect::<Vec<_>>(), out)?;
    writeln!(out, "wrote assignments.csv to {}", dir.display())?;
    Ok(Outcome::default())
}

pub fn frames(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let (units, specs, realized) = point_frames(config)?;
    let pop = build_population(units, specs)?;
    let dir = config.output_dir();
    write_with(&dir, "population.txt", |w| write_population(&pop, w))?;
    writeln!(
        out,
        "{:<8} {:<20} {:>8} {:>12} {:>14}",
        "frame", "name", "N", "M0", "Mbar"
    )?;
    for f in pop.frames() {
        writeln!(
            out,
            "{:<8} {:<20} {:>8} {:>12} {:>14.6}",
            f.id.to_string(),
            f.name.as_deref().unwrap_or("-"),
            f.n_psus(),
            f.total_ssus(),
            f.mean_psu_size()
        )?;
    }
    allocation_lines(&realized, out)?;
    writeln!(
        out,
        "wrote population.txt ({} units) to {}",
        pop.units().len(),
        dir.display()
    )?;
    Ok(Outcome::default())
}

fn draw(config: &Config, pop: &Population, synth: Option<&SynthSpec>) -> Result<SampleDraw> {
    let designed = design(config, "design")?.or_else(|| synth.map(SynthSpec::shared_design));
    let mode = config
        .get("estimate.sample")
        .unwrap_or(if designed.is_some() {
            "design"
        } else {
            "observed"
        });
    match mode {
        "design" => {
            let d = designed
                .ok_or_else(|| anyhow!("estimate.sample = design needs a [design] section"))?;
            Ok(draw_sample(pop, &d, d.seed)?)
        }
        "observed" => {
            let ids: Vec<UnitId> = pop
                .units()
                .iter()
                .filter(|u| u.y.is_some())
                .map(|u| u.id)
                .collect();
            Ok(impose_shared_sample(pop, &ids)?)
        }
        other => bail!("estimate.sample must be `design` or `observed`, not `{other}`"),
    }
}

pub fn estimate(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let (pop, synth) = population(config)?;
    let opts = options(config)?;
    let sample = draw(config, &pop, synth.as_ref())?;
    let reference = config.parse_or("estimate.reference", HGEWY)?;
    let report = compare_combinations(&sample, &pop, reference, opts)?;
    let weights = compute_weights_with(&sample, &pop, opts.weight_form)?;

    let dir = config.output_dir();
    write_file(&dir, "comparison.csv", &report.to_csv())?;
    write_file(&dir, "comparison.txt", &report.to_text())?;
    write_file(&dir, "weights.csv", &weights.to_csv())?;
    let mut obs = String::from("frame,psu,unit,yield\n");
    for (f, p, u, y) in sample.observations() {
        let _ = writeln!(obs, "{f},{p},{u},{}", sig(y));
    }
    write_file(&dir, "sample.csv", &obs)?;

    write!(out, "{}", report.to_text())?;
    for row in &report.rows {
        if let Err(e) = &row.outcome {
            writeln!(out, "combination {} failed: {e}", row.key())?;
        }
    }
    writeln!(
        out,
        "wrote comparison.csv, comparison.txt, weights.csv, sample.csv to {}",
        dir.display()
    )?;
    Ok(Outcome::default())
}

pub fn simulate(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let spec = synth_spec(config)?;
    let synth = generate_population(&spec)?;
    let dir = config.output_dir();
    write_with(&dir, "population.txt", |w| {
        write_population(&synth.population, w)
    })?;
    for ((frame, raster), (_, model)) in synth.rasters.iter().zip(&synth.models) {
        write_with(&dir, &format!("raster_{frame}.txt"), |w| {
            raster.write_text(w)
        })?;
        write_with(&dir, &format!("labels_{frame}.txt"), |w| {
            model
                .labels(raster.width(), raster.height())
                .write_text(&raster.georef, w)
        })?;
        write_file(&dir, &format!("centers_{frame}.csv"), &model.centers_csv())?;
    }
    let design = design(config, "simulate.design")?.unwrap_or_else(|| spec.shared_design());
    let replications: usize = config.parse_or("simulate.replications", 10_000)?;
    let report = monte_carlo(
        &synth.population,
        &design,
        replications,
        design.seed,
        options(config)?,
    )?;
    write_file(&dir, "monte_carlo.txt", &report.to_kv())?;
    write_file(
        &dir,
        "monte_carlo.csv",
        &format!("{}\n{}\n", OracleReport::csv_header(), report.to_csv_row()),
    )?;

    writeln!(
        out,
        "synthetic population: {} units, frames {:?}",
        synth.population.units().len(),
        synth
            .population
            .frame_ids()
            .iter()
            .map(|f| f.0)
            .collect::<Vec<_>>()
    )?;
    write!(out, "{}", report.to_kv())?;
    if let Some(z) = report.z_score() {
        let verdict = if z.abs() <= 3.0 { "within" } else { "outside" };
        writeln!(
            out,
            "mean of the estimates is {verdict} 3 standard errors of the true mean (z = {z:.6})"
        )?;
    }
    writeln!(
        out,
        "wrote population, rasters, labels and monte_carlo.{{txt,csv}} to {}",
        dir.display()
    )?;
    Ok(Outcome::default())
}

struct OracleRow {
    name: String,
    report: OracleReport,
}

fn desk_rows(opts: EstimateOptions, cap: u128, outcome: &mut Outcome) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    let run = |inst: &mfs_core::simulate::DeskInstance| {
        unbiasedness_oracle(&inst.population, &inst.design, opts, cap)
            .with_context(|| format!("oracle on `{}`", inst.name))
    };
    for inst in self_weighting_instances() {
        let report = run(&inst)?;
        outcome.check(
            format!(
                "{}: relative error of the expected estimate ≤ 1e-10",
                inst.name
            ),
            report.relative_error <= 1e-10,
        );
        rows.push(OracleRow {
            name: inst.name.into(),
            report,
        });
    }
    for inst in exact_variance_instances() {
        let report = run(&inst)?;
        let ratio = report.analytic_ratio();
        outcome.check(
            format!("{}: analytic / exact variance = 1 within 1e-9", inst.name),
            ratio.is_some_and(|r| (r - 1.0).abs() <= 1e-9),
        );
        rows.push(OracleRow {
            name: inst.name.into(),
            report,
        });
    }
    for inst in general_instances() {
        rows.push(OracleRow {
            name: inst.name.into(),
            report: run(&inst)?,
        });
    }
    let census = census_instance();
    let report = run(&census)?;
    outcome.check(
        "census: exact and analytic variance are 0",
        report.exact_variance == Some(0.0) && report.analytic_variance == Some(0.0),
    );
    rows.push(OracleRow {
        name: census.name.into(),
        report,
    });
    Ok(rows)
}

pub fn oracle(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let opts = options(config)?;
    let cap: u128 = config.parse_or("oracle.cap", DEFAULT_ENUMERATION_CAP)?;
    let mut outcome = Outcome::default();
    let mut rows = if config.parse_or("oracle.desk", true)? {
        desk_rows(opts, cap, &mut outcome)?
    } else {
        Vec::new()
    };
    if config.has_section("synth") {
        let spec = synth_spec(config)?;
        let synth = generate_population(&spec)?;
        let design = design(config, "design")?.unwrap_or_else(|| spec.shared_design());
        let report = unbiasedness_oracle(&synth.population, &design, opts, cap)
            .context("enumeration oracle on the [synth] population")?;
        if report.normalizer_constant {
            outcome.check(
                "synthetic: relative error of the expected estimate ≤ 1e-10",
                report.relative_error <= 1e-10,
            );
        }
        rows.push(OracleRow {
            name: "synthetic, enumeration".into(),
            report,
        });
        let replications: usize = config.parse_or("oracle.replications", 10_000)?;
        let report = monte_carlo(&synth.population, &design, replications, design.seed, opts)?;
        rows.push(OracleRow {
            name: "synthetic, monte carlo".into(),
            report,
        });
    }
    if rows.is_empty() {
        bail!("nothing to run: oracle.desk = false and no [synth] section");
    }

    let mut kv = String::new();
    let mut csv = format!("instance,{}\n", OracleReport::csv_header());
    for row in &rows {
        let _ = writeln!(kv, "[{}]\n{}", row.name, row.report.to_kv());
        let _ = writeln!(csv, "\"{}\",{}", row.name, row.report.to_csv_row());
    }
    let dir = config.output_dir();
    write_file(&dir, "oracle.txt", &kv)?;
    write_file(&dir, "oracle.csv", &csv)?;

    writeln!(
        out,
        "{:<36} {:>12} {:>24} {:>24} {:>24} {:>24} {:>24}",
        "instance",
        "draws",
        "relative error",
        "exact var (kg/ha)²",
        "analytic / exact",
        "mean var est / exact",
        "mean var est (kg/ha)²"
    )?;
    for row in &rows {
        let r = &row.report;
        let draws = match r.method {
            OracleMethod::Enumeration { draws } => draws.to_string(),
            OracleMethod::MonteCarlo { replications } => format!("R={replications}"),
        };
        writeln!(
            out,
            "{:<36} {:>12} {:>24} {:>24} {:>24} {:>24} {:>24}",
            row.name,
            draws,
            sig(r.relative_error),
            opt_sig(r.exact_variance.or(r.empirical_variance)),
            opt_sig(r.analytic_ratio()),
            opt_sig(r.var_est_ratio()),
            opt_sig(r.var_est_mean)
        )?;
    }
    for (name, ok) in &outcome.checks {
        writeln!(out, "{} {name}", if *ok { "PASS" } else { "FAIL" })?;
    }
    writeln!(out, "wrote oracle.txt and oracle.csv to {}", dir.display())?;
    Ok(outcome)
}

fn deviation(value: f64, reference: f64) -> f64 {
    (value - reference) / reference * 100.0
}

fn reproduce_single_frame(
    config: &Config,
    out: &mut dyn Write,
    outcome: &mut Outcome,
) -> Result<()> {
    let path = config.require_path("input.summary")?;
    let frames =
        read_summary(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    let mean_default: f64 = config.parse_or("reproduce.mean_tolerance", 0.5)?;
    let se_default: f64 = config.parse_or("reproduce.se_tolerance", 1.0)?;
    let asserted: Vec<u16> = config
        .get("reproduce.asserted_se_frames")
        .unwrap_or("1")
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| anyhow!("reproduce.asserted_se_frames: bad frame `{s}`"))
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from(
        "frame,name,mean,published_mean,mean_deviation_pct,se,published_se,se_deviation_pct,status\n",
    );
    let mut columns: Vec<[String; 11]> = Vec::new();
    for f in &frames {
        let est = sf_from_summary(&f.summary).with_context(|| format!("frame {}", f.frame))?;
        // tolerances in percent, per frame under reproduce.frame.<α>
        let mean_tol = config.parse_or(
            &format!("reproduce.frame.{}.mean_tolerance", f.frame),
            mean_default,
        )?;
        let se_tol = config.parse_or(
            &format!("reproduce.frame.{}.se_tolerance", f.frame),
            se_default,
        )?;
        let mean_dev = f.published_mean.map(|p| deviation(est.mean, p));
        let se_dev = f.published_se.map(|p| deviation(est.se, p));
        if let Some(d) = mean_dev {
            outcome.check(
                format!(
                    "frame {} ({}): mean within {mean_tol}% of the published value",
                    f.frame, f.name
                ),
                d.abs() <= mean_tol,
            );
        }
        let status = match se_dev {
            None => "no published S.E.",
            Some(d) if d.abs() <= se_tol => "OK",
            Some(_) if !asserted.contains(&f.frame.0) => "DISCREPANT",
            Some(_) => "FAIL",
        };
        if let (Some(d), true) = (se_dev, asserted.contains(&f.frame.0)) {
            outcome.check(
                format!(
                    "frame {} ({}): S.E. within {se_tol}% of the published value",
                    f.frame, f.name
                ),
                d.abs() <= se_tol,
            );
        }
        let pct = |d: Option<f64>| d.map_or_else(|| "-".into(), |d| format!("{d:+.4}%"));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            f.frame,
            f.name,
            sig(est.mean),
            opt_sig(f.published_mean),
            opt_sig(mean_dev),
            sig(est.se),
            opt_sig(f.published_se),
            opt_sig(se_dev),
            status
        );
        columns.push([
            f.name.clone(),
            f.summary.psus_total.to_string(),
            f.summary.n.to_string(),
            f.summary.mean_psu_size.to_string(),
            format!("{:.1}", est.s2_between),
            format!("{:.4}", est.mean),
            f.published_mean
                .map_or_else(|| "-".into(), |v| v.to_string()),
            pct(mean_dev),
            format!("{:.4}", est.se),
            f.published_se.map_or_else(|| "-".into(), |v| v.to_string()),
            format!("{} {status}", pct(se_dev)),
        ]);
    }
    let labels = [
        "",
        "Total no. of psu's N",
        "Sampled no. of psu's n",
        "Average no. of ssu's / psu Mbar",
        "Between psu's mean square (kg/ha)²",
        "Average yield, recomputed (kg/ha)",
        "Average yield, published (kg/ha)",
        "Average yield deviation",
        "S.E., recomputed (kg/ha)",
        "S.E., published (kg/ha)",
        "S.E. deviation",
    ];
    let label_w = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let col_w: Vec<usize> = columns
        .iter()
        .map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::from("Single-frame two-stage estimates from the summary statistics\n\n");
    for (i, label) in labels.iter().enumerate() {
        let mut line = format!("{label:<label_w$}");
        for (c, w) in columns.iter().zip(&col_w) {
            let _ = write!(line, "  {:>w$}", c[i]);
        }
        let _ = writeln!(text, "{}", line.trim_end());
    }
    let _ = writeln!(
        text,
        "\nDISCREPANT marks a published S.E. that the two-stage variance formula does not reproduce from the printed inputs."
    );
    let dir = config.output_dir();
    write_file(&dir, "single_frame_reproduction.txt", &text)?;
    write_file(&dir, "single_frame_reproduction.csv", &csv)?;
    write!(out, "{text}")?;
    Ok(())
}

fn reproduce_comparison(config: &Config, out: &mut dyn Write, outcome: &mut Outcome) -> Result<()> {
    let path = config.require_path("input.comparison")?;
    let rows =
        read_comparison(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    let reference = config.parse_or("estimate.reference", HGEWY)?;
    let se: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.se.ok_or_else(|| anyhow!("combination {:?} has no S.E.", r.frames))
        })
        .collect::<Result<_>>()?;
    let re = relative_efficiency(&se)?;
    let mut csv = String::from("combination,re,published_re,pd,published_pd\n");
    let mut text = format!(
        "Relative efficiency and percentage deviation (reference {reference} kg/ha)\n\n{:<12} {:>12} {:>12} {:>12} {:>12}\n",
        "combination", "R.E.", "published", "PD (%)", "published"
    );
    for (row, re) in rows.iter().zip(re) {
        let key = row
            .frames
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join("+");
        let pd = row
            .mean
            .map(|m| percentage_deviation(m, reference))
            .transpose()?;
        outcome.check(
            format!("combination {key}: R.E. within 1e-4 of the published value"),
            row.re.is_some_and(|p| (p - re).abs() <= 1e-4),
        );
        outcome.check(
            format!("combination {key}: percentage deviation within 1e-3 of the published value"),
            matches!((pd, row.pd), (Some(a), Some(b)) if (a - b).abs() <= 1e-3),
        );
        let _ = writeln!(
            csv,
            "{key},{},{},{},{}",
            sig(re),
            opt_sig(row.re),
            opt_sig(pd),
            opt_sig(row.pd)
        );
        let _ = writeln!(
            text,
            "{key:<12} {re:>12.5} {:>12} {:>12} {:>12}",
            row.re.map_or_else(|| "-".into(), |v| format!("{v:.5}")),
            pd.map_or_else(|| "-".into(), |v| format!("{v:.5}")),
            row.pd.map_or_else(|| "-".into(), |v| format!("{v:.5}")),
        );
    }
    let dir = config.output_dir();
    write_file(&dir, "comparison_reproduction.txt", &text)?;
    write_file(&dir, "comparison_reproduction.csv", &csv)?;
    write!(out, "{text}")?;
    Ok(())
}

pub fn reproduce(config: &Config, out: &mut dyn Write) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let which = config.get("reproduce.table").unwrap_or("all");
    if !matches!(which, "single-frame" | "comparison" | "all") {
        bail!("reproduce.table must be single-frame, comparison or all, not `{which}`");
    }
    if which != "comparison" {
        reproduce_single_frame(config, out, &mut outcome)?;
    }
    if which != "single-frame" {
        if which == "all" {
            writeln!(out)?;
        }
        reproduce_comparison(config, out, &mut outcome)?;
    }
    for (name, ok) in &outcome.checks {
        writeln!(out, "{} {name}", if *ok { "PASS" } else { "FAIL" })?;
    }
    Ok(outcome)
}
