//! Text file formats.
//!
//! Population file: sections introduced by `[name]` lines, each holding a
//! CSV table with a header row. `[units]` has `unit_id,x,y_coord,yield`;
//! each `[frame_<α>]` has `unit_id,psu_id`; an optional `[frame_<α>_psus]`
//! has `psu_id,size` to declare psus larger than their listed units; an
//! optional `[frames]` section has `frame_id,name`. Empty `x`, `y_coord` or
//! `yield` cells mean the value is absent. Lines starting with `#` are
//! comments.
//!
//! Points file: `unit_id,x,y,yield,list_psu_id`, one row per observed unit.
//!
//! Single-frame summary file: `kind,frame,name,N,n,Mbar,M_i,m_i,ybar_i,s2w_i,s2b,published_mean,published_se`.
//! A `frame` row carries `N,n,Mbar,s2b` and optionally the published mean
//! and SE; each following `psu` row carries `M_i,m_i,ybar_i,s2w_i` for one
//! sampled psu of that frame.
//!
//! Psu size table: `psu_id,size`, declaring every psu of a frame.
//!
//! Comparison table: `combination,mean,se,re,pd` as written by
//! [`crate::ComparisonReport::to_csv`]; empty cells mark a failed row.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};
use crate::estimate::{SfPsuSummary, SfSummary};
use crate::frame::{
    build_population, FrameId, FrameSpec, Population, PsuId, PsuSpec, UnitId, UnitRecord,
};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

/// A CSV table with named columns.
struct Table {
    header: StringRecord,
    rows: Vec<(usize, StringRecord)>,
}

impl Table {
    fn parse(text: &str, first_line: usize) -> Result<Table> {
        let mut reader = ReaderBuilder::new()
            .trim(Trim::All)
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(first_line + line.saturating_sub(1), e.to_string())
            })?;
            let line = first_line
                + record
                    .position()
                    .map_or(0, |p| p.line() as usize)
                    .saturating_sub(1);
            rows.push((line, record));
        }
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(0, format!("missing column `{name}`")))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn cell(record: &StringRecord, col: usize) -> &str {
    record.get(col).unwrap_or("")
}

fn required<T: std::str::FromStr>(
    record: &StringRecord,
    col: usize,
    name: &str,
    line: usize,
) -> Result<T> {
    let text = cell(record, col);
    text.parse()
        .map_err(|_| parse_err(line, format!("bad {name} `{text}`")))
}

fn optional<T: std::str::FromStr>(
    record: &StringRecord,
    col: Option<usize>,
    name: &str,
    line: usize,
) -> Result<Option<T>> {
    match col.map(|c| cell(record, c)) {
        None | Some("") => Ok(None),
        Some(text) => text
            .parse()
            .map(Some)
            .map_err(|_| parse_err(line, format!("bad {name} `{text}`"))),
    }
}

/// Splits a sectioned file into `(name, first body line, body)`.
fn sections<R: BufRead>(input: R) -> Result<Vec<(String, usize, String)>> {
    let mut out: Vec<(String, usize, String)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            out.push((name.trim().to_string(), i + 2, String::new()));
        } else if let Some((_, _, body)) = out.last_mut() {
            body.push_str(trimmed);
            body.push('\n');
        } else if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        } else {
            return Err(parse_err(i + 1, "data before the first [section]"));
        }
    }
    Ok(out)
}

pub fn read_population<R: BufRead>(input: R) -> Result<Population> {
    let mut units: Option<Vec<UnitRecord>> = None;
    let mut members: BTreeMap<FrameId, Vec<(PsuId, UnitId)>> = BTreeMap::new();
    let mut sizes: BTreeMap<FrameId, BTreeMap<PsuId, usize>> = BTreeMap::new();
    let mut names: BTreeMap<FrameId, String> = BTreeMap::new();
    for (name, first, body) in sections(input)? {
        let table = Table::parse(&body, first)?;
        if name == "units" {
            let (id, x, y, yv) = (
                table.column("unit_id")?,
                table.optional_column("x"),
                table.optional_column("y_coord"),
                table.optional_column("yield"),
            );
            let mut list = Vec::with_capacity(table.rows.len());
            for (line, r) in &table.rows {
                let mut unit = UnitRecord::new(required(r, id, "unit_id", *line)?);
                let location: (Option<f64>, Option<f64>) = (
                    optional(r, x, "x", *line)?,
                    optional(r, y, "y_coord", *line)?,
                );
                match location {
                    (Some(a), Some(b)) => unit.location = Some((a, b)),
                    (None, None) => {}
                    _ => {
                        return Err(parse_err(
                            *line,
                            "x and y_coord must both be present or both empty",
                        ))
                    }
                }
                unit.y = optional(r, yv, "yield", *line)?;
                list.push(unit);
            }
            units = Some(list);
        } else if name == "frames" {
            let (f, n) = (table.column("frame_id")?, table.column("name")?);
            for (line, r) in &table.rows {
                names.insert(
                    FrameId(required(r, f, "frame_id", *line)?),
                    cell(r, n).to_string(),
                );
            }
        } else if let Some(rest) = name.strip_prefix("frame_") {
            let (num, is_sizes) = match rest.strip_suffix("_psus") {
                Some(n) => (n, true),
                None => (rest, false),
            };
            let frame = FrameId(
                num.parse()
                    .map_err(|_| parse_err(first - 1, format!("bad frame section `[{name}]`")))?,
            );
            if is_sizes {
                let (p, s) = (table.column("psu_id")?, table.column("size")?);
                let entry = sizes.entry(frame).or_default();
                for (line, r) in &table.rows {
                    entry.insert(
                        PsuId(required(r, p, "psu_id", *line)?),
                        required(r, s, "size", *line)?,
                    );
                }
            } else {
                let (u, p) = (table.column("unit_id")?, table.column("psu_id")?);
                let entry = members.entry(frame).or_default();
                for (line, r) in &table.rows {
                    entry.push((
                        PsuId(required(r, p, "psu_id", *line)?),
                        UnitId(required(r, u, "unit_id", *line)?),
                    ));
                }
            }
        } else {
            return Err(parse_err(first - 1, format!("unknown section `[{name}]`")));
        }
    }
    let mut units = units.ok_or_else(|| parse_err(0, "missing [units] section"))?;
    let index: BTreeMap<UnitId, usize> = units.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
    let mut specs = Vec::new();
    for (frame, pairs) in members {
        let mut psus: BTreeMap<PsuId, Vec<u64>> = BTreeMap::new();
        for (psu, unit) in pairs {
            let &i = index.get(&unit).ok_or(Error::UnknownUnit(unit))?;
            if let Some(previous) = units[i].memberships.insert(frame, psu) {
                return Err(Error::SsuInTwoPsus {
                    frame,
                    unit,
                    first: previous,
                    second: psu,
                });
            }
            psus.entry(psu).or_default().push(unit.0);
        }
        let declared = sizes.remove(&frame).unwrap_or_default();
        for psu in declared.keys() {
            psus.entry(*psu).or_default();
        }
        let specs_for_frame = psus
            .into_iter()
            .map(|(id, m)| {
                let spec = PsuSpec::new(id.0, m);
                match declared.get(&id) {
                    Some(&size) => spec.with_size(size),
                    None => spec,
                }
            })
            .collect();
        specs.push(FrameSpec {
            id: frame,
            name: names.remove(&frame).filter(|n| !n.is_empty()),
            psus: specs_for_frame,
        });
    }
    if let Some(frame) = sizes.keys().chain(names.keys()).next() {
        return Err(Error::UnknownFrame(*frame));
    }
    build_population(units, specs)
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:?}"))
}

pub fn write_population<W: Write>(population: &Population, mut out: W) -> Result<()> {
    if population.frames().iter().any(|f| f.name.is_some()) {
        writeln!(out, "[frames]\nframe_id,name")?;
        for f in population.frames() {
            writeln!(out, "{},{}", f.id, f.name.as_deref().unwrap_or(""))?;
        }
        writeln!(out)?;
    }
    writeln!(out, "[units]\nunit_id,x,y_coord,yield")?;
    for u in population.units() {
        let (x, y) = u.location.map_or((None, None), |(a, b)| (Some(a), Some(b)));
        writeln!(
            out,
            "{},{},{},{}",
            u.id,
            opt_num(x),
            opt_num(y),
            opt_num(u.y)
        )?;
    }
    for frame in population.frames() {
        writeln!(out, "\n[frame_{}]\nunit_id,psu_id", frame.id)?;
        for psu in frame.psus() {
            for unit in &psu.ssu_ids {
                writeln!(out, "{unit},{}", psu.id)?;
            }
        }
        if frame.psus().iter().any(|p| !p.is_enumerated()) {
            writeln!(out, "\n[frame_{}_psus]\npsu_id,size", frame.id)?;
            for psu in frame.psus() {
                writeln!(out, "{},{}", psu.id, psu.size())?;
            }
        }
    }
    Ok(())
}

/// One observed unit: location, yield and its list-frame psu if any.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub unit: UnitId,
    pub x: f64,
    pub y: f64,
    pub yield_value: f64,
    pub list_psu: Option<PsuId>,
}

impl PointRecord {
    pub fn to_unit(&self) -> UnitRecord {
        let mut unit = UnitRecord::new(self.unit.0)
            .at(self.x, self.y)
            .with_yield(self.yield_value);
        if let Some(psu) = self.list_psu {
            unit.memberships.insert(FrameId(1), psu);
        }
        unit
    }
}

pub fn read_points<R: BufRead>(input: R) -> Result<Vec<PointRecord>> {
    let mut text = String::new();
    for line in input.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    let table = Table::parse(&text, 2)?;
    let (id, x, y, yv, psu) = (
        table.column("unit_id")?,
        table.column("x")?,
        table.column("y")?,
        table.column("yield")?,
        table.optional_column("list_psu_id"),
    );
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let point = PointRecord {
            unit: UnitId(required(r, id, "unit_id", *line)?),
            x: required(r, x, "x", *line)?,
            y: required(r, y, "y", *line)?,
            yield_value: required(r, yv, "yield", *line)?,
            list_psu: optional::<u32>(r, psu, "list_psu_id", *line)?.map(PsuId),
        };
        if !seen.insert(point.unit) {
            return Err(Error::DuplicateUnit(point.unit));
        }
        if !(point.yield_value >= 0.0) {
            return Err(parse_err(
                *line,
                format!("yield {} is negative", point.yield_value),
            ));
        }
        out.push(point);
    }
    Ok(out)
}

pub fn write_points<W: Write>(points: &[PointRecord], mut out: W) -> Result<()> {
    writeln!(out, "unit_id,x,y,yield,list_psu_id")?;
    for p in points {
        let psu = p.list_psu.map_or_else(String::new, |p| p.to_string());
        writeln!(
            out,
            "{},{:?},{:?},{:?},{}",
            p.unit, p.x, p.y, p.yield_value, psu
        )?;
    }
    Ok(())
}

/// One frame of a single-frame summary file.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryFrame {
    pub frame: FrameId,
    pub name: String,
    pub summary: SfSummary,
    pub published_mean: Option<f64>,
    pub published_se: Option<f64>,
}

pub fn read_summary<R: BufRead>(input: R) -> Result<Vec<SummaryFrame>> {
    let mut text = String::new();
    for line in input.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    let table = Table::parse(&text, 2)?;
    let col = |name: &str| table.column(name);
    let (kind, frame, name) = (col("kind")?, col("frame")?, table.optional_column("name"));
    let (big_n, n, mbar, s2b) = (col("N")?, col("n")?, col("Mbar")?, col("s2b")?);
    let (size, m, ybar, s2w) = (col("M_i")?, col("m_i")?, col("ybar_i")?, col("s2w_i")?);
    let (pm, pse) = (
        table.optional_column("published_mean"),
        table.optional_column("published_se"),
    );

    let mut out: Vec<SummaryFrame> = Vec::new();
    for (line, r) in &table.rows {
        let id = FrameId(required(r, frame, "frame", *line)?);
        match cell(r, kind) {
            "frame" => {
                if out.iter().any(|f| f.frame == id) {
                    return Err(Error::DuplicateFrame(id));
                }
                out.push(SummaryFrame {
                    frame: id,
                    name: name.map(|c| cell(r, c).to_string()).unwrap_or_default(),
                    summary: SfSummary {
                        psus_total: required(r, big_n, "N", *line)?,
                        n: required(r, n, "n", *line)?,
                        mean_psu_size: required(r, mbar, "Mbar", *line)?,
                        psus: Vec::new(),
                        s2b: required(r, s2b, "s2b", *line)?,
                    },
                    published_mean: optional(r, pm, "published_mean", *line)?,
                    published_se: optional(r, pse, "published_se", *line)?,
                });
            }
            "psu" => {
                let target = out
                    .iter_mut()
                    .find(|f| f.frame == id)
                    .ok_or_else(|| parse_err(*line, format!("psu row before frame {id}")))?;
                target.summary.psus.push(SfPsuSummary {
                    size: required(r, size, "M_i", *line)?,
                    m: required(r, m, "m_i", *line)?,
                    ybar: required(r, ybar, "ybar_i", *line)?,
                    s2w: required(r, s2w, "s2w_i", *line)?,
                });
            }
            other => return Err(parse_err(*line, format!("unknown row kind `{other}`"))),
        }
    }
    if out.is_empty() {
        return Err(parse_err(0, "summary file has no frames"));
    }
    Ok(out)
}

pub fn read_psu_sizes<R: BufRead>(input: R) -> Result<Vec<(PsuId, usize)>> {
    let mut text = String::new();
    for line in input.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    let table = Table::parse(&text, 2)?;
    let (p, s) = (table.column("psu_id")?, table.column("size")?);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let psu = PsuId(required(r, p, "psu_id", *line)?);
        let size: usize = required(r, s, "size", *line)?;
        if size == 0 || !seen.insert(psu) {
            return Err(parse_err(*line, format!("psu {psu} repeated or of size 0")));
        }
        out.push((psu, size));
    }
    Ok(out)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRecord {
    pub frames: Vec<FrameId>,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub re: Option<f64>,
    pub pd: Option<f64>,
}

pub fn read_comparison<R: BufRead>(input: R) -> Result<Vec<ComparisonRecord>> {
    let mut text = String::new();
    for line in input.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    let table = Table::parse(&text, 2)?;
    let (c, mean, se, re, pd) = (
        table.column("combination")?,
        table.column("mean")?,
        table.column("se")?,
        table.column("re")?,
        table.column("pd")?,
    );
    table
        .rows
        .iter()
        .map(|(line, r)| {
            let frames = cell(r, c)
                .split('+')
                .map(|f| {
                    f.parse()
                        .map(FrameId)
                        .map_err(|_| parse_err(*line, format!("bad combination `{}`", cell(r, c))))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ComparisonRecord {
                frames,
                mean: optional(r, Some(mean), "mean", *line)?,
                se: optional(r, Some(se), "se", *line)?,
                re: optional(r, Some(re), "re", *line)?,
                pd: optional(r, Some(pd), "pd", *line)?,
            })
        })
        .collect()
}
