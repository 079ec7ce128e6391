//! Multiband pixel grids with an affine georeference.
//!
//! Text layout: a header line naming the fields
//! `width,height,bands,origin_x,origin_y,psize_x,psize_y`, a line with their
//! values, then one line per raster row holding `width · bands` comma
//! separated values, pixel-interleaved (all bands of pixel 0, then pixel 1).
//!
//! Binary layout, little-endian throughout: the magic bytes `MFSR`, a `u32`
//! format version (1), `u32` width, height and bands, `f64` origin_x,
//! origin_y, psize_x, psize_y, then `width · height · bands` `f64` values in
//! the same order as the text layout.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

pub const TEXT_HEADER: &str = "width,height,bands,origin_x,origin_y,psize_x,psize_y";
const MAGIC: &[u8; 4] = b"MFSR";
const VERSION: u32 = 1;

/// World coordinate of the top-left corner of pixel (0, 0) and the pixel
/// size along each axis. `psize_y` is usually negative for north-up images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub psize_x: f64,
    pub psize_y: f64,
}

impl Default for GeoTransform {
    fn default() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            psize_x: 1.0,
            psize_y: 1.0,
        }
    }
}

impl GeoTransform {
    /// (row, col) of the cell containing a world point in a `width × height`
    /// grid. A point on a shared cell edge belongs to the higher-index cell;
    /// the far edges of the extent are outside.
    pub fn locate(&self, x: f64, y: f64, width: usize, height: usize) -> Result<(usize, usize)> {
        let col = ((x - self.origin_x) / self.psize_x).floor();
        let row = ((y - self.origin_y) / self.psize_y).floor();
        if !(col >= 0.0 && row >= 0.0 && col < width as f64 && row < height as f64) {
            return Err(Error::PointOutside { x, y });
        }
        Ok((row as usize, col as usize))
    }

    /// World coordinate of the centre of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.psize_x,
            self.origin_y + (row as f64 + 0.5) * self.psize_y,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    bands: usize,
    pixels: Vec<f64>,
    pub georef: GeoTransform,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        pixels: Vec<f64>,
        georef: GeoTransform,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::InvalidInput(format!(
                "raster dimensions {width}x{height}x{bands} must be positive"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(bands))
            .ok_or_else(|| Error::InvalidInput("raster too large".into()))?;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{bands} raster needs {expected} values, got {}",
                pixels.len()
            )));
        }
        let g = georef;
        if ![g.origin_x, g.origin_y, g.psize_x, g.psize_y]
            .iter()
            .all(|v| v.is_finite())
            || g.psize_x == 0.0
            || g.psize_y == 0.0
        {
            return Err(Error::InvalidInput(
                "georeference must be finite with nonzero pixel size".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            bands,
            pixels,
            georef,
        })
    }

    /// Builds a raster from one vector per pixel, row-major.
    pub fn from_vectors(
        width: usize,
        height: usize,
        vectors: &[Vec<f64>],
        georef: GeoTransform,
    ) -> Result<Self> {
        let bands = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != bands) {
            return Err(Error::DimensionMismatch(
                "pixel vectors differ in length".into(),
            ));
        }
        Self::new(width, height, bands, vectors.concat(), georef)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// `N`, the pixel count.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.pixels[index * self.bands..(index + 1) * self.bands]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.pixels.chunks_exact(self.bands)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    /// See [`GeoTransform::locate`].
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        self.georef.locate(x, y, self.width, self.height)
    }

    pub fn locate_index(&self, x: f64, y: f64) -> Result<usize> {
        let (row, col) = self.locate(x, y)?;
        Ok(self.index(row, col))
    }

    /// Per-band z-scores. Constant bands are centred but not scaled.
    pub fn standardized(&self) -> Raster {
        let n = self.len() as f64;
        let mut stats = Vec::with_capacity(self.bands);
        for b in 0..self.bands {
            let mean = crate::numeric::sum(self.pixels().map(|p| p[b])) / n;
            let var = crate::numeric::sum(self.pixels().map(|p| (p[b] - mean).powi(2))) / n;
            let sd = var.sqrt();
            stats.push((mean, if sd > 0.0 { sd } else { 1.0 }));
        }
        let pixels = self
            .pixels()
            .flat_map(|p| p.iter().zip(&stats).map(|(v, (m, s))| (v - m) / s))
            .collect();
        Raster {
            pixels,
            ..self.clone()
        }
    }

    fn header_values(&self) -> String {
        let g = &self.georef;
        format!(
            "{},{},{},{:?},{:?},{:?},{:?}",
            self.width, self.height, self.bands, g.origin_x, g.origin_y, g.psize_x, g.psize_y
        )
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TEXT_HEADER}")?;
        writeln!(out, "{}", self.header_values())?;
        let row_len = self.width * self.bands;
        for row in self.pixels.chunks_exact(row_len) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Raster> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()));
        let (line, names) = lines
            .next()
            .ok_or_else(|| parse(1, "empty raster file"))??;
        if names.trim().replace(' ', "") != TEXT_HEADER {
            return Err(parse(line, format!("expected header `{TEXT_HEADER}`")));
        }
        let (line, values) = lines
            .next()
            .ok_or_else(|| parse(2, "missing header values"))??;
        let (width, height, bands, georef) = parse_header(line, &values)?;
        let mut pixels = Vec::with_capacity(width * height * bands);
        let mut rows = 0;
        for item in lines {
            let (line, text) = item?;
            let before = pixels.len();
            for field in text.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse(line, format!("bad value `{}`", field.trim())))?;
                pixels.push(v);
            }
            if pixels.len() - before != width * bands {
                return Err(parse(
                    line,
                    format!(
                        "row has {} values, expected {}",
                        pixels.len() - before,
                        width * bands
                    ),
                ));
            }
            rows += 1;
        }
        if rows != height {
            return Err(parse(0, format!("found {rows} rows, header says {height}")));
        }
        Raster::new(width, height, bands, pixels, georef)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.width as u32,
            self.height as u32,
            self.bands as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        let g = &self.georef;
        for v in [g.origin_x, g.origin_y, g.psize_x, g.psize_y]
            .iter()
            .chain(&self.pixels)
        {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Raster> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse {
                line: 0,
                message: "not a binary raster (bad magic)".into(),
            });
        }
        let mut word = [0u8; 4];
        let mut u32s = [0u32; 4];
        for v in &mut u32s {
            input.read_exact(&mut word)?;
            *v = u32::from_le_bytes(word);
        }
        let [version, width, height, bands] = u32s;
        if version != VERSION {
            return Err(Error::Parse {
                line: 0,
                message: format!("unsupported binary raster version {version}"),
            });
        }
        let mut dword = [0u8; 8];
        let mut read_f64 = |input: &mut R| -> Result<f64> {
            input.read_exact(&mut dword)?;
            Ok(f64::from_le_bytes(dword))
        };
        let georef = GeoTransform {
            origin_x: read_f64(&mut input)?,
            origin_y: read_f64(&mut input)?,
            psize_x: read_f64(&mut input)?,
            psize_y: read_f64(&mut input)?,
        };
        let count = width as usize * height as usize * bands as usize;
        let mut pixels = Vec::with_capacity(count);
        for _ in 0..count {
            pixels.push(read_f64(&mut input)?);
        }
        Raster::new(
            width as usize,
            height as usize,
            bands as usize,
            pixels,
            georef,
        )
    }
}

fn parse(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: usize, values: &str) -> Result<(usize, usize, usize, GeoTransform)> {
    let fields: Vec<&str> = values.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(parse(
            line,
            format!("header has {} values, expected 7", fields.len()),
        ));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse(line, format!("bad count `{s}`")))
    };
    let real = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| parse(line, format!("bad number `{s}`")))
    };
    Ok((
        int(fields[0])?,
        int(fields[1])?,
        int(fields[2])?,
        GeoTransform {
            origin_x: real(fields[3])?,
            origin_y: real(fields[4])?,
            psize_x: real(fields[5])?,
            psize_y: real(fields[6])?,
        },
    ))
}

/// Single-band raster of 1-based cluster ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelRaster {
    pub fn write_text<W: Write>(&self, georef: &GeoTransform, mut out: W) -> Result<()> {
        writeln!(out, "{TEXT_HEADER}")?;
        writeln!(
            out,
            "{},{},1,{:?},{:?},{:?},{:?}",
            self.width,
            self.height,
            georef.origin_x,
            georef.origin_y,
            georef.psize_x,
            georef.psize_y
        )?;
        for row in self.labels.chunks_exact(self.width) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<(LabelRaster, GeoTransform)> {
        let raster = Raster::read_text(input)?;
        if raster.bands != 1 {
            return Err(Error::DimensionMismatch(format!(
                "label raster has {} bands, expected 1",
                raster.bands
            )));
        }
        let labels = raster
            .pixels
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::InvalidInput(format!(
                        "label {v} is not a positive integer"
                    )))
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        Ok((
            LabelRaster {
                width: raster.width,
                height: raster.height,
                labels,
            },
            raster.georef,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(width: usize, height: usize) -> Raster {
        let values = (0..width * height).map(|i| i as f64).collect();
        Raster::new(width, height, 1, values, GeoTransform::default()).unwrap()
    }

    #[test]
    fn locate_interior_point() {
        let r = unit_grid(5, 5);
        assert_eq!(r.locate(2.5, 3.5).unwrap(), (3, 2));
    }

    #[test]
    fn boundary_goes_to_higher_cell() {
        let r = unit_grid(5, 5);
        assert_eq!(r.locate(2.0, 3.0).unwrap(), (3, 2));
        assert_eq!(r.locate(0.0, 0.0).unwrap(), (0, 0));
        assert!(r.locate(5.0, 1.0).is_err());
    }

    #[test]
    fn north_up_georef() {
        let g = GeoTransform {
            origin_x: 100.0,
            origin_y: 50.0,
            psize_x: 10.0,
            psize_y: -10.0,
        };
        let r = Raster::new(3, 2, 1, vec![0.0; 6], g).unwrap();
        assert_eq!(r.locate(125.0, 45.0).unwrap(), (0, 2));
        assert_eq!(r.locate(100.0, 40.0).unwrap(), (1, 0));
        let (x, y) = g.pixel_center(1, 2);
        assert_eq!(r.locate(x, y).unwrap(), (1, 2));
    }

    #[test]
    fn outside_is_error() {
        let r = unit_grid(2, 2);
        assert!(matches!(
            r.locate(-0.1, 1.0),
            Err(Error::PointOutside { .. })
        ));
        assert!(r.locate(1.0, 7.0).is_err());
        assert!(r.locate(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = GeoTransform {
            origin_x: 0.5,
            origin_y: -2.0,
            psize_x: 0.1,
            psize_y: 0.3,
        };
        let values: Vec<f64> = (0..12).map(|i| i as f64 / 7.0).collect();
        let r = Raster::new(3, 2, 2, values, g).unwrap();
        let mut buf = Vec::new();
        r.write_text(&mut buf).unwrap();
        let back = Raster::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn binary_round_trip() {
        let r = Raster::new(
            2,
            2,
            3,
            (0..12).map(|i| i as f64 * 1.5).collect(),
            GeoTransform::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 32 + 12 * 8);
        assert_eq!(Raster::read_binary(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn malformed_text_is_rejected() {
        let bad_row = format!("{TEXT_HEADER}\n2,1,1,0,0,1,1\n1\n");
        assert!(Raster::read_text(bad_row.as_bytes()).is_err());
        let short = format!("{TEXT_HEADER}\n2,2,1,0,0,1,1\n1,2\n");
        assert!(Raster::read_text(short.as_bytes()).is_err());
        assert!(Raster::read_text("".as_bytes()).is_err());
    }

    #[test]
    fn label_round_trip() {
        let labels = LabelRaster {
            width: 2,
            height: 2,
            labels: vec![1, 2, 2, 1],
        };
        let mut buf = Vec::new();
        labels
            .write_text(&GeoTransform::default(), &mut buf)
            .unwrap();
        let (back, _) = LabelRaster::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, labels);
    }

    #[test]
    fn standardized_bands_have_unit_scale() {
        let r = Raster::new(
            2,
            2,
            2,
            vec![1.0, 5.0, 3.0, 5.0, 5.0, 5.0, 7.0, 5.0],
            GeoTransform::default(),
        )
        .unwrap();
        let s = r.standardized();
        let band0: Vec<f64> = s.pixels().map(|p| p[0]).collect();
        let mean = band0.iter().sum::<f64>() / 4.0;
        let var = band0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        assert!(s.pixels().all(|p| p[1] == 0.0));
    }
}
