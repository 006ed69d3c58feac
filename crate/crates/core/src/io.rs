//! Readers and writers for XYZ and PLY clouds, label files and dendrograms.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::engine::Dendrogram;
use crate::error::{Error, Result};
use crate::metrics::ScoreReport;
use crate::pipeline::{LabeledCloud, GROUND_LABEL};

pub const GROUND_COLOR: [u8; 3] = [128, 128, 128];
pub const PALETTE_SIZE: usize = 32;

/// Fixed segment colors: hues spread so consecutive labels differ strongly,
/// alternating between two brightness bands.
pub fn palette() -> [[u8; 3]; PALETTE_SIZE] {
    let mut out = [[0u8; 3]; PALETTE_SIZE];
    for (i, c) in out.iter_mut().enumerate() {
        let hue = ((i * 13) % PALETTE_SIZE) as f64 / PALETTE_SIZE as f64 * 6.0;
        let (s, v) = if i % 2 == 0 { (0.85, 0.95) } else { (0.65, 0.7) };
        *c = hsv(hue, s, v);
    }
    out
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let byte = |t: f64| ((t + m) * 255.0).round() as u8;
    [byte(r), byte(g), byte(b)]
}

pub fn label_color(label: u32) -> [u8; 3] {
    if label == GROUND_LABEL {
        GROUND_COLOR
    } else {
        palette()[label as usize % PALETTE_SIZE]
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Whitespace-separated `x y z` per line; blank lines and `#` comments are
/// skipped and extra columns ignored.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut xyz = [0.0; 3];
        let mut fields = line.split_whitespace();
        for (axis, slot) in xyz.iter_mut().enumerate() {
            let field = fields
                .next()
                .ok_or_else(|| parse_error(path, i + 1, format!("expected 3 coordinates, found {axis}")))?;
            *slot = field
                .parse()
                .map_err(|_| parse_error(path, i + 1, format!("bad number {field:?}")))?;
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    PointCloud::new(points)
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_start: usize,
}

fn format_error(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_error("PLY header is not terminated"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| format_error("PLY header is not ASCII"))
    };
    if next_line()?.trim() != "ply" {
        return Err(format_error("missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line()?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(format_error(format!("unsupported PLY encoding {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| format_error(format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", len, item, _name] => {
                let (len, item) = Scalar::parse(len)
                    .zip(Scalar::parse(item))
                    .ok_or_else(|| format_error(format!("bad list property: {line}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| format_error("property before any element"))?
                    .properties
                    .push(Property::List(len, item));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| format_error(format!("bad property type {ty:?}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| format_error("property before any element"))?
                    .properties
                    .push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(format_error(format!("unexpected header line: {line}"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| format_error("missing format line"))?,
        elements,
        body_start: pos,
    })
}

fn xyz_slots(element: &Element) -> Result<[usize; 3]> {
    let find = |axis: &str| {
        element
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            .ok_or_else(|| format_error(format!("vertex element has no {axis} property")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinaryReader<'_> {
    fn take(&mut self, ty: Scalar) -> Result<f64> {
        let end = self.pos + ty.size();
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format_error("PLY body ends early"))?;
        self.pos = end;
        Ok(ty.read_le(chunk))
    }

    fn record(&mut self, element: &Element, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for prop in &element.properties {
            match prop {
                Property::Scalar(_, ty) => out.push(self.take(*ty)?),
                Property::List(len, item) => {
                    let n = self.take(*len)? as usize;
                    for _ in 0..n {
                        self.take(*item)?;
                    }
                    out.push(f64::NAN);
                }
            }
        }
        Ok(())
    }
}

/// Vertex positions from an ASCII or binary little-endian PLY file. Other
/// properties and elements are ignored.
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let header = parse_header(&bytes)?;
    let vertex_at = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| format_error("PLY has no vertex element"))?;
    let vertex = &header.elements[vertex_at];
    let slots = xyz_slots(vertex)?;
    let mut points = Vec::with_capacity(vertex.count);
    let body = &bytes[header.body_start..];
    match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| format_error("ASCII PLY body is not text"))?;
            // Ascii records are one per line; the header occupies the lines before the body.
            let header_lines = bytes[..header.body_start].iter().filter(|&&b| b == b'\n').count();
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            let skip: usize = header.elements[..vertex_at].iter().map(|e| e.count).sum();
            for _ in 0..skip {
                lines.next().ok_or_else(|| format_error("PLY body ends early"))?;
            }
            for _ in 0..vertex.count {
                let (i, line) = lines.next().ok_or_else(|| format_error("PLY body ends early"))?;
                let line_no = header_lines + i + 1;
                let fields: Vec<&str> = line.split_whitespace().collect();
                let mut xyz = [0.0; 3];
                for (slot, &col) in xyz.iter_mut().zip(&slots) {
                    let field = fields
                        .get(col)
                        .ok_or_else(|| parse_error(path, line_no, "too few vertex fields"))?;
                    *slot = field
                        .parse()
                        .map_err(|_| parse_error(path, line_no, format!("bad number {field:?}")))?;
                }
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut reader = BinaryReader { bytes: body, pos: 0 };
            let mut record = Vec::new();
            for element in &header.elements[..vertex_at] {
                for _ in 0..element.count {
                    reader.record(element, &mut record)?;
                }
            }
            for _ in 0..vertex.count {
                reader.record(vertex, &mut record)?;
                points.push(Point3::new(record[slots[0]], record[slots[1]], record[slots[2]]));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    PointCloud::new(points)
}

/// Reads `.ply` files as PLY and anything else as XYZ text.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let is_ply = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        read_ply(path)
    } else {
        read_xyz(path)
    }
}

fn ply_header(n: usize, encoding: PlyEncoding, coord: &str, with_color: bool) -> String {
    let mut h = String::from("ply\n");
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let _ = writeln!(h, "format {fmt} 1.0");
    let _ = writeln!(h, "element vertex {n}");
    for axis in ["x", "y", "z"] {
        let _ = writeln!(h, "property {coord} {axis}");
    }
    if with_color {
        for c in ["red", "green", "blue"] {
            let _ = writeln!(h, "property uchar {c}");
        }
    }
    h.push_str("end_header\n");
    h
}

fn write_ply_impl(path: &Path, cloud: &PointCloud, colors: Option<&[[u8; 3]]>, encoding: PlyEncoding) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let coord = match encoding {
        PlyEncoding::Ascii => "float",
        PlyEncoding::BinaryLittleEndian => "double",
    };
    w.write_all(ply_header(cloud.len(), encoding, coord, colors.is_some()).as_bytes())?;
    for (i, p) in cloud.points().iter().enumerate() {
        match encoding {
            PlyEncoding::Ascii => {
                write!(w, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?;
                if let Some(c) = colors {
                    let [r, g, b] = c[i];
                    write!(w, " {r} {g} {b}")?;
                }
                writeln!(w)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = colors {
                    w.write_all(&c[i])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Positions only. ASCII keeps 9 significant digits; binary stores doubles exactly.
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    write_ply_impl(path.as_ref(), cloud, None, encoding)
}

/// ASCII PLY with one RGB color per point.
pub fn write_colored_ply(path: impl AsRef<Path>, cloud: &PointCloud, colors: &[[u8; 3]]) -> Result<()> {
    if colors.len() != cloud.len() {
        return Err(Error::LabelCount {
            labels: colors.len(),
            points: cloud.len(),
        });
    }
    write_ply_impl(path.as_ref(), cloud, Some(colors), PlyEncoding::Ascii)
}

/// ASCII PLY colored by segment label, ground in gray.
pub fn write_labeled_ply(path: impl AsRef<Path>, labeled: &LabeledCloud) -> Result<()> {
    if labeled.labels.is_empty() || labeled.labels.len() != labeled.cloud.len() {
        return Err(Error::LabelCount {
            labels: labeled.labels.len(),
            points: labeled.cloud.len(),
        });
    }
    let colors: Vec<[u8; 3]> = labeled
        .labels
        .iter()
        .zip(&labeled.ground)
        .map(|(&l, &g)| if g { GROUND_COLOR } else { label_color(l) })
        .collect();
    write_colored_ply(path, &labeled.cloud, &colors)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u32]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// One non-negative integer per line. With `expected`, the count must match.
pub fn read_labels(path: impl AsRef<Path>, expected: Option<usize>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse()
                .map_err(|_| parse_error(path, i + 1, format!("bad label {line:?}")))?,
        );
    }
    if let Some(points) = expected {
        if labels.len() != points {
            return Err(Error::LabelCount {
                labels: labels.len(),
                points,
            });
        }
    }
    Ok(labels)
}

pub fn write_dendrogram(path: impl AsRef<Path>, dendrogram: &Dendrogram) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, dendrogram)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_dendrogram(path: impl AsRef<Path>) -> Result<Dendrogram> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn format_scores(report: &ScoreReport) -> String {
    format!(
        "completeness {:.4}\ncorrectness {:.4}\naccuracy {:.4}\nf1 {:.4}\n",
        report.completeness, report.correctness, report.accuracy, report.f1
    )
}
