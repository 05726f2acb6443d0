//! 3DGS vertex PLY with the raw-confidence extension.
//!
//! Vertex properties, in file order:
//! `x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3
//! [conf_alpha_raw conf_beta_raw [confidence]]`. `f_rest` is channel-major
//! in the file (all red coefficients, then green, then blue). 2D scenes add a
//! `comment confsplat mode 2d width W height H` header line.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::betaconf;
use crate::error::{Error, Result};
use crate::scene::{sh_coeffs_for_degree, ConfidenceField, Mode, Splat, SplatSet, MAX_SH_DEGREE};

pub const CONF_ALPHA_PROPERTY: &str = "conf_alpha_raw";
pub const CONF_BETA_PROPERTY: &str = "conf_beta_raw";
pub const CONFIDENCE_PROPERTY: &str = "confidence";
const MODE_COMMENT: &str = "confsplat mode 2d";

/// A parsed splat file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPly {
    pub scene: SplatSet,
    pub field: Option<ConfidenceField>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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

    fn read(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = b.try_into().unwrap();
                (if little { <$t>::from_le_bytes(arr) } else { <$t>::from_be_bytes(arr) }) as f64
            }};
        }
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => num!(i16),
            Self::U16 => num!(u16),
            Self::I32 => num!(i32),
            Self::U32 => num!(u32),
            Self::F32 => num!(f32),
            Self::F64 => num!(f64),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    comments: Vec<String>,
    body_offset: usize,
}

fn header_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ply { offset: offset as u64, message: message.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if !bytes.starts_with(b"ply\n") && !bytes.starts_with(b"ply\r\n") {
        return Err(header_err(0, "missing 'ply' magic"));
    }
    let mut pos = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| header_err(pos, "header is not terminated by end_header"))?;
        let line_start = pos;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| header_err(line_start, "header line is not valid UTF-8"))?
            .trim_end_matches('\r');
        pos += nl + 1;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("ply") if line_start == 0 => {}
            Some("format") => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => Format::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Format::BinaryLe,
                    (Some("binary_big_endian"), Some("1.0")) => Format::BinaryBe,
                    _ => return Err(header_err(line_start, format!("unsupported format line '{line}'"))),
                })
            }
            Some("comment") => comments.push(line["comment".len()..].trim().to_string()),
            Some("obj_info") => {}
            Some("element") => {
                let (Some(name), Some(count)) = (words.next(), words.next()) else {
                    return Err(header_err(line_start, format!("malformed element line '{line}'")));
                };
                let count =
                    count.parse().map_err(|_| header_err(line_start, format!("bad element count '{count}'")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_start, "property declared before any element"))?;
                let parts: Vec<&str> = words.collect();
                let bad = || header_err(line_start, format!("malformed property line '{line}'"));
                let prop = match parts.as_slice() {
                    ["list", count, item, name] => Property::List {
                        name: name.to_string(),
                        count: Scalar::parse(count).ok_or_else(bad)?,
                        item: Scalar::parse(item).ok_or_else(bad)?,
                    },
                    [ty, name] => Property::Scalar { name: name.to_string(), ty: Scalar::parse(ty).ok_or_else(bad)? },
                    _ => return Err(bad()),
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(header_err(line_start, format!("unexpected header keyword '{other}'"))),
            None => {}
        }
    }
    let format = format.ok_or_else(|| header_err(0, "missing format line"))?;
    Ok(Header { format, elements, comments, body_offset: pos })
}

/// Column indices of the vertex properties we use.
struct Layout {
    pos: [usize; 3],
    dc: [usize; 3],
    rest: Vec<usize>,
    opacity: usize,
    scale: [usize; 3],
    rot: [usize; 4],
    conf: Option<[usize; 2]>,
    sh_degree: u8,
}

fn resolve_layout(vertex: &Element) -> Result<Layout> {
    let mut columns = HashMap::new();
    for (i, p) in vertex.properties.iter().enumerate() {
        match p {
            Property::Scalar { name, .. } => {
                columns.insert(name.as_str(), i);
            }
            Property::List { name, .. } => {
                return Err(header_err(0, format!("unknown property layout: list property '{name}' on vertex")))
            }
        }
    }
    let get = |name: &str| {
        columns
            .get(name)
            .copied()
            .ok_or_else(|| header_err(0, format!("unknown property layout: missing vertex property '{name}'")))
    };
    let n_rest = (0..).take_while(|k| columns.contains_key(format!("f_rest_{k}").as_str())).count();
    let sh_degree = (0..=MAX_SH_DEGREE)
        .find(|&d| 3 * (sh_coeffs_for_degree(d) - 1) == n_rest)
        .ok_or_else(|| header_err(0, format!("unknown property layout: {n_rest} f_rest properties")))?;
    let conf = match (columns.get(CONF_ALPHA_PROPERTY), columns.get(CONF_BETA_PROPERTY)) {
        (Some(&a), Some(&b)) => Some([a, b]),
        (None, None) => None,
        _ => {
            return Err(header_err(
                0,
                format!("unknown property layout: '{CONF_ALPHA_PROPERTY}' and '{CONF_BETA_PROPERTY}' must appear together"),
            ))
        }
    };
    Ok(Layout {
        pos: [get("x")?, get("y")?, get("z")?],
        dc: [get("f_dc_0")?, get("f_dc_1")?, get("f_dc_2")?],
        rest: (0..n_rest).map(|k| get(&format!("f_rest_{k}"))).collect::<Result<_>>()?,
        opacity: get("opacity")?,
        scale: [get("scale_0")?, get("scale_1")?, get("scale_2")?],
        rot: [get("rot_0")?, get("rot_1")?, get("rot_2")?, get("rot_3")?],
        conf,
        sh_degree,
    })
}

fn mode_from_comments(comments: &[String]) -> Result<Mode> {
    for c in comments {
        if let Some(rest) = c.strip_prefix(MODE_COMMENT) {
            let words: Vec<&str> = rest.split_whitespace().collect();
            if let ["width", w, "height", h] = words.as_slice() {
                if let (Ok(width), Ok(height)) = (w.parse(), h.parse()) {
                    return Ok(Mode::TwoD { width, height });
                }
            }
            return Err(header_err(0, format!("malformed mode comment '{c}'")));
        }
    }
    Ok(Mode::ThreeD)
}

/// Read every element's rows as f64 values. Only vertex rows are kept.
fn read_vertex_rows(bytes: &[u8], header: &Header) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    match header.format {
        Format::Ascii => {
            let body = std::str::from_utf8(&bytes[header.body_offset..])
                .map_err(|_| header_err(header.body_offset, "ASCII body is not valid UTF-8"))?;
            let mut offset = header.body_offset;
            let mut lines = body.split_inclusive('\n');
            for el in &header.elements {
                for i in 0..el.count {
                    let line = lines.next().ok_or_else(|| {
                        header_err(offset, format!("truncated: {} element {i} of {} is missing", el.name, el.count))
                    })?;
                    let here = offset;
                    offset += line.len();
                    let mut tokens = line.split_whitespace();
                    let mut row = Vec::new();
                    let mut next = |what: &str| -> Result<f64> {
                        let tok = tokens.next().ok_or_else(|| {
                            header_err(here, format!("{} element {i}: missing value for '{what}'", el.name))
                        })?;
                        tok.parse::<f64>()
                            .map_err(|_| header_err(here, format!("{} element {i}: bad number '{tok}'", el.name)))
                    };
                    for p in &el.properties {
                        match p {
                            Property::Scalar { name, .. } => row.push(next(name)?),
                            Property::List { name, .. } => {
                                let n = next(name)? as usize;
                                for _ in 0..n {
                                    next(name)?;
                                }
                            }
                        }
                    }
                    if el.name == "vertex" {
                        rows.push(row);
                    }
                }
            }
        }
        Format::BinaryLe | Format::BinaryBe => {
            let little = header.format == Format::BinaryLe;
            let mut pos = header.body_offset;
            for el in &header.elements {
                for i in 0..el.count {
                    let mut row = Vec::with_capacity(el.properties.len());
                    let truncated = |at: usize| {
                        header_err(at, format!("truncated: {} element {i} of {} is missing or incomplete", el.name, el.count))
                    };
                    for p in &el.properties {
                        match p {
                            Property::Scalar { ty, .. } => {
                                let b = bytes.get(pos..pos + ty.size()).ok_or_else(|| truncated(pos))?;
                                row.push(ty.read(b, little));
                                pos += ty.size();
                            }
                            Property::List { count, item, .. } => {
                                let b = bytes.get(pos..pos + count.size()).ok_or_else(|| truncated(pos))?;
                                let n = count.read(b, little) as usize;
                                pos += count.size() + n * item.size();
                                if pos > bytes.len() {
                                    return Err(truncated(bytes.len()));
                                }
                            }
                        }
                    }
                    if el.name == "vertex" {
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Parse a splat PLY from memory.
pub fn parse_ply(bytes: &[u8]) -> Result<LoadedPly> {
    let header = parse_header(bytes)?;
    let vertex = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| header_err(0, "no vertex element"))?;
    if vertex.count == 0 {
        return Err(header_err(0, "vertex element is empty"));
    }
    let layout = resolve_layout(vertex)?;
    let mode = mode_from_comments(&header.comments)?;
    let rows = read_vertex_rows(bytes, &header)?;

    let n_rest = layout.rest.len() / 3;
    let mut splats = Vec::with_capacity(rows.len());
    let mut raw_alpha = Vec::new();
    let mut raw_beta = Vec::new();
    for row in &rows {
        let mut sh = vec![0.0; 3 * (n_rest + 1)];
        for c in 0..3 {
            sh[c] = row[layout.dc[c]];
            for k in 0..n_rest {
                sh[3 * (k + 1) + c] = row[layout.rest[c * n_rest + k]];
            }
        }
        splats.push(Splat {
            position: layout.pos.map(|i| row[i]),
            log_scale: layout.scale.map(|i| row[i]),
            rotation: layout.rot.map(|i| row[i]),
            sh,
            opacity_logit: row[layout.opacity],
        });
        if let Some([a, b]) = layout.conf {
            raw_alpha.push(row[a]);
            raw_beta.push(row[b]);
        }
    }
    let scene = SplatSet::new(splats, mode)?;
    debug_assert_eq!(scene.sh_degree, layout.sh_degree);
    let field = match layout.conf {
        Some(_) => Some(ConfidenceField::new(raw_alpha, raw_beta)?),
        None => None,
    };
    Ok(LoadedPly { scene, field })
}

/// Load a splat PLY (binary little/big endian or ASCII).
pub fn load_ply(path: impl AsRef<Path>) -> Result<LoadedPly> {
    parse_ply(&fs::read(path)?)
}

/// Serialize a scene as binary little-endian PLY. Values are stored as
/// 32-bit floats.
pub fn encode_ply(scene: &SplatSet, field: Option<&ConfidenceField>, include_confidence: bool) -> Result<Vec<u8>> {
    if scene.is_empty() {
        return Err(Error::InvalidInput("refusing to save an empty splat set".into()));
    }
    if let Some(f) = field {
        f.check_matches(scene)?;
    }
    if include_confidence && field.is_none() {
        return Err(Error::InvalidInput("a 'confidence' property needs a confidence field".into()));
    }
    let n_rest = sh_coeffs_for_degree(scene.sh_degree) - 1;

    let mut out = Vec::new();
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    if let Mode::TwoD { width, height } = scene.mode {
        writeln!(out, "comment {MODE_COMMENT} width {width} height {height}")?;
    }
    writeln!(out, "element vertex {}", scene.len())?;
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * n_rest).map(|k| format!("f_rest_{k}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"].iter().map(|s| s.to_string()),
    );
    if field.is_some() {
        names.push(CONF_ALPHA_PROPERTY.into());
        names.push(CONF_BETA_PROPERTY.into());
        if include_confidence {
            names.push(CONFIDENCE_PROPERTY.into());
        }
    }
    for name in &names {
        writeln!(out, "property float {name}")?;
    }
    writeln!(out, "end_header")?;

    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for (i, s) in scene.splats.iter().enumerate() {
        s.position.iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        (0..3).for_each(|c| put(s.sh[c]));
        for c in 0..3 {
            for k in 0..n_rest {
                put(s.sh[3 * (k + 1) + c]);
            }
        }
        put(s.opacity_logit);
        s.log_scale.iter().for_each(|&v| put(v));
        s.rotation.iter().for_each(|&v| put(v));
        if let Some(f) = field {
            put(f.raw_alpha[i]);
            put(f.raw_beta[i]);
            if include_confidence {
                put(betaconf::confidence(f.raw_alpha[i], f.raw_beta[i]));
            }
        }
    }
    Ok(out)
}

/// Write a scene (and optionally its raw confidence parameters) to `path`.
pub fn save_ply(
    scene: &SplatSet,
    field: Option<&ConfidenceField>,
    path: impl AsRef<Path>,
    include_confidence: bool,
) -> Result<()> {
    let bytes = encode_ply(scene, field, include_confidence)?;
    fs::write(path, bytes)?;
    Ok(())
}
