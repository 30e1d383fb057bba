//! Point-cloud file I/O (PLY ASCII, PLY binary little-endian, XYZ text)
//! and the JSON transform-file format written by registration runs.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, RigidTransform, TransformEntry};
use crate::mixture::{RegistrationConfig, RegistrationResult};

const GENERATOR_COMMENT: &str = concat!("generator: dare-reg ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinary,
    Xyz,
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location,
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a point cloud, detecting PLY by its magic bytes and treating
/// everything else as whitespace-separated XYZ text (3 or 6 columns).
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"ply") {
        read_ply(path, &bytes)
    } else {
        read_xyz(path, &bytes)
    }
}

pub fn write_point_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::PlyAscii => encode_ply(cloud, false),
        CloudFormat::PlyBinary => encode_ply(cloud, true),
        CloudFormat::Xyz => encode_xyz(cloud),
    };
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------
// XYZ
// ---------------------------------------------------------------------

fn read_xyz(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| parse_err(path, "byte 0".into(), "file is not valid UTF-8 text"))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals: Option<bool> = None;
    for (lineno, line) in text.lines().enumerate() {
        let loc = || format!("line {}", lineno + 1);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let with_normals = match fields.len() {
            3 => false,
            6 => true,
            n => {
                return Err(parse_err(
                    path,
                    loc(),
                    format!("expected 3 or 6 columns, found {n}"),
                ))
            }
        };
        match has_normals {
            None => has_normals = Some(with_normals),
            Some(prev) if prev != with_normals => {
                return Err(parse_err(path, loc(), "inconsistent column count"))
            }
            _ => {}
        }
        let mut vals = [0.0f64; 6];
        for (i, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, loc(), format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, loc(), "non-finite value"));
            }
            vals[i] = v;
        }
        points.push(Vector3::new(vals[0], vals[1], vals[2]));
        if with_normals {
            normals.push(Vector3::new(vals[3], vals[4], vals[5]));
        }
    }
    build_cloud(path, points, has_normals.unwrap_or(false).then_some(normals))
}

fn encode_xyz(cloud: &PointCloud) -> Vec<u8> {
    let mut out = String::new();
    match cloud.normals() {
        Some(normals) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                out.push_str(&format!("{} {} {} {} {} {}\n", p.x, p.y, p.z, n.x, n.y, n.z));
            }
        }
        None => {
            for p in cloud.points() {
                out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
            }
        }
    }
    out.into_bytes()
}

// ---------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
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
}

#[derive(Debug, Clone)]
struct PlyProperty {
    name: String,
    scalar: ScalarType,
    is_list: bool,
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

fn read_ply(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    // Header: ASCII lines up to and including "end_header".
    let header_end = find_header_end(bytes)
        .ok_or_else(|| parse_err(path, "byte 0".into(), "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| parse_err(path, "byte 0".into(), "header is not valid UTF-8"))?;

    let mut binary = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for (lineno, raw) in header.lines().enumerate() {
        let loc = || format!("line {}", lineno + 1);
        let line = raw.trim_end_matches('\r');
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("ply") | None => {}
            Some("comment") | Some("obj_info") | Some("end_header") => {}
            Some("format") => match tokens.next() {
                Some("ascii") => binary = Some(false),
                Some("binary_little_endian") => binary = Some(true),
                Some(other) => {
                    return Err(parse_err(
                        path,
                        loc(),
                        format!("unsupported format {other:?}"),
                    ))
                }
                None => return Err(parse_err(path, loc(), "format line missing type")),
            },
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, loc(), "element line missing name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, loc(), "element line missing count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, loc(), "property before any element"))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, loc(), "property line missing type"))?;
                if first == "list" {
                    let _count_type = tokens.next();
                    let elem_type = tokens
                        .next()
                        .ok_or_else(|| parse_err(path, loc(), "list property missing type"))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| parse_err(path, loc(), "list property missing name"))?;
                    let scalar = ScalarType::parse(elem_type).ok_or_else(|| {
                        parse_err(path, loc(), format!("unknown type {elem_type:?}"))
                    })?;
                    element.properties.push(PlyProperty {
                        name: name.to_string(),
                        scalar,
                        is_list: true,
                    });
                } else {
                    let name = tokens
                        .next()
                        .ok_or_else(|| parse_err(path, loc(), "property line missing name"))?;
                    let scalar = ScalarType::parse(first).ok_or_else(|| {
                        parse_err(path, loc(), format!("unknown type {first:?}"))
                    })?;
                    element.properties.push(PlyProperty {
                        name: name.to_string(),
                        scalar,
                        is_list: false,
                    });
                }
            }
            Some(other) => {
                return Err(parse_err(
                    path,
                    loc(),
                    format!("unknown header keyword {other:?}"),
                ))
            }
        }
    }
    let binary =
        binary.ok_or_else(|| parse_err(path, "line 2".into(), "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, "header".into(), "no vertex element"))?;
    let vertex = elements[vertex_pos].clone();

    let find = |name: &str| vertex.properties.iter().position(|p| p.name == name);
    let (px, py, pz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(parse_err(
                path,
                "header".into(),
                "vertex element is missing x, y, z properties",
            ))
        }
    };
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    for prop in &vertex.properties {
        if prop.is_list {
            return Err(parse_err(
                path,
                "header".into(),
                "list properties on the vertex element are unsupported",
            ));
        }
    }

    let header_lines = header.lines().count();
    let body = &bytes[header_end..];
    let values = if binary {
        read_ply_binary(path, body, &elements, vertex_pos, header_end)?
    } else {
        read_ply_ascii(path, body, &elements, vertex_pos, header_lines)?
    };

    let mut points = Vec::with_capacity(vertex.count);
    let mut normals = normal_idx.map(|_| Vec::with_capacity(vertex.count));
    for row in values.chunks(vertex.properties.len()) {
        points.push(Vector3::new(row[px], row[py], row[pz]));
        if let (Some(ns), Some((ax, ay, az))) = (normals.as_mut(), normal_idx) {
            ns.push(Vector3::new(row[ax], row[ay], row[az]));
        }
    }
    build_cloud(path, points, normals)
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end_header";
    let mut start = 0;
    while start < bytes.len() {
        let nl = bytes[start..].iter().position(|&b| b == b'\n')? + start;
        let line = &bytes[start..nl];
        let line = if line.ends_with(b"\r") {
            &line[..line.len() - 1]
        } else {
            line
        };
        if line == needle {
            return Some(nl + 1);
        }
        start = nl + 1;
    }
    None
}

fn read_ply_ascii(
    path: &Path,
    body: &[u8],
    elements: &[PlyElement],
    vertex_pos: usize,
    header_lines: usize,
) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(body)
        .map_err(|_| parse_err(path, "body".into(), "ASCII body is not valid UTF-8"))?;
    let mut lines = text.lines().enumerate();
    let mut values = Vec::new();
    for (pos, element) in elements.iter().enumerate() {
        for _ in 0..element.count {
            let (lineno, line) = lines.next().ok_or_else(|| {
                parse_err(
                    path,
                    format!("line {}", header_lines + 1),
                    format!("short payload: missing rows of element {:?}", element.name),
                )
            })?;
            if pos != vertex_pos {
                continue;
            }
            let loc = || format!("line {}", header_lines + lineno + 1);
            let mut fields = line.split_whitespace();
            for prop in &element.properties {
                let field = fields.next().ok_or_else(|| {
                    parse_err(path, loc(), format!("missing field {:?}", prop.name))
                })?;
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(path, loc(), format!("invalid number {field:?}")))?;
                values.push(v);
            }
        }
        if pos == vertex_pos {
            break;
        }
    }
    Ok(values)
}

fn read_ply_binary(
    path: &Path,
    body: &[u8],
    elements: &[PlyElement],
    vertex_pos: usize,
    header_end: usize,
) -> Result<Vec<f64>> {
    let mut offset = 0usize;
    let mut values = Vec::new();
    for (pos, element) in elements.iter().enumerate() {
        if pos != vertex_pos {
            if element.properties.iter().any(|p| p.is_list) {
                return Err(parse_err(
                    path,
                    format!("byte {}", header_end + offset),
                    format!(
                        "element {:?} with list properties precedes vertex data",
                        element.name
                    ),
                ));
            }
            let row: usize = element.properties.iter().map(|p| p.scalar.size()).sum();
            offset += row * element.count;
            continue;
        }
        for _ in 0..element.count {
            for prop in &element.properties {
                let size = prop.scalar.size();
                let end = offset + size;
                if end > body.len() {
                    return Err(parse_err(
                        path,
                        format!("byte {}", header_end + offset),
                        "short payload",
                    ));
                }
                let raw = &body[offset..end];
                let v = decode_scalar(prop.scalar, raw);
                values.push(v);
                offset = end;
            }
        }
        break;
    }
    Ok(values)
}

fn decode_scalar(t: ScalarType, raw: &[u8]) -> f64 {
    match t {
        ScalarType::I8 => raw[0] as i8 as f64,
        ScalarType::U8 => raw[0] as f64,
        ScalarType::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
        ScalarType::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
        ScalarType::I32 => i32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
        ScalarType::U32 => u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
        ScalarType::F32 => f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
        ScalarType::F64 => f64::from_le_bytes([
            raw[0], raw[1], raw[2], raw[3], raw[4], raw[5], raw[6], raw[7],
        ]),
    }
}

fn build_cloud(
    path: &Path,
    points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
) -> Result<PointCloud> {
    if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(parse_err(
            path,
            format!("point {i}"),
            "non-finite coordinate",
        ));
    }
    let mut cloud = PointCloud::new(points)?;
    if let Some(mut ns) = normals {
        for (i, n) in ns.iter_mut().enumerate() {
            let norm = n.norm();
            if !norm.is_finite() || norm == 0.0 {
                return Err(parse_err(
                    path,
                    format!("point {i}"),
                    "zero-length or non-finite normal",
                ));
            }
            // Stored unit normals keep their exact bits; anything else is
            // normalized on the way in.
            if (norm - 1.0).abs() > 1e-6 {
                *n /= norm;
            }
        }
        cloud.set_normals(ns)?;
    }
    Ok(cloud)
}

fn encode_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let format = if binary {
        "binary_little_endian"
    } else {
        "ascii"
    };
    let mut header = format!("ply\nformat {format} 1.0\ncomment {GENERATOR_COMMENT}\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    match (binary, cloud.normals()) {
        (true, Some(normals)) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        (true, None) => {
            for p in cloud.points() {
                for v in [p.x, p.y, p.z] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        (false, Some(normals)) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                out.extend_from_slice(
                    format!("{} {} {} {} {} {}\n", p.x, p.y, p.z, n.x, n.y, n.z).as_bytes(),
                );
            }
        }
        (false, None) => {
            for p in cloud.points() {
                out.extend_from_slice(format!("{} {} {}\n", p.x, p.y, p.z).as_bytes());
            }
        }
    }
    out
}

// ---------------------------------------------------------------------
// Transform files
// ---------------------------------------------------------------------

/// JSON document produced by registration: per-set transforms plus the
/// objective trace and a configuration echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformFile {
    pub sets: Vec<TransformEntry>,
    pub objective_trace: Vec<f64>,
    pub converged_iterations: usize,
    pub degenerate_sets: Vec<usize>,
    pub config: RegistrationConfig,
}

impl TransformFile {
    pub fn from_result(result: &RegistrationResult, config: &RegistrationConfig) -> Self {
        Self {
            sets: result
                .transforms
                .iter()
                .enumerate()
                .map(|(i, t)| TransformEntry::from_transform(i, t))
                .collect(),
            objective_trace: result.objective_trace.clone(),
            converged_iterations: result.converged_iterations,
            degenerate_sets: result.degenerate_sets.clone(),
            config: config.clone(),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let s = self.to_json_string()?;
        fs::write(path, s).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Validated transforms, re-orthonormalized on load.
    pub fn transforms(&self) -> Result<Vec<RigidTransform>> {
        self.sets.iter().map(TransformEntry::to_transform).collect()
    }
}

/// Ground-truth file written alongside synthetic scans: per scan, the
/// transform mapping its frame back to scan 0's frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub sets: Vec<TransformEntry>,
}

impl GroundTruthFile {
    pub fn from_transforms(transforms: &[RigidTransform]) -> Self {
        Self {
            sets: transforms
                .iter()
                .enumerate()
                .map(|(i, t)| TransformEntry::from_transform(i, t))
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn transforms(&self) -> Result<Vec<RigidTransform>> {
        self.sets.iter().map(TransformEntry::to_transform).collect()
    }
}
