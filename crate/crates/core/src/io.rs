//! File I/O: PLY point clouds and meshes (ASCII and binary little-endian) and
//! the plain-text sensor sidecar format.
//!
//! Point files carry per-vertex `x y z` (written as `double`), optional unit
//! normals `nx ny nz`, a `source` tag byte and a `visibility` list of `uint`
//! sensor indices. Sensor files hold one `x y z` triple per line, 0-indexed.
//! Binary files round-trip coordinates bit-exactly; ASCII uses shortest
//! round-trip float formatting, so coordinates survive either way.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::{PointCloud, SensorSet, SourceTag};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;

/// On-disk encoding of a PLY file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug)]
enum PropKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    /// Byte offset of the first data byte after `end_header`.
    data_offset: usize,
    /// Number of header lines, for error reporting in ASCII files.
    header_lines: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut seen_magic = false;

    loop {
        let line_start = pos;
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| Error::parse(path, line_no + 1, "unterminated header"))?;
        pos = end + 1;
        line_no += 1;
        let raw = &bytes[line_start..end];
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(path, line_no, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        if line_no == 1 {
            if line != "ply" {
                return Err(Error::parse(path, 1, "missing PLY magic"));
            }
            seen_magic = true;
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(Error::parse(path, line_no, "big-endian PLY is not supported"))
                    }
                    other => {
                        return Err(Error::parse(path, line_no, format!("unknown format `{other}`")))
                    }
                });
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| Error::parse(path, line_no, "element without a name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(path, line_no, "element without a count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, line_no, "property before any element"))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| Error::parse(path, line_no, "property without a type"))?;
                if first == "list" {
                    let count = tokens.next().and_then(ScalarType::parse).ok_or_else(|| {
                        Error::parse(path, line_no, "bad list count type")
                    })?;
                    let item = tokens.next().and_then(ScalarType::parse).ok_or_else(|| {
                        Error::parse(path, line_no, "bad list item type")
                    })?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| Error::parse(path, line_no, "list property without a name"))?;
                    element.props.push(Property {
                        name: name.to_string(),
                        kind: PropKind::List { count, item },
                    });
                } else {
                    let ty = ScalarType::parse(first).ok_or_else(|| {
                        Error::parse(path, line_no, format!("unknown property type `{first}`"))
                    })?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| Error::parse(path, line_no, "property without a name"))?;
                    element.props.push(Property {
                        name: name.to_string(),
                        kind: PropKind::Scalar(ty),
                    });
                }
            }
            Some("end_header") => {
                let format = format
                    .ok_or_else(|| Error::parse(path, line_no, "missing format line"))?;
                if !seen_magic {
                    return Err(Error::parse(path, 1, "missing PLY magic"));
                }
                return Ok(Header {
                    format,
                    elements,
                    data_offset: pos,
                    header_lines: line_no,
                });
            }
            Some(other) => {
                return Err(Error::parse(path, line_no, format!("unexpected header token `{other}`")))
            }
            None => {}
        }
    }
}

/// Cursor over the data section, shared by the ASCII and binary paths.
enum Body<'a> {
    Ascii {
        lines: std::str::Lines<'a>,
        line_no: usize,
    },
    Binary {
        bytes: &'a [u8],
        pos: usize,
        record: usize,
    },
}

/// One decoded row: scalar properties as f64, list properties as Vec<f64>.
struct Row {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
    /// Line (ASCII) or record number (binary), for error messages.
    location: usize,
}

impl<'a> Body<'a> {
    fn read_row(&mut self, props: &[Property], path: &Path) -> Result<Row> {
        match self {
            Body::Ascii { lines, line_no } => {
                let line = loop {
                    let l = lines
                        .next()
                        .ok_or_else(|| Error::parse(path, *line_no + 1, "unexpected end of file"))?;
                    *line_no += 1;
                    if !l.trim().is_empty() {
                        break l;
                    }
                };
                let mut tokens = line.split_whitespace();
                let mut next = |what: &str| -> Result<f64> {
                    tokens
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| {
                            Error::parse(path, *line_no, format!("missing or invalid {what}"))
                        })
                };
                let mut scalars = Vec::with_capacity(props.len());
                let mut lists = Vec::new();
                for p in props {
                    match &p.kind {
                        PropKind::Scalar(_) => scalars.push(next(&p.name)?),
                        PropKind::List { .. } => {
                            let n = next(&format!("{} count", p.name))? as usize;
                            let mut items = Vec::with_capacity(n);
                            for _ in 0..n {
                                items.push(next(&format!("{} item", p.name))?);
                            }
                            lists.push(items);
                        }
                    }
                }
                Ok(Row {
                    scalars,
                    lists,
                    location: *line_no,
                })
            }
            Body::Binary { bytes, pos, record } => {
                *record += 1;
                let mut scalars = Vec::with_capacity(props.len());
                let mut lists = Vec::new();
                for p in props {
                    match &p.kind {
                        PropKind::Scalar(ty) => {
                            scalars.push(read_binary_scalar(bytes, pos, *ty, *record, path)?)
                        }
                        PropKind::List { count, item } => {
                            let n =
                                read_binary_scalar(bytes, pos, *count, *record, path)? as usize;
                            let mut items = Vec::with_capacity(n);
                            for _ in 0..n {
                                items.push(read_binary_scalar(bytes, pos, *item, *record, path)?);
                            }
                            lists.push(items);
                        }
                    }
                }
                Ok(Row {
                    scalars,
                    lists,
                    location: *record,
                })
            }
        }
    }
}

fn read_binary_scalar(
    bytes: &[u8],
    pos: &mut usize,
    ty: ScalarType,
    record: usize,
    path: &Path,
) -> Result<f64> {
    let size = ty.size();
    if *pos + size > bytes.len() {
        return Err(Error::parse(path, record, "unexpected end of binary data"));
    }
    let raw = &bytes[*pos..*pos + size];
    *pos += size;
    Ok(match ty {
        ScalarType::I8 => raw[0] as i8 as f64,
        ScalarType::U8 => raw[0] as f64,
        ScalarType::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
        ScalarType::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
        ScalarType::I32 => i32::from_le_bytes(raw.try_into().unwrap()) as f64,
        ScalarType::U32 => u32::from_le_bytes(raw.try_into().unwrap()) as f64,
        ScalarType::F32 => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
        ScalarType::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
    })
}

struct ParsedPly {
    header: Header,
    rows_per_element: Vec<Vec<Row>>,
}

fn parse_ply(path: &Path) -> Result<ParsedPly> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&bytes, path)?;
    let mut body = match header.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(&bytes[header.data_offset..])
                .map_err(|_| Error::parse(path, header.header_lines, "data is not valid UTF-8"))?;
            Body::Ascii {
                lines: text.lines(),
                line_no: header.header_lines,
            }
        }
        PlyFormat::BinaryLittleEndian => Body::Binary {
            bytes: &bytes,
            pos: header.data_offset,
            record: 0,
        },
    };
    let mut rows_per_element = Vec::with_capacity(header.elements.len());
    for element in &header.elements {
        let mut rows = Vec::with_capacity(element.count);
        for _ in 0..element.count {
            rows.push(body.read_row(&element.props, path)?);
        }
        rows_per_element.push(rows);
    }
    Ok(ParsedPly {
        header,
        rows_per_element,
    })
}

/// Index of a named scalar property within the element's scalar-only ordering
/// (the ordering of `Row::scalars`).
fn scalar_index(element: &Element, name: &str) -> Option<usize> {
    let mut idx = 0;
    for p in &element.props {
        if let PropKind::Scalar(_) = p.kind {
            if p.name == name {
                return Some(idx);
            }
            idx += 1;
        }
    }
    None
}

fn list_index(element: &Element, names: &[&str]) -> Option<usize> {
    let mut idx = 0;
    for p in &element.props {
        if let PropKind::List { .. } = p.kind {
            if names.contains(&p.name.as_str()) {
                return Some(idx);
            }
            idx += 1;
        }
    }
    None
}

/// Loads a point cloud, applying `source` to every point and validating
/// visibility indices against `sensors`.
pub fn load_point_cloud<T: Real>(
    path: &Path,
    source: SourceTag,
    sensors: &SensorSet<T>,
) -> Result<PointCloud<T>> {
    let parsed = parse_ply(path)?;
    let (elem_idx, element) = parsed
        .header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, parsed.header.header_lines, "no vertex element"))?;

    let x = scalar_index(element, "x");
    let y = scalar_index(element, "y");
    let z = scalar_index(element, "z");
    let (x, y, z) = match (x, y, z) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => {
            return Err(Error::parse(
                path,
                parsed.header.header_lines,
                "vertex element must have x, y, z properties",
            ))
        }
    };
    let nx = scalar_index(element, "nx");
    let ny = scalar_index(element, "ny");
    let nz = scalar_index(element, "nz");
    let has_normals = nx.is_some() && ny.is_some() && nz.is_some();
    let vis = list_index(element, &["visibility"]).ok_or_else(|| {
        Error::parse(
            path,
            parsed.header.header_lines,
            "vertex element has no visibility list property; the pipeline requires lines of sight",
        )
    })?;

    let rows = &parsed.rows_per_element[elem_idx];
    let mut cloud = PointCloud::new();
    cloud.points.reserve(rows.len());
    cloud.visibility.reserve(rows.len());
    let mut normals = if has_normals {
        Some(Vec::with_capacity(rows.len()))
    } else {
        None
    };
    for (i, row) in rows.iter().enumerate() {
        let p = Point3::new(
            T::of(row.scalars[x]),
            T::of(row.scalars[y]),
            T::of(row.scalars[z]),
        );
        if !p.is_finite() {
            return Err(Error::parse(
                path,
                row.location,
                format!("point {i} has non-finite coordinates"),
            ));
        }
        cloud.points.push(p);
        if let (Some(ns), Some(nx), Some(ny), Some(nz)) = (normals.as_mut(), nx, ny, nz) {
            ns.push(Vector3::new(
                T::of(row.scalars[nx]),
                T::of(row.scalars[ny]),
                T::of(row.scalars[nz]),
            ));
        }
        let list = &row.lists[vis];
        if list.is_empty() {
            return Err(Error::MissingVisibility { point: i });
        }
        let mut indices = Vec::with_capacity(list.len());
        for &v in list {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(Error::parse(
                    path,
                    row.location,
                    format!("invalid visibility index {v}"),
                ));
            }
            let idx = v as u32;
            if idx as usize >= sensors.len() {
                return Err(Error::SensorIndexOutOfRange {
                    point: i,
                    index: idx,
                    count: sensors.len(),
                });
            }
            indices.push(idx);
        }
        cloud.visibility.push(indices);
        cloud.source.push(source);
    }
    cloud.normals = normals;
    Ok(cloud)
}

/// Writes a point cloud with coordinates as `double`, optional normals, the
/// source tag byte and the visibility list.
pub fn save_point_cloud<T: Real>(
    path: &Path,
    cloud: &PointCloud<T>,
    format: PlyFormat,
) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let fmt_line = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = String::new();
    let _ = writeln!(header, "ply");
    let _ = writeln!(header, "format {fmt_line} 1.0");
    let _ = writeln!(header, "comment tetfuse point cloud");
    let _ = writeln!(header, "element vertex {}", cloud.len());
    for c in ["x", "y", "z"] {
        let _ = writeln!(header, "property double {c}");
    }
    if cloud.has_normals() {
        for c in ["nx", "ny", "nz"] {
            let _ = writeln!(header, "property double {c}");
        }
    }
    let _ = writeln!(header, "property uchar source");
    let _ = writeln!(header, "property list uint uint visibility");
    let _ = writeln!(header, "end_header");
    out.extend_from_slice(header.as_bytes());

    for i in 0..cloud.len() {
        let p = cloud.points[i].to_f64();
        let n = cloud.normals.as_ref().map(|ns| ns[i]);
        let tag = cloud.source[i].as_u8();
        let vis = &cloud.visibility[i];
        match format {
            PlyFormat::Ascii => {
                let mut line = String::new();
                let _ = write!(line, "{} {} {}", p.x, p.y, p.z);
                if let Some(n) = n {
                    let _ = write!(line, " {} {} {}", n.x.to_double(), n.y.to_double(), n.z.to_double());
                }
                let _ = write!(line, " {tag} {}", vis.len());
                for v in vis {
                    let _ = write!(line, " {v}");
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                out.extend_from_slice(&p.x.to_le_bytes());
                out.extend_from_slice(&p.y.to_le_bytes());
                out.extend_from_slice(&p.z.to_le_bytes());
                if let Some(n) = n {
                    out.extend_from_slice(&n.x.to_double().to_le_bytes());
                    out.extend_from_slice(&n.y.to_double().to_le_bytes());
                    out.extend_from_slice(&n.z.to_double().to_le_bytes());
                }
                out.push(tag);
                out.extend_from_slice(&(vis.len() as u32).to_le_bytes());
                for v in vis {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    write_atomic(path, &out)
}

/// Writes a triangle mesh with per-vertex source tags; `colorize` adds RGB
/// (street vertices orange) for visual inspection.
pub fn save_mesh<T: Real>(
    path: &Path,
    mesh: &TriangleMesh<T>,
    format: PlyFormat,
    colorize: bool,
) -> Result<()> {
    let fmt_line = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = String::new();
    let _ = writeln!(header, "ply");
    let _ = writeln!(header, "format {fmt_line} 1.0");
    let _ = writeln!(header, "comment tetfuse surface mesh");
    let _ = writeln!(header, "element vertex {}", mesh.vertices.len());
    for c in ["x", "y", "z"] {
        let _ = writeln!(header, "property double {c}");
    }
    let _ = writeln!(header, "property uchar source");
    if colorize {
        for c in ["red", "green", "blue"] {
            let _ = writeln!(header, "property uchar {c}");
        }
    }
    let _ = writeln!(header, "element face {}", mesh.triangles.len());
    let _ = writeln!(header, "property list uchar int vertex_indices");
    let _ = writeln!(header, "end_header");

    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(header.as_bytes());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let p = v.to_f64();
        let tag = mesh.tags[i];
        let color: [u8; 3] = match tag {
            SourceTag::Street => [255, 140, 0],
            SourceTag::Aerial => [180, 180, 180],
        };
        match format {
            PlyFormat::Ascii => {
                let mut line = String::new();
                let _ = write!(line, "{} {} {} {}", p.x, p.y, p.z, tag.as_u8());
                if colorize {
                    let _ = write!(line, " {} {} {}", color[0], color[1], color[2]);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                out.extend_from_slice(&p.x.to_le_bytes());
                out.extend_from_slice(&p.y.to_le_bytes());
                out.extend_from_slice(&p.z.to_le_bytes());
                out.push(tag.as_u8());
                if colorize {
                    out.extend_from_slice(&color);
                }
            }
        }
    }
    for t in &mesh.triangles {
        match format {
            PlyFormat::Ascii => {
                let line = format!("3 {} {} {}\n", t[0], t[1], t[2]);
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                out.push(3);
                for &v in t {
                    out.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    write_atomic(path, &out)
}

/// Loads a triangle mesh (vertex positions, optional source tags, faces).
/// Faces with more than 3 vertices are fan-triangulated.
pub fn load_mesh<T: Real>(path: &Path) -> Result<TriangleMesh<T>> {
    let parsed = parse_ply(path)?;
    let (v_idx, v_elem) = parsed
        .header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, parsed.header.header_lines, "no vertex element"))?;
    let (x, y, z) = match (
        scalar_index(v_elem, "x"),
        scalar_index(v_elem, "y"),
        scalar_index(v_elem, "z"),
    ) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => {
            return Err(Error::parse(
                path,
                parsed.header.header_lines,
                "vertex element must have x, y, z properties",
            ))
        }
    };
    let source = scalar_index(v_elem, "source");

    let mut mesh = TriangleMesh::default();
    for row in &parsed.rows_per_element[v_idx] {
        mesh.vertices.push(Point3::new(
            T::of(row.scalars[x]),
            T::of(row.scalars[y]),
            T::of(row.scalars[z]),
        ));
        let tag = source
            .and_then(|s| SourceTag::from_u8(row.scalars[s] as u8))
            .unwrap_or(SourceTag::Aerial);
        mesh.tags.push(tag);
    }

    if let Some((f_idx, f_elem)) = parsed
        .header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "face")
    {
        let list = list_index(f_elem, &["vertex_indices", "vertex_index"]).ok_or_else(|| {
            Error::parse(
                path,
                parsed.header.header_lines,
                "face element has no vertex_indices list",
            )
        })?;
        for row in &parsed.rows_per_element[f_idx] {
            let idx = &row.lists[list];
            if idx.len() < 3 {
                return Err(Error::parse(path, row.location, "face with fewer than 3 vertices"));
            }
            let as_u32 = |v: f64| -> Result<u32> {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= mesh.vertices.len() {
                    Err(Error::parse(path, row.location, format!("bad face index {v}")))
                } else {
                    Ok(v as u32)
                }
            };
            let first = as_u32(idx[0])?;
            for w in idx[1..].windows(2) {
                mesh.triangles.push([first, as_u32(w[0])?, as_u32(w[1])?]);
            }
        }
    }
    Ok(mesh)
}

/// Loads sensor positions: one `x y z` triple per line, `#` comments allowed.
pub fn load_sensors<T: Real>(path: &Path) -> Result<SensorSet<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut positions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(|t| t.parse::<f64>());
        let coords: Option<(f64, f64, f64)> = (|| {
            let x = it.next()?.ok()?;
            let y = it.next()?.ok()?;
            let z = it.next()?.ok()?;
            Some((x, y, z))
        })();
        match coords {
            Some((x, y, z)) => positions.push(Point3::new(T::of(x), T::of(y), T::of(z))),
            None => {
                return Err(Error::parse(path, i + 1, "expected `x y z`"));
            }
        }
    }
    Ok(SensorSet::new(positions))
}

pub fn save_sensors<T: Real>(path: &Path, sensors: &SensorSet<T>) -> Result<()> {
    let mut out = String::new();
    for p in &sensors.positions {
        let p = p.to_f64();
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    write_atomic(path, out.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}
