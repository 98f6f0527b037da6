//! PLY mesh reader and writer.
//!
//! Supports the subset used by indoor-scan datasets: ASCII or binary
//! little-endian, vertex properties `x,y,z` (float32) with optional
//! `red,green,blue` (uchar), faces as a `uchar` count followed by int32
//! indices. Unrecognized vertex/face properties (normals, alpha, quality,
//! per-face labels) are skipped. Every parse error carries the byte offset
//! it was detected at.

use nalgebra::Point3;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::SceneMesh;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

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
    fn parse(token: &str, offset: u64) -> Result<Self> {
        Ok(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => {
                return Err(parse_err(offset, format!("unknown scalar type `{other}`")));
            }
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

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List { index_ty: ScalarType },
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn parse_err(offset: u64, message: impl Into<String>) -> Error {
    Error::PlyParse {
        offset,
        message: message.into(),
    }
}

/// Cursor over the raw bytes that hands out header lines and tracks offsets.
struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<(u64, &'a str)> {
        let start = self.pos;
        let rest = &self.data[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(start as u64, "unterminated header line"))?;
        self.pos = start + end + 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| parse_err(start as u64, "header line is not valid UTF-8"))?;
        Ok((start as u64, line.trim_end_matches('\r')))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(parse_err(
                self.pos as u64,
                format!("truncated payload while reading {what}"),
            ));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

fn parse_header(cur: &mut Cursor) -> Result<(PlyFormat, Vec<ElementDecl>)> {
    let (off, magic) = cur.line()?;
    if magic != "ply" {
        return Err(parse_err(off, "missing `ply` magic line"));
    }
    let mut format = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    loop {
        let (off, line) = cur.line()?;
        let mut tokens = line.split_ascii_whitespace();
        match tokens.next() {
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(parse_err(off, format!("unsupported format `{other}`")));
                    }
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(off, "element without a name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(off, "element without a valid count"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(off, "property before any element"))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| parse_err(off, "property without a type"))?;
                if first == "list" {
                    let count_ty = ScalarType::parse(
                        tokens
                            .next()
                            .ok_or_else(|| parse_err(off, "list without count type"))?,
                        off,
                    )?;
                    if count_ty != ScalarType::U8 {
                        return Err(parse_err(off, "face list count must be uchar"));
                    }
                    let index_ty = ScalarType::parse(
                        tokens
                            .next()
                            .ok_or_else(|| parse_err(off, "list without index type"))?,
                        off,
                    )?;
                    tokens
                        .next()
                        .ok_or_else(|| parse_err(off, "list without a name"))?;
                    element.properties.push(Property::List { index_ty });
                } else {
                    let ty = ScalarType::parse(first, off)?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| parse_err(off, "property without a name"))?;
                    element.properties.push(Property::Scalar {
                        ty,
                        name: name.to_string(),
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(off, format!("unexpected header keyword `{other}`")));
            }
            None => continue,
        }
    }
    let format = format.ok_or_else(|| parse_err(0, "header has no format line"))?;
    Ok((format, elements))
}

/// Column roles extracted from a vertex element declaration.
struct VertexLayout {
    /// Positions of x, y, z among the scalar properties.
    xyz: [usize; 3],
    /// Positions of red, green, blue, when all three are declared.
    rgb: Option<[usize; 3]>,
    props: Vec<ScalarType>,
}

fn vertex_layout(decl: &ElementDecl, offset: u64) -> Result<VertexLayout> {
    let mut props = Vec::new();
    let find = |want: &str| -> Option<usize> {
        decl.properties.iter().position(|p| match p {
            Property::Scalar { name, .. } => name == want,
            Property::List { .. } => false,
        })
    };
    let (x, y, z) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(offset, "vertex element lacks x/y/z properties")),
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    for p in &decl.properties {
        match p {
            Property::Scalar { ty, .. } => props.push(*ty),
            Property::List { .. } => {
                return Err(parse_err(offset, "list property on vertex element"));
            }
        }
    }
    for (idx, what) in [(x, "x"), (y, "y"), (z, "z")] {
        if props[idx] != ScalarType::F32 {
            return Err(parse_err(offset, format!("vertex {what} must be float32")));
        }
    }
    if let Some(rgb) = rgb {
        for idx in rgb {
            if props[idx] != ScalarType::U8 {
                return Err(parse_err(offset, "vertex colors must be uchar"));
            }
        }
    }
    Ok(VertexLayout {
        xyz: [x, y, z],
        rgb,
        props,
    })
}

fn read_scalar_binary(cur: &mut Cursor, ty: ScalarType, what: &str) -> Result<f64> {
    let bytes = cur.take(ty.size(), what)?;
    Ok(match ty {
        ScalarType::I8 => bytes[0] as i8 as f64,
        ScalarType::U8 => bytes[0] as f64,
        ScalarType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        ScalarType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        ScalarType::I32 => i32::from_le_bytes(bytes.try_into().unwrap()) as f64,
        ScalarType::U32 => u32::from_le_bytes(bytes.try_into().unwrap()) as f64,
        ScalarType::F32 => f32::from_le_bytes(bytes.try_into().unwrap()) as f64,
        ScalarType::F64 => f64::from_le_bytes(bytes.try_into().unwrap()),
    })
}

/// Load a scene mesh from a PLY file. The scene id is the file stem.
pub fn load_scene(path: &Path) -> Result<SceneMesh> {
    let data = fs::read(path)?;
    let scene_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string());
    parse_scene(&data, scene_id)
}

/// Parse PLY bytes into a validated mesh.
pub fn parse_scene(data: &[u8], scene_id: String) -> Result<SceneMesh> {
    let mut cur = Cursor { data, pos: 0 };
    let (format, elements) = parse_header(&mut cur)?;
    let header_end = cur.pos as u64;

    let vertex_decl = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(header_end, "no vertex element"))?;
    let layout = vertex_layout(vertex_decl, header_end)?;

    let mut vertices: Vec<Point3<f64>> = Vec::with_capacity(vertex_decl.count);
    let mut colors: Vec<[u8; 3]> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    match format {
        PlyFormat::BinaryLittleEndian => {
            for element in &elements {
                if element.name == "vertex" {
                    for _ in 0..element.count {
                        let mut row = [0f64; 3];
                        let mut rgb_row = [0f64; 3];
                        for (i, &ty) in layout.props.iter().enumerate() {
                            let v = read_scalar_binary(&mut cur, ty, "vertex data")?;
                            if let Some(a) = layout.xyz.iter().position(|&p| p == i) {
                                row[a] = v;
                            }
                            if let Some(rgb) = layout.rgb {
                                if let Some(c) = rgb.iter().position(|&p| p == i) {
                                    rgb_row[c] = v;
                                }
                            }
                        }
                        vertices.push(Point3::new(row[0], row[1], row[2]));
                        if layout.rgb.is_some() {
                            colors.push([rgb_row[0] as u8, rgb_row[1] as u8, rgb_row[2] as u8]);
                        }
                    }
                } else {
                    for _ in 0..element.count {
                        for prop in &element.properties {
                            match prop {
                                Property::Scalar { ty, .. } => {
                                    read_scalar_binary(&mut cur, *ty, "element data")?;
                                }
                                Property::List { index_ty, .. } => {
                                    let off = cur.pos as u64;
                                    let count =
                                        cur.take(1, "face vertex count")?[0] as usize;
                                    let is_face = element.name == "face";
                                    if is_face && count != 3 {
                                        return Err(parse_err(
                                            off,
                                            format!("face with {count} vertices, expected 3"),
                                        ));
                                    }
                                    let mut idx = [0u32; 3];
                                    for k in 0..count {
                                        let off = cur.pos as u64;
                                        let v = read_scalar_binary(
                                            &mut cur,
                                            *index_ty,
                                            "face index",
                                        )?;
                                        if v < 0.0 || v >= vertices.len() as f64 {
                                            return Err(parse_err(
                                                off,
                                                format!(
                                                    "face index {v} out of range (0..{})",
                                                    vertices.len()
                                                ),
                                            ));
                                        }
                                        if k < 3 {
                                            idx[k] = v as u32;
                                        }
                                    }
                                    if is_face {
                                        faces.push(idx);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        PlyFormat::Ascii => {
            for element in &elements {
                for _ in 0..element.count {
                    let (off, line) = cur.line()?;
                    let mut tokens = line.split_ascii_whitespace();
                    if element.name == "vertex" {
                        let mut row = [0f64; 3];
                        let mut rgb_row = [0f64; 3];
                        for i in 0..layout.props.len() {
                            let tok = tokens.next().ok_or_else(|| {
                                parse_err(off, "vertex line has too few values")
                            })?;
                            let v: f64 = tok.parse().map_err(|_| {
                                parse_err(off, format!("invalid vertex value `{tok}`"))
                            })?;
                            if let Some(a) = layout.xyz.iter().position(|&p| p == i) {
                                row[a] = v;
                            }
                            if let Some(rgb) = layout.rgb {
                                if let Some(c) = rgb.iter().position(|&p| p == i) {
                                    rgb_row[c] = v;
                                }
                            }
                        }
                        vertices.push(Point3::new(row[0], row[1], row[2]));
                        if layout.rgb.is_some() {
                            colors.push([rgb_row[0] as u8, rgb_row[1] as u8, rgb_row[2] as u8]);
                        }
                    } else {
                        for prop in &element.properties {
                            match prop {
                                Property::Scalar { .. } => {
                                    tokens.next().ok_or_else(|| {
                                        parse_err(off, "element line has too few values")
                                    })?;
                                }
                                Property::List { .. } => {
                                    let count: usize = tokens
                                        .next()
                                        .and_then(|t| t.parse().ok())
                                        .ok_or_else(|| {
                                            parse_err(off, "missing face vertex count")
                                        })?;
                                    let is_face = element.name == "face";
                                    if is_face && count != 3 {
                                        return Err(parse_err(
                                            off,
                                            format!("face with {count} vertices, expected 3"),
                                        ));
                                    }
                                    let mut idx = [0u32; 3];
                                    for k in 0..count {
                                        let tok = tokens.next().ok_or_else(|| {
                                            parse_err(off, "face line has too few indices")
                                        })?;
                                        let v: i64 = tok.parse().map_err(|_| {
                                            parse_err(off, format!("invalid face index `{tok}`"))
                                        })?;
                                        if v < 0 || v >= vertices.len() as i64 {
                                            return Err(parse_err(
                                                off,
                                                format!(
                                                    "face index {v} out of range (0..{})",
                                                    vertices.len()
                                                ),
                                            ));
                                        }
                                        if k < 3 {
                                            idx[k] = v as u32;
                                        }
                                    }
                                    if is_face {
                                        faces.push(idx);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if vertices.len() != vertex_decl.count {
        return Err(parse_err(
            cur.pos as u64,
            format!(
                "vertex count mismatch: header says {}, payload has {}",
                vertex_decl.count,
                vertices.len()
            ),
        ));
    }

    SceneMesh::new(
        scene_id,
        vertices,
        if colors.is_empty() { None } else { Some(colors) },
        faces,
    )
}

/// Write a mesh as PLY. Positions are stored as float32 per the format.
pub fn save_scene(mesh: &SceneMesh, path: &Path, format: PlyFormat) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let fmt_line = match format {
        PlyFormat::Ascii => "format ascii 1.0",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0",
    };
    write!(
        out,
        "ply\n{fmt_line}\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        mesh.vertex_count()
    )?;
    if mesh.colors.is_some() {
        write!(
            out,
            "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        )?;
    }
    write!(
        out,
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.face_count()
    )?;

    match format {
        PlyFormat::Ascii => {
            for (i, p) in mesh.vertices.iter().enumerate() {
                write!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
                if let Some(colors) = &mesh.colors {
                    let [r, g, b] = colors[i];
                    write!(out, " {r} {g} {b}")?;
                }
                out.push(b'\n');
            }
            for f in &mesh.faces {
                writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in mesh.vertices.iter().enumerate() {
                out.extend_from_slice(&(p.x as f32).to_le_bytes());
                out.extend_from_slice(&(p.y as f32).to_le_bytes());
                out.extend_from_slice(&(p.z as f32).to_le_bytes());
                if let Some(colors) = &mesh.colors {
                    out.extend_from_slice(&colors[i]);
                }
            }
            for f in &mesh.faces {
                out.push(3u8);
                for &i in f {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TETRA_STRIP: &str = "ply\n\
format ascii 1.0\n\
comment strip of two triangles\n\
element vertex 4\n\
property float x\n\
property float y\n\
property float z\n\
element face 2\n\
property list uchar int vertex_indices\n\
end_header\n\
0 0 0\n\
1 0 0\n\
0 1 0\n\
1 1 0\n\
3 0 1 2\n\
3 1 3 2\n";

    #[test]
    fn parses_ascii_tetra_strip() {
        let mesh = parse_scene(TETRA_STRIP.as_bytes(), "strip".into()).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 2);
        assert_eq!(mesh.vertices[3], Point3::new(1.0, 1.0, 0.0));
        assert!(mesh.colors.is_none());
    }

    #[test]
    fn out_of_range_face_index_reports_offset() {
        let bad = TETRA_STRIP.replace("3 1 3 2", "3 1 9 2");
        let err = parse_scene(bad.as_bytes(), "bad".into()).unwrap_err();
        match err {
            Error::PlyParse { offset, message } => {
                assert!(message.contains("out of range"), "{message}");
                assert!(offset > 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_payload_reports_offset() {
        let mesh = parse_scene(TETRA_STRIP.as_bytes(), "strip".into()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("strip.ply");
        save_scene(&mesh, &path, PlyFormat::BinaryLittleEndian).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        let err = parse_scene(&bytes, "trunc".into()).unwrap_err();
        assert!(matches!(err, Error::PlyParse { .. }), "{err:?}");
    }

    #[test]
    fn malformed_header_reports_offset() {
        let err = parse_scene(b"ply\nformat big_endian 1.0\nend_header\n", "x".into())
            .unwrap_err();
        match err {
            Error::PlyParse { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn skips_unknown_vertex_properties() {
        let src = "ply\nformat ascii 1.0\nelement vertex 2\n\
property float x\nproperty float y\nproperty float z\n\
property float nx\nproperty float ny\nproperty float nz\n\
property uchar red\nproperty uchar green\nproperty uchar blue\n\
element face 0\nproperty list uchar int vertex_indices\nend_header\n\
0 0 0 1 0 0 10 20 30\n\
1 2 3 0 1 0 40 50 60\n";
        let mesh = parse_scene(src.as_bytes(), "n".into()).unwrap();
        assert_eq!(mesh.vertices[1], Point3::new(1.0, 2.0, 3.0));
        assert_eq!(mesh.colors.as_ref().unwrap()[1], [40, 50, 60]);
    }

    /// Round-trip oracle: random f32-exact meshes survive binary save/load
    /// bit for bit.
    #[test]
    fn binary_round_trip_is_bitwise_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = tempfile::tempdir().unwrap();
        for case in 0..5 {
            let n = rng.random_range(4..80);
            let vertices: Vec<Point3<f64>> = (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random::<f32>() as f64,
                        rng.random::<f32>() as f64,
                        rng.random::<f32>() as f64,
                    )
                })
                .collect();
            let colors: Vec<[u8; 3]> = (0..n).map(|_| rng.random()).collect();
            let faces: Vec<[u32; 3]> = (0..rng.random_range(1..2 * n))
                .map(|_| loop {
                    let f: [u32; 3] = [
                        rng.random_range(0..n as u32),
                        rng.random_range(0..n as u32),
                        rng.random_range(0..n as u32),
                    ];
                    if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                        break f;
                    }
                })
                .collect();
            let mesh =
                SceneMesh::new(format!("m{case}"), vertices, Some(colors), faces).unwrap();
            let path = dir.path().join(format!("m{case}.ply"));
            save_scene(&mesh, &path, PlyFormat::BinaryLittleEndian).unwrap();
            let reloaded = load_scene(&path).unwrap();
            assert_eq!(mesh.vertices, reloaded.vertices);
            assert_eq!(mesh.colors, reloaded.colors);
            assert_eq!(mesh.faces, reloaded.faces);
        }
    }
}
