//! PLY reader/writer for colored meshes and labelled point clouds.
//!
//! Reads `ascii 1.0` and `binary_little_endian 1.0`. Unknown elements and
//! properties are skipped. Polygons with more than three corners are fan
//! triangulated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::{LabeledPointCloud, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
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
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Parse(format!("unknown property type '{other}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    /// One row per element instance; list properties are flattened into `lists`.
    scalars: Vec<Vec<f64>>,
    lists: Vec<Vec<Vec<f64>>>,
}

struct PlyFile {
    comments: Vec<String>,
    elements: Vec<Element>,
}

impl PlyFile {
    fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

impl Element {
    fn scalar_index(&self, name: &str) -> Option<usize> {
        self.props
            .iter()
            .filter(|p| matches!(p.kind, PropKind::Scalar(_)))
            .position(|p| p.name == name)
    }

    fn list_index(&self, names: &[&str]) -> Option<usize> {
        self.props
            .iter()
            .filter(|p| matches!(p.kind, PropKind::List { .. }))
            .position(|p| names.contains(&p.name.as_str()))
    }
}

fn parse_ply(bytes: &[u8]) -> Result<PlyFile> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<String> {
        let rest = &bytes[*pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("unterminated header".into()))?;
        *pos += end + 1;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::Parse("header is not utf-8".into()))?;
        Ok(line.trim_end_matches('\r').to_string())
    };

    if next_line(&mut pos)?.trim() != "ply" {
        return Err(Error::Parse("missing 'ply' magic".into()));
    }
    let mut binary = None;
    let mut comments = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line(&mut pos)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                binary = Some(match words.next() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    Some(other) => return Err(Error::UnsupportedFormat(format!("PLY format '{other}'"))),
                    None => return Err(Error::Parse("format line without a format".into())),
                });
            }
            Some("comment") | Some("obj_info") => {
                comments.push(line.split_once(char::is_whitespace).map_or("", |x| x.1).trim().to_string());
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| Error::Parse("element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("bad count for element '{name}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    scalars: Vec::new(),
                    lists: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Parse("property before any element".into()))?;
                let words: Vec<&str> = words.collect();
                let prop = match words.as_slice() {
                    ["list", count, item, name] => Property {
                        name: name.to_string(),
                        kind: PropKind::List {
                            count: Scalar::parse(count)?,
                            item: Scalar::parse(item)?,
                        },
                    },
                    [ty, name] => Property {
                        name: name.to_string(),
                        kind: PropKind::Scalar(Scalar::parse(ty)?),
                    },
                    _ => return Err(Error::Parse(format!("malformed property line '{line}'"))),
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Parse(format!("unexpected header keyword '{other}'"))),
            None => {}
        }
    }
    let binary = binary.ok_or_else(|| Error::Parse("missing format line".into()))?;
    let body = &bytes[pos..];
    if binary {
        read_binary(body, &mut elements)?;
    } else {
        read_ascii(body, &mut elements)?;
    }
    Ok(PlyFile { comments, elements })
}

fn read_ascii(body: &[u8], elements: &mut [Element]) -> Result<()> {
    let text = std::str::from_utf8(body).map_err(|_| Error::Parse("ascii body is not utf-8".into()))?;
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<f64> {
        let t = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of data reading {what}")))?;
        t.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number '{t}' in {what}")))
    };
    for el in elements.iter_mut() {
        for _ in 0..el.count {
            let mut row = Vec::new();
            let mut lists = Vec::new();
            for p in &el.props {
                match p.kind {
                    PropKind::Scalar(_) => row.push(next(&p.name)?),
                    PropKind::List { .. } => {
                        let n = next(&p.name)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(Error::Parse(format!("bad list length {n} in {}", p.name)));
                        }
                        let items = (0..n as usize).map(|_| next(&p.name)).collect::<Result<Vec<_>>>()?;
                        lists.push(items);
                    }
                }
            }
            el.scalars.push(row);
            el.lists.push(lists);
        }
    }
    Ok(())
}

fn read_binary(body: &[u8], elements: &mut [Element]) -> Result<()> {
    let mut pos = 0usize;
    let mut take = |ty: Scalar, what: &str| -> Result<f64> {
        let n = ty.size();
        if pos + n > body.len() {
            return Err(Error::Parse(format!("unexpected end of data reading {what}")));
        }
        let v = ty.read_le(&body[pos..pos + n]);
        pos += n;
        Ok(v)
    };
    for el in elements.iter_mut() {
        for _ in 0..el.count {
            let mut row = Vec::new();
            let mut lists = Vec::new();
            for p in &el.props {
                match p.kind {
                    PropKind::Scalar(ty) => row.push(take(ty, &p.name)?),
                    PropKind::List { count, item } => {
                        let n = take(count, &p.name)?;
                        if n < 0.0 {
                            return Err(Error::Parse(format!("negative list length in {}", p.name)));
                        }
                        let items = (0..n as usize).map(|_| take(item, &p.name)).collect::<Result<Vec<_>>>()?;
                        lists.push(items);
                    }
                }
            }
            el.scalars.push(row);
            el.lists.push(lists);
        }
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<PlyFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

fn xyz(el: &Element) -> Result<Vec<Point3<f64>>> {
    let idx: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|n| {
            el.scalar_index(n)
                .ok_or_else(|| Error::UnsupportedFormat(format!("vertex element lacks '{n}'")))
        })
        .collect::<Result<_>>()?;
    Ok(el
        .scalars
        .iter()
        .map(|r| Point3::new(r[idx[0]], r[idx[1]], r[idx[2]]))
        .collect())
}

/// Loads a colored triangle mesh. Vertex order is preserved.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let ply = read_file(path.as_ref())?;
    mesh_from_ply(&ply)
}

fn mesh_from_ply(ply: &PlyFile) -> Result<TriangleMesh> {
    let verts = ply
        .element("vertex")
        .ok_or_else(|| Error::UnsupportedFormat("no vertex element".into()))?;
    let vertices = xyz(verts)?;
    let cidx: Vec<usize> = ["red", "green", "blue"]
        .iter()
        .map(|n| {
            verts
                .scalar_index(n)
                .ok_or_else(|| Error::UnsupportedFormat(format!("vertex element lacks '{n}'")))
        })
        .collect::<Result<_>>()?;
    let colors = verts
        .scalars
        .iter()
        .map(|r| {
            let mut c = [0u8; 3];
            for (k, &i) in cidx.iter().enumerate() {
                let v = r[i];
                if !(0.0..=255.0).contains(&v) {
                    return Err(Error::Parse(format!("color component {v} outside 0..=255")));
                }
                c[k] = v as u8;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;

    let face_el = ply
        .element("face")
        .ok_or_else(|| Error::UnsupportedFormat("no face element".into()))?;
    let li = face_el
        .list_index(&["vertex_indices", "vertex_index"])
        .ok_or_else(|| Error::UnsupportedFormat("face element lacks vertex_indices".into()))?;
    let n = vertices.len();
    let mut faces = Vec::with_capacity(face_el.count);
    let mut dropped = 0usize;
    for (k, lists) in face_el.lists.iter().enumerate() {
        let poly = &lists[li];
        if poly.len() < 3 {
            return Err(Error::Parse(format!("face {k} has {} corners", poly.len())));
        }
        let mut ids = Vec::with_capacity(poly.len());
        for &v in poly {
            if v < 0.0 || v.fract() != 0.0 || v as usize >= n {
                return Err(Error::Parse(format!("face {k} references vertex {v} of {n}")));
            }
            ids.push(v as u32);
        }
        for t in 1..ids.len() - 1 {
            let f = [ids[0], ids[t], ids[t + 1]];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                dropped += 1;
                continue;
            }
            faces.push(f);
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} degenerate faces");
    }
    TriangleMesh::new(vertices, colors, faces).map_err(|e| Error::Parse(e.to_string()))
}

fn push_header(out: &mut String, encoding: PlyEncoding, comments: &[String]) {
    out.push_str("ply\n");
    out.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for c in comments {
        let _ = writeln!(out, "comment {c}");
    }
}

/// Writes the mesh with double-precision coordinates so a reload is exact.
pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    let mut header = String::new();
    push_header(&mut header, encoding, &["agent3d mesh".to_string()]);
    let _ = writeln!(header, "element vertex {}", mesh.vertices().len());
    header.push_str(
        "property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n",
    );
    let _ = writeln!(header, "element face {}", mesh.faces().len());
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let mut bytes = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for (v, c) in mesh.vertices().iter().zip(mesh.vertex_colors()) {
                let _ = writeln!(body, "{} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]);
            }
            for f in mesh.faces() {
                let _ = writeln!(body, "3 {} {} {}", f[0], f[1], f[2]);
            }
            bytes.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for (v, c) in mesh.vertices().iter().zip(mesh.vertex_colors()) {
                for a in 0..3 {
                    bytes.extend_from_slice(&v[a].to_le_bytes());
                }
                bytes.extend_from_slice(c);
            }
            for f in mesh.faces() {
                bytes.push(3);
                for &i in f {
                    bytes.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes points with a `ushort label` property. Class names travel as
/// `comment class <id> <name>` header lines.
pub fn save_labeled_cloud(path: impl AsRef<Path>, cloud: &LabeledPointCloud, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    if cloud.num_classes() >= u16::MAX as usize {
        return Err(Error::InvalidSpec("too many classes for a ushort label".into()));
    }
    let comments: Vec<String> = cloud
        .class_names()
        .iter()
        .enumerate()
        .map(|(i, n)| format!("class {i} {n}"))
        .collect();
    let mut header = String::new();
    push_header(&mut header, encoding, &comments);
    let _ = writeln!(header, "element vertex {}", cloud.len());
    header.push_str("property double x\nproperty double y\nproperty double z\nproperty ushort label\nend_header\n");
    let mut bytes = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for (p, l) in cloud.points().iter().zip(cloud.labels()) {
                let _ = writeln!(body, "{} {} {} {}", p.x, p.y, p.z, l);
            }
            bytes.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for (p, &l) in cloud.points().iter().zip(cloud.labels()) {
                for a in 0..3 {
                    bytes.extend_from_slice(&p[a].to_le_bytes());
                }
                bytes.extend_from_slice(&(l as u16).to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_labeled_cloud(path: impl AsRef<Path>) -> Result<LabeledPointCloud> {
    let ply = read_file(path.as_ref())?;
    let verts = ply
        .element("vertex")
        .ok_or_else(|| Error::UnsupportedFormat("no vertex element".into()))?;
    let points = xyz(verts)?;
    let li = verts
        .scalar_index("label")
        .ok_or_else(|| Error::UnsupportedFormat("vertex element lacks 'label'".into()))?;
    let labels: Vec<u32> = verts.scalars.iter().map(|r| r[li] as u32).collect();

    let mut names: Vec<(usize, String)> = Vec::new();
    for c in &ply.comments {
        let mut parts = c.splitn(3, ' ');
        if parts.next() != Some("class") {
            continue;
        }
        let id = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("bad class comment '{c}'")))?;
        names.push((id, parts.next().unwrap_or("").to_string()));
    }
    names.sort_by_key(|(i, _)| *i);
    if names.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(Error::Parse("class comments are not numbered 0..C-1".into()));
    }
    let class_names = names.into_iter().map(|(_, n)| n).collect();
    LabeledPointCloud::new(points, labels, class_names).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: &str = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
0 0 0 255 0 1\n1 0 0 2 254 3\n0 1 0.5 7 8 9\n3 0 1 2\n";

    #[test]
    fn single_triangle_ascii() {
        let m = mesh_from_ply(&parse_ply(TRI.as_bytes()).unwrap()).unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert_eq!(m.vertex_colors(), &[[255, 0, 1], [2, 254, 3], [7, 8, 9]]);
        assert_eq!(m.vertices()[2], Point3::new(0.0, 1.0, 0.5));
    }

    #[test]
    fn out_of_range_face_is_parse_error() {
        let bad = TRI.replace("3 0 1 2", "3 0 1 99");
        let err = mesh_from_ply(&parse_ply(bad.as_bytes()).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err:?}");
    }

    #[test]
    fn missing_color_is_unsupported() {
        let bad = TRI
            .replace("property uchar red\nproperty uchar green\nproperty uchar blue\n", "")
            .replace(" 255 0 1", "")
            .replace(" 2 254 3", "")
            .replace(" 7 8 9", "");
        let err = mesh_from_ply(&parse_ply(bad.as_bytes()).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)), "{err:?}");
    }

    #[test]
    fn missing_faces_is_unsupported() {
        let bad = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 1 2 3\n";
        let err = mesh_from_ply(&parse_ply(bad.as_bytes()).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn truncated_body_and_bad_header() {
        let short = TRI.replace("3 0 1 2\n", "");
        assert!(matches!(parse_ply(short.as_bytes()), Err(Error::Parse(_))));
        let bad_count = TRI.replace("element vertex 3", "element vertex three");
        assert!(matches!(parse_ply(bad_count.as_bytes()), Err(Error::Parse(_))));
        let be = TRI.replace("ascii", "binary_big_endian");
        assert!(matches!(parse_ply(be.as_bytes()), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn quads_are_fan_triangulated_and_extra_props_skipped() {
        let quad = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
property float nx\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nproperty uchar alpha\n\
element face 1\nproperty list uchar int vertex_indices\nproperty uchar flags\nend_header\n\
0 0 0 9 1 1 1 255\n1 0 0 9 1 1 1 255\n1 1 0 9 1 1 1 255\n0 1 0 9 1 1 1 255\n4 0 1 2 3 7\n";
        let m = mesh_from_ply(&parse_ply(quad.as_bytes()).unwrap()).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }
}
