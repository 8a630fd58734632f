//! ASCII OBJ and PLY mesh files.
//!
//! OBJ polygons are fan-triangulated. Vertex normals are taken from the file
//! when every vertex has one and computed from face areas otherwise.

use std::fmt::Write as _;
use std::path::Path;

use surgpose_core::{TriMesh, Vec3};

use crate::error::{read_to_string, write_file, Error, Result};

/// Source line and corner list of `(vertex, normal)` indices.
type Face = (usize, Vec<(usize, Option<usize>)>);

/// Loads an OBJ or PLY file, chosen by extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = read_to_string(path)?;
    match extension(path).as_deref() {
        Some("obj") => parse_obj(path, &text),
        Some("ply") => parse_ply(path, &text),
        _ => Err(Error::parse(path, 0, "unknown mesh extension, expected .obj or .ply")),
    }
}

pub fn save_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let text = match extension(path).as_deref() {
        Some("obj") => obj_string(mesh),
        Some("ply") => ply_string(mesh),
        _ => return Err(Error::Config(format!("{}: unknown mesh extension", path.display()))),
    };
    write_file(path, text.as_bytes())
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

fn parse_floats<const N: usize>(path: &Path, line: usize, fields: &[&str]) -> Result<[f64; N]> {
    if fields.len() < N {
        return Err(Error::parse(path, line, format!("expected {N} numbers, got {}", fields.len())));
    }
    let mut out = [0.0f64; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.parse().map_err(|_| Error::parse(path, line, format!("invalid number {f:?}")))?;
        if !o.is_finite() {
            return Err(Error::parse(path, line, format!("non-finite number {f:?}")));
        }
    }
    Ok(out)
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn obj_index(path: &Path, line: usize, s: &str, count: usize) -> Result<usize> {
    let i: i64 = s.parse().map_err(|_| Error::parse(path, line, format!("invalid index {s:?}")))?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || resolved < 0 || resolved >= count as i64 {
        return Err(Error::parse(path, line, format!("index {i} out of range for {count} elements")));
    }
    Ok(resolved as usize)
}

pub fn parse_obj(path: &Path, text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut file_normals = Vec::new();
    let mut faces: Vec<Face> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match tag {
            "v" => vertices.push(Vec3::from(parse_floats::<3>(path, line, &rest)?)),
            "vn" => file_normals.push(Vec3::from(parse_floats::<3>(path, line, &rest)?)),
            "f" => {
                if rest.len() < 3 {
                    return Err(Error::parse(path, line, "face needs at least 3 vertices"));
                }
                // v, v/vt, v//vn or v/vt/vn
                let corners = rest
                    .iter()
                    .map(|item| {
                        let mut parts = item.split('/');
                        let v = obj_index(path, line, parts.next().unwrap_or(""), vertices.len())?;
                        let _vt = parts.next();
                        let vn = match parts.next().filter(|s| !s.is_empty()) {
                            Some(s) => Some(obj_index(path, line, s, file_normals.len())?),
                            None => None,
                        };
                        Ok((v, vn))
                    })
                    .collect::<Result<Vec<_>>>()?;
                faces.push((line, corners));
            }
            _ => {}
        }
    }
    build_from_faces(path, vertices, &file_normals, &faces)
}

fn build_from_faces(
    path: &Path,
    vertices: Vec<Vec3>,
    file_normals: &[Vec3],
    faces: &[Face],
) -> Result<TriMesh> {
    let mut triangles = Vec::new();
    let mut assigned: Vec<Option<Vec3>> = vec![None; vertices.len()];
    let mut complete = true;
    for (_, corners) in faces {
        for &(v, vn) in corners {
            match vn {
                Some(k) => {
                    assigned[v].get_or_insert(file_normals[k]);
                }
                None => complete = false,
            }
        }
        for k in 1..corners.len() - 1 {
            triangles.push([corners[0].0 as u32, corners[k].0 as u32, corners[k + 1].0 as u32]);
        }
    }
    let normals = if complete && !file_normals.is_empty() {
        assigned.into_iter().collect::<Option<Vec<_>>>()
    } else {
        None
    };
    TriMesh::new(vertices, triangles, normals).map_err(|e| match e {
        surgpose_core::MeshError::InvalidNormal(i) => {
            let line = faces.iter().find(|(_, c)| c.iter().any(|(v, _)| *v == i)).map_or(0, |f| f.0);
            Error::parse(path, line, format!("vertex {} has a zero-length normal", i + 1))
        }
        other => other.into(),
    })
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    /// Scalar property names, or `None` for the one list property.
    properties: Vec<Option<String>>,
    list_name: Option<String>,
}

pub fn parse_ply(path: &Path, text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (line, l) in lines.by_ref() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(Error::parse(path, line, format!("unsupported PLY format {other:?}, only ascii"))),
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::parse(path, line, "invalid element count"))?,
                properties: Vec::new(),
                list_name: None,
            }),
            ["property", "list", _, _, name] => {
                let el = elements.last_mut().ok_or_else(|| Error::parse(path, line, "property before element"))?;
                el.properties.push(None);
                el.list_name = Some(name.to_string());
            }
            ["property", _, name] => {
                let el = elements.last_mut().ok_or_else(|| Error::parse(path, line, "property before element"))?;
                el.properties.push(Some(name.to_string()));
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(Error::parse(path, line, format!("unexpected header line {l:?}"))),
        }
    }
    if !header_done {
        return Err(Error::parse(path, 0, "missing end_header"));
    }

    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    let mut faces: Vec<Face> = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut last_line = 0;

    for el in &elements {
        let pos = |name: &str| el.properties.iter().position(|p| p.as_deref() == Some(name));
        let (ix, iy, iz) = (pos("x"), pos("y"), pos("z"));
        let (inx, iny, inz) = (pos("nx"), pos("ny"), pos("nz"));
        if el.name == "vertex" {
            has_normals = inx.is_some() && iny.is_some() && inz.is_some();
        }
        for _ in 0..el.count {
            let (line, l) = body.next().ok_or_else(|| Error::parse(path, last_line + 1, format!("unexpected end of file in element {}", el.name)))?;
            last_line = line;
            let f: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let (Some(ix), Some(iy), Some(iz)) = (ix, iy, iz) else {
                        return Err(Error::parse(path, line, "vertex element lacks x, y or z"));
                    };
                    if f.len() < el.properties.len() {
                        return Err(Error::parse(path, line, format!("expected {} values, got {}", el.properties.len(), f.len())));
                    }
                    let get = |i: usize| parse_floats::<1>(path, line, &f[i..=i]).map(|v| v[0]);
                    vertices.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
                    if has_normals {
                        normals.push(Vec3::new(get(inx.unwrap())?, get(iny.unwrap())?, get(inz.unwrap())?));
                    }
                }
                "face" => {
                    let n: usize = f.first().and_then(|s| s.parse().ok()).ok_or_else(|| Error::parse(path, line, "invalid face vertex count"))?;
                    if n < 3 || f.len() < n + 1 {
                        return Err(Error::parse(path, line, format!("face with {n} indices but {} values", f.len().saturating_sub(1))));
                    }
                    let corners = f[1..=n]
                        .iter()
                        .map(|s| {
                            let i: usize = s.parse().map_err(|_| Error::parse(path, line, format!("invalid index {s:?}")))?;
                            if i >= vertices.len() {
                                return Err(Error::parse(path, line, format!("index {i} out of range for {} vertices", vertices.len())));
                            }
                            Ok((i, has_normals.then_some(i)))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    faces.push((line, corners));
                }
                _ => {}
            }
        }
    }
    if !has_normals {
        normals.clear();
    }
    build_from_faces(path, vertices, &normals, &faces)
}

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for n in mesh.normals() {
        let _ = writeln!(s, "vn {:?} {:?} {:?}", n.x, n.y, n.z);
    }
    for t in mesh.triangles() {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    s
}

pub fn ply_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for (v, n) in mesh.vertices().iter().zip(mesh.normals()) {
        let _ = writeln!(s, "{:?} {:?} {:?} {:?} {:?} {:?}", v.x, v.y, v.z, n.x, n.y, n.z);
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    s
}
