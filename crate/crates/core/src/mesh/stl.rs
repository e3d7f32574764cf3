//! STL files. ASCII follows the usual listing with two-blank indentation;
//! binary is an 80-byte header, a little-endian `u32` facet count and 50
//! bytes per facet (12 `f32` then a zero `u16` attribute).

use std::path::Path;

use super::{validate, Facet, TriangleMesh};
use crate::error::{invalid, Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlFormat {
    Ascii,
    Binary,
}

impl std::str::FromStr for StlFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ascii" | "text" => Ok(StlFormat::Ascii),
            "binary" | "bin" => Ok(StlFormat::Binary),
            _ => Err(Error::Parse(format!("unknown STL format '{s}'"))),
        }
    }
}

/// Shortest text that reads back as the same `f32`.
fn num(v: f64) -> String {
    format!("{:e}", v as f32)
}

pub fn encode_ascii(mesh: &TriangleMesh) -> String {
    let name = if mesh.name.is_empty() { "mesh" } else { mesh.name.as_str() };
    let mut s = String::with_capacity(64 + 200 * mesh.facets.len());
    s.push_str(&format!("solid {name}\n"));
    for f in &mesh.facets {
        let n = f.normal;
        s.push_str(&format!("  facet normal {} {} {}\n", num(n.x), num(n.y), num(n.z)));
        s.push_str("    outer loop\n");
        for v in &f.vertices {
            s.push_str(&format!("      vertex {} {} {}\n", num(v.x), num(v.y), num(v.z)));
        }
        s.push_str("    endloop\n");
        s.push_str("  endfacet\n");
    }
    s.push_str(&format!("endsolid {name}\n"));
    s
}

pub fn encode_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.facets.len());
    let mut header = [b' '; 80];
    let name = mesh.name.as_bytes();
    let len = name.len().min(80);
    header[..len].copy_from_slice(&name[..len]);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.facets.len() as u32).to_le_bytes());
    for f in &mesh.facets {
        for v in std::iter::once(&f.normal).chain(&f.vertices) {
            for c in [v.x, v.y, v.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

/// Writes after validation; a mesh with any defect is refused with the
/// itemized report.
pub fn write_stl(mesh: &TriangleMesh, path: impl AsRef<Path>, format: StlFormat) -> Result<()> {
    let report = validate(mesh);
    if !report.is_valid() {
        return invalid(format!("mesh fails validation:\n{report}"));
    }
    let bytes = match format {
        StlFormat::Ascii => encode_ascii(mesh).into_bytes(),
        StlFormat::Binary => encode_binary(mesh),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_stl(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    decode_stl(&crate::error::read_file(path.as_ref())?)
}

/// Binary when the length matches the facet count in the header, ASCII otherwise.
pub fn decode_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    if bytes.len() >= 84 {
        let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * count {
            return Ok(decode_binary(bytes, count));
        }
    }
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse("STL is neither binary nor UTF-8 text".into()))?;
    decode_ascii(text)
}

fn decode_binary(bytes: &[u8], count: usize) -> TriangleMesh {
    let name = String::from_utf8_lossy(&bytes[..80]).trim_end_matches([' ', '\0']).to_string();
    let f32_at = |o: usize| f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64;
    let vec_at = |o: usize| Vec3::new(f32_at(o), f32_at(o + 4), f32_at(o + 8));
    let facets = (0..count)
        .map(|k| {
            let o = 84 + 50 * k;
            Facet { normal: vec_at(o), vertices: [vec_at(o + 12), vec_at(o + 24), vec_at(o + 36)] }
        })
        .collect();
    TriangleMesh { name, facets }
}

fn decode_ascii(text: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let err = |line: usize, msg: String| Error::Parse(format!("STL line {line}: {msg}"));
    let (line, first) = lines.next().ok_or_else(|| Error::Parse("empty STL file".into()))?;
    let name = first
        .strip_prefix("solid")
        .ok_or_else(|| err(line, format!("expected 'solid', found '{first}'")))?
        .trim()
        .to_string();

    // Parsed at f32, the precision of the format, so text and binary agree.
    let numbers = |line: usize, rest: &str, what: &str| -> Result<Vec3> {
        let v: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f32>().map(f64::from).map_err(|_| err(line, format!("bad number '{t}' in {what}"))))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(err(line, format!("{what} needs 3 numbers, found {}", v.len())));
        }
        Ok(Vec3::new(v[0], v[1], v[2]))
    };
    let mut expect = |word: &str| -> Result<(usize, String)> {
        let (line, l) = lines.next().ok_or_else(|| Error::Parse(format!("STL ends before '{word}'")))?;
        match l.strip_prefix(word) {
            Some(rest) if rest.is_empty() || rest.starts_with(char::is_whitespace) => Ok((line, rest.trim().to_string())),
            _ => Err(err(line, format!("expected '{word}', found '{l}'"))),
        }
    };

    let mut facets = Vec::new();
    loop {
        let (line, rest) = match expect("facet") {
            Ok(x) => x,
            Err(Error::Parse(msg)) if msg.contains("found 'endsolid") => break,
            Err(e) => return Err(e),
        };
        let normal_text = rest
            .strip_prefix("normal")
            .ok_or_else(|| err(line, "expected 'facet normal'".into()))?;
        let normal = numbers(line, normal_text, "normal")?;
        expect("outer loop")?;
        let mut vertices = [Vec3::ZERO; 3];
        for v in &mut vertices {
            let (line, rest) = expect("vertex")?;
            *v = numbers(line, &rest, "vertex")?;
        }
        expect("endloop")?;
        expect("endfacet")?;
        facets.push(Facet { vertices, normal });
    }
    Ok(TriangleMesh { name, facets })
}
