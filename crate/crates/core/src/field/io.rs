//! PGM images and raw 3D field dumps.
//!
//! PGM row `r`, column `c` maps to node `(c, r)` of a unit-spacing grid with
//! origin 0, and grey levels `0..=maxval` map linearly onto `[0, 1]`.
//!
//! A raw dump is a headerless little-endian `f64` array (first index fastest)
//! plus a sidecar `<path>.hdr` of `key = value` lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Grid2D, Grid3D, ScalarField2D, ScalarField3D};
use crate::error::{read_file, read_text, Error, Result};

/// PGM encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// `P2`, whitespace-separated decimal samples.
    Ascii,
    /// `P5`, one or two bytes per sample.
    Binary,
}

fn perr<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

/// Reads a P2 or P5 greyscale image as a field on a unit-spacing grid.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<ScalarField2D> {
    parse_pgm(&read_file(path.as_ref())?)
}

pub(crate) fn parse_pgm(bytes: &[u8]) -> Result<ScalarField2D> {
    let mut pos = 0usize;
    // Header tokens, skipping whitespace and `#` comments.
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return perr("unexpected end of PGM header");
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let num = |s: String| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM number '{s}'")));
    let w = num(token(&mut pos)?)?;
    let h = num(token(&mut pos)?)?;
    let maxval = num(token(&mut pos)?)?;
    if w < 2 || h < 2 {
        return perr(format!("PGM must be at least 2x2, got {w}x{h}"));
    }
    if maxval == 0 || maxval > 65535 {
        return perr(format!("PGM maxval {maxval} out of range"));
    }
    let n = w * h;
    let mut values = Vec::with_capacity(n);
    match magic.as_str() {
        "P2" => {
            for _ in 0..n {
                let v = num(token(&mut pos)?)?;
                if v > maxval {
                    return perr(format!("PGM sample {v} exceeds maxval {maxval}"));
                }
                values.push(v as f64 / maxval as f64);
            }
        }
        "P5" => {
            pos += 1; // single whitespace after maxval
            let bps = if maxval < 256 { 1 } else { 2 };
            let data = bytes.get(pos..pos + n * bps).ok_or_else(|| Error::Parse("truncated P5 raster".into()))?;
            for k in 0..n {
                let v = if bps == 1 {
                    data[k] as usize
                } else {
                    ((data[2 * k] as usize) << 8) | data[2 * k + 1] as usize
                };
                if v > maxval {
                    return perr(format!("PGM sample {v} exceeds maxval {maxval}"));
                }
                values.push(v as f64 / maxval as f64);
            }
        }
        other => return perr(format!("not a PGM file (magic '{other}')")),
    }
    let grid = Grid2D::new([0.0, 0.0], [1.0, 1.0], [w, h])?;
    ScalarField2D::new(grid, values)
}

/// Writes the field as a greyscale image, clamping values into `[0, 1]`.
pub fn write_pgm(field: &ScalarField2D, path: impl AsRef<Path>, format: PgmFormat, maxval: u16) -> Result<()> {
    fs::write(path, encode_pgm(field, format, maxval)?)?;
    Ok(())
}

pub(crate) fn encode_pgm(field: &ScalarField2D, format: PgmFormat, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::InvalidInput("PGM maxval must be positive".into()));
    }
    let [w, h] = field.grid.dims;
    let m = maxval as f64;
    let q = |v: f64| (v.clamp(0.0, 1.0) * m).round() as u16;
    let mut out = Vec::new();
    match format {
        PgmFormat::Ascii => {
            writeln!(out, "P2\n{w} {h}\n{maxval}")?;
            for j in 0..h {
                let row: Vec<String> = (0..w).map(|i| q(field.get(i, j)).to_string()).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        PgmFormat::Binary => {
            write!(out, "P5\n{w} {h}\n{maxval}\n")?;
            for v in &field.values {
                let s = q(*v);
                if maxval < 256 {
                    out.push(s as u8);
                } else {
                    out.extend_from_slice(&s.to_be_bytes());
                }
            }
        }
    }
    Ok(out)
}

/// Writes one line per grid row, values comma-separated in shortest
/// round-trip form.
pub fn write_csv(field: &ScalarField2D, path: impl AsRef<Path>) -> Result<()> {
    let [w, h] = field.grid.dims;
    let mut out = String::new();
    for j in 0..h {
        let row: Vec<String> = (0..w).map(|i| field.get(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a file written by [`write_csv`] onto a unit-spacing grid.
pub fn read_csv(path: impl AsRef<Path>) -> Result<ScalarField2D> {
    parse_csv(&read_text(path.as_ref())?)
}

pub(crate) fn parse_csv(text: &str) -> Result<ScalarField2D> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad number '{}'", r + 1, s.trim()))))
            .collect::<Result<Vec<f64>>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return perr(format!("row {} has {} values, expected {}", r + 1, row.len(), width.unwrap_or(0)));
        }
        values.extend(row);
        rows += 1;
    }
    let Some(w) = width else {
        return perr("empty CSV");
    };
    ScalarField2D::new(Grid2D::new([0.0, 0.0], [1.0, 1.0], [w, rows])?, values)
}

fn header_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    s.into()
}

/// Writes `field` as raw little-endian `f64` plus a `.hdr` sidecar.
pub fn write_raw3(field: &ScalarField3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let g = &field.grid;
    let mut data = Vec::with_capacity(8 * field.values.len());
    for v in &field.values {
        data.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, data)?;
    let hdr = format!(
        "dims = {} {} {}\norigin = {} {} {}\nspacing = {} {} {}\ndtype = f64le\norder = x-fastest\n",
        g.dims[0], g.dims[1], g.dims[2], g.origin[0], g.origin[1], g.origin[2], g.spacing[0], g.spacing[1], g.spacing[2]
    );
    fs::write(header_path(path), hdr)?;
    Ok(())
}

/// Reads a field written by [`write_raw3`].
pub fn read_raw3(path: impl AsRef<Path>) -> Result<ScalarField3D> {
    let path = path.as_ref();
    let hdr = read_text(&header_path(path))?;
    let mut dims = None;
    let mut origin = None;
    let mut spacing = None;
    for line in hdr.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let nums: Vec<&str> = v.split_whitespace().collect();
        let f3 = || -> Result<[f64; 3]> {
            let p: Vec<f64> = nums.iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("bad header line '{line}'")))?;
            p.try_into().map_err(|_| Error::Parse(format!("expected 3 numbers in '{line}'")))
        };
        match k.trim() {
            "dims" => dims = Some(f3()?.map(|x| x as usize)),
            "origin" => origin = Some(f3()?),
            "spacing" => spacing = Some(f3()?),
            "dtype" if v.trim() != "f64le" => return perr(format!("unsupported dtype '{}'", v.trim())),
            _ => {}
        }
    }
    let (Some(dims), Some(origin), Some(spacing)) = (dims, origin, spacing) else {
        return perr("raw header missing dims/origin/spacing");
    };
    let grid = Grid3D::new(origin, spacing, dims)?;
    let data = read_file(path)?;
    if data.len() != 8 * grid.len() {
        return perr(format!("raw file has {} bytes, expected {}", data.len(), 8 * grid.len()));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField3D::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ScalarField2D {
        let g = Grid2D::new([0.0, 0.0], [1.0, 1.0], [4, 3]).unwrap();
        ScalarField2D::from_fn(g, |x, y| (x + 4.0 * y) / 11.0)
    }

    #[test]
    fn pgm_roundtrip_both_formats() {
        for fmt in [PgmFormat::Ascii, PgmFormat::Binary] {
            for maxval in [255u16, 65535] {
                let f = ramp();
                let back = parse_pgm(&encode_pgm(&f, fmt, maxval).unwrap()).unwrap();
                assert_eq!(back.grid.dims, [4, 3]);
                assert!(f.max_abs_diff(&back, |_| true) <= 0.5 / maxval as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let f = parse_pgm(b"P2\n# made by hand\n2 2\n# max\n10\n0 5\n10 10\n").unwrap();
        assert_eq!(f.values, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(parse_pgm(b"P6\n2 2\n255\n").is_err());
        assert!(parse_pgm(b"P2\n2 2\n10\n0 5 11 1\n").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let f = ramp().map(|v| v / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_csv(&f, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.grid.dims, f.grid.dims);
        assert!(parse_csv("1,2\n3\n").is_err());
        assert!(parse_csv("1,x\n").is_err());
        assert!(parse_csv("").is_err());
    }

    #[test]
    fn raw3_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid3D::new([-1.0, 0.5, 2.0], [0.25, 0.5, 0.125], [3, 4, 5]).unwrap();
        let f = ScalarField3D::from_fn(g, |p| p[0].sin() * p[1] - p[2]);
        let p = dir.path().join("f.raw");
        write_raw3(&f, &p).unwrap();
        let back = read_raw3(&p).unwrap();
        assert_eq!(back, f);
    }
}
