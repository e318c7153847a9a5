use std::fs;
use std::path::Path;

use image::RgbImage;

use super::DepthImage;
use crate::{Error, Result};

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(image::open(path.as_ref())?.to_rgb8())
}

/// Single-channel little-endian PFM (scale -1.0), rows stored bottom to top.
/// Infinite depth is written as 0.0.
pub fn write_pfm(depth: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve((w * h * 4) as usize);
    for row in (0..h).rev() {
        for col in 0..w {
            let d = depth.get(col, row);
            let d = if d.is_finite() { d } else { 0.0 };
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads what [`write_pfm`] writes; 0.0 comes back as infinity.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PFM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(Error::UnsupportedFormat(format!("PFM type '{}'", fields[0])));
    }
    let parse = |s: &str| s.parse::<u32>().map_err(|_| Error::Parse(format!("bad PFM size '{s}'")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let scale: f32 = fields[3]
        .parse()
        .map_err(|_| Error::Parse(format!("bad PFM scale '{}'", fields[3])))?;
    let little = scale < 0.0;
    let need = (w as usize) * (h as usize) * 4;
    let body = bytes.get(pos..pos + need).ok_or_else(|| Error::Parse("truncated PFM data".into()))?;
    let mut depth = DepthImage::new(w, h);
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let d = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (col, row_from_bottom) = (i as u32 % w, i as u32 / w);
        depth.set(col, h - 1 - row_from_bottom, if d == 0.0 { f32::INFINITY } else { d });
    }
    Ok(depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_restores_infinity() {
        let mut d = DepthImage::new(3, 2);
        d.set(0, 0, 1.5);
        d.set(2, 1, 7.25);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        write_pfm(&d, &p).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(back, d);
        let raw = std::fs::read(&p).unwrap();
        assert!(raw.starts_with(b"Pf\n3 2\n-1.0\n"));
        // First stored row is the bottom row: (0,1) inf -> 0, (1,1) inf -> 0, (2,1) = 7.25.
        let body = &raw[b"Pf\n3 2\n-1.0\n".len()..];
        assert_eq!(&body[8..12], &7.25f32.to_le_bytes());
        assert_eq!(&body[0..4], &0f32.to_le_bytes());
    }
}
