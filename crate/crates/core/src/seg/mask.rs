use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::{Region2D, Segmenter};
use crate::{Error, Result};

/// Reads an 8-bit indexed or grayscale mask. Index 0 is unsegmented and
/// indices 1..K must all be present.
pub fn decode_mask(bytes: &[u8]) -> Result<(u32, u32, Vec<Region2D>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Image("mask too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight
        || !matches!(info.color_type, png::ColorType::Indexed | png::ColorType::Grayscale)
    {
        return Err(Error::UnsupportedFormat(format!(
            "mask must be 8-bit indexed or grayscale, got {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width, info.height);
    let mut by_index: BTreeMap<u8, Vec<(u32, u32)>> = BTreeMap::new();
    for v in 0..h {
        let row = &buf[v as usize * info.line_size..][..w as usize];
        for (u, &idx) in row.iter().enumerate() {
            if idx != 0 {
                by_index.entry(idx).or_default().push((u as u32, v));
            }
        }
    }
    let indices: Vec<u8> = by_index.keys().copied().collect();
    if indices.iter().enumerate().any(|(k, &i)| i as usize != k + 1) {
        return Err(Error::NonConsecutiveIndices(format!("{indices:?}")));
    }
    let regions = by_index
        .into_iter()
        .map(|(idx, px)| Region2D::new(idx as u32, px))
        .collect();
    Ok((w, h, regions))
}

pub fn ingest_masks(path: impl AsRef<Path>) -> Result<Vec<Region2D>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_mask(&bytes)?.2)
}

/// Writes regions as an 8-bit indexed PNG with index = mark id.
pub fn write_mask_png(regions: &[Region2D], width: u32, height: u32, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if regions.len() > 255 {
        return Err(Error::InvalidSpec(format!("{} regions do not fit an 8-bit mask", regions.len())));
    }
    let mut data = vec![0u8; width as usize * height as usize];
    for r in regions {
        if r.mark_id == 0 || r.mark_id > 255 {
            return Err(Error::InvalidSpec(format!("mark id {} outside 1..=255", r.mark_id)));
        }
        for &(u, v) in &r.pixels {
            if u >= width || v >= height {
                return Err(Error::InvalidSpec(format!("pixel ({u}, {v}) outside {width}x{height}")));
            }
            data[(v * width + u) as usize] = r.mark_id as u8;
        }
    }
    let mut palette = Vec::with_capacity(256 * 3);
    for i in 0..256u32 {
        let h = i.wrapping_mul(2654435761);
        palette.extend([(h >> 24) as u8, (h >> 16) as u8, (h >> 8) as u8]);
    }
    palette[..3].copy_from_slice(&[0, 0, 0]);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette);
    let mut writer = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
    writer.write_image_data(&data).map_err(|e| Error::Image(e.to_string()))?;
    writer.finish().map_err(|e| Error::Image(e.to_string()))?;
    Ok(())
}

/// Reads masks produced by an external segmenter, one file per image, in
/// call order.
pub struct MaskFileSegmenter {
    files: Vec<PathBuf>,
    next: std::sync::atomic::AtomicUsize,
}

impl MaskFileSegmenter {
    pub fn new(files: Vec<PathBuf>) -> Self {
        Self {
            files,
            next: std::sync::atomic::AtomicUsize::new(0),
        }
    }
}

impl Segmenter for MaskFileSegmenter {
    fn segment(&self, image: &RgbImage) -> Result<Vec<Region2D>> {
        let k = self.next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let path = self
            .files
            .get(k)
            .ok_or_else(|| Error::InvalidSpec(format!("no mask file for image {k}")))?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (w, h, regions) = decode_mask(&bytes)?;
        if (w, h) != image.dimensions() {
            return Err(Error::InvalidSpec(format!(
                "{}: mask is {w}x{h}, image is {}x{}",
                path.display(),
                image.width(),
                image.height()
            )));
        }
        Ok(regions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_png(w: u32, h: u32, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut wr = enc.write_header().unwrap();
        wr.write_image_data(data).unwrap();
        wr.finish().unwrap();
        out
    }

    #[test]
    fn consecutive_indices() {
        let (_, _, r) = decode_mask(&gray_png(3, 1, &[0, 1, 2])).unwrap();
        assert_eq!(r.len(), 2);
        assert!(matches!(
            decode_mask(&gray_png(3, 1, &[0, 1, 3])),
            Err(Error::NonConsecutiveIndices(_))
        ));
    }

    #[test]
    fn round_trip() {
        let img = RgbImage::from_fn(30, 20, |x, y| image::Rgb([(x / 10) as u8 * 80, (y / 10) as u8 * 120, 0]));
        let regions = super::super::builtin_segment(&img, 1, 8);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask_png(&regions, 30, 20, &p).unwrap();
        let back = ingest_masks(&p).unwrap();
        assert_eq!(back, regions);
    }
}
