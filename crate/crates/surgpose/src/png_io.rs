//! Lossless PNG encoding and decoding for RGB, 16-bit depth and binary masks.
//!
//! Encoder settings are fixed so that identical buffers always produce
//! identical files.

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Compression, Decoder, Encoder, Filter};

use crate::error::{write_file, Error, Result};

fn encode(width: u32, height: u32, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.set_compression(Compression::Fast);
        enc.set_filter(Filter::Sub);
        let mut writer = enc.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Png { path: path.to_path_buf(), message: e.to_string() }
}

pub fn encode_rgb8(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    encode(width, height, ColorType::Rgb, BitDepth::Eight, rgb).map_err(|e| png_err(Path::new("<memory>"), e))
}

pub fn encode_gray8(width: u32, height: u32, data: &[u8]) -> Result<Vec<u8>> {
    encode(width, height, ColorType::Grayscale, BitDepth::Eight, data).map_err(|e| png_err(Path::new("<memory>"), e))
}

pub fn encode_gray16(width: u32, height: u32, data: &[u16]) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(width, height, ColorType::Grayscale, BitDepth::Sixteen, &bytes).map_err(|e| png_err(Path::new("<memory>"), e))
}

pub fn write_rgb8(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    write_file(path, &encode_rgb8(width, height, rgb)?)
}

pub fn write_gray8(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<()> {
    write_file(path, &encode_gray8(width, height, data)?)
}

pub fn write_gray16(path: &Path, width: u32, height: u32, data: &[u16]) -> Result<()> {
    write_file(path, &encode_gray16(width, height, data)?)
}

/// A decoded image with samples widened to `u16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub bit_depth: u8,
    pub samples: Vec<u16>,
}

pub fn decode(bytes: &[u8]) -> Result<Image, String> {
    let decoder = Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err("indexed PNGs are not supported".into()),
    };
    let buf = &buf[..info.buffer_size()];
    let samples = match info.bit_depth {
        BitDepth::Eight => buf.iter().map(|b| *b as u16).collect(),
        BitDepth::Sixteen => buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
        other => return Err(format!("unsupported bit depth {other:?}")),
    };
    Ok(Image { width: info.width, height: info.height, channels, bit_depth: info.bit_depth as u8, samples })
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| png_err(path, m))
}

/// Reads an 8-bit image with the expected channel count.
pub fn read_u8(path: &Path, channels: usize) -> Result<(u32, u32, Vec<u8>)> {
    let img = read(path)?;
    if img.bit_depth != 8 || img.channels != channels {
        return Err(png_err(path, format!("expected {channels}-channel 8-bit, got {}-channel {}-bit", img.channels, img.bit_depth)));
    }
    Ok((img.width, img.height, img.samples.into_iter().map(|v| v as u8).collect()))
}

pub fn read_gray16(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = read(path)?;
    if img.bit_depth != 16 || img.channels != 1 {
        return Err(png_err(path, format!("expected 16-bit grayscale, got {}-channel {}-bit", img.channels, img.bit_depth)));
    }
    Ok((img.width, img.height, img.samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let rgb: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7) as u8).collect();
        let img = decode(&encode_rgb8(4, 3, &rgb).unwrap()).unwrap();
        assert_eq!((img.width, img.height, img.channels), (4, 3, 3));
        assert_eq!(img.samples.iter().map(|v| *v as u8).collect::<Vec<_>>(), rgb);

        let depth: Vec<u16> = vec![0, 1, 1234, 65535, 300, 7];
        let img = decode(&encode_gray16(3, 2, &depth).unwrap()).unwrap();
        assert_eq!(img.samples, depth);
        assert_eq!(img.bit_depth, 16);
    }

    #[test]
    fn encoding_is_stable() {
        let data = vec![255u8; 64];
        assert_eq!(encode_gray8(8, 8, &data).unwrap(), encode_gray8(8, 8, &data).unwrap());
    }
}
