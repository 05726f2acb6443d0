//! 8-bit RGB PNG in, 8-bit RGB PNG out.

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::image::Image;

fn img_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image { path: path.to_path_buf(), message: message.into() }
}

/// Quantize one channel: clamp to `[0, 1]`, then round half up.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor().min(255.0) as u8
}

/// Decode an 8-bit RGB (or RGBA, alpha dropped) PNG to `[0, 1]` floats.
pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| img_err(path, e.to_string()))?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    if info.bit_depth != BitDepth::Eight {
        return Err(img_err(path, format!("unsupported format: {:?}-bit PNG (only 8-bit RGB)", info.bit_depth as u8)));
    }
    let channels = match info.color_type {
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(img_err(path, format!("unsupported format: {other:?} PNG (only 8-bit RGB)"))),
    };
    let size = reader.output_buffer_size().ok_or_else(|| img_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| img_err(path, e.to_string()))?;
    let mut data = Vec::with_capacity(3 * width * height);
    for y in 0..height {
        let row = &buf[y * frame.line_size..];
        for x in 0..width {
            for c in 0..3 {
                data.push(row[x * channels + c] as f64 / 255.0);
            }
        }
    }
    Image::from_data(width, height, data)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    let err = |e: png::EncodingError| Error::InvalidInput(format!("PNG encoding failed: {e}"));
    let mut writer = enc.write_header().map_err(err)?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    writer.write_image_data(&bytes).map_err(err)?;
    writer.finish().map_err(err)?;
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| img_err(path, e.to_string()))?;
    decode_png(&bytes, path)
}

pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| img_err(path, e.to_string()))
}
