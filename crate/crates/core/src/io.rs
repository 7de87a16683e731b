//! Grayscale image I/O: binary PGM (P5, maxval 255) read/write, bit-exact,
//! plus optional 8-bit grayscale PNG reading.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Reads an image, dispatching on file content (PGM magic or PNG signature).
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    #[cfg(feature = "png")]
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        return decode_png(&bytes);
    }
    Err(Error::UnsupportedFormat(format!(
        "{} is neither binary PGM nor supported PNG",
        path.display()
    )))
}

/// Writes a binary PGM (P5, maxval 255). Samples are clamped and quantized
/// with round-half-up.
pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    w.write_all(&img.to_bytes())?;
    w.flush()?;
    Ok(())
}

/// Decodes a binary PGM from memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = 2; // past "P5"
    let width = parse_pgm_int(bytes, &mut cursor)?;
    let height = parse_pgm_int(bytes, &mut cursor)?;
    let maxval = parse_pgm_int(bytes, &mut cursor)?;
    if maxval != 255 {
        return Err(Error::PgmFormat(format!("maxval {maxval}, only 255 supported")));
    }
    // exactly one whitespace byte separates the header from raster data
    match bytes.get(cursor) {
        Some(b) if b.is_ascii_whitespace() => cursor += 1,
        _ => return Err(Error::PgmFormat("missing raster separator".into())),
    }
    let expected = height * width;
    let raster = bytes
        .get(cursor..cursor + expected)
        .ok_or_else(|| Error::PgmFormat(format!("raster truncated, need {expected} bytes")))?;
    Image::from_bytes(height, width, raster)
}

fn parse_pgm_int(bytes: &[u8], cursor: &mut usize) -> Result<usize> {
    // skip whitespace and '#' comment lines
    loop {
        match bytes.get(*cursor) {
            Some(b) if b.is_ascii_whitespace() => *cursor += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*cursor) {
                    *cursor += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *cursor;
    while bytes.get(*cursor).is_some_and(|b| b.is_ascii_digit()) {
        *cursor += 1;
    }
    if *cursor == start {
        return Err(Error::PgmFormat("expected integer in header".into()));
    }
    let text = std::str::from_utf8(&bytes[start..*cursor]).expect("digits are ascii");
    text.parse()
        .map_err(|_| Error::PgmFormat(format!("integer {text} out of range")))
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::PngDecode(e.to_string()))?;
    let gray = decoded.into_luma8();
    let (width, height) = (gray.width() as usize, gray.height() as usize);
    Image::from_bytes(height, width, gray.as_raw())
}
