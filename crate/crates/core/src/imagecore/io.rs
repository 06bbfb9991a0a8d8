use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{GrayImage, RgbImage};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_for(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
    {
        Some(ext) if ext == "pgm" => Ok(Format::Pgm),
        Some(ext) if ext == "png" => Ok(Format::Png),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: expected .pgm or .png",
            path.display()
        ))),
    }
}

/// Reads an 8-bit grayscale PGM (P5) or PNG file without any rescaling.
/// The format is sniffed from the file's magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes, path)
    } else if bytes.starts_with(b"P") {
        decode_pgm(&bytes, path)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: not a PGM or PNG file",
            path.display()
        )))
    }
}

/// Writes PGM or PNG depending on the file extension.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Pgm => {
            write!(w, "P5\n{} {}\n255\n", img.width(), img.height())
                .and_then(|_| w.write_all(img.pixels()))
                .map_err(|e| Error::io(path, e))?;
        }
        Format::Png => {
            let mut enc = png::Encoder::new(&mut w, img.width() as u32, img.height() as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
            writer
                .write_image_data(img.pixels())
                .map_err(|e| png_err(path, e))?;
            writer.finish().map_err(|e| png_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut enc = png::Encoder::new(&mut w, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer
        .write_image_data(&img.data)
        .map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn png_err(path: &Path, e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::CorruptFile(format!("{}: {other}", path.display())),
    }
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let corrupt = |e: png::DecodingError| Error::CorruptFile(format!("{}: {e}", path.display()));
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{}: PNG is {:?}/{:?}, need 8-bit grayscale",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; width * height];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    if frame.line_size != width {
        return Err(Error::CorruptFile(format!(
            "{}: unexpected PNG line size",
            path.display()
        )));
    }
    GrayImage::new(width, height, buf)
}

/// Cursor over the whitespace/comment-separated PGM header.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<u64> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let corrupt = |msg: &str| Error::CorruptFile(format!("{}: {msg}", path.display()));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::UnsupportedFormat(format!(
            "{}: only binary PGM (P5) is supported",
            path.display()
        )));
    }
    let mut hdr = HeaderReader { bytes, pos: 2 };
    let width = hdr.number().ok_or_else(|| corrupt("bad width"))? as usize;
    let height = hdr.number().ok_or_else(|| corrupt("bad height"))? as usize;
    let maxval = hdr.number().ok_or_else(|| corrupt("bad maxval"))?;
    if maxval == 0 {
        return Err(corrupt("maxval 0"));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: maxval {maxval} is not 8-bit",
            path.display()
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(corrupt("missing raster separator")),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let payload = &bytes[hdr.pos..];
    if width == 0 || height == 0 || payload.len() < n {
        return Err(corrupt(&format!(
            "expected {n} raster bytes, found {}",
            payload.len()
        )));
    }
    if payload[..n].iter().any(|&p| p as u64 > maxval) {
        return Err(corrupt("pixel exceeds maxval"));
    }
    GrayImage::new(width, height, payload[..n].to_vec())
}
