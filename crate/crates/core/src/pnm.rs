//! Binary PGM (P5) images and PBM (P4) loss masks.
//!
//! Masks use the PBM convention of 1 = black; here a set bit marks a missing
//! pixel.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{quantize, Image, SamplingMask};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: Option<usize>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], with_maxval: bool) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::Format("file too short for a PNM header".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let fields = if with_maxval { 3 } else { 2 };
    let mut values = Vec::with_capacity(fields);
    while values.len() < fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PNM header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        let value: usize = text
            .parse()
            .map_err(|_| Error::Format(format!("header value {text} out of range")))?;
        values.push(value);
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("missing whitespace after PNM header".into()));
    }
    Ok(Header {
        magic,
        width: values[0],
        height: values[1],
        maxval: with_maxval.then(|| values[2]),
        data_offset: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let header = parse_header(bytes, true)?;
    if &header.magic != b"P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    if header.maxval != Some(255) {
        return Err(Error::Format(format!(
            "only maxval 255 is supported, got {}",
            header.maxval.unwrap_or(0)
        )));
    }
    let n = header.width * header.height;
    let raster = bytes
        .get(header.data_offset..header.data_offset + n)
        .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
    Image::new(header.width, header.height, raster.iter().map(|&b| b as f64).collect())
}

/// Pixels are rounded and clamped to `0..=255` on the way out.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.as_slice().iter().map(|&v| quantize(v) as u8));
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<SamplingMask> {
    let header = parse_header(bytes, false)?;
    if &header.magic != b"P4" {
        return Err(Error::Format("not a binary PBM (P4) file".into()));
    }
    let (w, h) = (header.width, header.height);
    let stride = w.div_ceil(8);
    let raster = bytes
        .get(header.data_offset..header.data_offset + stride * h)
        .ok_or_else(|| Error::Format("truncated PBM raster".into()))?;
    let mut known = Vec::with_capacity(w * h);
    for row in raster.chunks(stride) {
        for c in 0..w {
            let missing = row[c / 8] & (0x80 >> (c % 8)) != 0;
            known.push(!missing);
        }
    }
    SamplingMask::new(w, h, known)
}

pub fn encode_pbm(mask: &SamplingMask) -> Vec<u8> {
    let (w, h) = mask.dims();
    let stride = w.div_ceil(8);
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let mut raster = vec![0u8; stride * h];
    for (i, &known) in mask.known().iter().enumerate() {
        if !known {
            let (r, c) = (i / w, i % w);
            raster[r * stride + c / 8] |= 0x80 >> (c % 8);
        }
    }
    out.extend(raster);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_pgm(image))?;
    Ok(())
}

pub fn read_pbm(path: impl AsRef<Path>) -> Result<SamplingMask> {
    decode_pbm(&fs::read(path)?)
}

pub fn write_pbm(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_pbm(mask))?;
    Ok(())
}
