//! Binary PGM (P5, 8-bit) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridShape, Image};

fn pgm_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Pgm {
        field,
        reason: reason.into(),
    }
}

struct Header {
    cols: usize,
    rows: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(pgm_err("magic", format!("expected `P5`, found `{found}`")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    let names = ["width", "height", "maxval"];
    for (slot, name) in fields.iter_mut().zip(names) {
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
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(name, "missing or not a decimal number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *slot = text
            .parse()
            .map_err(|_| pgm_err(name, format!("`{text}` out of range")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(pgm_err(
            "maxval",
            "not followed by a single whitespace byte",
        ));
    }
    let [cols, rows, maxval] = fields;
    if cols == 0 || rows == 0 {
        return Err(pgm_err("width", "image dimensions must be positive"));
    }
    if maxval != 255 {
        return Err(pgm_err(
            "maxval",
            format!("only 8-bit maxval 255 is supported, found {maxval}"),
        ));
    }
    Ok(Header {
        cols,
        rows,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a P5 image into `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let n = h.rows * h.cols;
    let data = &bytes[h.data_start..];
    if data.len() < n {
        return Err(pgm_err(
            "raster",
            format!("expected {n} bytes, found {}", data.len()),
        ));
    }
    let shape = GridShape::new(h.rows, h.cols)?;
    let scale = h.maxval as f64;
    Image::from_vec(shape, data[..n].iter().map(|&b| b as f64 / scale).collect())
}

/// Encodes after clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let s = img.shape();
    let mut out = format!("P5\n{} {}\n255\n", s.cols(), s.rows()).into_bytes();
    out.extend(
        img.values()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}

pub fn save_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}
