//! Minimal binary netpbm (P5/P6) codec.
//!
//! Only the binary variants are supported. Readers are strict: the header must be
//! well formed, the payload must be exactly `width * height * channels * bytes_per_sample`
//! bytes long, and nothing may follow it. This keeps `write(read(f)) == f` for every
//! file the readers accept.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magic {
    /// Grayscale, `P5`.
    Gray,
    /// RGB, `P6`.
    Rgb,
}

impl Magic {
    fn tag(self) -> &'static str {
        match self {
            Magic::Gray => "P5",
            Magic::Rgb => "P6",
        }
    }

    fn channels(self) -> usize {
        match self {
            Magic::Gray => 1,
            Magic::Rgb => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub magic: Magic,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
}

impl Header {
    pub fn bytes_per_sample(&self) -> usize {
        if self.maxval > 255 {
            2
        } else {
            1
        }
    }

    pub fn payload_len(&self) -> usize {
        self.width * self.height * self.magic.channels() * self.bytes_per_sample()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(field, "expected a decimal integer"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<u64>()
            .map_err(|_| Error::format(field, format!("value {text} out of range")))
    }
}

/// Parses a header and returns it with the offset of the first payload byte.
pub fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::format("magic", "not a netpbm file"));
    }
    let magic = match bytes[1] {
        b'5' => Magic::Gray,
        b'6' => Magic::Rgb,
        other => {
            return Err(Error::format(
                "magic",
                format!("unsupported variant P{}", other as char),
            ))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 {
        return Err(Error::format("width", "must be positive"));
    }
    if height == 0 {
        return Err(Error::format("height", "must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("maxval", format!("{maxval} not in 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format("maxval", "missing whitespace before raster")),
    }
    let header = Header {
        magic,
        width: usize::try_from(width).map_err(|_| Error::format("width", "too large"))?,
        height: usize::try_from(height).map_err(|_| Error::format("height", "too large"))?,
        maxval: maxval as u32,
    };
    Ok((header, cur.pos))
}

/// Reads a file and returns its header and exactly-sized payload.
pub fn read_file(path: &Path, expected: Magic, maxval: u32) -> Result<(Header, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected, maxval)
}

pub fn decode(bytes: &[u8], expected: Magic, maxval: u32) -> Result<(Header, Vec<u8>)> {
    let (header, offset) = parse_header(bytes)?;
    if header.magic != expected {
        return Err(Error::format(
            "magic",
            format!("expected {}, found {}", expected.tag(), header.magic.tag()),
        ));
    }
    if header.maxval != maxval {
        return Err(Error::format(
            "maxval",
            format!("expected {maxval}, found {}", header.maxval),
        ));
    }
    let payload = &bytes[offset..];
    let need = header.payload_len();
    if payload.len() < need {
        return Err(Error::format(
            "payload",
            format!("truncated: {} of {need} bytes", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes after raster", payload.len() - need),
        ));
    }
    Ok((header, payload.to_vec()))
}

pub fn encode(magic: Magic, width: usize, height: usize, maxval: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = format!("{}\n{width} {height}\n{maxval}\n", magic.tag()).into_bytes();
    out.extend_from_slice(payload);
    out
}

pub fn write_file(
    path: &Path,
    magic: Magic,
    width: usize,
    height: usize,
    maxval: u32,
    payload: &[u8],
) -> Result<()> {
    std::fs::write(path, encode(magic, width, height, maxval, payload)).map_err(|e| Error::io(path, e))
}
