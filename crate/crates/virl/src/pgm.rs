//! Binary PGM (P5) frames.

use std::path::Path;

use virl_core::Frame;

use crate::{Error, Result};

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.to_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Frame> {
    let bad = |m: &str| Error::Format(format!("pgm: {m}"));
    // Header: magic, width, height, maxval, each followed by whitespace.
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
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("only 8-bit P5 is supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let px = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| bad("truncated pixels"))?;
    Ok(Frame::new(
        h,
        w,
        px.iter().map(|&b| b as f32 / 255.0).collect(),
    )?)
}

pub fn write(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode(frame)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Frame> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
