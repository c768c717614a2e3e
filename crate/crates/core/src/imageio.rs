//! 8-bit RGB images and binary PPM/PGM files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::ParsingMap;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> RgbImage {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// `[1,3,H,W]` tensor with values mapped to `[−1,1]`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        Tensor::from_fn(&[1, 3, self.height, self.width], |i| {
            let (c, p) = (i / plane, i % plane);
            f64::from(self.data[p * 3 + c]) / 127.5 - 1.0
        })
    }

    /// Sample `b` of a `[B,3,H,W]` tensor in `[−1,1]`, clamped and rounded.
    pub fn from_tensor(t: &Tensor, b: usize) -> Result<RgbImage> {
        let s = t.shape();
        if s.len() != 4 || s[1] != 3 || b >= s[0] {
            return Err(Error::invalid_shape("rgb image", s, "expected [B,3,H,W]"));
        }
        let (h, w) = (s[2], s[3]);
        let plane = h * w;
        let d = t.data();
        let mut img = RgbImage::new(w, h);
        for c in 0..3 {
            for p in 0..plane {
                let v = ((d[(b * 3 + c) * plane + p] + 1.0) * 127.5).round().clamp(0.0, 255.0);
                img.data[p * 3 + c] = v as u8;
            }
        }
        Ok(img)
    }

    pub fn ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<RgbImage> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (magic, w, h, body) = parse_header(&bytes).ok_or_else(|| bad_header(path))?;
        if magic != "P6" || body.len() != w * h * 3 {
            return Err(bad_header(path));
        }
        Ok(RgbImage {
            width: w,
            height: h,
            data: body.to_vec(),
        })
    }
}

fn bad_header(path: &Path) -> Error {
    Error::Dataset(format!("{}: malformed PNM file", path.display()))
}

/// Splits `magic width height maxval` from the raster of an 8-bit PNM file.
fn parse_header(bytes: &[u8]) -> Option<(&str, usize, usize, &[u8])> {
    let mut fields = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if bytes.get(i) == Some(&b'#') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).ok()?);
    }
    let body = bytes.get(i + 1..)?;
    if fields[3] != "255" {
        return None;
    }
    Some((fields[0], fields[1].parse().ok()?, fields[2].parse().ok()?, body))
}

pub fn pgm_bytes(map: &ParsingMap, b: usize) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend_from_slice(map.sample(b).labels());
    out
}

pub fn write_pgm(map: &ParsingMap, b: usize, path: &Path) -> Result<()> {
    fs::write(path, pgm_bytes(map, b)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<ParsingMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (magic, w, h, body) = parse_header(&bytes).ok_or_else(|| bad_header(path))?;
    if magic != "P5" || body.len() != w * h {
        return Err(bad_header(path));
    }
    ParsingMap::new(body.to_vec(), 1, h, w)
}
