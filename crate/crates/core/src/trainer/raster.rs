use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::scalar::Scalar;

/// Grayscale image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Raster<T: Scalar> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self, TrainError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(TrainError::InvalidRaster(format!(
                "{} pixels for a {width}x{height} raster",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
            return Err(TrainError::InvalidRaster(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("valid fill")
    }

    pub(crate) fn from_clamped(width: usize, height: usize, mut pixels: Vec<T>) -> Self {
        for p in &mut pixels {
            *p = p.max(T::zero()).min(T::one());
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub fn mean_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dims(), other.dims());
        let sum: T = self.pixels.iter().zip(&other.pixels).map(|(a, b)| (*a - *b).abs()).sum();
        sum / T::from_count(self.pixels.len() as u64)
    }

    /// Binary PGM (P5), maxval 255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        w.write_all(&bytes)
    }

    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self, TrainError> {
        let bad = |m: &str| TrainError::Format(format!("PGM: {m}"));
        let mut header = Vec::new();
        // magic, width, height, maxval, each separated by whitespace; '#' starts a comment
        while header.len() < 4 {
            let mut token = Vec::new();
            loop {
                let mut byte = [0u8];
                if r.read(&mut byte)? == 0 {
                    return Err(bad("truncated header"));
                }
                match byte[0] {
                    b'#' if token.is_empty() => {
                        let mut skip = Vec::new();
                        r.read_until(b'\n', &mut skip)?;
                    }
                    b if b.is_ascii_whitespace() => {
                        if !token.is_empty() {
                            break;
                        }
                    }
                    b => token.push(b),
                }
            }
            header.push(String::from_utf8(token).map_err(|_| bad("non-ASCII header"))?);
        }
        if header[0] != "P5" {
            return Err(bad("not a binary graymap"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit graymaps are supported"));
        }
        let mut bytes = vec![0u8; width * height];
        r.read_exact(&mut bytes)?;
        let scale = T::from_count(maxval as u64);
        let pixels = bytes.into_iter().map(|b| T::from_count(u64::from(b)) / scale).collect();
        Self::new(width, height, pixels)
    }
}
