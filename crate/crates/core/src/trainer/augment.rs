use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Raster;
use crate::scalar::Scalar;

/// Random affine and photometric augmentation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub rotation_deg: f64,
    pub zoom_frac: f64,
    /// Horizontal shear as a fraction (x' = x + shear * y).
    pub shear_frac: f64,
    pub brightness_range: (f64, f64),
    pub horizontal_flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 7.0,
            zoom_frac: 0.15,
            shear_frac: 0.05,
            brightness_range: (0.7, 1.3),
            horizontal_flip: true,
        }
    }
}

impl AugmentConfig {
    /// No geometric or photometric change.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            zoom_frac: 0.0,
            shear_frac: 0.0,
            brightness_range: (1.0, 1.0),
            horizontal_flip: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.brightness_range;
        if !(self.rotation_deg >= 0.0) {
            return Err("rotation_deg must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.zoom_frac) {
            return Err("zoom_frac must lie in [0, 1)".into());
        }
        if !(self.shear_frac >= 0.0) {
            return Err("shear_frac must be >= 0".into());
        }
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err("brightness_range must satisfy 0 <= low <= high".into());
        }
        Ok(())
    }

    /// Draws one parameter set. Always consumes the same number of random
    /// values, whatever the ranges, so streams stay aligned across configs.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AffineParams {
        let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let rotation_deg = uniform(-self.rotation_deg, self.rotation_deg);
        let zoom = uniform(1.0 - self.zoom_frac, 1.0 + self.zoom_frac);
        let shear = uniform(-self.shear_frac, self.shear_frac);
        let brightness = uniform(self.brightness_range.0, self.brightness_range.1);
        let flip_draw: bool = rng.random();
        AffineParams { rotation_deg, zoom, shear, brightness, flip: self.horizontal_flip && flip_draw }
    }
}

/// One concrete augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub zoom: f64,
    pub shear: f64,
    pub brightness: f64,
    pub flip: bool,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, zoom: 1.0, shear: 0.0, brightness: 1.0, flip: false }
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.zoom == 1.0 && self.shear == 0.0
    }

    /// Forward 2x2 map: shear * zoom * rotation.
    fn forward_matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let rot = [[c, -s], [s, c]];
        let z = self.zoom;
        let zr = [[z * rot[0][0], z * rot[0][1]], [z * rot[1][0], z * rot[1][1]]];
        let k = self.shear;
        [[zr[0][0] + k * zr[1][0], zr[0][1] + k * zr[1][1]], [zr[1][0], zr[1][1]]]
    }

    fn inverse_matrix(&self) -> [[f64; 2]; 2] {
        let m = self.forward_matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
    }

    /// Bit pattern fed to stream digests.
    pub fn digest_words(&self) -> [u64; 5] {
        [
            self.rotation_deg.to_bits(),
            self.zoom.to_bits(),
            self.shear.to_bits(),
            self.brightness.to_bits(),
            u64::from(self.flip),
        ]
    }
}

/// Applies the affine warp about the image center with bilinear resampling
/// and zero padding, then brightness with clamping, then the optional flip.
pub fn apply_affine<T: Scalar>(image: &Raster<T>, params: &AffineParams) -> Raster<T> {
    let (w, h) = image.dims();
    let mut out = if params.is_geometric_identity() {
        image.pixels().to_vec()
    } else {
        let inv = params.inverse_matrix();
        let cx = (w as f64 - 1.0) / 2.0;
        let cy = (h as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let dy = y as f64 - cy;
            for x in 0..w {
                let dx = x as f64 - cx;
                let sx = cx + inv[0][0] * dx + inv[0][1] * dy;
                let sy = cy + inv[1][0] * dx + inv[1][1] * dy;
                out.push(bilinear(image, sx, sy));
            }
        }
        out
    };
    if params.brightness != 1.0 {
        let b = T::lit(params.brightness);
        for p in &mut out {
            *p = *p * b;
        }
    }
    if params.flip {
        for row in out.chunks_mut(w) {
            row.reverse();
        }
    }
    Raster::from_clamped(w, h, out)
}

fn bilinear<T: Scalar>(image: &Raster<T>, sx: f64, sy: f64) -> T {
    let (w, h) = image.dims();
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = T::lit(sx - x0);
    let fy = T::lit(sy - y0);
    let fetch = |x: f64, y: f64| -> T {
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            T::zero()
        } else {
            image.get(x as usize, y as usize)
        }
    };
    let one = T::one();
    let top = fetch(x0, y0) * (one - fx) + fetch(x0 + 1.0, y0) * fx;
    let bottom = fetch(x0, y0 + 1.0) * (one - fx) + fetch(x0 + 1.0, y0 + 1.0) * fx;
    top * (one - fy) + bottom * fy
}

/// Draws parameters from `cfg` and applies them.
pub fn augment<T: Scalar, R: Rng + ?Sized>(image: &Raster<T>, cfg: &AugmentConfig, rng: &mut R) -> Raster<T> {
    let params = cfg.sample(rng);
    apply_affine(image, &params)
}
