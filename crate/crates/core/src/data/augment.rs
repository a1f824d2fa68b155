use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_CROP_TRIES: usize = 10;

/// Random-resized-crop and horizontal-flip parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Range of the crop's area as a fraction of the image area.
    pub crop_scale: (f64, f64),
    /// Range of the crop's width/height ratio.
    pub aspect: (f64, f64),
    pub hflip_prob: f64,
    pub enabled: bool,
}

impl AugmentSpec {
    /// Crops covering 60% to 100% of the area with aspect 3/4 to 4/3, and
    /// mirror images half of the time.
    pub fn cifar() -> Self {
        Self { crop_scale: (0.6, 1.0), aspect: (0.75, 4.0 / 3.0), hflip_prob: 0.5, enabled: true }
    }

    pub fn identity() -> Self {
        Self { crop_scale: (1.0, 1.0), aspect: (1.0, 1.0), hflip_prob: 0.0, enabled: true }
    }

    pub fn validate(&self) -> Result<()> {
        let (s0, s1) = self.crop_scale;
        let (a0, a1) = self.aspect;
        if !(s0 > 0.0 && s0 <= s1 && s1 <= 1.0) {
            return Err(Error::Domain(format!("crop_scale must satisfy 0 < lo <= hi <= 1, got [{s0}, {s1}]")));
        }
        if !(a0 > 0.0 && a0 <= a1 && a1.is_finite()) {
            return Err(Error::Domain(format!("aspect must satisfy 0 < lo <= hi, got [{a0}, {a1}]")));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Domain(format!("hflip_prob must lie in [0, 1], got {}", self.hflip_prob)));
        }
        Ok(())
    }
}

/// Bilinear resize of a `c × h × w` image with half-pixel centres; resizing to
/// the same size returns the input unchanged.
pub fn resize_bilinear(img: &[f32], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    crop_resize(img, c, h, w, (0.0, 0.0, h as f64, w as f64), oh, ow)
}

/// Resamples the window `(top, left, height, width)` of `img` onto `oh × ow`.
fn crop_resize(img: &[f32], c: usize, h: usize, w: usize, win: (f64, f64, f64, f64), oh: usize, ow: usize) -> Vec<f32> {
    let (top, left, ch, cw) = win;
    let sy = ch / oh as f64;
    let sx = cw / ow as f64;
    let axis = |o: usize, scale: f64, start: f64, len: usize| {
        let p = (start + (o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, (p - i0 as f64) as f32)
    };
    let ys: Vec<_> = (0..oh).map(|y| axis(y, sy, top, h)).collect();
    let xs: Vec<_> = (0..ow).map(|x| axis(x, sx, left, w)).collect();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch_i in 0..c {
        let plane = &img[ch_i * h * w..(ch_i + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top_row = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot_row = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push((top_row * (1.0 - fy) + bot_row * fy).clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Integer crop `(top, left, height, width)` for a random-resized crop.
fn sample_crop<R: Rng + ?Sized>(spec: &AugmentSpec, h: usize, w: usize, rng: &mut R) -> (usize, usize, usize, usize) {
    let area = (h * w) as f64;
    for _ in 0..MAX_CROP_TRIES {
        let frac = rng.random_range(spec.crop_scale.0..=spec.crop_scale.1);
        let ratio = rng.random_range(spec.aspect.0..=spec.aspect.1);
        let cw = (area * frac * ratio).sqrt().round() as usize;
        let ch = (area * frac / ratio).sqrt().round() as usize;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            return (top, left, ch, cw);
        }
    }
    // Largest centred crop with an admissible aspect ratio.
    let ratio = w as f64 / h as f64;
    let (ch, cw) = if ratio < spec.aspect.0 {
        (((w as f64 / spec.aspect.0).round() as usize).clamp(1, h), w)
    } else if ratio > spec.aspect.1 {
        (h, ((h as f64 * spec.aspect.1).round() as usize).clamp(1, w))
    } else {
        (h, w)
    };
    ((h - ch) / 2, (w - cw) / 2, ch, cw)
}

/// Random-resized crop of a `c × h × w` image onto `oh × ow`, followed by a
/// horizontal flip with probability `hflip_prob`. Disabled specs only resize.
#[allow(clippy::too_many_arguments)]
pub fn augment<R: Rng + ?Sized>(
    img: &[f32],
    c: usize,
    h: usize,
    w: usize,
    spec: &AugmentSpec,
    oh: usize,
    ow: usize,
    rng: &mut R,
) -> Vec<f32> {
    debug_assert_eq!(img.len(), c * h * w);
    if !spec.enabled {
        return resize_bilinear(img, c, h, w, oh, ow);
    }
    let (top, left, ch, cw) = sample_crop(spec, h, w, rng);
    let mut out = crop_resize(img, c, h, w, (top as f64, left as f64, ch as f64, cw as f64), oh, ow);
    if spec.hflip_prob > 0.0 && rng.random::<f64>() < spec.hflip_prob {
        for row in out.chunks_exact_mut(ow) {
            row.reverse();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(c: usize, h: usize, w: usize) -> Vec<f32> {
        (0..c * h * w).map(|i| i as f32 / (c * h * w) as f32).collect()
    }

    #[test]
    fn full_crop_without_flip_is_identity() {
        let img = ramp(3, 6, 6);
        let out = augment(&img, 3, 6, 6, &AugmentSpec::identity(), 6, 6, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out, img);
    }

    #[test]
    fn certain_flip_mirrors_rows() {
        let img = ramp(1, 3, 3);
        let spec = AugmentSpec { hflip_prob: 1.0, ..AugmentSpec::identity() };
        let out = augment(&img, 1, 3, 3, &spec, 3, 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out, vec![img[2], img[1], img[0], img[5], img[4], img[3], img[8], img[7], img[6]]);
    }

    #[test]
    fn cifar_spec_values() {
        let s = AugmentSpec::cifar();
        assert_eq!(s.crop_scale, (0.6, 1.0));
        assert_eq!(s.aspect.0, 0.75);
        assert!((s.aspect.1 - 1.3333333333333333).abs() < 1e-15);
        s.validate().unwrap();
        assert!(AugmentSpec { crop_scale: (0.8, 0.5), ..s.clone() }.validate().is_err());
        assert!(AugmentSpec { hflip_prob: 1.5, ..s }.validate().is_err());
    }

    #[test]
    fn impossible_aspect_falls_back_to_centre_crop() {
        // No crop of a 2x2 image has aspect 10..20, so the fallback is used.
        let spec = AugmentSpec { aspect: (10.0, 20.0), ..AugmentSpec::identity() };
        assert_eq!(sample_crop(&spec, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)), (0, 0, 1, 2));
    }

    #[test]
    fn downscale_averages_blocks() {
        let img = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let out = resize_bilinear(&img, 1, 4, 4, 2, 2);
        assert_eq!(out, vec![0.5; 4]);
    }
}
