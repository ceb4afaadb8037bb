//! Inpainting backends. The pipeline only ever sees pixels inside the mask
//! change: [`inpaint`] restores everything outside it after the backend runs.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result};
use crate::image::Image;
use crate::mask::BinaryMask;
use crate::par::*;

pub trait Inpainter: Send + Sync {
    fn name(&self) -> &str;
    fn inpaint_raw(&self, image: &Image, mask: &BinaryMask) -> Result<Image>;
}

impl<T: Inpainter + ?Sized> Inpainter for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn inpaint_raw(&self, image: &Image, mask: &BinaryMask) -> Result<Image> {
        (**self).inpaint_raw(image, mask)
    }
}

pub fn inpaint(backend: &dyn Inpainter, image: &Image, mask: &BinaryMask) -> Result<Image> {
    check_dims(image.dims(), mask.dims())?;
    if mask.is_empty() {
        return Ok(image.clone());
    }
    let filled = backend.inpaint_raw(image, mask)?;
    check_dims(image.dims(), filled.dims())?;
    let mut out = image.clone();
    for (i, &m) in mask.bits().iter().enumerate() {
        if m {
            out.as_raw_mut()[i * 3..i * 3 + 3].copy_from_slice(&filled.as_raw()[i * 3..i * 3 + 3]);
        }
    }
    Ok(out)
}

/// Fills every masked pixel with the per-channel mean of the unmasked
/// pixels, rounded half up.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanColorFill;

impl MeanColorFill {
    pub fn mean_color(image: &Image, mask: &BinaryMask) -> [u8; 3] {
        let mut sum = [0u64; 3];
        let mut n = 0u64;
        for (i, &m) in mask.bits().iter().enumerate() {
            if !m {
                let p = image.pixel_at(i);
                for c in 0..3 {
                    sum[c] += p[c] as u64;
                }
                n += 1;
            }
        }
        if n == 0 {
            return [0, 0, 0];
        }
        sum.map(|s| ((2 * s + n) / (2 * n)) as u8)
    }
}

impl Inpainter for MeanColorFill {
    fn name(&self) -> &str {
        "mean"
    }

    fn inpaint_raw(&self, image: &Image, mask: &BinaryMask) -> Result<Image> {
        let color = Self::mean_color(image, mask);
        let mut out = image.clone();
        for (x, y) in mask.iter_set() {
            out.set_pixel(x, y, color);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFill {
    pub max_iterations: usize,
    /// Stop once the largest per-sweep update (in [0, 1] intensity units)
    /// falls below this.
    pub tolerance: f64,
    /// Over-relaxation factor in (0, 2).
    pub omega: f64,
}

impl Default for DiffusionFill {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-4,
            omega: 1.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionStats {
    pub iterations: usize,
    pub final_update: f64,
}

impl DiffusionFill {
    /// Harmonic fill: solves the discrete Laplace equation inside the mask
    /// with the surrounding pixels as Dirichlet data and reflecting image
    /// borders. Red-black SOR, seeded by an onion-peel average fill.
    pub fn solve(&self, image: &Image, mask: &BinaryMask) -> (Vec<[f64; 3]>, DiffusionStats) {
        let (w, h) = image.dims();
        let mut field: Vec<[f64; 3]> = image
            .as_raw()
            .chunks_exact(3)
            .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
            .collect();

        onion_fill(&mut field, mask, w, h);

        let (red, black): (Vec<usize>, Vec<usize>) = mask
            .bits()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .partition(|&i| (i % w + i / w) % 2 == 0);

        let mut stats = DiffusionStats {
            iterations: 0,
            final_update: 0.0,
        };
        for it in 0..self.max_iterations {
            let mut max_update: f64 = 0.0;
            for set in [&red, &black] {
                let updates: Vec<([f64; 3], f64)> = set
                    .par_iter()
                    .map(|&i| {
                        let avg = neighbour_mean(&field, i, w, h);
                        let cur = field[i];
                        let mut next = [0.0; 3];
                        let mut delta: f64 = 0.0;
                        for c in 0..3 {
                            next[c] = cur[c] + self.omega * (avg[c] - cur[c]);
                            delta = delta.max((next[c] - cur[c]).abs());
                        }
                        (next, delta)
                    })
                    .collect();
                for (&i, (v, d)) in set.iter().zip(updates) {
                    field[i] = v;
                    max_update = max_update.max(d);
                }
            }
            stats.iterations = it + 1;
            stats.final_update = max_update;
            if max_update < self.tolerance {
                break;
            }
        }
        (field, stats)
    }
}

fn neighbour_mean(field: &[[f64; 3]], i: usize, w: usize, h: usize) -> [f64; 3] {
    let (x, y) = (i % w, i / w);
    let mut acc = [0.0; 3];
    let mut n = 0.0;
    let mut add = |j: usize| {
        for c in 0..3 {
            acc[c] += field[j][c];
        }
        n += 1.0;
    };
    if x > 0 {
        add(i - 1);
    }
    if x + 1 < w {
        add(i + 1);
    }
    if y > 0 {
        add(i - w);
    }
    if y + 1 < h {
        add(i + w);
    }
    if n > 0.0 {
        for v in &mut acc {
            *v /= n;
        }
    }
    acc
}

/// Layer-by-layer initial guess: each unknown pixel bordering known ones takes
/// the mean of its known 8-neighbours.
fn onion_fill(field: &mut [[f64; 3]], mask: &BinaryMask, w: usize, h: usize) {
    let mut known: Vec<bool> = mask.bits().iter().map(|&m| !m).collect();
    let mut pending: Vec<usize> = (0..w * h).filter(|&i| !known[i]).collect();
    while !pending.is_empty() {
        let mut layer = Vec::new();
        for &i in &pending {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if known[j] {
                        for c in 0..3 {
                            acc[c] += field[j][c];
                        }
                        n += 1.0;
                    }
                }
            }
            if n > 0.0 {
                layer.push((i, acc.map(|v| v / n)));
            }
        }
        if layer.is_empty() {
            // nothing known anywhere: leave the remainder black
            for &i in &pending {
                field[i] = [0.0; 3];
            }
            break;
        }
        for &(i, v) in &layer {
            field[i] = v;
            known[i] = true;
        }
        pending.retain(|&i| !known[i]);
    }
}

impl Inpainter for DiffusionFill {
    fn name(&self) -> &str {
        "diffusion"
    }

    fn inpaint_raw(&self, image: &Image, mask: &BinaryMask) -> Result<Image> {
        let (field, stats) = self.solve(image, mask);
        log::debug!(
            "diffusion fill: {} iterations, last update {:.2e}",
            stats.iterations,
            stats.final_update
        );
        let mut out = image.clone();
        for (x, y) in mask.iter_set() {
            let v = field[y * image.width() + x];
            out.set_pixel(x, y, v.map(|c| (c * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8));
        }
        Ok(out)
    }
}

pub struct CountingInpainter<I> {
    inner: I,
    calls: Arc<AtomicU64>,
}

impl<I: Inpainter> CountingInpainter<I> {
    pub fn new(inner: I) -> Self {
        Self::with_counter(inner, Arc::new(AtomicU64::new(0)))
    }

    pub fn with_counter(inner: I, calls: Arc<AtomicU64>) -> Self {
        Self { inner, calls }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<I: Inpainter> Inpainter for CountingInpainter<I> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn inpaint_raw(&self, image: &Image, mask: &BinaryMask) -> Result<Image> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.inpaint_raw(image, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set_pixel(x, y, [(x * 4) as u8, (y * 3) as u8, 128]);
            }
        }
        img
    }

    #[test]
    fn empty_mask_is_noop() {
        let img = gradient(16, 16);
        let out = inpaint(&DiffusionFill::default(), &img, &BinaryMask::empty(16, 16)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn mean_fill_uses_unmasked_mean_rounded_half_up() {
        // unmasked pixels: 10, 11 -> mean 10.5 -> 11
        let mut img = Image::new(3, 1);
        img.set_pixel(0, 0, [10, 0, 255]);
        img.set_pixel(1, 0, [11, 1, 254]);
        img.set_pixel(2, 0, [200, 200, 200]);
        let mut mask = BinaryMask::empty(3, 1);
        mask.set(2, 0, true);
        let out = inpaint(&MeanColorFill, &img, &mask).unwrap();
        assert_eq!(out.pixel(2, 0), [11, 1, 255]);
        assert_eq!(out.pixel(0, 0), [10, 0, 255]);
    }

    #[test]
    fn diffusion_on_constant_image_recovers_color() {
        let mut img = Image::filled(32, 32, [90, 140, 30]);
        let mask = BinaryMask::rect(32, 32, 8, 8, 12, 10);
        for (x, y) in mask.iter_set() {
            img.set_pixel(x, y, [255, 0, 255]);
        }
        let out = inpaint(&DiffusionFill::default(), &img, &mask).unwrap();
        for (x, y) in mask.iter_set() {
            let p = out.pixel(x, y);
            for (c, e) in p.iter().zip([90u8, 140, 30]) {
                assert!((*c as i32 - e as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn diffusion_reproduces_linear_gradient() {
        let img = gradient(40, 40);
        let mask = BinaryMask::rect(40, 40, 10, 12, 15, 9);
        let mut damaged = img.clone();
        for (x, y) in mask.iter_set() {
            damaged.set_pixel(x, y, [0, 0, 0]);
        }
        let out = inpaint(&DiffusionFill::default(), &damaged, &mask).unwrap();
        for (x, y) in mask.iter_set() {
            for c in 0..3 {
                let d = out.pixel(x, y)[c] as i32 - img.pixel(x, y)[c] as i32;
                assert!(d.abs() <= 1, "({x},{y}) channel {c}: {d}");
            }
        }
    }

    #[test]
    fn locality_enforced_for_misbehaving_backend() {
        struct Scribble;
        impl Inpainter for Scribble {
            fn name(&self) -> &str {
                "scribble"
            }
            fn inpaint_raw(&self, image: &Image, _: &BinaryMask) -> Result<Image> {
                Ok(Image::filled(image.width(), image.height(), [1, 2, 3]))
            }
        }
        let img = gradient(8, 8);
        let mask = BinaryMask::rect(8, 8, 2, 2, 2, 2);
        let out = inpaint(&Scribble, &img, &mask).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expected = if mask.get(x, y) { [1, 2, 3] } else { img.pixel(x, y) };
                assert_eq!(out.pixel(x, y), expected);
            }
        }
    }
}
