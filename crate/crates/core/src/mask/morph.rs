use super::{BinaryMask, SoftMask};
use crate::par::*;

/// Dilation by a square (Chebyshev) structuring element of the given radius.
///
/// Separable: a horizontal max over `2r+1` pixels followed by a vertical one,
/// each computed from running counts so cost is independent of the radius.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 || mask.width == 0 || mask.height == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();

    let mut rows = vec![false; w * h];
    rows.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let src = &mask.bits[y * w..(y + 1) * w];
        let mut prefix = vec![0u32; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + src[x] as u32;
        }
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius + 1).min(w);
            *o = prefix[hi] > prefix[lo];
        }
    });

    // column prefix counts over the row-dilated raster
    let mut col_prefix = vec![0u32; (h + 1) * w];
    for y in 0..h {
        for x in 0..w {
            col_prefix[(y + 1) * w + x] = col_prefix[y * w + x] + rows[y * w + x] as u32;
        }
    }

    let mut bits = vec![false; w * h];
    bits.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius + 1).min(h);
        for (x, o) in out.iter_mut().enumerate() {
            *o = col_prefix[hi * w + x] > col_prefix[lo * w + x];
        }
    });

    BinaryMask {
        width: w,
        height: h,
        bits,
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur of the 0/1 raster with replicated borders.
/// `sigma == 0` returns the mask unchanged as a soft mask.
pub fn gaussian_blur(mask: &BinaryMask, sigma: f64) -> SoftMask {
    if sigma <= 0.0 || mask.width == 0 || mask.height == 0 {
        return mask.to_soft();
    }
    let (w, h) = mask.dims();
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;

    let mut tmp = vec![0.0f64; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let src = &mask.bits[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                if src[sx] {
                    acc += wt;
                }
            }
            *o = acc;
        }
    });

    let mut values = vec![0.0f64; w * h];
    values.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                acc += wt * tmp[sy * w + x];
            }
            *o = acc;
        }
    });

    SoftMask::from_values_clamped(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dilate(m: &BinaryMask, r: usize) -> BinaryMask {
        let r = r as isize;
        BinaryMask::from_fn(m.width(), m.height(), |x, y| {
            m.iter_set()
                .any(|(sx, sy)| (sx as isize - x as isize).abs() <= r && (sy as isize - y as isize).abs() <= r)
        })
    }

    #[test]
    fn single_pixel_radius_one_is_3x3_block() {
        let mut m = BinaryMask::empty(11, 11);
        m.set(5, 5, true);
        let d = dilate(&m, 1);
        assert_eq!(d, BinaryMask::rect(11, 11, 4, 4, 3, 3));
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = BinaryMask::from_fn(9, 7, |x, y| (x * 3 + y * 5) % 4 == 0);
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn two_pixel_segment_radius_two_matches_enumeration() {
        let mut m = BinaryMask::empty(12, 10);
        m.set(4, 5, true);
        m.set(5, 5, true);
        let d = dilate(&m, 2);
        // x in [2, 7], y in [3, 7]
        assert_eq!(d.count(), 6 * 5);
        assert_eq!(d, brute_dilate(&m, 2));
        assert_eq!(d, BinaryMask::rect(12, 10, 2, 3, 6, 5));
    }

    #[test]
    fn dilation_clips_at_borders() {
        let mut m = BinaryMask::empty(5, 5);
        m.set(0, 0, true);
        assert_eq!(dilate(&m, 3), BinaryMask::rect(5, 5, 0, 0, 4, 4));
    }

    #[test]
    fn blur_sigma_zero_is_identity() {
        let m = BinaryMask::rect(8, 8, 2, 2, 3, 3);
        assert_eq!(gaussian_blur(&m, 0.0), m.to_soft());
    }

    #[test]
    fn blur_of_full_mask_stays_one() {
        let blurred = gaussian_blur(&BinaryMask::full(16, 12), 2.5);
        for &v in blurred.values() {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn blur_single_pixel_matches_direct_convolution() {
        let (w, h) = (15, 15);
        let mut m = BinaryMask::empty(w, h);
        m.set(7, 7, true);
        let sigma = 1.0;
        let blurred = gaussian_blur(&m, sigma);

        // dense 2-D kernel, normalized over the same truncated support
        let r = 3isize;
        let g = |d: isize| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| g(dx) * g(dy))).sum();
        for y in 0..h {
            for x in 0..w {
                let dx = x as isize - 7;
                let dy = y as isize - 7;
                let expected = if dx.abs() <= r && dy.abs() <= r {
                    g(dx) * g(dy) / norm
                } else {
                    0.0
                };
                assert!((blurred.get(x, y) - expected).abs() < 1e-6);
            }
        }
    }
}
