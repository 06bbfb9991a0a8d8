use super::GrayImage;

/// Round half up (towards +inf on ties).
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

#[inline]
pub(crate) fn to_u8(x: f64) -> u8 {
    round_half_up(x).clamp(0.0, 255.0) as u8
}

/// Bilinear read at fractional (row, col); coordinates outside the raster
/// are clamped to the nearest edge.
#[inline]
pub(crate) fn sample_bilinear(img: &GrayImage, y: f64, x: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let p = img.pixels();
    let a = p[y0 * w + x0] as f64;
    let b = p[y0 * w + x1] as f64;
    let c = p[y1 * w + x0] as f64;
    let d = p[y1 * w + x1] as f64;
    let top = if fx == 0.0 { a } else { a + (b - a) * fx };
    let bottom = if fx == 0.0 { c } else { c + (d - c) * fx };
    if fy == 0.0 {
        top
    } else {
        top + (bottom - top) * fy
    }
}

/// Corner-aligned source coordinate for output index `i`.
#[inline]
pub(crate) fn corner_aligned(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        (i * (n_in - 1)) as f64 / (n_out - 1) as f64
    }
}

/// Left/right mirror: column `c` moves to `width - 1 - c`.
pub fn horizontal_mirror(img: &GrayImage) -> GrayImage {
    let w = img.width();
    GrayImage::from_fn(w, img.height(), |r, c| img.get(r, w - 1 - c))
}

pub fn invert(img: &GrayImage) -> GrayImage {
    let pixels = img.pixels().iter().map(|&p| 255 - p).collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Flags intensity-inverted radiographs.
///
/// Radiograph backgrounds are dark, so an image whose border frame (outer 5%
/// of rows and columns, at least one pixel) is brighter on average than its
/// central 50%x50% window is judged inverted. Ties count as not inverted.
pub fn is_negative_channel(img: &GrayImage) -> bool {
    let (w, h) = img.dims();
    let bw = (round_half_up(0.05 * w as f64) as usize).max(1);
    let bh = (round_half_up(0.05 * h as f64) as usize).max(1);
    let (mut border_sum, mut border_n) = (0u64, 0u64);
    for r in 0..h {
        for c in 0..w {
            if r < bh || r >= h.saturating_sub(bh) || c < bw || c >= w.saturating_sub(bw) {
                border_sum += img.get(r, c) as u64;
                border_n += 1;
            }
        }
    }
    let (r0, r1) = (h / 4, h - h / 4);
    let (c0, c1) = (w / 4, w - w / 4);
    let (mut center_sum, mut center_n) = (0u64, 0u64);
    for r in r0..r1 {
        for c in c0..c1 {
            center_sum += img.get(r, c) as u64;
            center_n += 1;
        }
    }
    // Compare border_sum/border_n > center_sum/center_n without division.
    border_sum as u128 * center_n as u128 > center_sum as u128 * border_n as u128
}

/// Lookup table for histogram equalization of one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EqualizationTable {
    pub map: [u8; 256],
    /// Smallest nonzero value of the cumulative histogram.
    pub cdf_min: u64,
    /// Pixel count (m * n).
    pub total: u64,
}

impl EqualizationTable {
    pub fn for_image(img: &GrayImage) -> Self {
        let mut hist = [0u64; 256];
        for &p in img.pixels() {
            hist[p as usize] += 1;
        }
        let mut cdf = [0u64; 256];
        let mut acc = 0;
        for (v, &count) in hist.iter().enumerate() {
            acc += count;
            cdf[v] = acc;
        }
        let total = acc;
        let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
        let mut map = [0u8; 256];
        let den = total - cdf_min;
        for v in 0..256 {
            map[v] = if den == 0 {
                v as u8
            } else {
                let num = cdf[v].saturating_sub(cdf_min);
                // round(255 * num / den), half up, in exact integer arithmetic
                ((2 * 255 * num + den) / (2 * den)) as u8
            };
        }
        Self {
            map,
            cdf_min,
            total,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.total == self.cdf_min
    }

    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        let pixels = img.pixels().iter().map(|&p| self.map[p as usize]).collect();
        GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
    }
}

/// Histogram equalization `h(v) = round(255 (cdf(v) - cdf_min) / (mn - cdf_min))`.
/// Constant images come back unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let table = EqualizationTable::for_image(img);
    if table.is_degenerate() {
        return img.clone();
    }
    table.apply(img)
}

/// Bilinear resize with corner-aligned sampling, rounding half up.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    assert!(out_w > 0 && out_h > 0, "output dimensions must be positive");
    if (out_w, out_h) == img.dims() {
        return img.clone();
    }
    let xs: Vec<f64> = (0..out_w)
        .map(|c| corner_aligned(c, img.width(), out_w))
        .collect();
    let ys: Vec<f64> = (0..out_h)
        .map(|r| corner_aligned(r, img.height(), out_h))
        .collect();
    GrayImage::from_fn(out_w, out_h, |r, c| {
        to_u8(sample_bilinear(img, ys[r], xs[c]))
    })
}
