use image::{DynamicImage, GrayImage, RgbImage, RgbaImage};

use crate::model::PageImage;

/// Target size for a `width`x`height` raster whose long side must not exceed
/// `max_dim`. Never upscales; the short side is rounded to the nearest pixel
/// and kept at least 1.
pub fn scaled_dimensions(width: u32, height: u32, max_dim: u32) -> (u32, u32) {
    let max_dim = max_dim.max(1);
    let long = width.max(height);
    if long <= max_dim {
        return (width, height);
    }
    let scale_short = |short: u32| -> u32 {
        let (s, m, l) = (short as u64, max_dim as u64, long as u64);
        (((2 * s * m + l) / (2 * l)) as u32).max(1)
    };
    if width >= height {
        (max_dim, scale_short(height))
    } else {
        (scale_short(width), max_dim)
    }
}

/// Area-averaging downscale so the long side is at most `max_dim`. Page index
/// and digest are carried over unchanged.
pub fn resize_page(page: &PageImage, max_dim: u32) -> PageImage {
    let (w, h) = (page.width(), page.height());
    let (nw, nh) = scaled_dimensions(w, h, max_dim);
    if (nw, nh) == (w, h) {
        return page.clone();
    }
    let resized = match page.image() {
        DynamicImage::ImageLuma8(img) => {
            DynamicImage::ImageLuma8(GrayImage::from_raw(nw, nh, box_resample(img.as_raw(), w, h, 1, nw, nh)).expect("sized buffer"))
        }
        DynamicImage::ImageRgba8(img) => {
            DynamicImage::ImageRgba8(RgbaImage::from_raw(nw, nh, box_resample(img.as_raw(), w, h, 4, nw, nh)).expect("sized buffer"))
        }
        other if !other.color().has_color() => {
            let img = other.to_luma8();
            DynamicImage::ImageLuma8(GrayImage::from_raw(nw, nh, box_resample(img.as_raw(), w, h, 1, nw, nh)).expect("sized buffer"))
        }
        other => {
            let img = other.to_rgb8();
            DynamicImage::ImageRgb8(RgbImage::from_raw(nw, nh, box_resample(img.as_raw(), w, h, 3, nw, nh)).expect("sized buffer"))
        }
    };
    page.with_image(resized).expect("scaled dimensions are at least 1")
}

/// For each destination index, the source indices it covers and their
/// fractional coverage weights (summing to 1).
fn coverage(src_len: u32, dst_len: u32) -> Vec<Vec<(usize, f32)>> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|i| {
            let start = i as f64 * scale;
            let end = ((i + 1) as f64 * scale).min(src_len as f64);
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src_len as usize);
            (first..last)
                .filter_map(|j| {
                    let overlap = end.min(j as f64 + 1.0) - start.max(j as f64);
                    (overlap > 0.0).then_some((j, (overlap / scale) as f32))
                })
                .collect()
        })
        .collect()
}

fn box_resample(src: &[u8], w: u32, h: u32, channels: usize, nw: u32, nh: u32) -> Vec<u8> {
    let cols = coverage(w, nw);
    let rows = coverage(h, nh);
    let (w, nw) = (w as usize, nw as usize);

    let mut horizontal = vec![0f32; h as usize * nw * channels];
    for y in 0..h as usize {
        let src_row = &src[y * w * channels..(y + 1) * w * channels];
        let dst_row = &mut horizontal[y * nw * channels..(y + 1) * nw * channels];
        for (x, taps) in cols.iter().enumerate() {
            for c in 0..channels {
                let mut acc = 0f32;
                for &(j, weight) in taps {
                    acc += src_row[j * channels + c] as f32 * weight;
                }
                dst_row[x * channels + c] = acc;
            }
        }
    }

    let stride = nw * channels;
    let mut out = vec![0u8; nh as usize * stride];
    for (y, taps) in rows.iter().enumerate() {
        let dst_row = &mut out[y * stride..(y + 1) * stride];
        for (i, px) in dst_row.iter_mut().enumerate() {
            let mut acc = 0f32;
            for &(j, weight) in taps {
                acc += horizontal[j * stride + i] * weight;
            }
            *px = (acc + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;
    use proptest::prelude::*;

    fn page(w: u32, h: u32) -> PageImage {
        PageImage::blank(3, w, h, "digest-x")
    }

    #[test]
    fn examples() {
        assert_eq!(scaled_dimensions(4096, 2048, 1024), (1024, 512));
        assert_eq!(scaled_dimensions(800, 600, 1024), (800, 600));
        assert_eq!(scaled_dimensions(2048, 4096, 1024), (512, 1024));
        assert_eq!(scaled_dimensions(1275, 1650, 1024), (791, 1024));
        assert_eq!(scaled_dimensions(5000, 1, 1024), (1024, 1));
    }

    #[test]
    fn resize_keeps_lineage() {
        let p = resize_page(&page(4096, 2048), 1024);
        assert_eq!((p.width(), p.height()), (1024, 512));
        assert_eq!(p.page_index(), 3);
        assert_eq!(p.source_digest(), "digest-x");
    }

    #[test]
    fn area_average_of_checkerboard_is_mid_gray() {
        let img = GrayImage::from_fn(8, 8, |x, y| Luma([if (x + y) % 2 == 0 { 0 } else { 254 }]));
        let p = PageImage::new(0, DynamicImage::ImageLuma8(img), "d").unwrap();
        let r = resize_page(&p, 4);
        for px in r.image().to_luma8().pixels() {
            assert_eq!(px.0[0], 127);
        }
    }

    #[test]
    fn fractional_coverage_weights_sum_to_one() {
        for (n, m) in [(10, 3), (1650, 1024), (7, 7), (5, 1)] {
            for taps in coverage(n, m) {
                let s: f32 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-5, "{n}->{m}: {s}");
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_idempotent_and_aspect_preserving(w in 1u32..6000, h in 1u32..6000, max_dim in 1u32..2048) {
            let (nw, nh) = scaled_dimensions(w, h, max_dim);
            prop_assert!(nw.max(nh) <= max_dim);
            prop_assert!(nw >= 1 && nh >= 1);
            prop_assert!(nw <= w && nh <= h);
            prop_assert_eq!(scaled_dimensions(nw, nh, max_dim), (nw, nh));
            // within one pixel of the exact scale
            let scale = (max_dim as f64 / w.max(h) as f64).min(1.0);
            prop_assert!((nw as f64 - w as f64 * scale).abs() <= 1.0);
            prop_assert!((nh as f64 - h as f64 * scale).abs() <= 1.0);
        }

        #[test]
        fn resize_page_is_idempotent(w in 1u32..300, h in 1u32..300, max_dim in 1u32..200) {
            let once = resize_page(&page(w, h), max_dim);
            let twice = resize_page(&once, max_dim);
            prop_assert!(once.width().max(once.height()) <= max_dim);
            prop_assert_eq!(once.image().as_bytes(), twice.image().as_bytes());
        }
    }
}
