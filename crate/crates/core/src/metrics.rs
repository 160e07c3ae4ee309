//! Quality metrics in decibels. All of them are computed over the full
//! image with a fixed peak of 255; no border is cropped.
//!
//! Degenerate ratios return IEEE infinities as sentinels: `psnr` and `isnr`
//! give `+inf` for an exact reconstruction, `nmse_db` gives `-inf`.

use crate::error::{Error, Result};
use crate::image::Image;

const PEAK: f64 = 255.0;

fn squared_error(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

pub fn psnr(reference: &Image, estimate: &Image) -> Result<f64> {
    let err = squared_error(reference, estimate)?;
    Ok(ratio_db(PEAK * PEAK * reference.len() as f64, err))
}

/// Improvement in SNR of `restored` over `degraded`, both against `clean`.
pub fn isnr(clean: &Image, degraded: &Image, restored: &Image) -> Result<f64> {
    let before = squared_error(clean, degraded)?;
    let after = squared_error(clean, restored)?;
    Ok(ratio_db(before, after))
}

/// `10 log10(‖restored − clean‖² / ‖clean‖²)`.
pub fn nmse_db(clean: &Image, restored: &Image) -> Result<f64> {
    let energy = clean.norm_sq();
    if energy == 0.0 {
        return Err(Error::InvalidArgument(
            "NMSE is undefined for an all-zero reference".into(),
        ));
    }
    let err = squared_error(clean, restored)?;
    if err == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (err / energy).log10())
}

/// Blurred-signal-to-noise ratio: empirical variance of the noiseless
/// blurred image over the noise variance.
pub fn bsnr(blurred_noiseless: &Image, noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "BSNR needs a positive noise variance, got {noise_variance}"
        )));
    }
    Ok(10.0 * (blurred_noiseless.variance() / noise_variance).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, v: Vec<f64>) -> Image {
        Image::new(w, h, v).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = img(1, 2, vec![0.0, 0.0]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let full = img(1, 2, vec![255.0, 255.0]);
        assert!(psnr(&a, &full).unwrap().abs() < 1e-12);
        let b = img(1, 2, vec![5.0, 5.0]);
        // 10 log10(255^2 / 25) = 34.1514...
        let expected = 10.0 * (65025.0_f64 / 25.0).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 34.1514).abs() < 1e-4);
        assert!(psnr(&a, &img(2, 1, vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn isnr_examples() {
        let clean = img(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        let degraded = img(2, 2, vec![14.0, 18.0, 33.0, 30.0]);
        assert_eq!(isnr(&clean, &degraded, &degraded).unwrap(), 0.0);
        let halved = clean
            .zip_map(&degraded, |c, d| c + (d - c) / 2.0)
            .unwrap();
        let v = isnr(&clean, &degraded, &halved).unwrap();
        assert!((v - 10.0 * 4.0_f64.log10()).abs() < 1e-12);
        assert_eq!(isnr(&clean, &degraded, &clean).unwrap(), f64::INFINITY);
    }

    #[test]
    fn nmse_examples() {
        let clean = img(2, 1, vec![3.0, 4.0]);
        assert_eq!(nmse_db(&clean, &clean).unwrap(), f64::NEG_INFINITY);
        assert!(nmse_db(&clean, &Image::zeros(2, 1)).unwrap().abs() < 1e-12);
        assert!(nmse_db(&Image::zeros(2, 1), &clean).is_err());
    }

    #[test]
    fn bsnr_examples() {
        // variance 100 about the mean
        let blurred = img(2, 1, vec![40.0, 60.0]);
        assert!((bsnr(&blurred, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(bsnr(&blurred, 100.0).unwrap().abs() < 1e-12);
        assert!(bsnr(&blurred, 0.0).is_err());
    }

    fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0..255.0f64, n),
                prop::collection::vec(0.0..255.0f64, n),
                prop::collection::vec(0.0..255.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn psnr_self_is_infinite(v in prop::collection::vec(0.0..255.0f64, 1..50)) {
            let a = img(v.len(), 1, v);
            prop_assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        }

        #[test]
        fn isnr_is_psnr_difference((c, d, r) in triple()) {
            let n = c.len();
            let (c, d, r) = (img(n, 1, c), img(n, 1, d), img(n, 1, r));
            prop_assume!(c != d && c != r);
            let lhs = isnr(&c, &d, &r).unwrap();
            let rhs = psnr(&c, &r).unwrap() - psnr(&c, &d).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn nmse_is_scale_invariant((c, _d, r) in triple(), s in prop::sample::select(vec![-3.0, 1e-3, 0.5, 7.0, 1e4])) {
            let n = c.len();
            let (c, r) = (img(n, 1, c), img(n, 1, r));
            prop_assume!(c.norm_sq() > 0.0 && c != r);
            let base = nmse_db(&c, &r).unwrap();
            let scaled = nmse_db(&c.scale(s), &r.scale(s)).unwrap();
            prop_assert!((base - scaled).abs() < 1e-10);
        }

        #[test]
        fn integer_images_round_trip(v in prop::collection::vec(0u8..=255, 1..64), w in 1usize..8) {
            let h = v.len() / w;
            prop_assume!(h >= 1);
            let px: Vec<f64> = v[..w * h].iter().map(|&b| f64::from(b)).collect();
            let a = img(w, h, px);
            let dir = tempfile::tempdir().unwrap();
            for ext in ["pgm", "png"] {
                let p = dir.path().join(format!("rt.{ext}"));
                crate::image::save_image(&a, &p).unwrap();
                prop_assert_eq!(crate::image::load_image(&p).unwrap(), a.clone());
            }
        }
    }
}
