//! Perturbations driving the output-completeness and continuity protocols,
//! plus the saliency post-processing they rely on.

mod mask;
mod photometric;
pub mod rng;
mod upscale;

pub use mask::{
    binarize_similarity, bounding_box, percentile, percentile_mask, retain_above_percentile,
    BoundingBox,
};
pub use photometric::{
    add_gaussian_noise, adjust_brightness, adjust_contrast, adjust_saturation, box_blur,
    hsv_to_rgb, jpeg_round_trip, photometric_suite, psnr, rgb_to_hsv, shift_hue,
};
pub use upscale::upscale_similarity;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Result};
use crate::grid::Image;

/// Settings of both perturbation protocols. Photometric amounts are relative
/// (`0.125` means a factor of `1.125`); a zero amount disables that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub occlusion_sigma: f64,
    pub percentile: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Fraction of a full hue turn.
    pub hue_shift: f64,
    pub noise_sigma: f64,
    pub jpeg_quality: Option<u8>,
    /// Box-blur side length; `0` or `1` disables blurring.
    pub blur_kernel: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            occlusion_sigma: 0.05,
            percentile: 95.0,
            brightness: 0.125,
            contrast: 0.125,
            saturation: 0.125,
            hue_shift: 0.05,
            noise_sigma: 0.05,
            jpeg_quality: Some(90),
            blur_kernel: 3,
        }
    }
}

impl PerturbationConfig {
    /// Every step disabled: perturbed images equal the originals.
    pub fn identity() -> Self {
        PerturbationConfig {
            occlusion_sigma: 0.0,
            percentile: 95.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue_shift: 0.0,
            noise_sigma: 0.0,
            jpeg_quality: None,
            blur_kernel: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(validation_err!(
                "percentile {} outside (0, 100)",
                self.percentile
            ));
        }
        if !(self.occlusion_sigma >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(validation_err!("noise sigmas must be nonnegative"));
        }
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(v > -1.0) || !v.is_finite() {
                return Err(validation_err!("{name} change {v} must be finite and > -1"));
            }
        }
        if !self.hue_shift.is_finite() {
            return Err(validation_err!("hue shift must be finite"));
        }
        if let Some(q) = self.jpeg_quality {
            if !(1..=100).contains(&q) {
                return Err(validation_err!("jpeg quality {q} outside [1, 100]"));
            }
        }
        if self.blur_kernel > 1 && self.blur_kernel.is_multiple_of(2) {
            return Err(validation_err!(
                "blur kernel {} must be odd",
                self.blur_kernel
            ));
        }
        Ok(())
    }
}

/// Adds clamped Gaussian noise to every pixel outside `bbox`; pixels inside are untouched.
pub fn occlude_outside(
    image: &Image,
    bbox: &BoundingBox,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<Image> {
    if !bbox.fits(image.height(), image.width()) {
        return Err(validation_err!(
            "box {bbox:?} does not fit a {}x{} image",
            image.height(),
            image.width()
        ));
    }
    if !(sigma >= 0.0) {
        return Err(validation_err!("occlusion sigma must be nonnegative"));
    }
    let mut out = image.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    for r in 0..image.height() {
        for c in 0..image.width() {
            if bbox.contains(r, c) {
                continue;
            }
            let mut px = image.pixel(r, c);
            for v in &mut px {
                let z: f64 = rng.sample(StandardNormal);
                *v = (*v + sigma * z).clamp(0.0, 1.0);
            }
            out.set_pixel(r, c, px);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::rng::stream_rng;
    use super::*;

    fn img() -> Image {
        Image::from_fn(2, 2, |r, c| {
            [0.5, 0.25 + 0.1 * r as f64, 0.75 - 0.1 * c as f64]
        })
    }

    #[test]
    fn full_box_or_zero_sigma_is_identity() {
        let im = img();
        let full = BoundingBox::full(2, 2);
        assert_eq!(
            occlude_outside(&im, &full, 0.05, &mut stream_rng(1, "a")).unwrap(),
            im
        );
        let corner = BoundingBox::new(0, 0, 1, 1).unwrap();
        assert_eq!(
            occlude_outside(&im, &corner, 0.0, &mut stream_rng(1, "a")).unwrap(),
            im
        );
    }

    #[test]
    fn only_outside_pixels_change_and_reruns_match() {
        let im = img();
        let corner = BoundingBox::new(0, 0, 1, 1).unwrap();
        let a = occlude_outside(&im, &corner, 0.05, &mut stream_rng(9, "k")).unwrap();
        let b = occlude_outside(&im, &corner, 0.05, &mut stream_rng(9, "k")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixel(0, 0), im.pixel(0, 0));
        for (r, c) in [(0, 1), (1, 0), (1, 1)] {
            assert_ne!(a.pixel(r, c), im.pixel(r, c));
        }
    }

    #[test]
    fn rejects_oversized_box() {
        let bad = BoundingBox::new(0, 0, 3, 1).unwrap();
        assert!(occlude_outside(&img(), &bad, 0.05, &mut stream_rng(0, "x")).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PerturbationConfig::default().validate().is_ok());
        assert!(PerturbationConfig::identity().validate().is_ok());
        let bad = PerturbationConfig {
            percentile: 100.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PerturbationConfig {
            jpeg_quality: Some(0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PerturbationConfig {
            noise_sigma: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
