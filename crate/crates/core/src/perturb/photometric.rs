//! Image-wide low-level perturbations for the continuity protocol.

use rand::Rng;
use rand_distr::StandardNormal;

use super::PerturbationConfig;
use crate::error::{Error, Result};
use crate::grid::Image;

/// Applies every enabled step in order: brightness, contrast, saturation, hue,
/// Gaussian noise, JPEG round trip, box blur.
pub fn photometric_suite(
    image: &Image,
    config: &PerturbationConfig,
    rng: &mut impl Rng,
) -> Result<Image> {
    config.validate()?;
    if !image.in_unit_range() {
        return Err(Error::Validation("image values must lie in [0, 1]".into()));
    }
    let mut img = image.clone();
    if config.brightness != 0.0 {
        adjust_brightness(&mut img, 1.0 + config.brightness);
    }
    if config.contrast != 0.0 {
        adjust_contrast(&mut img, 1.0 + config.contrast);
    }
    if config.saturation != 0.0 {
        adjust_saturation(&mut img, 1.0 + config.saturation);
    }
    if config.hue_shift != 0.0 {
        shift_hue(&mut img, config.hue_shift);
    }
    if config.noise_sigma > 0.0 {
        add_gaussian_noise(&mut img, config.noise_sigma, rng);
    }
    if let Some(quality) = config.jpeg_quality {
        img = jpeg_round_trip(&img, quality)?;
    }
    if config.blur_kernel > 1 {
        img = box_blur(&img, config.blur_kernel);
    }
    Ok(img)
}

pub fn adjust_brightness(img: &mut Image, factor: f64) {
    for v in img.values_mut() {
        *v = (*v * factor).clamp(0.0, 1.0);
    }
}

/// Scales each channel's deviation from that channel's image mean.
pub fn adjust_contrast(img: &mut Image, factor: f64) {
    let pixels = (img.height() * img.width()) as f64;
    let mut means = [0.0; 3];
    for px in img.values().chunks_exact(3) {
        for ch in 0..3 {
            means[ch] += px[ch];
        }
    }
    for m in &mut means {
        *m /= pixels;
    }
    for px in img.values_mut().chunks_exact_mut(3) {
        for ch in 0..3 {
            px[ch] = (means[ch] + factor * (px[ch] - means[ch])).clamp(0.0, 1.0);
        }
    }
}

pub fn adjust_saturation(img: &mut Image, factor: f64) {
    map_hsv(img, |h, s, v| (h, (s * factor).clamp(0.0, 1.0), v));
}

/// Rotates hue by `shift` turns.
pub fn shift_hue(img: &mut Image, shift: f64) {
    map_hsv(img, |h, s, v| ((h + shift).rem_euclid(1.0), s, v));
}

fn map_hsv(img: &mut Image, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) {
    for px in img.values_mut().chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv([px[0], px[1], px[2]]);
        let (h, s, v) = f(h, s, v);
        px.copy_from_slice(&hsv_to_rgb(h, s, v));
    }
}

/// Hue in turns `[0, 1)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h.rem_euclid(1.0), s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

pub fn add_gaussian_noise(img: &mut Image, sigma: f64, rng: &mut impl Rng) {
    for v in img.values_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = (*v + sigma * z).clamp(0.0, 1.0);
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Baseline 4:2:0 JPEG encode followed by a decode.
pub fn jpeg_round_trip(img: &Image, quality: u8) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    let (w16, h16) = match (u16::try_from(w), u16::try_from(h)) {
        (Ok(w16), Ok(h16)) => (w16, h16),
        _ => return Err(Error::Shape(format!("image {h}x{w} too large for JPEG"))),
    };
    let bytes: Vec<u8> = img.values().iter().map(|&v| to_u8(v)).collect();
    let mut encoded = Vec::new();
    let mut encoder = jpeg_encoder::Encoder::new(&mut encoded, quality);
    encoder.set_sampling_factor(jpeg_encoder::SamplingFactor::F_2_2);
    encoder
        .encode(&bytes, w16, h16, jpeg_encoder::ColorType::Rgb)
        .map_err(|e| Error::Format(format!("jpeg encode failed: {e}")))?;
    let mut decoder = jpeg_decoder::Decoder::new(std::io::Cursor::new(encoded));
    let decoded = decoder
        .decode()
        .map_err(|e| Error::Format(format!("jpeg decode failed: {e}")))?;
    if decoded.len() != bytes.len() {
        return Err(Error::Format(format!(
            "jpeg round trip returned {} bytes, expected {}",
            decoded.len(),
            bytes.len()
        )));
    }
    Image::new(
        h,
        w,
        decoded.into_iter().map(|b| f64::from(b) / 255.0).collect(),
    )
}

/// `k × k` mean filter with edge replication.
pub fn box_blur(img: &Image, kernel: usize) -> Image {
    let (h, w) = (img.height(), img.width());
    let r = (kernel / 2) as isize;
    let norm = (kernel * kernel) as f64;
    Image::from_fn(h, w, |row, col| {
        let mut acc = [0.0; 3];
        for dr in -r..=r {
            let rr = (row as isize + dr).clamp(0, h as isize - 1) as usize;
            for dc in -r..=r {
                let cc = (col as isize + dc).clamp(0, w as isize - 1) as usize;
                let px = img.pixel(rr, cc);
                for ch in 0..3 {
                    acc[ch] += px[ch];
                }
            }
        }
        acc.map(|a| a / norm)
    })
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let mse = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.values().len() as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (1.0 / mse).log10()
}
