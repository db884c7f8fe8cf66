use std::f64::consts::PI;

use cuelab_core::spectral::{
    amplitude_randomize_raw, apr_augment, dft2, dft2_field, gaussian_noise, idft2, phase_randomize_raw,
    recombine_raw, AprVariant, LabelSource,
};
use cuelab_core::{Image, RngStream};
use proptest::prelude::*;
use rand::Rng;

fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = RngStream::new(seed, "img", "random").rng();
    Image::new(h, w, (0..3 * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn max_rel_amplitude_error(a: &[f64], reference: &[f64]) -> f64 {
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    a.iter().zip(reference).map(|(x, y)| (x - y).abs() / peak).fold(0.0, f64::max)
}

/// Direct O(N^2) DFT of one real plane, returning (re, im).
fn naive_dft(plane: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let a = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    re += plane[y * w + x] * a.cos();
                    im += plane[y * w + x] * a.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

/// Direct inverse DFT of a spectrum given as amplitude and phase, real part.
fn naive_idft_real(amp: &[f64], phase: &[f64], h: usize, w: usize) -> Vec<f64> {
    let n = (h * w) as f64;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for u in 0..h {
                for v in 0..w {
                    let a = 2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    acc += amp[u * w + v] * (phase[u * w + v] + a).cos();
                }
            }
            out.push(acc / n);
        }
    }
    out
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (8usize..=64, 8usize..=64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn round_trip((h, w) in dims(), seed in any::<u64>()) {
        let img = random_image(h, w, seed);
        let back = idft2(&dft2(&img));
        prop_assert!(back.relative_l2(img.data()) < 1e-9);
    }

    #[test]
    fn parseval((h, w) in dims(), seed in any::<u64>()) {
        let img = random_image(h, w, seed);
        let planes = dft2(&img);
        let n = (h * w) as f64;
        for c in 0..3 {
            let spatial: f64 = img.channel(c).iter().map(|v| v * v).sum();
            let spectral: f64 = planes.amplitude(c).iter().map(|a| a * a).sum::<f64>() / n;
            prop_assert!((spatial - spectral).abs() / spatial < 1e-9);
        }
    }

    #[test]
    fn cross_recombination_is_real((h, w) in dims(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = dft2(&random_image(h, w, s1));
        let b = dft2(&random_image(h, w, s2));
        let field = recombine_raw(&a, &b).unwrap();
        prop_assert!(field.max_imag < 1e-6);
        let spectrum = dft2_field(&field);
        for c in 0..3 {
            prop_assert!(max_rel_amplitude_error(spectrum.amplitude(c), a.amplitude(c)) < 1e-6);
        }
    }

    #[test]
    fn apr_keeps_amplitude_donor_spectrum(
        (h, w) in dims(),
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        variant in prop::sample::select(AprVariant::ALL.to_vec()),
    ) {
        let (xj, xk) = (random_image(h, w, s1), random_image(h, w, s2));
        let out = apr_augment(variant, &xj, &xk, &RngStream::new(s1, "pair", "apr")).unwrap();
        let donor = match out.label_source {
            LabelSource::PhaseDonor => dft2(&xk),
            LabelSource::AmplitudeDonor => dft2(&xj),
        };
        let spectrum = dft2_field(&out.raw);
        for c in 0..3 {
            prop_assert!(max_rel_amplitude_error(spectrum.amplitude(c), donor.amplitude(c)) < 1e-6);
        }
        prop_assert!(out.raw.max_imag < 1e-6);
    }

    #[test]
    fn self_pairing_is_identity(
        (h, w) in dims(),
        seed in any::<u64>(),
        variant in prop::sample::select(AprVariant::ALL.to_vec()),
    ) {
        let x = random_image(h, w, seed);
        let out = apr_augment(variant, &x, &x, &RngStream::new(seed, "pair", "apr")).unwrap();
        prop_assert!(out.raw.relative_l2(x.data()) < 1e-6);
        let planes = dft2(&x);
        prop_assert!(recombine_raw(&planes, &planes).unwrap().relative_l2(x.data()) < 1e-6);
    }

    #[test]
    fn phase_randomize_preserves_amplitude((h, w) in dims(), seed in any::<u64>()) {
        let img = random_image(h, w, seed);
        let field = phase_randomize_raw(&img, &RngStream::new(seed, "s", "phase_randomize"));
        let (before, after) = (dft2(&img), dft2_field(&field));
        for c in 0..3 {
            prop_assert!(max_rel_amplitude_error(after.amplitude(c), before.amplitude(c)) < 1e-6);
            let energy: f64 = field.channel(c).iter().map(|v| v * v).sum();
            let reference: f64 = img.channel(c).iter().map(|v| v * v).sum();
            prop_assert!((energy - reference).abs() / reference < 1e-6);
        }
    }

    #[test]
    fn amplitude_randomize_preserves_phase((h, w) in dims(), seed in any::<u64>()) {
        let img = random_image(h, w, seed);
        let rng = RngStream::new(seed, "s", "amplitude_randomize");
        let field = amplitude_randomize_raw(&img, &rng);
        let noise_planes = dft2_field(&cuelab_core::spectral::RealField {
            height: h,
            width: w,
            data: gaussian_noise(h, w, &rng),
            max_imag: 0.0,
        });
        let (before, after) = (dft2(&img), dft2_field(&field));
        for c in 0..3 {
            let peak = before.amplitude(c).iter().cloned().fold(0.0, f64::max);
            for i in 0..h * w {
                if noise_planes.amplitude(c)[i] <= 1e-12 || before.amplitude(c)[i] <= 1e-9 * peak {
                    continue;
                }
                let d = (after.phase(c)[i] - before.phase(c)[i]).rem_euclid(2.0 * PI);
                prop_assert!(d.min(2.0 * PI - d) < 1e-6);
            }
        }
    }
}

#[test]
fn hundred_image_round_trip() {
    for i in 0..100u64 {
        let (h, w) = (8 + (i as usize * 7) % 57, 8 + (i as usize * 13) % 57);
        let img = random_image(h, w, i);
        let planes = dft2(&img);
        assert!(idft2(&planes).relative_l2(img.data()) < 1e-9, "{h}x{w}");
    }
}

#[test]
fn dft_matches_direct_sum_on_odd_sizes() {
    for (h, w) in [(9, 8), (8, 11), (13, 9)] {
        let img = random_image(h, w, 5);
        let planes = dft2(&img);
        for c in 0..3 {
            let reference = naive_dft(img.channel(c), h, w);
            for (i, &(re, im)) in reference.iter().enumerate() {
                assert!((planes.amplitude(c)[i] - re.hypot(im)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn constant_image_under_phase_randomization_is_plus_or_minus_itself() {
    let img = Image::filled(12, 9, [0.3, 0.5, 0.7]).unwrap();
    let mut seen = [false; 2];
    for seed in 0..32 {
        let rng = RngStream::new(seed, "const", "phase_randomize");
        let field = phase_randomize_raw(&img, &rng);
        let noise = gaussian_noise(12, 9, &rng);
        for c in 0..3 {
            let noise_dc: f64 = noise[c * 108..(c + 1) * 108].iter().sum();
            let sign = if noise_dc >= 0.0 { 1.0 } else { -1.0 };
            seen[usize::from(sign < 0.0)] = true;
            let expected: Vec<f64> = img.channel(c).iter().map(|v| sign * v).collect();
            assert!(rel_l2(field.channel(c), &expected) < 1e-3);
        }
    }
    assert!(seen[0] && seen[1], "both DC branches exercised");
}

#[test]
fn impulse_under_amplitude_randomization_is_inverse_of_noise_amplitude() {
    let (h, w) = (8, 9);
    let img = Image::from_fn(h, w, |y, x| if (y, x) == (0, 0) { [1.0; 3] } else { [0.0; 3] }).unwrap();
    let rng = RngStream::new(3, "impulse", "amplitude_randomize");
    let field = amplitude_randomize_raw(&img, &rng);
    let noise = gaussian_noise(h, w, &rng);
    let zeros = vec![0.0; h * w];
    for c in 0..3 {
        let amp: Vec<f64> = naive_dft(&noise[c * h * w..(c + 1) * h * w], h, w)
            .into_iter()
            .map(|(re, im)| re.hypot(im))
            .collect();
        let expected = naive_idft_real(&amp, &zeros, h, w);
        assert!(rel_l2(field.channel(c), &expected) < 1e-9);
    }
}

#[test]
fn amplitude_randomize_differs_across_seeds() {
    let img = random_image(16, 16, 1);
    let a = amplitude_randomize_raw(&img, &RngStream::new(1, "x", "amplitude_randomize"));
    let b = amplitude_randomize_raw(&img, &RngStream::new(2, "x", "amplitude_randomize"));
    assert!(rel_l2(&a.data, &b.data) > 0.0);
}

#[test]
fn swap_then_swap_back_restores_amplitude() {
    let (a, b) = (random_image(10, 13, 1), random_image(10, 13, 2));
    let (fa, fb) = (dft2(&a), dft2(&b));
    let once = recombine_raw(&fa, &fb).unwrap();
    let twice = recombine_raw(&fa, &dft2_field(&once)).unwrap();
    assert!(twice.relative_l2(&once.data) < 1e-9);
}

#[test]
fn mix_coin_is_fair() {
    let img = random_image(8, 8, 0);
    let phase_labeled = (0..10_000)
        .filter(|i| {
            let rng = RngStream::new(11, &format!("s{i}"), "mix_apr_p");
            apr_augment(AprVariant::MixAprP, &img, &img, &rng).unwrap().label_source == LabelSource::PhaseDonor
        })
        .count();
    let frac = phase_labeled as f64 / 10_000.0;
    assert!((0.48..=0.52).contains(&frac), "{frac}");
}

#[test]
fn apr_variants_take_the_stated_components() {
    let (xj, xk) = (random_image(9, 10, 7), random_image(9, 10, 8));
    let rng = RngStream::new(0, "p", "apr");
    let (fj, fk) = (dft2(&xj), dft2(&xk));
    let p = apr_augment(AprVariant::AprP, &xj, &xk, &rng).unwrap();
    assert_eq!(p.label_source, LabelSource::PhaseDonor);
    assert!(p.raw.relative_l2(&recombine_raw(&fk, &fj).unwrap().data) < 1e-12);
    let af = apr_augment(AprVariant::AfAprP, &xj, &xk, &rng).unwrap();
    assert_eq!(af.label_source, LabelSource::AmplitudeDonor);
    assert!(af.raw.relative_l2(&recombine_raw(&fj, &fk).unwrap().data) < 1e-12);
}
