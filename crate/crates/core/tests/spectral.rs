use dst_core::spectral::{
    apply_kernel, band_gains, decoupled_features, extract_diffusion_kernel, spectral_features,
    spectral_normalize, spectral_transfer, EquivalentKernel, Fft2, FilterBank, BANDS,
    CONTINUOUS_REFERENCE, RETAINED_ENERGY,
};
use dst_core::synth::{gaussian_blur, gaussian_response, pink_noise, white_noise};
use dst_core::{Error, Plane};

fn standardize(x: &Plane) -> Plane {
    let n = x.len() as f64;
    let m = x.data.iter().sum::<f64>() / n;
    let sd = (x.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    Plane::new(x.width, x.height, x.data.iter().map(|v| (v - m) / sd).collect()).unwrap()
}

fn power(x: &Plane) -> Vec<f64> {
    Fft2::new(x.width, x.height)
        .forward(&x.data)
        .iter()
        .map(|c| c.norm_sqr())
        .collect()
}

#[test]
fn white_noise_matches_grid_reference() {
    let n = 512;
    let bank = FilterBank::new(n, n);
    let reference = bank.grid_reference();
    let x = standardize(&white_noise(n, n, 2024));
    let f = spectral_features(&x, &bank).unwrap();
    let count = (n * n) as f64;
    for b in 0..BANDS {
        // Each periodogram bin is exponential with variance equal to its
        // squared mean; bins come in conjugate pairs.
        let se = (2.0 * bank.weights[b].iter().map(|w| w * w).sum::<f64>()).sqrt() / count;
        let z = (f.bands[b] - reference[b]) / se;
        assert!(z.abs() < 3.0, "band {b}: z = {z}");
    }
}

#[test]
fn grid_reference_close_to_continuous_values() {
    for n in [128, 512] {
        let r = FilterBank::new(n, n).grid_reference();
        for b in 0..BANDS {
            let rel = (r[b] - CONTINUOUS_REFERENCE[b]).abs() / CONTINUOUS_REFERENCE[b];
            assert!(rel < 0.02, "{n}: band {b} off by {rel}");
        }
    }
}

#[test]
fn parseval_audit() {
    let bank = FilterBank::new(48, 40);
    let x = pink_noise(48, 40, 0.7, 5);
    let x = Plane::new(48, 40, x.data.iter().map(|v| v + 0.3).collect()).unwrap();
    let f = spectral_features(&x, &bank).unwrap();
    let centered = Plane::new(48, 40, x.data.iter().map(|v| v - f.mean).collect()).unwrap();
    let fc = spectral_features(&centered, &bank).unwrap();
    // Highpass energy through a direct spatial oracle: filter in the DFT and
    // sum squares of the inverse.
    let fft = Fft2::new(48, 40);
    let spec = fft.forward(&centered.data);
    let filtered = fft.inverse_real(spec.iter().zip(&bank.highpass).map(|(c, h)| c * h).collect());
    let msv_h00 = filtered.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let total = msv_h00 + fc.bands.iter().sum::<f64>();
    assert!((f.msv - f.mean * f.mean - total).abs() < 1e-10);
    assert!(f.msv >= f.bands.iter().sum::<f64>());
}

#[test]
fn white_noise_normalization_barely_moves() {
    let bank = FilterBank::new(256, 256);
    let reference = bank.grid_reference();
    let x = white_noise(256, 256, 8);
    let (_, _, t) = spectral_normalize(&x, &bank, &reference).unwrap();
    assert!(t.iter().all(|v| v.abs() < 0.2), "{t:?}");
}

#[test]
fn blurred_input_normalization_amplifies_high_bands() {
    let bank = FilterBank::new(64, 64);
    let reference = bank.grid_reference();
    let x = gaussian_blur(&white_noise(64, 64, 3), 1.0);
    let (y, feats, t) = spectral_normalize(&x, &bank, &reference).unwrap();
    // Relative to DC the normalizing filter boosts the high frequencies.
    let r = EquivalentKernel::from_band_times(&bank, t).response_on(64, 64).unwrap();
    let (quarter, nyquist) = (r[16], r[32]);
    assert!(nyquist > quarter && quarter > 1.0, "{quarter} {nyquist}");
    assert_eq!(feats.times, Some(t));
    let g = spectral_features(&y, &bank).unwrap();
    assert!(g.mean.abs() < 1e-12 && (g.msv - 1.0).abs() < 1e-12);
    for b in 0..BANDS {
        assert!((g.bands[b] - reference[b]).abs() < 1e-8);
    }
}

#[test]
fn forward_flow_is_undone_by_normalization() {
    let bank = FilterBank::new(64, 48);
    let reference = bank.grid_reference();
    let (x, _, _) = spectral_normalize(&white_noise(64, 48, 11), &bank, &reference).unwrap();
    let t_star = [0.8, -0.6, 0.5, -0.3];
    let kernel = EquivalentKernel::from_band_times(&bank, t_star);
    let pushed = apply_kernel(&x, &kernel).unwrap();
    let (y, _, _) = spectral_normalize(&pushed, &bank, &reference).unwrap();
    let g = spectral_features(&y, &bank).unwrap();
    for b in 0..BANDS {
        assert!((g.bands[b] - reference[b]).abs() < 1e-8);
    }
}

#[test]
fn transfer_fixed_point_gives_delta() {
    let bank = FilterBank::new(64, 64);
    let reference = bank.grid_reference();
    let x = pink_noise(64, 64, 1.0, 21);
    let f = decoupled_features(&x, &bank, &reference).unwrap();
    let (y, k) = spectral_transfer(&x, &f, &bank, &reference).unwrap();
    let err = x.data.iter().zip(&y.data).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    assert!(err < 1e-6, "{err}");
    assert!(k.band_times.unwrap().iter().all(|t| t.abs() < 1e-6));
    assert_eq!(k.support, 1);
}

#[test]
fn transfer_hits_target_features() {
    let bank = FilterBank::new(64, 64);
    let reference = bank.grid_reference();
    let src = pink_noise(64, 64, 0.5, 1);
    let tgt = Plane::new(
        64,
        64,
        gaussian_blur(&pink_noise(64, 64, 1.2, 2), 0.8).data.iter().map(|v| 0.4 + 0.2 * v).collect(),
    )
    .unwrap();
    let want = decoupled_features(&tgt, &bank, &reference).unwrap();
    let (y, _) = spectral_transfer(&src, &want, &bank, &reference).unwrap();
    let got = decoupled_features(&y, &bank, &reference).unwrap();
    assert!((got.mean - want.mean).abs() < 1e-10);
    assert!((got.msv - want.msv).abs() < 1e-10);
    for b in 0..BANDS {
        assert!((got.bands[b] - want.bands[b]).abs() < 1e-6, "band {b}");
    }
}

#[test]
fn diffusion_kernel_recovers_gaussian_blur() {
    let n = 256;
    let sharp = pink_noise(n, n, 1.0, 77);
    let blurred = gaussian_blur(&sharp, 2.0);
    let k = extract_diffusion_kernel(&blurred, &sharp).unwrap();
    let bank = FilterBank::new(n, n);
    let reference = bank.grid_reference();
    let applied = apply_kernel(&sharp, &k).unwrap();
    let want = decoupled_features(&blurred, &bank, &reference).unwrap();
    let got = decoupled_features(&applied, &bank, &reference).unwrap();
    for b in 0..BANDS {
        assert!((got.bands[b] - want.bands[b]).abs() < 1e-6, "band {b}");
    }
    let p = power(&sharp);
    let gk = band_gains(&k.response_on(n, n).unwrap(), &bank, &p);
    let gg = band_gains(&gaussian_response(n, n, 2.0), &bank, &p);
    for b in 0..BANDS {
        let rel = (gk[b] / gg[b] - 1.0).abs();
        assert!(rel < 0.05, "band {b}: kernel {} vs gaussian {}", gk[b], gg[b]);
    }
}

#[test]
fn identical_pair_gives_delta_kernel() {
    let x = pink_noise(32, 32, 1.0, 4);
    let k = extract_diffusion_kernel(&x, &x).unwrap();
    assert_eq!(k.support, 1);
    assert!((k.spatial[0] - 1.0).abs() < 1e-6);
    assert!(matches!(
        extract_diffusion_kernel(&x, &pink_noise(32, 16, 1.0, 4)),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn higher_bands_ignore_mean_and_scale() {
    let bank = FilterBank::new(64, 64);
    let reference = bank.grid_reference();
    let x = gaussian_blur(&white_noise(64, 64, 6), 0.7);
    let f = decoupled_features(&x, &bank, &reference).unwrap();
    let moved = Plane::new(64, 64, x.data.iter().map(|v| 3.0 + 2.5 * v).collect()).unwrap();
    let g = decoupled_features(&moved, &bank, &reference).unwrap();
    for b in 0..BANDS {
        assert!((f.bands[b] - g.bands[b]).abs() < 1e-6);
    }
}

#[test]
fn kernel_energy_matches_direct_convolution() {
    let bank = FilterBank::new(32, 32);
    let k = EquivalentKernel::from_band_times(&bank, [-1.0, -0.5, 0.2, 0.1]);
    assert!(k.retained_energy >= RETAINED_ENERGY);
    let x = white_noise(32, 32, 13);
    let out = apply_kernel(&x, &k).unwrap();
    let msv = out.data.iter().map(|v| v * v).sum::<f64>() / 1024.0;
    let response = k.response_on(32, 32).unwrap();
    let spectral: f64 =
        power(&x).iter().zip(&response).map(|(p, h)| p * h * h).sum::<f64>() / (1024.0 * 1024.0);
    assert!((msv - spectral).abs() < 1e-8);
    // Direct circular convolution with the full spatial kernel.
    let full = Fft2::new(32, 32).inverse_real(
        response.iter().map(|&h| rustfft::num_complex::Complex64::new(h, 0.0)).collect(),
    );
    let mut direct = 0.0;
    for y in 0..32 {
        for xx in 0..32 {
            let mut acc = 0.0;
            for dy in 0..32 {
                for dx in 0..32 {
                    acc += full[dy * 32 + dx] * x.get((xx + 32 - dx) % 32, (y + 32 - dy) % 32);
                }
            }
            direct += acc * acc;
        }
    }
    assert!((direct / 1024.0 - msv).abs() < 1e-8);
    let c = Plane::from_fn(32, 32, |_, _| 0.6);
    let out = apply_kernel(&c, &k).unwrap();
    assert!(out.data.iter().all(|v| (v - 0.6 * response[0]).abs() < 1e-12));
}
