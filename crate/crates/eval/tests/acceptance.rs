//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs without the libtest harness so the report is printed on every run.

use std::process::ExitCode;
use std::time::Instant;

use dst_core::lut::{apply_lut, bake_lut, read_cube, write_cube, FastLut, DEFAULT_LUT_SIZE};
use dst_core::moments::{analyze, gradients, normalize_to_r3, ortho_kurtosis, sample_moment, transfer_moments, Sample};
use dst_core::pipeline::{transfer_style, ClampPolicy, TransferConfig};
use dst_core::spectral::{
    apply_kernel, band_gains, decoupled_features, extract_diffusion_kernel, spectral_features, Fft2, FilterBank,
    BANDS, CONTINUOUS_REFERENCE,
};
use dst_core::synth::{gaussian_blur, gaussian_response, photo, pink_noise, white_noise};
use dst_core::Plane;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, StandardNormal, Uniform};

const MOMENT_PAIRS: usize = 100;
const MOMENT_N: usize = 4096;
const MOMENT_TOL: f64 = 1e-6;
const MOMENT_BUDGET_S: f64 = 5.0;
const GAUSSIAN_N: usize = 1_000_000;
const GAUSSIAN_SE: f64 = 5.0;
const ORTHO_POINTS: usize = 200;
const ORTHO_TOL: f64 = 1e-8;
const FD_TOL: f64 = 1e-5;
const RICCATI_SAMPLES: usize = 1000;
const RICCATI_TOL: f64 = 1e-9;
const KURTOSIS_TOL: f64 = 1e-12;
const TIGHTNESS_TOL: f64 = 1e-12;
const SPECTRAL_SE: f64 = 3.0;
const REFERENCE_REL: f64 = 0.02;
const RECOVERY_TOL: f64 = 1e-6;
const RECOVERY_REL: f64 = 0.05;
const FIXED_POINT_TOL: f64 = 2.0 / 65535.0;
const FIXED_POINT_PHOTOS: u64 = 10;
const LUT_MAX_ERR: f64 = 2.0 / 255.0;
const LUT_PSNR_DB: f64 = 45.0;
const CUBE_PRINT_TOL: f64 = 5e-7;
const THROUGHPUT_MS: f64 = 50.0;

type Outcome = (bool, String);

fn draw(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..4) {
        0 => {
            let d = Gamma::new(rng.random_range(1.0..6.0), 1.0).unwrap();
            (0..n).map(|_| d.sample(rng)).collect()
        }
        1 => {
            let d = LogNormal::new(0.0, rng.random_range(0.1..0.6)).unwrap();
            (0..n).map(|_| d.sample(rng)).collect()
        }
        2 => {
            let d = Uniform::new(0.0f64, 1.0).unwrap();
            (0..n).map(|_| d.sample(rng).powf(1.5)).collect()
        }
        _ => {
            let d = Normal::new(0.4, 0.1).unwrap();
            (0..n).map(|_| d.sample(rng)).collect()
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn moment_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..MOMENT_PAIRS {
        let src = draw(&mut rng, MOMENT_N);
        let tgt = analyze(&draw(&mut rng, MOMENT_N), 4).unwrap();
        let out = match transfer_moments(&Sample::new(src), &tgt, &[1, 2, 3, 4]) {
            Ok((out, _)) => out,
            Err(e) => return (false, format!("pair {k}: {e}")),
        };
        let got = analyze(&out.values, 4).unwrap();
        for (a, b) in got.as_array().iter().zip(tgt.as_array()) {
            worst = worst.max((a.unwrap() - b.unwrap()).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst < MOMENT_TOL && secs < MOMENT_BUDGET_S,
        format!("max error {worst:.2e} (tol {MOMENT_TOL:.0e}), {secs:.2} s (budget {MOMENT_BUDGET_S} s)"),
    )
}

fn gaussian_anchor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000_000);
    let x: Vec<f64> = (0..GAUSSIAN_N).map(|_| rng.sample(StandardNormal)).collect();
    let f = analyze(&x, 4).unwrap().as_array().map(Option::unwrap);
    let root = (GAUSSIAN_N as f64).sqrt();
    // Asymptotic standard errors for a normal parent.
    let se = [1.0, 2f64.sqrt(), 6f64.sqrt(), 24f64.sqrt()].map(|s| s / root);
    let expect = [0.0, 1.0, 0.0, 3.0];
    let z: Vec<f64> = (0..4).map(|j| (f[j] - expect[j]) / se[j]).collect();
    let worst = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (
        worst < GAUSSIAN_SE,
        format!("features {f:.5?}, max |z| {worst:.2} (limit {GAUSSIAN_SE})"),
    )
}

fn orthogonality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst_ortho = 0.0f64;
    let mut worst_fd = 0.0f64;
    for _ in 0..ORTHO_POINTS {
        let n = rng.random_range(6..200);
        let x = draw(&mut rng, n);
        let g = [gradients::mean(&x), gradients::variance(&x), gradients::skewness(&x)];
        for i in 0..3 {
            for j in i + 1..3 {
                let rel = dot(&g[i], &g[j]).abs() / (dot(&g[i], &g[i]) * dot(&g[j], &g[j])).sqrt();
                worst_ortho = worst_ortho.max(rel);
            }
        }
        let y = normalize_to_r3(&Sample::new(x.clone())).unwrap().0.values;
        let gy = [gradients::mean(&y), gradients::variance(&y), gradients::skewness(&y)];
        let p4 = gradients::projected_fourth_moment(&y).unwrap();
        let norm4 = dot(&p4, &p4).sqrt();
        if norm4 > 0.0 {
            for gi in &gy {
                worst_ortho = worst_ortho.max(dot(&p4, gi).abs() / (norm4 * dot(gi, gi).sqrt()));
            }
        }

        // Central differences of the analytic gradients.
        let functions: [(&dyn Fn(&[f64]) -> f64, Vec<f64>); 4] = [
            (&|v| sample_moment(v, 1), g[0].clone()),
            (&|v| analyze(v, 2).unwrap().variance, g[1].clone()),
            (&|v| analyze(v, 3).unwrap().skewness.unwrap(), g[2].clone()),
            (&|v| sample_moment(v, 4), gradients::raw_moment(&x, 4)),
        ];
        for (f, grad) in &functions {
            let scale = dot(grad, grad).sqrt();
            for i in [0, n / 2, n - 1] {
                let h = 1e-5 * x[i].abs().max(1.0);
                let mut up = x.clone();
                let mut down = x.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (f(&up) - f(&down)) / (2.0 * h);
                worst_fd = worst_fd.max((fd - grad[i]).abs() / scale);
            }
        }
    }
    (
        worst_ortho < ORTHO_TOL && worst_fd < FD_TOL,
        format!("orthogonality {worst_ortho:.2e} (tol {ORTHO_TOL:.0e}), finite differences {worst_fd:.2e} (tol {FD_TOL:.0e})"),
    )
}

fn riccati_skewness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst = 0.0f64;
    let mut worst_k = 0.0f64;
    for _ in 0..RICCATI_SAMPLES {
        let n = rng.random_range(8..500);
        let x = draw(&mut rng, n);
        let y = match normalize_to_r3(&Sample::new(x)) {
            Ok((s, _)) => s.values,
            Err(e) => return (false, format!("normalization failed: {e}")),
        };
        let f = analyze(&y, 3).unwrap();
        for (a, b) in [f.mean, f.variance, f.skewness.unwrap()].iter().zip([0.0, 1.0, 0.0]) {
            worst = worst.max((a - b).abs());
        }

        // Symmetric sample: skewness is exactly zero.
        let half = draw(&mut rng, n / 2 + 2);
        let m = half.iter().sum::<f64>() / half.len() as f64;
        let sym: Vec<f64> = half.iter().flat_map(|v| [v - m, m - v]).collect();
        let m2 = sample_moment(&sym, 2);
        let kurt = sample_moment(&sym, 4) / (m2 * m2);
        worst_k = worst_k.max((ortho_kurtosis(&sym).unwrap() - kurt).abs());
    }
    (
        worst < RICCATI_TOL && worst_k < KURTOSIS_TOL,
        format!("(mean, var, skew) error {worst:.2e} (tol {RICCATI_TOL:.0e}), ortho-kurtosis vs kurtosis {worst_k:.2e} (tol {KURTOSIS_TOL:.0e})"),
    )
}

fn bank_tightness() -> Outcome {
    let errs: Vec<f64> = [128, 512].iter().map(|&n| FilterBank::new(n, n).tightness_error()).collect();
    (
        errs.iter().all(|e| *e < TIGHTNESS_TOL),
        format!("128x128 {:.2e}, 512x512 {:.2e} (tol {TIGHTNESS_TOL:.0e})", errs[0], errs[1]),
    )
}

fn standardize(x: &Plane) -> Plane {
    let n = x.len() as f64;
    let m = x.data.iter().sum::<f64>() / n;
    let sd = (x.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    Plane::new(x.width, x.height, x.data.iter().map(|v| (v - m) / sd).collect()).unwrap()
}

fn spectral_anchor() -> Outcome {
    let n = 512;
    let bank = FilterBank::new(n, n);
    let reference = bank.grid_reference();
    let f = spectral_features(&standardize(&white_noise(n, n, 2024)), &bank).unwrap();
    let count = (n * n) as f64;
    let mut worst_z = 0.0f64;
    let mut worst_rel = 0.0f64;
    for b in 0..BANDS {
        let se = (2.0 * bank.weights[b].iter().map(|w| w * w).sum::<f64>()).sqrt() / count;
        worst_z = worst_z.max(((f.bands[b] - reference[b]) / se).abs());
        worst_rel = worst_rel.max((reference[b] - CONTINUOUS_REFERENCE[b]).abs() / CONTINUOUS_REFERENCE[b]);
    }
    (
        worst_z < SPECTRAL_SE && worst_rel < REFERENCE_REL,
        format!(
            "bands {:.6?}, max |z| {worst_z:.2} (limit {SPECTRAL_SE}); grid {reference:.10?} vs continuous off by {:.3}% (limit {}%)",
            f.bands,
            100.0 * worst_rel,
            100.0 * REFERENCE_REL
        ),
    )
}

fn diffusion_recovery() -> Outcome {
    let n = 256;
    let sharp = pink_noise(n, n, 1.0, 77);
    let blurred = gaussian_blur(&sharp, 2.0);
    let k = match extract_diffusion_kernel(&blurred, &sharp) {
        Ok(k) => k,
        Err(e) => return (false, e.to_string()),
    };
    let bank = FilterBank::new(n, n);
    let reference = bank.grid_reference();
    let want = decoupled_features(&blurred, &bank, &reference).unwrap();
    let got = decoupled_features(&apply_kernel(&sharp, &k).unwrap(), &bank, &reference).unwrap();
    let band_err = (0..BANDS).map(|b| (got.bands[b] - want.bands[b]).abs()).fold(0.0, f64::max);
    let power: Vec<f64> = Fft2::new(n, n).forward(&sharp.data).iter().map(|c| c.norm_sqr()).collect();
    let gk = band_gains(&k.response_on(n, n).unwrap(), &bank, &power);
    let gg = band_gains(&gaussian_response(n, n, 2.0), &bank, &power);
    let rel = (0..BANDS).map(|b| (gk[b] / gg[b] - 1.0).abs()).fold(0.0, f64::max);
    (
        band_err < RECOVERY_TOL && rel < RECOVERY_REL,
        format!(
            "band MSV error {band_err:.2e} (tol {RECOVERY_TOL:.0e}), band response off by {:.2}% (limit {}%)",
            100.0 * rel,
            100.0 * RECOVERY_REL
        ),
    )
}

fn pipeline_fixed_point() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..FIXED_POINT_PHOTOS {
        let x = photo(160, 120, 500 + seed);
        match transfer_style(&x, &x, &TransferConfig::default()) {
            Ok((y, _)) => worst = worst.max(x.max_abs_diff(&y)),
            Err(e) => return (false, format!("photo {seed}: {e}")),
        }
    }
    (
        worst < FIXED_POINT_TOL,
        format!("{FIXED_POINT_PHOTOS} photos, max error {worst:.2e} (tol {FIXED_POINT_TOL:.2e})"),
    )
}

fn lut_fidelity() -> Outcome {
    // 8-bit material.
    let raw = photo(640, 360, 900);
    let frame = raw.map_pixels(raw.encoding, |p| p.map(|v| (v * 255.0).round() / 255.0));
    let target = photo(480, 320, 901);
    let cfg = TransferConfig {
        clamp: ClampPolicy::Clamp,
        ..Default::default()
    };
    let (direct, recipe) = transfer_style(&frame, &target, &cfg).unwrap();
    let lut = bake_lut(&recipe, DEFAULT_LUT_SIZE).unwrap();
    let via = apply_lut(&frame, &lut);
    let (max_err, psnr) = (direct.max_abs_diff(&via), direct.psnr(&via));
    let over = (0..frame.len())
        .filter(|&i| {
            let (a, b) = (direct.pixel(i), via.pixel(i));
            (0..3).any(|c| (a[c] - b[c]).abs() >= LUT_MAX_ERR)
        })
        .count();
    let text = write_cube(&lut);
    let back = read_cube(&text).unwrap();
    let print_err = lut
        .entries
        .iter()
        .zip(&back.entries)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .fold(0.0, f64::max);
    let stable = write_cube(&back) == text;
    (
        max_err < LUT_MAX_ERR && psnr > LUT_PSNR_DB && print_err <= CUBE_PRINT_TOL && stable,
        format!(
            "max error {max_err:.2e} (tol {LUT_MAX_ERR:.2e}, {over} of {} pixels over), PSNR {psnr:.1} dB (min {LUT_PSNR_DB}), .cube read error {print_err:.1e}, rewrite identical: {stable}",
            frame.len()
        ),
    )
}

fn throughput() -> Outcome {
    let (_, recipe) = transfer_style(&photo(96, 96, 7), &photo(96, 96, 8), &TransferConfig::default()).unwrap();
    let lut = FastLut::from(&bake_lut(&recipe, DEFAULT_LUT_SIZE).unwrap());
    let (w, h) = (1920, 1080);
    let mut rng = ChaCha8Rng::seed_from_u64(1080);
    let input: Vec<f32> = (0..3 * w * h).map(|_| rng.random::<f32>()).collect();
    let mut output = vec![0.0f32; input.len()];
    lut.apply_interleaved(&input, &mut output);
    let mut times: Vec<f64> = (0..7)
        .map(|_| {
            let t = Instant::now();
            lut.apply_interleaved(&input, &mut output);
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let threads = rayon::current_num_threads();
    (
        median < THROUGHPUT_MS,
        format!("1920x1080 median {median:.1} ms over 7 runs on {threads} thread(s) (budget {THROUGHPUT_MS} ms)"),
    )
}

fn main() -> ExitCode {
    // Honour libtest's listing probe so `cargo test -- --list` works.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("moment-contract", moment_contract),
        ("gaussian-anchor", gaussian_anchor),
        ("orthogonality", orthogonality),
        ("riccati-skewness", riccati_skewness),
        ("bank-tightness", bank_tightness),
        ("spectral-anchor", spectral_anchor),
        ("diffusion-recovery", diffusion_recovery),
        ("pipeline-fixed-point", pipeline_fixed_point),
        ("lut-fidelity", lut_fidelity),
        ("lut-throughput", throughput),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = check();
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
