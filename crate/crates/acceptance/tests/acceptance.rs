//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any failed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use membrane_sandwich::characterization::{
    airy_transmission, diffraction_angle, finesse_from_decay_time, finesse_from_reflectivity, fit_airy,
    fit_thickness, misalignment_loss, reflectivity_from_finesse, AiryMode, Dispersion, ReflectivityPoint,
    THICKNESS_SCAN_MAX,
};
use membrane_sandwich::constants::{free_spectral_range, to_mhz_per_nm};
use membrane_sandwich::cooling::{
    displacement_spectrum, effective_lorentzian, effective_rates, heatmap, linspace, OptomechanicalConfig,
    SweepAxis,
};
use membrane_sandwich::coupling::{
    cell_curl, locate_max_coupling, max_gain, single_membrane_max_coupling, GridSpec,
};
use membrane_sandwich::mechanics::{fit_side_lengths, MembraneSpec, Peak};
use membrane_sandwich::scatter::{CavityGeometry, Membrane, ScatteringElement};
use membrane_sandwich::spectrum::{oracle_shift, reference_mode, shift_function, Parity, ShiftFunctionParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const L: f64 = 0.09;
const LAMBDA: f64 = 1064e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        pass: parts.iter().all(|p| p.pass),
        detail: parts
            .iter()
            .map(|p| format!("{}{}", if p.pass { "" } else { "[x] " }, p.detail))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_1() -> Outcome {
    let r = ScatteringElement::slab(LAMBDA, 104e-9, Complex64::new(2.17, 0.0)).unwrap().reflectivity();
    check((r - 0.408).abs() <= 0.002, format!("|r|^2 = {r:.5}, want 0.408 ± 0.002"))
}

fn criterion_2() -> Outcome {
    let mut parts = Vec::new();
    for (rm, want, tol) in [(0.408, 3.26, 0.02), (0.2050, 1.466, 0.002), (0.3137, 2.382, 0.001), (0.3345, 3.20, 0.03)] {
        let f = finesse_from_reflectivity(rm).unwrap().finesse;
        parts.push(check((f - want).abs() <= tol, format!("F({rm}) = {f:.4}, want {want} ± {tol}")));
        let back = reflectivity_from_finesse(f).unwrap();
        parts.push(check((back - rm).abs() <= 1e-10, format!("inverse {back:.12}")));
    }
    all(parts)
}

fn criterion_3() -> Outcome {
    let f0 = finesse_from_decay_time(4.790e-6, L);
    let f = finesse_from_decay_time(1.365e-6, L);
    let kappa_khz = 1.0 / 1.365e-6 / (2.0 * PI) / 1e3;
    all(vec![
        check((f0 - 50125.0).abs() <= 25.0, format!("F0 = {f0:.1}, want 50125 ± 25")),
        check((f - 14287.0).abs() <= 13.0, format!("F = {f:.1}, want 14287 ± 13")),
        check((kappa_khz - 117.0).abs() <= 1.0, format!("kappa = 2pi x {kappa_khz:.2} kHz, want 117 ± 1")),
    ])
}

fn criterion_4() -> Outcome {
    let f0 = finesse_from_decay_time(4.790e-6, L);
    let f = finesse_from_decay_time(1.365e-6, L);
    let fm = 3.0;
    let m = misalignment_loss(f, f0, fm, diffraction_angle(LAMBDA, 112e-6)).unwrap();
    let theta = m.theta_wedge * 1e6;
    all(vec![
        check((m.loss_ppm() - 50.0).abs() <= 2.0, format!("loss = {:.2} ppm, want 50 ± 2", m.loss_ppm())),
        check((theta - 30.0).abs() <= 3.0, format!("theta_wdg = {theta:.2} urad, want 30 ± 3")),
    ])
}

fn criterion_5() -> Outcome {
    let g = max_gain(0.4).unwrap();
    let rm = ScatteringElement::slab(LAMBDA, 104e-9, Complex64::new(2.17, 0.0)).unwrap().reflectivity();
    let model = max_gain(rm).unwrap();
    let (_, lam) = reference_mode(L, LAMBDA);
    let m = Membrane::new(104e-9, 2.17);
    let params = ShiftFunctionParams::from_membranes([m, m], L, lam).unwrap();
    let located = locate_max_coupling(&params, &GridSpec::centred(lam, 201), Parity::Even).unwrap();
    let located_gain = located.g1.abs() / single_membrane_max_coupling(params.reflectivities[0], L, lam).unwrap();
    all(vec![
        check((g - 2.72).abs() <= 0.01, format!("1/(1-sqrt 0.4) = {g:.4}, want 2.72 ± 0.01")),
        check(model >= 1.63, format!("model max gain {model:.3} >= 1.63")),
        check(model >= 2.47, format!("model max gain {model:.3} >= 2.47")),
        check(located_gain >= 2.47, format!("located max |G1|/G_sing = {located_gain:.3} >= 2.47")),
    ])
}

fn criterion_6() -> Outcome {
    let bound = single_membrane_max_coupling(0.408, L, LAMBDA).unwrap();
    let formula = free_spectral_range(L) / LAMBDA * 4.0 * 0.408f64.sqrt();
    let mhz = to_mhz_per_nm(bound);
    all(vec![
        check((bound / formula - 1.0).abs() < 1e-12, "bound equals (pi c/L)/lambda 4 sqrt(R_m)"),
        check((mhz - 4.00).abs() <= 0.04, format!("G_sing,max = 2pi x {mhz:.4} MHz/nm, want 4.00 ± 0.04")),
        check(3.47 <= mhz, format!("measured 3.47 MHz/nm <= bound {mhz:.3}")),
    ])
}

fn criterion_7() -> Outcome {
    let (ell, lam) = reference_mode(L, LAMBDA);
    let parity = Parity::of(ell);
    let m = Membrane::new(104e-9, 2.17);
    let params = ShiftFunctionParams::from_membranes([m, m], L, lam).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut times, mut n) = (0.0f64, Vec::new(), 0);
    while n < 1000 {
        let a: f64 = rng.gen_range(-lam..lam);
        let b: f64 = rng.gen_range(-lam..lam);
        let (q1, q2) = if a < b { (a, b) } else { (b, a) };
        if q2 - q1 < 1e-12 {
            continue;
        }
        let start = Instant::now();
        let explicit = shift_function(&params, q1, q2, parity);
        let geom = CavityGeometry::new(L, q1, q2, [m, m], 0.99994).unwrap();
        let oracle = oracle_shift(&geom, ell, explicit).unwrap();
        times.push(start.elapsed().as_secs_f64());
        worst = worst.max((explicit - oracle).abs());
        n += 1;
    }
    times.sort_by(f64::total_cmp);
    let median_ms = times[times.len() / 2] * 1e3;
    all(vec![
        check(worst < 1e-3, format!("max |explicit - oracle| = {worst:.2e} FSR over {n} points, want < 1e-3")),
        check(median_ms < 10.0, format!("median {median_ms:.3} ms/point, want < 10")),
    ])
}

fn criterion_8() -> Outcome {
    let (_, lam) = reference_mode(L, LAMBDA);
    let m = Membrane::new(104e-9, 2.17);
    let params = ShiftFunctionParams::from_membranes([m, m], L, lam).unwrap();
    let grid = GridSpec::centred(lam, 201);
    let located = locate_max_coupling(&params, &grid, Parity::Even).unwrap();
    let rel_q = located.g_com.abs() / located.g1.abs();
    let rel_anti = (located.g1 + located.g2).abs() / located.g1.abs().max(located.g2.abs());
    let curl = cell_curl(&params, &grid, Parity::Even).unwrap();
    let ratio = curl.max_curl / curl.max_gradient;
    all(vec![
        check(rel_q <= 1e-6, format!("|G_Q|/|G1| = {rel_q:.2e} at max point")),
        check(rel_anti <= 1e-6, format!("|G1 + G2|/max = {rel_anti:.2e}")),
        check(
            ratio < 1e-6,
            format!("curl/max|G| = {ratio:.2e} over {} cells ({} skipped)", curl.cells_checked, curl.cells_skipped),
        ),
    ])
}

fn criterion_9() -> Outcome {
    let spec = MembraneSpec { lx: 1.519e-3, ly: 1.536e-3, stress: 0.825e9, density: 3100.0, thickness: 100e-9 };
    let f11 = spec.frequency_hz(1, 1);
    let truth = MembraneSpec { lx: 1.5213e-3, ly: 1.5377e-3, ..spec };
    let peaks: Vec<Peak> = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (2, 3)]
        .iter()
        .map(|&(m, n)| Peak { frequency_hz: truth.frequency_hz(m, n), membrane: 0, m, n, quality_factor: None })
        .collect();
    let fit = &fit_side_lengths(&peaks, spec.stress, spec.density, None).unwrap()[0];
    let err = (fit.lx / truth.lx - 1.0).abs().max((fit.ly / truth.ly - 1.0).abs());
    all(vec![
        check((f11 / 238.8e3 - 1.0).abs() <= 0.005, format!("f11 = {:.3} kHz, want 238.8 ± 0.5%", f11 / 1e3)),
        check(
            (f11 / 235.810e3 - 1.0).abs() <= 0.015,
            format!("{:.2}% from measured 235.810 kHz", 100.0 * (f11 / 235.810e3 - 1.0)),
        ),
        check(err <= 1e-10, format!("side-length round trip {err:.1e}")),
    ])
}

fn peak_of(cfg: &OptomechanicalConfig, j: usize, hz: &[f64]) -> (f64, f64) {
    let omega: Vec<f64> = hz.iter().map(|f| 2.0 * PI * f).collect();
    let s = displacement_spectrum(cfg, &omega).unwrap();
    let p = s.peak(j).expect("peak inside grid");
    (p.fwhm, p.height)
}

fn criterion_10() -> Outcome {
    let base = OptomechanicalConfig::low_power_pair();
    let mut parts = Vec::new();

    // (a) equipartition with all couplings off
    let mut cold = base.clone();
    for m in &mut cold.modes {
        m.g0 = 0.0;
    }
    let mut worst_a = 0.0f64;
    for (j, m) in cold.modes.iter().enumerate() {
        let w = linspace(m.omega - 2000.0 * m.gamma, m.omega + 2000.0 * m.gamma, 400_001);
        let s = displacement_spectrum(&cold, &w).unwrap();
        worst_a = worst_a.max((s.mode_area(j) / m.thermal_variance(cold.temperature) - 1.0).abs());
    }
    parts.push(check(worst_a <= 0.01, format!("(a) equipartition error {:.3}%", 100.0 * worst_a)));

    // (b) each mode alone, every detuning of the sweep where g < kappa/20
    let mean = base.mean_mechanical_frequency();
    let (mut worst_b, mut compared) = (0.0f64, 0);
    for j in 0..base.modes.len() {
        for x in linspace(0.5, 1.5, 21) {
            let mut one = base.with_detuning(x * mean);
            one.modes = vec![base.modes[j]];
            let r = effective_rates(&one, 0).unwrap();
            if r.coupling >= base.kappa / 20.0 {
                continue;
            }
            let w = linspace(r.shifted_frequency - 5.0 * r.total_damping, r.shifted_frequency + 5.0 * r.total_damping, 401);
            let full = displacement_spectrum(&one, &w).unwrap();
            let lor = effective_lorentzian(&one, 0, &w).unwrap();
            let peak = lor.iter().cloned().fold(0.0, f64::max);
            for (a, b) in full.per_mode[0].iter().zip(&lor) {
                worst_b = worst_b.max((a - b).abs() / peak);
            }
            compared += 1;
        }
    }
    parts.push(check(
        worst_b <= 0.01 && compared > 0,
        format!("(b) max deviation from Lorentzian {:.3}% of peak over {compared} cases", 100.0 * worst_b),
    ));

    // (c) power sweep at the mean mechanical frequency
    let hz = linspace(233.0e3, 239.5e3, 26_001);
    let powers = linspace(0.0, 400e-6, 21);
    let mut monotone = true;
    let mut last = vec![(0.0, f64::INFINITY); base.modes.len()];
    let mut trace = Vec::new();
    for &p in &powers {
        let cfg = base.with_power(p);
        for (j, prev) in last.iter_mut().enumerate() {
            let (w, h) = peak_of(&cfg, j, &hz);
            if w < prev.0 * (1.0 - 1e-9) || h > prev.1 * (1.0 + 1e-9) {
                monotone = false;
                trace.push(format!("mode {j} at {:.0} uW: width {w:.2} Hz, height {h:.3e}", p * 1e6));
            }
            *prev = (w, h);
        }
    }
    parts.push(check(
        monotone,
        if monotone {
            format!("(c) widths non-decreasing, heights non-increasing over {} powers to 400 uW", powers.len())
        } else {
            format!("(c) violations: {}", trace.join(", "))
        },
    ));

    // (d) red/blue antisymmetry
    let mut exact = true;
    for x in linspace(0.05, 3.0, 60) {
        for j in 0..base.modes.len() {
            let red = effective_rates(&base.with_detuning(x * mean), j).unwrap().gamma_opt;
            let blue = effective_rates(&base.with_detuning(-x * mean), j).unwrap().gamma_opt;
            exact &= red == -blue;
        }
    }
    parts.push(check(exact, "(d) Gamma_opt(D) = -Gamma_opt(-D) bit for bit"));

    // runtime: 500 frequencies x 80 detunings, one thread
    let omega: Vec<f64> = linspace(234.5e3, 237.9e3, 500).iter().map(|f| 2.0 * PI * f).collect();
    let sweep: Vec<f64> = linspace(0.5, 1.5, 80).iter().map(|x| x * mean).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let map = pool.install(|| heatmap(&base, &omega, SweepAxis::Detuning, &sweep, false)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    parts.push(check(
        secs < 30.0 && map.values.len() == 80,
        format!("heatmap 500x80 in {secs:.2} s single-threaded"),
    ));
    all(parts)
}

fn criterion_11() -> Outcome {
    let lc = 24.008e-6;
    let f = finesse_from_reflectivity(0.408).unwrap().finesse;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let x: Vec<f64> = (0..1500).map(|i| 700e-9 + i as f64 * 0.2e-9).collect();
    let y: Vec<f64> = x.iter().map(|l| airy_transmission(f, 4.0 * PI * lc / l) + noise.sample(&mut rng)).collect();
    let fit = fit_airy(&x, &y, AiryMode::Spectral, None).unwrap();
    let el = (fit.length / lc - 1.0).abs();
    let ef = (fit.finesse / f - 1.0).abs();

    let luke = Dispersion::Table(vec![(532e-9, 2.0559), (632.8e-9, 2.0395), (1064e-9, 2.0112)]);
    let points = [
        ReflectivityPoint { wavelength: 532e-9, reflectivity: 0.2050, sigma: None },
        ReflectivityPoint { wavelength: 632.8e-9, reflectivity: 0.3137, sigma: None },
        ReflectivityPoint { wavelength: 1064e-9, reflectivity: 0.3345, sigma: None },
    ];
    let t = fit_thickness(&points, &luke, THICKNESS_SCAN_MAX).unwrap().thickness * 1e9;
    all(vec![
        check(el <= 5e-4, format!("(a) L_c = {:.4} um, error {:.3}%", fit.length * 1e6, el * 100.0)),
        check(ef <= 0.02, format!("F = {:.3} vs {f:.3}, error {:.2}%", fit.finesse, ef * 100.0)),
        check((t - 102.3).abs() <= 0.5, format!("(b) L_m = {t:.2} nm, want 102.3 ± 0.5")),
    ])
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                check(false, format!("panicked: {msg}"))
            });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {verdict} ({:.2} s) {}", start.elapsed().as_secs_f64(), outcome.detail);
        if !outcome.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
