//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dpsqkd::experiments::PUBLISHED_QBER_THRESHOLD;
use dpsqkd::model::{analytic_point, loss_to_distance, secure_rate, security_threshold};
use dpsqkd::postprocess::{distill, toeplitz_diagonal, toeplitz_hash, DistillOptions};
use dpsqkd::sim::{empirical_rates, sift, simulate_event_driven, simulate_pulse_level, SiftedKeyPair};
use dpsqkd::{ChannelSpec, EtaComposition, SystemParams};
use dpsqkd_cli::Cli;
use dpsqkd_validation::{ks_critical, ks_statistic, mean_and_stderr};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn close(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol
}

fn binary_entropy(e: f64) -> f64 {
    if e <= 0.0 || e >= 1.0 {
        0.0
    } else {
        -e * e.log2() - (1.0 - e) * (1.0 - e).log2()
    }
}

/// Secure-fraction bracket written out directly from the bound.
fn bracket(e: f64, mu: f64, f: f64) -> f64 {
    -(1.0 - 2.0 * mu) * (1.0 - e * e - (1.0 - 6.0 * e).powi(2) / 2.0).log2() - f * binary_entropy(e)
}

fn secure_rates_from_published_pairs() -> Outcome {
    let dcr004 = SystemParams::paper_dcr004();
    let dcr001 = SystemParams::paper_dcr001();
    let cases = [
        (31.95, 0.0102, 12.5, 0.05 * 12.5, &dcr004),
        (0.98, 0.0264, 0.17, 0.02, &dcr004),
        (0.22, 0.0293, 0.03, 0.005, &dcr001),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (sifted, qber, published, tol, params) in cases {
        let r = secure_rate(sifted, qber, params);
        ok &= close(r, published, tol);
        detail.push(format!(
            "{sifted} bps @ {:.2} % -> {r:.4} (published {published} +/- {tol})",
            qber * 100.0
        ));
    }
    let detail = detail.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn security_threshold_location() -> Outcome {
    let params = SystemParams::paper_dcr004();
    let threshold = security_threshold(&params).map_err(|e| e.to_string())?;
    let (mut lo, mut hi) = (1e-6, 0.1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bracket(mid, params.mu, params.ec_inefficiency) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let detail = format!("threshold {threshold:.6}, bisection oracle {oracle:.6}, window [0.040, 0.042]");
    if (0.040..=0.042).contains(&threshold) && close(threshold, oracle, 1e-9) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn distance_projection() -> Outcome {
    let km = loss_to_distance(72.0, 0.164).map_err(|e| e.to_string())?;
    let detail = format!("72 dB / 0.164 dB/km = {km:.3} km, rounds to {}", km.round());
    if km.round() == 439.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn simulator_agreement() -> Outcome {
    const SEEDS: u64 = 30;
    const TARGET_CLICKS: f64 = 2000.0;
    const SIGMA: f64 = 3.0;
    let mut lines = Vec::new();
    let mut ok = true;

    for (preset, params) in [
        ("paper-dcr004", SystemParams::paper_dcr004()),
        ("paper-dcr001", SystemParams::paper_dcr001()),
    ] {
        for loss in [20.0, 40.0, 60.0] {
            let channel = ChannelSpec::from_loss(loss);
            let model = analytic_point(&params, &channel).map_err(|e| e.to_string())?;
            let n_slots = (TARGET_CLICKS / model.p_click).ceil() as u64;
            let duration = n_slots as f64 / params.clock_rate_hz;
            let mut rates = Vec::new();
            let mut qbers = Vec::new();
            for seed in 0..SEEDS {
                let (stream, phases) =
                    simulate_pulse_level(&params, &channel, n_slots, 1000 + seed).map_err(|e| e.to_string())?;
                let pair = sift(&stream, &phases).map_err(|e| e.to_string())?;
                let rates_seed = empirical_rates(&pair, duration).map_err(|e| e.to_string())?;
                rates.push(rates_seed.sifted_rate_bps);
                qbers.push(rates_seed.qber.ok_or("no sifted bits")?);
            }
            let (rate, rate_se) = mean_and_stderr(&rates);
            let (qber, qber_se) = mean_and_stderr(&qbers);
            let z_rate = (rate - model.sifted_rate_bps) / rate_se;
            let z_qber = (qber - model.qber) / qber_se;
            ok &= z_rate.abs() <= SIGMA && z_qber.abs() <= SIGMA;
            lines.push(format!(
                "{preset} {loss} dB: z(rate) {z_rate:+.2}, z(qber) {z_qber:+.2}"
            ));
        }
    }

    // Inter-click gaps: event-driven vs pulse-level, two-sample KS at alpha 0.01.
    const GAPS: usize = 10_000;
    const KS_COEFFICIENT: f64 = 1.628;
    for (preset, params, seed) in [
        ("paper-dcr004", SystemParams::paper_dcr004(), 7),
        ("paper-dcr001", SystemParams::paper_dcr001(), 17),
    ] {
        let channel = ChannelSpec::from_loss(40.0);
        let model = analytic_point(&params, &channel).map_err(|e| e.to_string())?;
        let duration = 1.05 * (GAPS + 1) as f64 / model.sifted_rate_bps;
        let n_slots = (duration * params.clock_rate_hz).ceil() as u64;
        let (pulse, _) = simulate_pulse_level(&params, &channel, n_slots, seed).map_err(|e| e.to_string())?;
        let event = simulate_event_driven(&params, &channel, duration, seed + 1).map_err(|e| e.to_string())?;
        let mut a = pulse.gaps();
        let mut b = event.gaps();
        if a.len() < GAPS || b.len() < GAPS {
            return Err(format!("too few gaps: {} / {}", a.len(), b.len()));
        }
        a.truncate(GAPS);
        b.truncate(GAPS);
        let d = ks_statistic(&mut a, &mut b);
        let critical = ks_critical(KS_COEFFICIENT, GAPS, GAPS);
        ok &= d <= critical;
        lines.push(format!("{preset} 40 dB gaps: KS D {d:.4} (critical {critical:.4})"));
    }

    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn high_loss_regime() -> Outcome {
    let params = SystemParams::paper_dcr001();
    let mut lines = Vec::new();
    let mut any = false;
    for mode in EtaComposition::ALL {
        let p = params.with_composition(mode);
        let q72 = analytic_point(&p, &ChannelSpec::from_loss(72.0))
            .map_err(|e| e.to_string())?
            .qber;
        let q779 = analytic_point(&p, &ChannelSpec::from_loss(77.9))
            .map_err(|e| e.to_string())?
            .qber;
        any |= q72 < PUBLISHED_QBER_THRESHOLD && q779 > PUBLISHED_QBER_THRESHOLD;
        lines.push(format!(
            "{mode}: 72 dB {:.3} %, 77.9 dB {:.3} %",
            q72 * 100.0,
            q779 * 100.0
        ));
    }
    let detail = format!(
        "need < 4.1 % at 72 dB and > 4.1 % at 77.9 dB in one mode; {}",
        lines.join("; ")
    );
    if any {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn measured_rate_plausibility() -> Outcome {
    let cases = [
        (SystemParams::paper_dcr004(), 52.7, 31.95),
        (SystemParams::paper_dcr004(), 66.0, 0.98),
        (SystemParams::paper_dcr001(), 72.0, 0.22),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (params, loss, measured) in cases {
        let model = analytic_point(&params, &ChannelSpec::from_loss(loss)).map_err(|e| e.to_string())?;
        let ratio = model.sifted_rate_bps / measured;
        ok &= (0.5..=2.0).contains(&ratio);
        lines.push(format!(
            "{loss} dB ({}): model {:.4} vs measured {measured} (x{ratio:.3})",
            params.eta_composition, model.sifted_rate_bps
        ));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dense_hash(key: &[bool], out_len: usize, seed: u64) -> Vec<bool> {
    let n = key.len();
    let diagonal = toeplitz_diagonal(seed, out_len, n);
    let matrix: Vec<Vec<bool>> = (0..out_len)
        .map(|i| (0..n).map(|j| diagonal[i + n - 1 - j]).collect())
        .collect();
    matrix
        .iter()
        .map(|row| row.iter().zip(key).filter(|(m, k)| **m && **k).count() % 2 == 1)
        .collect()
}

fn postprocessing_properties() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..100u64 {
        let out_len = 1 + (seed % 8) as usize;
        for value in 0..=255u8 {
            let key: Vec<bool> = (0..8).map(|i| (value >> (7 - i)) & 1 == 1).collect();
            let fast = toeplitz_hash(&key, out_len, seed).map_err(|e| e.to_string())?;
            if fast != dense_hash(&key, out_len, seed) {
                mismatches += 1;
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut nonlinear = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=300);
        let out_len = rng.random_range(0..=n);
        let seed: u64 = rng.random();
        let a: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let sum: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let ha = toeplitz_hash(&a, out_len, seed).map_err(|e| e.to_string())?;
        let hb = toeplitz_hash(&b, out_len, seed).map_err(|e| e.to_string())?;
        let hs = toeplitz_hash(&sum, out_len, seed).map_err(|e| e.to_string())?;
        if hs != ha.iter().zip(&hb).map(|(x, y)| x ^ y).collect::<Vec<_>>() {
            nonlinear += 1;
        }
    }

    let bits: Vec<bool> = (0..1000).map(|i| (i * 7 + i / 3) % 2 == 0).collect();
    let pair = SiftedKeyPair::new(bits.clone(), bits, (0..1000).collect()).map_err(|e| e.to_string())?;
    let report =
        distill(&pair, &SystemParams::paper_dcr004(), &DistillOptions::default()).map_err(|e| e.to_string())?;

    let detail = format!(
        "dense-oracle mismatches {mismatches}/25600, linearity failures {nonlinear}/10000, \
         error-free 1000-bit key -> {} bits",
        report.secure_length
    );
    if mismatches == 0 && nonlinear == 0 && report.secure_length == 600 && report.final_key.len() == 600 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// One CLI invocation through the same entry point as the binary.
fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let cli = Cli::try_parse_from(std::iter::once("dpsqkd").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    dpsqkd_cli::run(&cli)
        .map(String::into_bytes)
        .map_err(|e| format!("`{}`: {e}", args.join(" ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).display().to_string();
    let (sifted, key) = (path("sifted.csv"), path("key.hex"));
    let sifted_set = format!("output.sifted_path={sifted}");
    let key_set = format!("output.key_path={key}");

    let runs: Vec<(&str, Vec<&str>)> = vec![
        (
            "analytic",
            vec!["analytic", "--preset", "paper-dcr001", "--set", "channel.loss_db=72"],
        ),
        ("sweep", vec!["sweep", "--format", "report"]),
        (
            "simulate/event",
            vec![
                "simulate",
                "--seed",
                "5",
                "--seeds",
                "3",
                "--set",
                "channel.loss_db=52.7",
                "--set",
                "sim.duration_s=200",
            ],
        ),
        (
            "simulate/pulse",
            vec![
                "simulate",
                "--seed",
                "5",
                "--set",
                "sim.kernel=pulse",
                "--set",
                "channel.loss_db=40",
                "--set",
                "sim.duration_s=2",
            ],
        ),
        ("reproduce", vec!["reproduce", "--seeds", "4"]),
        ("presets", vec!["presets"]),
    ];
    let mut checked = Vec::new();
    for (label, args) in &runs {
        if run_cli(args)? != run_cli(args)? {
            return Err(format!("{label}: outputs differ"));
        }
        checked.push(*label);
    }

    let simulate = [
        "simulate",
        "--seed",
        "9",
        "--set",
        "channel.loss_db=52.7",
        "--set",
        "sim.duration_s=500",
        "--set",
        &sifted_set,
    ];
    let first_sifted = {
        run_cli(&simulate)?;
        std::fs::read(&sifted).map_err(|e| e.to_string())?
    };
    run_cli(&simulate)?;
    if std::fs::read(&sifted).map_err(|e| e.to_string())? != first_sifted {
        return Err("simulate: sifted key files differ".into());
    }
    let distill_args = [
        "distill",
        "--input",
        &sifted,
        "--set",
        "postprocess.sample_fraction=0.2",
        "--set",
        &key_set,
    ];
    let read_key = || std::fs::read(Path::new(&key)).map_err(|e| e.to_string());
    let distill_a = run_cli(&distill_args)?;
    let key_a = read_key()?;
    std::fs::remove_file(&key).map_err(|e| e.to_string())?;
    let distill_b = run_cli(&distill_args)?;
    if distill_a != distill_b || key_a != read_key()? {
        return Err("distill: outputs or key files differ".into());
    }
    checked.push("simulate/sifted-file");
    checked.push("distill");
    Ok(format!("identical across two runs: {}", checked.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "secure rate from published sifted rate and QBER",
            secure_rates_from_published_pairs,
        ),
        ("security threshold location", security_threshold_location),
        ("distance projection", distance_projection),
        ("simulator against analytic model", simulator_agreement),
        ("high-loss QBER regime", high_loss_regime),
        ("analytic sifted rate against measurements", measured_rate_plausibility),
        ("post-processing properties", postprocessing_properties),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed().as_secs_f64();
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("criterion {} {status}: {name} [{elapsed:.2} s] {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
