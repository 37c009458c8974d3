use std::fs;
use std::path::Path;

use dpsqkd::experiments::{
    builtin_scenarios, compare_operating_points, sweep_loss, MeanStderr, ReproduceConfig, Tolerances,
};
use dpsqkd::model::{analytic_point, loss_to_distance, max_tolerable_loss, security_threshold};
use dpsqkd::postprocess::{distill, pack_msb_first, to_hex, DistillOptions, DistillStatus, SecureKeyReport};
use dpsqkd::rng::GENERATOR_NAME;
use dpsqkd::sim::{empirical_rates, sift, slots_for_duration, KernelRegistry, Origin, SiftedKeyPair};
use dpsqkd::{EtaComposition, SystemParams};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::render::{num, percent, Cell, Document};

fn base_document(title: &str, command: &str, cfg: &RunConfig) -> Document {
    let mut doc = Document::new(title);
    doc.meta("version", env!("CARGO_PKG_VERSION"));
    doc.meta("command", command);
    doc.meta("generator", GENERATOR_NAME);
    for (k, v) in cfg.entries() {
        doc.meta(format!("config.{k}"), if v.is_empty() { "(unset)" } else { v });
    }
    doc
}

fn mode_column(prefix: &str, mode: EtaComposition) -> String {
    format!("{prefix}_{}", mode.name().replace('-', "_"))
}

pub fn analytic(cfg: &RunConfig) -> Result<Document, CliError> {
    let params = cfg.system_params()?;
    let channel = cfg.channel()?;
    let threshold: f64 = cfg.parse("threshold.qber")?;
    let point = analytic_point(&params, &channel)?;

    let mut doc = base_document("Analytic link model", "analytic", cfg);
    match security_threshold(&params) {
        Ok(t) => doc.meta("secure_qber_threshold", percent(t)),
        Err(e) => doc.meta("secure_qber_threshold", format!("undefined ({e})")),
    }
    match max_tolerable_loss(&params, threshold) {
        Ok(loss) => {
            doc.meta("max_tolerable_loss_db", num(loss));
            if let Some(span) = channel.provenance {
                let km = loss_to_distance(loss, span.attenuation_db_per_km)?;
                doc.meta("max_distance_km", num(km));
            }
        }
        Err(e) => doc.meta("max_tolerable_loss_db", format!("undefined ({e})")),
    }

    doc.headers(&[
        "eta_composition",
        "loss_db",
        "p_signal",
        "p_dark",
        "p_click",
        "sifted_bps",
        "qber",
        "secure_fraction",
        "secure_bps",
    ]);
    doc.row(vec![
        params.eta_composition.name().into(),
        Cell::Num(channel.loss_db),
        Cell::Num(point.p_signal),
        Cell::Num(point.p_dark),
        Cell::Num(point.p_click),
        Cell::Num(point.sifted_rate_bps),
        Cell::Frac(point.qber),
        Cell::Num(point.secure_fraction),
        Cell::Num(point.secure_rate_bps),
    ]);
    if point.qber >= threshold {
        doc.notes.push(format!(
            "QBER {} is at or above the {} threshold",
            percent(point.qber),
            percent(threshold)
        ));
    }
    Ok(doc)
}

pub fn sweep(cfg: &RunConfig) -> Result<Document, CliError> {
    let params = cfg.system_params()?;
    let start: f64 = cfg.parse("sweep.start_db")?;
    let stop: f64 = cfg.parse("sweep.stop_db")?;
    let step: f64 = cfg.parse("sweep.step_db")?;
    if !(step > 0.0) || !(stop >= start) {
        return Err(CliError::Config(format!(
            "sweep range [{start}, {stop}] with step {step} is empty"
        )));
    }
    let result = sweep_loss(&params, start, stop, step)?;

    let mut doc = base_document("Loss sweep", "sweep", cfg);
    doc.meta(
        "secure_cutoff_db",
        result.secure_cutoff_db.map_or_else(|| "none".to_string(), num),
    );
    doc.headers(&["loss_db", "p_click", "sifted_bps", "qber", "secure_bps"]);
    for (loss, p) in &result.points {
        doc.row(vec![
            Cell::Num(*loss),
            Cell::Num(p.p_click),
            Cell::Num(p.sifted_rate_bps),
            Cell::Frac(p.qber),
            Cell::Num(p.secure_rate_bps),
        ]);
    }
    Ok(doc)
}

fn seeds(cfg: &RunConfig) -> Result<Vec<u64>, CliError> {
    let base: u64 = cfg.parse("sim.seed")?;
    let count: u64 = cfg.parse("sim.seeds")?;
    if count == 0 {
        return Err(CliError::Config("`sim.seeds` must be at least 1".into()));
    }
    Ok((0..count).map(|i| base.wrapping_add(i)).collect())
}

fn distill_options(cfg: &RunConfig, sample_seed: u64) -> Result<DistillOptions, CliError> {
    let sample_fraction: f64 = cfg.parse("postprocess.sample_fraction")?;
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(CliError::Config(format!(
            "`postprocess.sample_fraction` must be in (0, 1], got {sample_fraction}"
        )));
    }
    Ok(DistillOptions {
        sample_fraction,
        sample_seed,
        hash_seed: cfg.parse("postprocess.hash_seed")?,
    })
}

fn write_key(cfg: &RunConfig, report: &SecureKeyReport) -> Result<(), CliError> {
    let path = cfg.get("output.key_path");
    if path.is_empty() {
        return Ok(());
    }
    let bytes = match cfg.get("output.key_format") {
        "hex" => format!("{}\n", to_hex(&report.final_key)).into_bytes(),
        "bin" => pack_msb_first(&report.final_key),
        other => {
            return Err(CliError::Config(format!(
                "unknown `output.key_format` `{other}` (expected hex or bin)"
            )))
        }
    };
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn status_note(status: &DistillStatus) -> Option<String> {
    (*status != DistillStatus::Ok).then(|| status.to_string())
}

pub fn simulate(cfg: &RunConfig) -> Result<Document, CliError> {
    let params = cfg.system_params()?;
    let channel = cfg.channel()?;
    let seeds = seeds(cfg)?;
    let registry = KernelRegistry::builtin();
    let kernel = registry.get(cfg.get("sim.kernel")).map_err(|_| {
        CliError::Config(format!(
            "unknown kernel `{}` (known: {})",
            cfg.get("sim.kernel"),
            registry.names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let n_slots = match cfg.parse_opt::<u64>("sim.n_slots")? {
        Some(n) if n >= 2 => n,
        Some(n) => return Err(CliError::Config(format!("`sim.n_slots` must be at least 2, got {n}"))),
        None => slots_for_duration(&params, cfg.positive("sim.duration_s")?)?,
    };
    let duration_s = n_slots as f64 / params.clock_rate_hz;
    let exports = cfg.is_set("output.key_path") || cfg.is_set("output.sifted_path");
    if exports && seeds.len() > 1 {
        return Err(CliError::Config("key and sifted-key export need a single seed".into()));
    }
    let analytic = analytic_point(&params, &channel)?;

    let mut doc = base_document("Simulation", "simulate", cfg);
    doc.meta("kernel", kernel.name());
    doc.meta("seeds", seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "));
    doc.meta("n_slots", n_slots);
    doc.meta("duration_s", num(duration_s));
    doc.meta("model_sifted_bps", num(analytic.sifted_rate_bps));
    doc.meta("model_qber", percent(analytic.qber));
    doc.headers(&[
        "seed",
        "clicks",
        "signal_clicks",
        "dark_clicks",
        "sifted_bits",
        "sifted_bps",
        "qber",
        "secure_bits",
        "secure_bps",
        "status",
    ]);

    let mut sifted_rates = Vec::new();
    let mut qbers = Vec::new();
    for &seed in &seeds {
        let run = kernel.simulate(&params, &channel, n_slots, seed)?;
        let pair = sift(&run.stream, &run.phases)?;
        let rates = empirical_rates(&pair, duration_s)?;
        let report = distill(&pair, &params, &distill_options(cfg, seed)?)?;
        sifted_rates.push(rates.sifted_rate_bps);
        qbers.extend(rates.qber);
        doc.row(vec![
            Cell::Int(seed),
            Cell::Int(run.stream.events.len() as u64),
            Cell::Int(run.stream.count(Origin::Signal) as u64),
            Cell::Int(run.stream.count(Origin::Dark) as u64),
            Cell::Int(pair.len() as u64),
            Cell::Num(rates.sifted_rate_bps),
            rates.qber.map_or(Cell::Missing, Cell::Frac),
            Cell::Int(report.secure_length as u64),
            Cell::Num(report.secure_rate_bps(duration_s)),
            report.status.code().into(),
        ]);
        if let Some(note) = status_note(&report.status) {
            doc.notes.push(format!("seed {seed}: {note}"));
        }
        write_key(cfg, &report)?;
        write_sifted(cfg, &pair, duration_s, seed)?;
    }

    if seeds.len() > 1 {
        let summary = |label: &str, values: &[f64], pct: bool| -> Option<String> {
            let m = MeanStderr::of(values)?;
            let show = |x: f64| if pct { percent(x) } else { num(x) };
            Some(match m.stderr {
                Some(se) => format!("{label}: mean {} +/- {} (n = {})", show(m.mean), show(se), m.n),
                None => format!("{label}: {} (n = {})", show(m.mean), m.n),
            })
        };
        doc.notes.extend(summary("sifted_bps", &sifted_rates, false));
        doc.notes.extend(summary("qber", &qbers, true));
    }
    Ok(doc)
}

fn write_sifted(cfg: &RunConfig, pair: &SiftedKeyPair, duration_s: f64, seed: u64) -> Result<(), CliError> {
    let path = cfg.get("output.sifted_path");
    if path.is_empty() {
        return Ok(());
    }
    let mut doc = base_document("Sifted key", "simulate", cfg);
    doc.meta("seed", seed);
    doc.meta("duration_s", num(duration_s));
    doc.headers(&["slot_index", "alice_bit", "bob_bit", "origin"]);
    for i in 0..pair.len() {
        doc.row(vec![
            Cell::Int(pair.slot_indices[i]),
            Cell::Int(u64::from(pair.alice_bits[i])),
            Cell::Int(u64::from(pair.bob_bits[i])),
            pair.origins
                .as_ref()
                .map_or(Cell::Missing, |o| Cell::Text(o[i].to_string())),
        ]);
    }
    let text = doc.render(crate::render::Format::Csv)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// A sifted key read back from CSV, with the duration recorded in its
/// header when present.
pub struct SiftedFile {
    pub pair: SiftedKeyPair,
    pub duration_s: Option<f64>,
}

fn parse_bit(raw: &str, line: usize, column: &str) -> Result<bool, CliError> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CliError::Config(format!(
            "record {line}: `{column}` must be 0 or 1, got `{other}`"
        ))),
    }
}

pub fn read_sifted(path: &Path) -> Result<SiftedFile, CliError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| CliError::io(&display, e))?;
    let duration_s = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# duration_s:"))
        .and_then(|v| v.trim().parse().ok());

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (slot_col, alice_col, bob_col) = match (column("slot_index"), column("alice_bit"), column("bob_bit")) {
        (Some(s), Some(a), Some(b)) => (s, a, b),
        _ => {
            return Err(CliError::Config(format!(
                "{display}: expected columns slot_index,alice_bit,bob_bit[,origin]"
            )))
        }
    };
    let origin_col = column("origin");

    let (mut alice, mut bob, mut slots, mut origins) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut all_origins = origin_col.is_some();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        slots.push(
            field(slot_col)
                .trim()
                .parse::<u64>()
                .map_err(|e| CliError::Config(format!("record {line}: bad slot_index `{}`: {e}", field(slot_col))))?,
        );
        alice.push(parse_bit(field(alice_col), line, "alice_bit")?);
        bob.push(parse_bit(field(bob_col), line, "bob_bit")?);
        if let Some(c) = origin_col {
            match field(c).trim() {
                "signal" => origins.push(Origin::Signal),
                "dark" => origins.push(Origin::Dark),
                "" => all_origins = false,
                other => return Err(CliError::Config(format!("record {line}: unknown origin `{other}`"))),
            }
        }
    }
    let pair = if all_origins {
        SiftedKeyPair::with_origins(alice, bob, slots, Some(origins))?
    } else {
        SiftedKeyPair::new(alice, bob, slots)?
    };
    Ok(SiftedFile { pair, duration_s })
}

pub fn distill_file(cfg: &RunConfig) -> Result<Document, CliError> {
    let params = cfg.system_params()?;
    let input = cfg.get("distill.input");
    if input.is_empty() {
        return Err(CliError::Config(
            "distill needs an input file (--input or `distill.input`)".into(),
        ));
    }
    let file = read_sifted(Path::new(input))?;
    let duration_s = match file.duration_s {
        Some(d) => d,
        None => cfg.positive("sim.duration_s")?,
    };
    let seed: u64 = cfg.parse("sim.seed")?;
    let report = distill(&file.pair, &params, &distill_options(cfg, seed)?)?;
    write_key(cfg, &report)?;

    let mut doc = base_document("Key distillation", "distill", cfg);
    doc.meta("input", input);
    doc.meta("reconciler", report.reconciler);
    doc.headers(&[
        "sifted_length",
        "qber_est",
        "estimate_sample_size",
        "remaining_length",
        "secure_fraction",
        "secure_length",
        "leaked_bits",
        "disclosed_fraction",
        "duration_s",
        "secure_bps",
        "status",
    ]);
    doc.row(vec![
        Cell::Int(report.sifted_length as u64),
        report.qber_est.map_or(Cell::Missing, Cell::Frac),
        Cell::Int(report.estimate_sample_size as u64),
        Cell::Int(report.remaining_length as u64),
        Cell::Num(report.secure_fraction),
        Cell::Int(report.secure_length as u64),
        Cell::Int(report.leaked_bits),
        Cell::Frac(report.disclosed_fraction),
        Cell::Num(duration_s),
        Cell::Num(report.secure_rate_bps(duration_s)),
        report.status.code().into(),
    ]);
    doc.notes.extend(status_note(&report.status));
    Ok(doc)
}

pub fn reproduce(cfg: &RunConfig) -> Result<Document, CliError> {
    let registry = KernelRegistry::builtin();
    let kernel = cfg.get("sim.kernel").to_string();
    if registry.get(&kernel).is_err() {
        return Err(CliError::Config(format!("unknown kernel `{kernel}`")));
    }
    let config = ReproduceConfig {
        seeds: seeds(cfg)?.len() as u64,
        base_seed: cfg.parse("sim.seed")?,
        kernel,
        tolerances: Tolerances {
            model_factor: cfg.positive("reproduce.model_factor")?,
            sim_sigma: cfg.positive("reproduce.sim_sigma")?,
        },
        min_fiber_duration_s: cfg.parse("reproduce.min_fiber_duration_s")?,
        target_clicks: cfg.positive("reproduce.target_clicks")?,
        scenarios: builtin_scenarios(),
    };
    let report = compare_operating_points(&config)?;
    let with_stderr = report.seeds > 1;

    let mut doc = base_document("Published operating points", "reproduce", cfg);
    doc.meta("kernel", &report.kernel);
    doc.meta("seeds", format!("{} from {}", report.seeds, report.base_seed));
    doc.meta("published_qber_threshold", percent(report.qber_threshold));
    doc.meta(
        "tolerances",
        format!(
            "model factor {}, simulation {} standard errors",
            report.tolerances.model_factor, report.tolerances.sim_sigma
        ),
    );

    let mut headers: Vec<String> = [
        "scenario",
        "source",
        "eta_composition",
        "loss_db",
        "length_km",
        "duration_s",
        "measured_sifted_bps",
        "measured_qber",
        "measured_secure_bps",
        "rederived_secure_bps",
        "model_sifted_bps",
        "model_qber",
        "model_secure_bps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for mode in EtaComposition::ALL {
        headers.push(mode_column("model_sifted_bps", mode));
        headers.push(mode_column("model_qber", mode));
    }
    for name in ["sim_sifted_bps", "sim_qber", "sim_secure_bps"] {
        headers.push(name.to_string());
        if with_stderr {
            headers.push(format!("{name}_stderr"));
        }
    }
    headers.push("checks".into());
    doc.headers = headers;

    let mean_cells = |m: Option<&MeanStderr>, frac: bool| -> Vec<Cell> {
        let wrap = |x: f64| if frac { Cell::Frac(x) } else { Cell::Num(x) };
        let mut cells = vec![m.map_or(Cell::Missing, |m| wrap(m.mean))];
        if with_stderr {
            cells.push(m.and_then(|m| m.stderr).map_or(Cell::Missing, wrap));
        }
        cells
    };

    let mut failed = 0;
    for row in &report.rows {
        let s = &row.scenario;
        let published = s.published.as_ref();
        let measured = |f: fn(&dpsqkd::experiments::Published) -> Option<f64>| published.and_then(f);
        let mut cells = vec![
            Cell::Text(s.name.clone()),
            published.map_or(Cell::Missing, |p| p.source.into()),
            s.params.eta_composition.name().into(),
            Cell::Num(s.channel.loss_db),
            s.channel.provenance.map(|f| f.length_km).into(),
            Cell::Num(row.duration_s),
            measured(|p| p.sifted_rate_bps.map(|m| m.value)).into(),
            measured(|p| p.qber.map(|m| m.value)).map_or(Cell::Missing, Cell::Frac),
            measured(|p| p.secure_rate_bps.map(|m| m.value)).into(),
            row.rederived_secure_rate_bps.into(),
            Cell::Num(row.analytic.sifted_rate_bps),
            Cell::Frac(row.analytic.qber),
            Cell::Num(row.analytic.secure_rate_bps),
        ];
        for (_, p) in &row.analytic_by_mode {
            cells.push(Cell::Num(p.sifted_rate_bps));
            cells.push(Cell::Frac(p.qber));
        }
        cells.extend(mean_cells(Some(&row.simulated.sifted_rate_bps), false));
        cells.extend(mean_cells(row.simulated.qber.as_ref(), true));
        cells.extend(mean_cells(Some(&row.simulated.secure_rate_bps), false));
        let passed = row.checks.iter().filter(|c| c.passed).count();
        cells.push(Cell::Text(format!("{passed}/{}", row.checks.len())));
        doc.row(cells);
        for check in &row.checks {
            if !check.passed {
                failed += 1;
            }
            doc.notes.push(format!(
                "{} {} {}: {}",
                if check.passed { "PASS" } else { "FAIL" },
                s.name,
                check.name,
                check.detail
            ));
        }
    }
    doc.meta("failed_checks", failed);
    Ok(doc)
}

/// Parameters of a named preset, for `presets`.
pub fn presets(cfg: &RunConfig) -> Result<Document, CliError> {
    let mut doc = base_document("Parameter presets", "presets", cfg);
    doc.headers(&[
        "preset",
        "mu",
        "clock_rate_hz",
        "time_window_s",
        "dead_time_s",
        "baseline_error",
        "ec_inefficiency",
        "system_loss_db",
        "eta1",
        "eta2",
        "dcr1",
        "dcr2",
        "window_factor",
        "eta_composition",
    ]);
    for name in dpsqkd::params::PRESET_NAMES {
        let p = SystemParams::preset(name)?;
        doc.row(vec![
            name.into(),
            Cell::Num(p.mu),
            Cell::Num(p.clock_rate_hz),
            Cell::Num(p.time_window_s),
            Cell::Num(p.dead_time_s),
            Cell::Num(p.baseline_error),
            Cell::Num(p.ec_inefficiency),
            Cell::Num(p.system_loss_db),
            Cell::Num(p.detector1.eta_fitted),
            Cell::Num(p.detector2.eta_fitted),
            Cell::Num(p.detector1.dcr),
            Cell::Num(p.detector2.dcr),
            Cell::Num(p.detector1.window_efficiency_factor),
            p.eta_composition.name().into(),
        ]);
    }
    Ok(doc)
}
