//! Subcommand implementations.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use htf_mmc::admittance::{sweep, Model};
use htf_mmc::opoint::OperatingPoint;
use htf_mmc::parallel::{with_workers, Execution};
use htf_mmc::params::{ControlMode, ConverterKind};
use htf_mmc::sim::{
    extract_opoint, find_steady_state, frequency_scan, simulate as run_simulation, Dynamics, Injection, Sequence,
};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::config::{CompareConfig, Format, SystemConfig};
use crate::grid::Grid;
use crate::table::{self, Row};
use crate::{CliError, Global};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn parse_name<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(text.into()))
        .map_err(|_| CliError::Config(format!("unknown {what} '{text}'")))
}

/// Configuration with command-line overrides applied.
fn load(g: &Global) -> Result<SystemConfig, CliError> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = SystemConfig::load(path)?;
    if let Some(h) = g.h {
        cfg.model.h = h;
    }
    if let Some(grid) = &g.grid {
        cfg.scan.grid = grid.clone();
    }
    if let Some(out) = &g.out {
        cfg.output.directory = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: Option<&SystemConfig>) -> Result<PathBuf, CliError> {
    let dir = match (&g.out, cfg) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => PathBuf::from(&c.output.directory),
        (None, None) => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    std::io::Write::flush(&mut w).map_err(runtime)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        std::io::Write::write_all(w, b"\n")
    })
}

fn write_tables(
    cfg: &SystemConfig,
    dir: &Path,
    stem: &str,
    rows: &[Row],
    notes: &[Option<String>],
) -> Result<(), CliError> {
    for f in &cfg.output.formats {
        match f {
            Format::Csv => write_file(&dir.join(format!("{stem}.csv")), |w| table::write_csv(w, rows))?,
            Format::Json => write_file(&dir.join(format!("{stem}.json")), |w| {
                table::write_json(&mut *w, rows, notes)?;
                std::io::Write::write_all(w, b"\n")
            })?,
        }
    }
    Ok(())
}

fn bases(cfg: &SystemConfig) -> serde_json::Value {
    let b = cfg.circuit().bases();
    json!({ "S_VA": b.s, "U_peak_V": b.u, "I_peak_A": b.i, "Z_ohm": b.z, "w_rad_per_s": b.w })
}

pub fn init_config(g: &Global, converter: &str, control: &str) -> Result<(), CliError> {
    let conv: ConverterKind = parse_name("converter", converter)?;
    let mode: ControlMode = parse_name("control mode", control)?;
    let cfg = SystemConfig::reference(conv, mode);
    cfg.validate()?;
    let text = serde_json::to_string_pretty(&cfg).map_err(runtime)? + "\n";
    match &g.out {
        Some(_) => {
            let dir = out_dir(g, None)?;
            let path = dir.join("config.json");
            fs::write(&path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn opoint(g: &Global) -> Result<(), CliError> {
    let cfg = load(g)?;
    let dir = out_dir(g, Some(&cfg))?;
    let spec = cfg.model_spec();
    let d = Dynamics::new(&cfg.circuit(), &cfg.control(), spec.converter, spec.control).map_err(runtime)?;
    let opts = cfg.sim_options();
    let ss = find_steady_state(&d, &opts)?;
    let op = extract_opoint(&d, &ss, opts.order)?;
    op.save(&dir.join("opoint.json"))?;
    write_json(
        &dir.join("steady_state.json"),
        &json!({
            "converter": spec.converter,
            "control": spec.control,
            "periods": ss.trace.len(),
            "residual_pu": ss.residual_pu,
            "trace_pu": ss.trace,
            "bases": bases(&cfg),
            "fundamental_modulation": [op.fundamental_modulation().re, op.fundamental_modulation().im],
        }),
    )?;
    eprintln!(
        "steady state after {} periods (residual {:.2e} p.u.); wrote {}",
        ss.trace.len(),
        ss.residual_pu,
        dir.join("opoint.json").display()
    );
    Ok(())
}

pub fn admittance(g: &Global, opoint: Option<&Path>) -> Result<(), CliError> {
    let cfg = load(g)?;
    let dir = out_dir(g, Some(&cfg))?;
    let path = opoint.map(Path::to_path_buf).unwrap_or_else(|| dir.join("opoint.json"));
    if !path.exists() {
        return Err(runtime(format!("operating point {} not found", path.display())));
    }
    let op = OperatingPoint::load(&path)?;
    let model = Model::new(cfg.circuit(), cfg.control(), cfg.model_spec())?;
    let freqs = Grid::parse(&cfg.scan.grid)?.frequencies();
    let points = with_workers(g.workers, || sweep(&model, &op, &freqs, Execution::Parallel))?;
    let mut rows = Vec::with_capacity(points.len());
    let mut notes = Vec::with_capacity(points.len());
    for p in &points {
        match &p.result {
            Ok(r) => {
                rows.push(Row {
                    freq_hz: r.freq_hz,
                    y: [r.y11, r.y12, r.y21, r.y22],
                    flagged: false,
                });
                notes.push(p.offset.then(|| format!("moved off a harmonic from {} Hz", p.freq_hz)));
            }
            Err(e) => {
                rows.push(Row {
                    freq_hz: p.freq_hz,
                    y: [Complex64::new(f64::NAN, f64::NAN); 4],
                    flagged: true,
                });
                notes.push(Some(e.clone()));
            }
        }
    }
    write_tables(&cfg, &dir, "admittance", &rows, &notes)?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    eprintln!("{} frequencies, {flagged} flagged; wrote {}", rows.len(), dir.display());
    Ok(())
}

pub fn scan(g: &Global) -> Result<(), CliError> {
    let cfg = load(g)?;
    let dir = out_dir(g, Some(&cfg))?;
    let spec = cfg.model_spec();
    let d = Dynamics::new(&cfg.circuit(), &cfg.control(), spec.converter, spec.control).map_err(runtime)?;
    let ss = find_steady_state(&d, &cfg.sim_options())?;
    let opts = cfg.scan_options();
    let freqs = Grid::parse(&cfg.scan.grid)?.scan_frequencies(opts.window_s);
    let results = with_workers(g.workers, || frequency_scan(&d, &ss, &freqs, opts, Execution::Parallel))?;
    let rows: Vec<Row> = results
        .iter()
        .map(|r| Row {
            freq_hz: r.freq_hz,
            y: [r.y11(), r.y12(), r.y21(), r.y22()],
            flagged: r.flagged.is_some(),
        })
        .collect();
    let notes: Vec<Option<String>> = results.iter().map(|r| r.flagged.clone()).collect();
    write_tables(&cfg, &dir, "scan", &rows, &notes)?;
    write_json(
        &dir.join("scan_details.json"),
        &json!({ "bases": bases(&cfg), "window_s": opts.window_s, "points": results }),
    )?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    eprintln!("{} frequencies, {flagged} flagged; wrote {}", rows.len(), dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct Delta {
    freq_hz: f64,
    scan_freq_hz: f64,
    y11_db: f64,
    y11_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    y12_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y12_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded: Option<&'static str>,
}

#[derive(Debug, Serialize)]
struct Stats {
    max_db: f64,
    median_db: f64,
    max_deg: f64,
    median_deg: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative size below which `y12` is treated as absent.
const COUPLING_FLOOR: f64 = 1e-6;

fn stats(rows: &[&Delta], pick: fn(&Delta) -> Option<(f64, f64)>) -> Stats {
    let db: Vec<f64> = rows.iter().filter_map(|d| pick(d)).map(|p| p.0).collect();
    let deg: Vec<f64> = rows.iter().filter_map(|d| pick(d)).map(|p| p.1).collect();
    Stats {
        max_db: db.iter().cloned().fold(0.0, f64::max),
        median_db: median(db),
        max_deg: deg.iter().cloned().fold(0.0, f64::max),
        median_deg: median(deg),
    }
}

fn phase_diff(a: Complex64, b: Complex64) -> f64 {
    (a / b).arg().to_degrees().abs()
}

pub fn compare(g: &Global, analytic: &Path, scan: &Path) -> Result<(), CliError> {
    let cfg = match &g.config {
        Some(_) => Some(load(g)?),
        None => None,
    };
    let tol = cfg.as_ref().map(|c| c.compare.clone()).unwrap_or_default();
    let f0 = cfg.as_ref().map_or(50.0, |c| c.circuit.f0_Hz);
    let a = table::read_csv(analytic)?;
    let s = table::read_csv(scan)?;
    if a.is_empty() || s.is_empty() {
        return Err(runtime("nothing to compare: a table has no rows"));
    }
    let mut warnings = Vec::new();
    let mut deltas = Vec::with_capacity(s.len());
    for r in &s {
        let nearest = a
            .iter()
            .min_by(|x, y| (x.freq_hz - r.freq_hz).abs().total_cmp(&(y.freq_hz - r.freq_hz).abs()))
            .unwrap();
        let gap = (nearest.freq_hz - r.freq_hz).abs();
        if gap > 0.05 {
            warnings.push(format!(
                "no analytic row at {} Hz; paired with nearest {} Hz",
                r.freq_hz, nearest.freq_hz
            ));
        }
        let to_harmonic = {
            let k = (r.freq_hz / f0).round();
            (r.freq_hz - k * f0).abs()
        };
        let excluded = if r.flagged || nearest.flagged {
            Some("flagged")
        } else if to_harmonic <= tol.guard_band_Hz {
            Some("guard band")
        } else {
            None
        };
        // Cross-sequence terms far below the diagonal carry no phase information.
        let floor = COUPLING_FLOOR * nearest.y[0].norm().max(r.y[0].norm());
        let coupled = nearest.y[1].norm().max(r.y[1].norm()) > floor;
        deltas.push(Delta {
            freq_hz: nearest.freq_hz,
            scan_freq_hz: r.freq_hz,
            y11_db: (table::db(nearest.y[0]) - table::db(r.y[0])).abs(),
            y11_deg: phase_diff(nearest.y[0], r.y[0]),
            y12_db: coupled.then(|| (table::db(nearest.y[1]) - table::db(r.y[1])).abs()),
            y12_deg: coupled.then(|| phase_diff(nearest.y[1], r.y[1])),
            excluded,
        });
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let used: Vec<&Delta> = deltas.iter().filter(|d| d.excluded.is_none()).collect();
    let y11 = stats(&used, |d| Some((d.y11_db, d.y11_deg)));
    let y12 = stats(&used, |d| d.y12_db.zip(d.y12_deg));
    let within = |s: &Stats| s.max_db <= tol.tol_dB && s.max_deg <= tol.tol_deg;
    let pass = !used.is_empty() && within(&y11) && within(&y12);
    let CompareConfig {
        tol_dB,
        tol_deg,
        guard_band_Hz,
    } = tol;
    let report = json!({
        "analytic": analytic.display().to_string(),
        "scan": scan.display().to_string(),
        "tolerances": { "tol_dB": tol_dB, "tol_deg": tol_deg, "guard_band_Hz": guard_band_Hz },
        "compared_rows": used.len(),
        "excluded_rows": deltas.len() - used.len(),
        "summary": { "y11": y11, "y12": y12 },
        "pass": pass,
        "warnings": warnings,
        "rows": deltas,
    });
    let dir = out_dir(g, cfg.as_ref())?;
    write_json(&dir.join("report.json"), &report)?;
    eprintln!(
        "y11 max {:.3} dB / {:.2} deg, y12 max {:.3} dB / {:.2} deg over {} rows: {}",
        y11.max_db,
        y11.max_deg,
        y12.max_db,
        y12.max_deg,
        used.len(),
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!(
            "deviation exceeds {tol_dB} dB / {tol_deg} deg (see report.json)"
        )))
    }
}

fn parse_injection(text: &str, u_peak: f64) -> Result<Injection, CliError> {
    let bad = || CliError::Config(format!("injection '{text}': expected freq_hz:pos|neg:amplitude_pu"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let freq_hz: f64 = parts[0].parse().map_err(|_| bad())?;
    let sequence = match parts[1] {
        "pos" => Sequence::Positive,
        "neg" => Sequence::Negative,
        _ => return Err(bad()),
    };
    let amp: f64 = parts[2].parse().map_err(|_| bad())?;
    if !(freq_hz.is_finite() && amp.is_finite() && amp >= 0.0) {
        return Err(bad());
    }
    Ok(Injection {
        freq_hz,
        sequence,
        amplitude_v: amp * u_peak,
    })
}

pub fn simulate(
    g: &Global,
    duration_s: f64,
    decimation: usize,
    inject: Option<&str>,
    from_steady_state: bool,
) -> Result<(), CliError> {
    let cfg = load(g)?;
    let dir = out_dir(g, Some(&cfg))?;
    let spec = cfg.model_spec();
    let d = Dynamics::new(&cfg.circuit(), &cfg.control(), spec.converter, spec.control).map_err(runtime)?;
    let injection = inject.map(|t| parse_injection(t, d.u_pk)).transpose()?;
    let opts = cfg.sim_options();
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(CliError::Config(format!(
            "duration must be non-negative, got {duration_s}"
        )));
    }
    let x0 = if from_steady_state {
        Some(find_steady_state(&d, &opts)?.x0)
    } else {
        None
    };
    let w = run_simulation(&d, x0.as_deref(), duration_s, opts.dt, injection, decimation)?;
    let path = dir.join("waveforms.csv");
    let file = fs::File::create(&path).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    w.write_csv(BufWriter::new(file))?;
    eprintln!("{} samples; wrote {}", w.t.len(), path.display());
    Ok(())
}
