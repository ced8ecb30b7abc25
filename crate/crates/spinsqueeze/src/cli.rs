//! Experiment runner behind the `spinsqueeze` binary.
//!
//! A run is described by flat `key = value` lines (`#` starts a comment).
//! Command-line `--key value` pairs override the file. Every run writes a CSV,
//! `manifest.json` and `summary.txt` into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::paraxial::{geometry_scan, run_paraxial, write_scan_csv, ParaxialConfig, ScanPoint};
use crate::protocols::{basis_for, db, simulate, Protocol, ProtocolParams, Target, Trajectory};
use crate::qnd_ode::{exact_f1_reference, integrate, optimize_fiducial, OdeSettings, OptimizerSettings};
use crate::spin_algebra::Preparation;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Ode,
    Optimize,
    ParaxialScan,
    OracleF1,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ode => "ode",
            Command::Optimize => "optimize",
            Command::ParaxialScan => "paraxial-scan",
            Command::OracleF1 => "oracle-f1",
            Command::Compare => "compare",
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Command::Simulate, Command::Ode, Command::Optimize, Command::ParaxialScan, Command::OracleF1, Command::Compare]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{s}`")))
    }
}

/// Recognized keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("out", "output directory"),
    ("seed", "random seed (optimize)"),
    ("protocol", "qnd | double_pass | eraser | phase_matching"),
    ("prep", "scs | cat | mx0 | yurke | half_yurke"),
    ("alpha", "preparation angle for the Yurke family"),
    ("target", "scs | yurke | half_yurke post-processing target"),
    ("target_alpha", "fixed target angle; omitted means optimized"),
    ("keep", "auto | true | false: keep the transfer state"),
    ("f", "hyperfine spin"),
    ("g_f", "Landé factor (default 1/f)"),
    ("od", "resonant optical density; must equal na·sigma0_over_a"),
    ("na", "atom number"),
    ("nl", "photons per probe pulse"),
    ("sigma0_over_a", "σ₀/A"),
    ("gamma_over_delta", "Γ/Δ"),
    ("dt", "map step γ_s·dt"),
    ("pumping", "true | false"),
    ("gamma_s", "0 switches pumping off, 1 keeps it (time unit)"),
    ("t_max", "end of the time window"),
    ("rtol", "integrator relative tolerance"),
    ("atol", "integrator absolute tolerance"),
    ("dt_out", "ODE output grid spacing"),
    ("n_seeds", "optimizer restarts"),
    ("max_iters", "simplex iterations per restart"),
    ("simplex_step", "initial simplex size"),
    ("eta0_cm3", "peak density in cm⁻³"),
    ("wavelength_um", "probe wavelength in μm"),
    ("ar_min", "smallest aspect ratio σ_z/σ_⊥"),
    ("ar_max", "largest aspect ratio"),
    ("ar_points", "aspect ratios, log spaced"),
    ("w0_min", "smallest beam waist in μm"),
    ("w0_max", "largest beam waist in μm"),
    ("w0_points", "beam waists, linearly spaced"),
    ("slices", "longitudinal slices"),
    ("p_max", "highest radial mode"),
    ("n_out", "paraxial output intervals"),
    ("run_a", "first trajectory CSV (compare)"),
    ("run_b", "second trajectory CSV (compare)"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self { command, values: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::UnknownKey(key));
        }
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Merge `key = value` text; later lines win.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key = value, got `{line}`") })?;
            if v.trim().is_empty() {
                return Err(Error::Parse { line: i + 1, msg: format!("empty value for `{}`", k.trim()) });
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Load a key=value file, or the `config` object of an emitted manifest.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let cfg = v
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| Error::Validation(format!("{} has no config object", path.display())))?;
            for (k, v) in cfg {
                let s = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                self.set(k, &s)?;
            }
            return Ok(());
        }
        self.merge_text(&text)
    }

    /// Apply `--key value` / `--key=value` pairs.
    pub fn merge_args<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        let mut it = args.iter().map(|s| s.as_ref());
        while let Some(a) = it.next() {
            let body = a
                .strip_prefix("--")
                .ok_or_else(|| Error::InvalidArgument(format!("expected --key, got `{a}`")))?;
            match body.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let v = it.next().ok_or_else(|| Error::InvalidArgument(format!("--{body} needs a value")))?;
                    self.set(body, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Validation(format!("cannot parse {key} = `{v}`"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Validation(format!("{} needs `{key}`", self.command.name())))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(Error::Validation(format!("{key} must be true or false, got `{v}`"))),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out").unwrap_or(&format!("out/{}", self.command.name())))
    }

    fn pumping(&self) -> Result<bool> {
        let p = self.flag("pumping", true)?;
        match self.get::<f64>("gamma_s")? {
            None => Ok(p),
            Some(0.0) => Ok(false),
            Some(1.0) => Ok(p),
            Some(g) => Err(Error::Validation(format!("time is measured in 1/γ_s, so gamma_s must be 0 or 1, got {g}"))),
        }
    }

    /// Plane-wave parameters; `od` defaults to na·sigma0_over_a.
    pub fn protocol_params(&self) -> Result<ProtocolParams> {
        let f: f64 = self.require("f")?;
        let base = ProtocolParams::paper(f);
        let n_a = self.or("na", base.n_a)?;
        let sigma0_over_a = self.or("sigma0_over_a", base.sigma0_over_a)?;
        let p = ProtocolParams {
            od: self.or("od", n_a * sigma0_over_a)?,
            n_a,
            n_l: self.or("nl", base.n_l)?,
            sigma0_over_a,
            gamma_over_delta: self.or("gamma_over_delta", base.gamma_over_delta)?,
            f,
            g_f: self.or("g_f", 1.0 / f)?,
            dt: self.or("dt", base.dt)?,
            pumping: self.pumping()?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn preparation(&self) -> Result<Preparation> {
        Preparation::parse(self.raw("prep").unwrap_or("scs"), self.get("alpha")?)
    }

    pub fn target(&self) -> Result<Target> {
        let alpha = self.get("target_alpha")?;
        Ok(match self.raw("target").unwrap_or("scs") {
            "scs" => Target::Scs,
            "yurke" => Target::Yurke { alpha },
            "half_yurke" => Target::HalfYurke { alpha },
            other => return Err(Error::Validation(format!("unknown target `{other}`"))),
        })
    }

    fn keep(&self) -> Result<Option<bool>> {
        match self.raw("keep").unwrap_or("auto") {
            "auto" => Ok(None),
            _ => self.flag("keep", false).map(Some),
        }
    }

    pub fn ode_settings(&self) -> Result<OdeSettings> {
        let d = OdeSettings::default();
        Ok(OdeSettings { rtol: self.or("rtol", d.rtol)?, atol: self.or("atol", d.atol)?, dt_out: self.or("dt_out", d.dt_out)? })
    }

    pub fn optimizer_settings(&self) -> Result<OptimizerSettings> {
        let d = OptimizerSettings::default();
        Ok(OptimizerSettings {
            n_seeds: self.or("n_seeds", d.n_seeds)?,
            seed: self.or("seed", d.seed)?,
            t_max: self.or("t_max", d.t_max)?,
            max_iters: self.or("max_iters", d.max_iters)?,
            simplex_step: self.or("simplex_step", d.simplex_step)?,
            ode: self.ode_settings()?,
        })
    }

    /// Base paraxial point at (ar_min, w0_min) plus the scan axes.
    pub fn paraxial(&self) -> Result<(ParaxialConfig, Vec<f64>, Vec<f64>)> {
        let f: f64 = self.require("f")?;
        let ar_min: f64 = self.require("ar_min")?;
        let w0_min: f64 = self.require("w0_min")?;
        let d = ParaxialConfig::paper(f, ar_min, w0_min);
        let cfg = ParaxialConfig {
            n_a: self.or("na", d.n_a)?,
            eta0_cm3: self.or("eta0_cm3", d.eta0_cm3)?,
            wavelength_um: self.or("wavelength_um", d.wavelength_um)?,
            slices: self.or("slices", d.slices)?,
            p_max: self.or("p_max", d.p_max)?,
            t_max: self.or("t_max", d.t_max)?,
            n_out: self.or("n_out", d.n_out)?,
            rtol: self.or("rtol", d.rtol)?,
            atol: self.or("atol", d.atol)?,
            pumping: self.pumping()?,
            ..d
        };
        let axis = |lo: f64, hi_key: &str, n_key: &str, log: bool| -> Result<Vec<f64>> {
            let n: usize = self.or(n_key, 1)?;
            let hi: f64 = self.or(hi_key, lo)?;
            if n == 0 || !(lo > 0.0 && hi >= lo) {
                return Err(Error::Validation(format!("bad scan axis {lo}..{hi} with {n} points")));
            }
            Ok((0..n)
                .map(|i| {
                    let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    if log {
                        lo * (hi / lo).powf(s)
                    } else {
                        lo + (hi - lo) * s
                    }
                })
                .collect())
        };
        let ars = axis(ar_min, "ar_max", "ar_points", true)?;
        let ws = axis(w0_min, "w0_max", "w0_points", false)?;
        Ok((cfg, ars, ws))
    }

    /// Keys the command reads, with defaults filled in, for the manifest.
    pub fn resolved(&self) -> Result<BTreeMap<String, String>> {
        let mut m = self.values.clone();
        let mut put = |k: &str, v: String| {
            m.entry(k.to_string()).or_insert(v);
        };
        put("out", self.out_dir().display().to_string());
        match self.command {
            Command::Simulate | Command::Ode | Command::Optimize | Command::OracleF1 => {
                let p = self.protocol_params()?;
                for (k, v) in [
                    ("f", p.f),
                    ("g_f", p.g_f),
                    ("od", p.od),
                    ("na", p.n_a),
                    ("nl", p.n_l),
                    ("sigma0_over_a", p.sigma0_over_a),
                    ("gamma_over_delta", p.gamma_over_delta),
                    ("dt", p.dt),
                ] {
                    put(k, v.to_string());
                }
                put("pumping", p.pumping.to_string());
                put("t_max", self.t_max()?.to_string());
                if self.command != Command::OracleF1 {
                    put("target", self.raw("target").unwrap_or("scs").to_string());
                }
                match self.command {
                    Command::Simulate => {
                        put("protocol", self.raw("protocol").unwrap_or("qnd").to_string());
                        put("prep", self.preparation()?.name().to_string());
                        put("keep", self.raw("keep").unwrap_or("auto").to_string());
                    }
                    Command::Ode | Command::OracleF1 => {
                        if self.command == Command::Ode {
                            put("prep", self.preparation()?.name().to_string());
                        }
                        let o = self.ode_settings()?;
                        put("rtol", o.rtol.to_string());
                        put("atol", o.atol.to_string());
                        put("dt_out", o.dt_out.to_string());
                    }
                    _ => {
                        let o = self.optimizer_settings()?;
                        put("seed", o.seed.to_string());
                        put("n_seeds", o.n_seeds.to_string());
                        put("max_iters", o.max_iters.to_string());
                        put("simplex_step", o.simplex_step.to_string());
                        put("rtol", o.ode.rtol.to_string());
                        put("atol", o.ode.atol.to_string());
                        put("dt_out", o.ode.dt_out.to_string());
                    }
                }
            }
            Command::ParaxialScan => {
                let (c, ars, ws) = self.paraxial()?;
                for (k, v) in [
                    ("f", c.f),
                    ("na", c.n_a),
                    ("eta0_cm3", c.eta0_cm3),
                    ("wavelength_um", c.wavelength_um),
                    ("t_max", c.t_max),
                    ("rtol", c.rtol),
                    ("atol", c.atol),
                    ("ar_max", *ars.last().unwrap_or(&c.aspect_ratio)),
                    ("w0_max", *ws.last().unwrap_or(&c.w0_um)),
                ] {
                    put(k, v.to_string());
                }
                for (k, v) in [("slices", c.slices), ("p_max", c.p_max), ("n_out", c.n_out), ("ar_points", ars.len()), ("w0_points", ws.len())] {
                    put(k, v.to_string());
                }
                put("pumping", c.pumping.to_string());
            }
            Command::Compare => {}
        }
        Ok(m)
    }

    fn t_max(&self) -> Result<f64> {
        let d = match self.command {
            Command::Optimize => OptimizerSettings::default().t_max,
            _ => 5.0,
        };
        let t = self.or("t_max", d)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Validation(format!("t_max must be positive, got {t}")));
        }
        Ok(t)
    }
}

/// What a finished run reports back.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: Command,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    /// Peak squeezing where the run has one.
    pub peak_db: Option<f64>,
    pub t_peak: Option<f64>,
    pub summary: String,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: vec![] })
    }

    fn file(&mut self, name: &str) -> Result<fs::File> {
        self.files.push(name.to_string());
        Ok(fs::File::create(self.dir.join(name))?)
    }
}

/// Execute a configured run and write its artifacts.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let resolved = cfg.resolved()?;
    let mut w = Writer::new(cfg.out_dir())?;
    let mut summary = String::new();
    let mut peak: Option<(f64, f64)> = None;
    let mut extra = serde_json::Map::new();
    let _ = writeln!(summary, "command: {}", cfg.command.name());

    match cfg.command {
        Command::Simulate => {
            let p = cfg.protocol_params()?;
            let protocol: Protocol = cfg.raw("protocol").unwrap_or("qnd").parse().map_err(as_validation)?;
            let prep = cfg.preparation().map_err(as_validation)?;
            let b = basis_for(prep, p.f)?;
            let tr = simulate(protocol, &b, &p, cfg.t_max()?, cfg.target()?, cfg.keep()?)?;
            tr.write_csv(w.file("trajectory.csv")?)?;
            let pk = tr.peak();
            peak = Some((pk.db, pk.t));
            let n = tr.len().saturating_sub(1);
            let steps = if protocol == Protocol::Qnd { n } else { 2 * n };
            let xi_total = p.xi_step(&b) * steps as f64;
            let _ = writeln!(summary, "protocol: {protocol:?}, preparation: {prep}, f = {}", p.f);
            let _ = writeln!(summary, "transfer state kept: {}", tr.keep);
            let _ = writeln!(summary, "xi_total: {xi_total:.6e}");
            if !p.pumping {
                let _ = writeln!(summary, "coherent limit 10log10(1+xi_total): {:.4} dB", 10.0 * (1.0 + xi_total).log10());
            }
            extra.insert("xi_total".into(), json!(xi_total));
            extra.insert("keep".into(), json!(tr.keep));
        }
        Command::Ode => {
            let p = cfg.protocol_params()?;
            let prep = cfg.preparation().map_err(as_validation)?;
            let run = integrate(&basis_for(prep, p.f)?, &p, cfg.t_max()?, cfg.target()?, &cfg.ode_settings()?)?;
            run.trajectory.write_csv(w.file("trajectory.csv")?)?;
            let pk = run.trajectory.peak();
            peak = Some((pk.db, pk.t));
            let best = |v: &[f64]| db(v.iter().copied().fold(f64::INFINITY, f64::min));
            let _ = writeln!(summary, "preparation: {prep}, f = {}", p.f);
            let _ = writeln!(summary, "keep readout peak: {:.4} dB", best(&run.zeta_keep));
            let _ = writeln!(summary, "drop readout peak: {:.4} dB", best(&run.zeta_drop));
            let _ = writeln!(summary, "dropped-term ratio: {:.3e}", run.dropped_ratio);
            extra.insert("dropped_ratio".into(), json!(run.dropped_ratio));
            extra.insert("evaluations".into(), json!(run.evaluations));
        }
        Command::Optimize => {
            let p = cfg.protocol_params()?;
            let s = cfg.optimizer_settings()?;
            let opt = optimize_fiducial(p.f, &p, cfg.target()?, &s)?;
            let mut csv = csv::Writer::from_writer(w.file("seeds.csv")?);
            let dim = opt.best.amplitudes.len();
            let mut head = vec!["seed_index".to_string(), "iterations".into(), "start_dB".into(), "peak_dB".into(), "t_peak_gamma_s".into()];
            for k in 0..dim {
                head.push(format!("re_{k}"));
                head.push(format!("im_{k}"));
            }
            csv.write_record(&head)?;
            for r in &opt.seeds {
                let mut row = vec![r.seed_index.to_string(), r.iterations.to_string()];
                row.extend([r.start_db, r.peak_db, r.t_peak].iter().map(|x| format!("{x:.10e}")));
                row.extend(r.amplitudes.iter().flat_map(|a| a.iter().map(|x| format!("{x:.10e}"))));
                csv.write_record(&row)?;
            }
            csv.flush()?;
            peak = Some((opt.best.peak_db, opt.best.t_peak));
            let weights: Vec<String> = opt.best.amplitudes.iter().map(|a| format!("{:.4}", a[0] * a[0] + a[1] * a[1])).collect();
            let _ = writeln!(summary, "seeds: {}, base seed: {}", s.n_seeds, s.seed);
            let _ = writeln!(summary, "best seed: {}", opt.best.seed_index);
            let _ = writeln!(summary, "best |<m|up>|^2 for m = f..-f: {}", weights.join(" "));
            extra.insert("best".into(), serde_json::to_value(&opt.best)?);
        }
        Command::OracleF1 => {
            let p = cfg.protocol_params()?;
            let tr = exact_f1_reference(&p, cfg.t_max()?, &cfg.ode_settings()?)?;
            tr.write_csv(w.file("trajectory.csv")?)?;
            let pk = tr.peak();
            peak = Some((pk.db, pk.t));
            let _ = writeln!(summary, "exact f = 1 spin coherent state reference");
        }
        Command::ParaxialScan => {
            let (base, ars, ws) = cfg.paraxial()?;
            let pts = if ars.len() * ws.len() == 1 {
                let run = run_paraxial(&base)?;
                run.write_csv(w.file("trajectory.csv")?)?;
                let pk = run.peak();
                vec![ScanPoint { aspect_ratio: base.aspect_ratio, w0_um: base.w0_um, od_eff: run.od_eff, peak_db: pk.db, t_peak: pk.t }]
            } else {
                geometry_scan(&base, &ars, &ws)?
            };
            write_scan_csv(&pts, w.file("contour.csv")?)?;
            let best = pts
                .iter()
                .max_by(|a, b| a.peak_db.total_cmp(&b.peak_db))
                .ok_or_else(|| Error::Validation("empty scan grid".into()))?;
            peak = Some((best.peak_db, best.t_peak));
            let _ = writeln!(summary, "grid: {} aspect ratios x {} waists, f = {}", ars.len(), ws.len(), base.f);
            let _ = writeln!(summary, "best geometry: AR {:.4}, w0 {:.4} um, OD_eff {:.3}", best.aspect_ratio, best.w0_um, best.od_eff);
            extra.insert("best".into(), serde_json::to_value(best)?);
        }
        Command::Compare => {
            let a: PathBuf = cfg.require::<String>("run_a")?.into();
            let b: PathBuf = cfg.require::<String>("run_b")?.into();
            let c = compare(&read_db_csv(&a)?, &read_db_csv(&b)?)?;
            let mut csv = csv::Writer::from_writer(w.file("compare.csv")?);
            csv.write_record(["t", "dB_a", "dB_b", "delta_dB"])?;
            for r in &c.rows {
                csv.write_record(r.iter().map(|x| format!("{x:.10e}")))?;
            }
            csv.flush()?;
            let _ = writeln!(summary, "max |delta dB|: {:.6}", c.max_abs_diff);
            let _ = writeln!(summary, "peak a: {:.6} dB at t = {:.6}", c.peak_a.0, c.peak_a.1);
            let _ = writeln!(summary, "peak b: {:.6} dB at t = {:.6}", c.peak_b.0, c.peak_b.1);
            let _ = writeln!(summary, "peak difference: {:.6} dB", c.peak_a.0 - c.peak_b.0);
            extra.insert("comparison".into(), serde_json::to_value(c.report())?);
        }
    }
    if let Some((d, t)) = peak {
        let _ = writeln!(summary, "peak squeezing: {d:.4} dB at t = {t:.6}");
    }
    fs::write(w.dir.join("summary.txt"), &summary)?;
    w.files.push("summary.txt".into());
    w.files.push("manifest.json".into());

    let mut manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command.name(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": resolved,
        "outputs": w.files,
        "peak_db": peak.map(|p| p.0),
        "t_peak": peak.map(|p| p.1),
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    if let Some(m) = manifest.as_object_mut() {
        m.extend(extra);
    }
    fs::write(w.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(Outcome {
        command: cfg.command,
        out_dir: w.dir,
        files: w.files,
        peak_db: peak.map(|p| p.0),
        t_peak: peak.map(|p| p.1),
        summary,
    })
}

fn as_validation(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Validation(m),
        e => e,
    }
}

/// (t, dB) series read from a trajectory CSV: first column time, first `*_dB` column.
#[derive(Debug, Clone)]
pub struct DbSeries {
    pub t: Vec<f64>,
    pub db: Vec<f64>,
}

impl From<&Trajectory> for DbSeries {
    fn from(tr: &Trajectory) -> Self {
        Self { t: tr.t.clone(), db: tr.db() }
    }
}

pub fn read_db_csv(path: &Path) -> Result<DbSeries> {
    let mut rd = csv::Reader::from_path(path)?;
    let head = rd.headers()?.clone();
    let col = head
        .iter()
        .position(|h| h.ends_with("_dB"))
        .ok_or_else(|| Error::Validation(format!("{} has no dB column", path.display())))?;
    let (mut t, mut d) = (vec![], vec![]);
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Validation(format!("{}: bad number in column {i}", path.display())))
        };
        t.push(num(0)?);
        d.push(num(col)?);
    }
    if t.is_empty() {
        return Err(Error::Validation(format!("{} has no rows", path.display())));
    }
    Ok(DbSeries { t, db: d })
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// (t, dB_a, dB_b nearest in time, difference)
    pub rows: Vec<[f64; 4]>,
    pub max_abs_diff: f64,
    pub peak_a: (f64, f64),
    pub peak_b: (f64, f64),
}

impl Comparison {
    pub fn report(&self) -> serde_json::Value {
        json!({
            "max_abs_diff_db": self.max_abs_diff,
            "peak_a_db": self.peak_a.0,
            "t_peak_a": self.peak_a.1,
            "peak_b_db": self.peak_b.0,
            "t_peak_b": self.peak_b.1,
            "peak_diff_db": self.peak_a.0 - self.peak_b.0,
        })
    }
}

fn max_spacing(t: &[f64]) -> f64 {
    t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Match run `a` onto `b` by nearest time over their common window. Points of `a`
/// further than one grid spacing of `b` from any sample are a mismatch.
pub fn compare(a: &DbSeries, b: &DbSeries) -> Result<Comparison> {
    let lo = a.t[0].max(b.t[0]);
    let hi = a.t[a.t.len() - 1].min(b.t[b.t.len() - 1]);
    if hi < lo {
        return Err(Error::Validation(format!("time windows do not overlap ({lo} > {hi})")));
    }
    let tol = max_spacing(&b.t).max(max_spacing(&a.t)) * (1.0 + 1e-9) + 1e-12 * hi.abs().max(1.0);
    let mut rows = vec![];
    for (&t, &da) in a.t.iter().zip(&a.db) {
        if t < lo - tol || t > hi + tol {
            continue;
        }
        let k = b.t.partition_point(|&x| x < t);
        let j = match (k.checked_sub(1), b.t.get(k)) {
            (Some(i), Some(&x)) if (t - b.t[i]).abs() <= (x - t).abs() => i,
            (None, _) => 0,
            (Some(i), None) => i,
            _ => k,
        };
        if (b.t[j] - t).abs() > tol {
            return Err(Error::Validation(format!("no sample of run b near t = {t}")));
        }
        rows.push([t, da, b.db[j], da - b.db[j]]);
    }
    if rows.is_empty() {
        return Err(Error::Validation("no common samples".into()));
    }
    let max_abs_diff = rows.iter().map(|r| r[3].abs()).fold(0.0, f64::max);
    let peak = |s: &DbSeries| {
        s.db.iter().zip(&s.t).fold((f64::NEG_INFINITY, 0.0), |m, (&d, &t)| if d > m.0 { (d, t) } else { m })
    };
    Ok(Comparison { rows, max_abs_diff, peak_a: peak(a), peak_b: peak(b) })
}
