//! Config parsing, trace serialization and the command implementations
//! behind the `ftlab` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DVector;

use crate::control::ControllerKind;
use crate::drem::{DreKind, MatrixNorm};
use crate::error::{Error, Result};
use crate::plant::PhysicalParams;
use crate::regression::Parameterization;
use crate::sim::{compute_metrics, run_closed_loop, Metrics, Scenario, SimConfig, Tolerances, Trace};
use crate::verify::{self, Mutation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_PROPERTY: i32 = 4;

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::NumericalDegeneracy { .. } => EXIT_DEGENERATE,
        Error::InvalidArgument(_) | Error::ConfigSyntax { .. } | Error::ConfigRange { .. } => EXIT_CONFIG,
    }
}

/// Parsed configuration plus the monitor tolerances it may override.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub tolerances: Tolerances,
}

/// What one invocation should do.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: Option<PathBuf>,
    pub controller: Option<ControllerKind>,
    pub scenario: Option<Scenario>,
    pub out: PathBuf,
}

struct Entry {
    line: usize,
    /// Key as written, used in messages.
    raw: String,
    value: String,
}

const SECTIONS: [&str; 4] = ["sim", "plant", "gains", "dre"];

/// Bare keys accepted as shorthands for `sim.<key>`.
const SIM_SHORTHANDS: [&str; 5] = ["dt", "t_final", "q_d", "q0", "qd0"];

fn lex(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut section: Option<String> = None;
    let mut out = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw_line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(inner) = body.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| Error::ConfigSyntax { line, msg: "unterminated section header".into() })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::ConfigSyntax { line, msg: format!("unknown section `{name}`") });
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::ConfigSyntax { line, msg: format!("expected `key = value`, got `{body}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::ConfigSyntax { line, msg: "empty key or value".into() });
        }
        let full = match &section {
            Some(s) if !k.contains('.') => format!("{s}.{k}"),
            _ if SIM_SHORTHANDS.contains(&k) => format!("sim.{k}"),
            _ => k.to_string(),
        };
        let entry = Entry { line, raw: k.to_string(), value: v.to_string() };
        if out.insert(full.clone(), entry).is_some() {
            return Err(Error::ConfigSyntax { line, msg: format!("duplicate key `{full}`") });
        }
    }
    Ok(out)
}

struct Reader {
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn range(e: &Entry, msg: impl Into<String>) -> Error {
        Error::ConfigRange { key: e.raw.clone(), msg: msg.into() }
    }

    fn float(e: &Entry) -> Result<f64> {
        e.value
            .parse::<f64>()
            .map_err(|_| Error::ConfigSyntax { line: e.line, msg: format!("`{}` is not a number", e.value) })
    }

    fn list(e: &Entry) -> Result<Vec<f64>> {
        let body = e.value.trim_start_matches('[').trim_end_matches(']');
        body.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::ConfigSyntax {
                    line: e.line,
                    msg: format!("`{}` is not a number list", e.value),
                })
            })
            .collect()
    }

    fn f64_with(&mut self, key: &str, target: &mut f64, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
        if let Some(e) = self.take(key) {
            let v = Self::float(&e)?;
            if !v.is_finite() || !ok(v) {
                return Err(Self::range(&e, format!("{v} is not {what}")));
            }
            *target = v;
        }
        Ok(())
    }

    fn positive(&mut self, key: &str, target: &mut f64) -> Result<()> {
        self.f64_with(key, target, |v| v > 0.0, "positive")
    }

    fn vector(
        &mut self,
        key: &str,
        target: &mut DVector<f64>,
        len: usize,
        ok: impl Fn(f64) -> bool,
        what: &str,
    ) -> Result<()> {
        if let Some(e) = self.take(key) {
            let vals = Self::list(&e)?;
            if vals.len() != len {
                return Err(Self::range(&e, format!("expected {len} values, got {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite() || !ok(*v)) {
                return Err(Self::range(&e, format!("entries must be {what}")));
            }
            *target = DVector::from_vec(vals);
        }
        Ok(())
    }

    /// Diagonal gain: one scalar for `s I`, or `len` entries.
    fn diagonal(&mut self, key: &str, target: &mut DVector<f64>, len: usize) -> Result<()> {
        if let Some(e) = self.take(key) {
            let vals = Self::list(&e)?;
            let vals = match vals.len() {
                1 => vec![vals[0]; len],
                n if n == len => vals,
                n => return Err(Self::range(&e, format!("expected 1 or {len} values, got {n}"))),
            };
            if vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Self::range(&e, "diagonal gains must be positive"));
            }
            *target = DVector::from_vec(vals);
        }
        Ok(())
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| Self::range(&e, err.to_string())),
        }
    }
}

/// Parses a flat `key = value` config, optionally grouped under
/// `[sim]`, `[plant]`, `[gains]` and `[dre]` headers. Omitted keys keep
/// their defaults; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut r = Reader { entries: lex(text)? };
    let mut cfg = RunConfig::default();
    let s = &mut cfg.sim;

    if let Some(v) = r.parsed::<ControllerKind>("controller")? {
        s.controller = v;
    }
    if let Some(v) = r.parsed::<Scenario>("scenario")? {
        s.scenario = v;
    }
    if let Some(v) = r.parsed::<Parameterization>("parameterization")? {
        s.parameterization = v;
    }
    s.dre = r.parsed::<DreKind>("dre")?;

    r.positive("sim.dt", &mut s.dt)?;
    r.positive("sim.t_final", &mut s.t_final)?;
    if s.t_final <= s.dt {
        return Err(Error::ConfigRange { key: "t_final".into(), msg: format!("must exceed dt = {}", s.dt) });
    }
    let any = |_: f64| true;
    r.vector("sim.q_d", &mut s.q_d, 2, any, "finite")?;
    r.vector("sim.q0", &mut s.q0, 2, any, "finite")?;
    r.vector("sim.qd0", &mut s.qd0, 2, any, "finite")?;
    let t = &mut cfg.tolerances;
    r.positive("sim.settle_tol", &mut t.settle)?;
    r.positive("sim.param_tol", &mut t.param_rel)?;
    r.f64_with("sim.steady_fraction", &mut t.steady_fraction, |v| v > 0.0 && v <= 1.0, "in (0, 1]")?;
    r.f64_with("sim.gramian_t1", &mut t.gramian_t1, |v| v >= 0.0, "nonnegative")?;
    r.positive("sim.gramian_len", &mut t.gramian_len)?;

    // plant: masses and lengths first, then optional overrides of the
    // uniform-rod centre-of-mass offsets and inertias
    let mut base = [2.0, 1.0, 0.3, 0.2, 9.81];
    for (key, slot) in ["plant.m1", "plant.m2", "plant.l1", "plant.l2", "plant.g"].iter().zip(base.iter_mut()) {
        r.positive(key, slot)?;
    }
    let mut p = PhysicalParams::uniform_rods(base[0], base[1], base[2], base[3], base[4]);
    r.positive("plant.lc1", &mut p.lc1)?;
    r.positive("plant.lc2", &mut p.lc2)?;
    r.positive("plant.i1", &mut p.i1)?;
    r.positive("plant.i2", &mut p.i2)?;
    s.physical = p;
    r.vector("plant.friction", &mut s.friction.coulomb, 2, |v| v >= 0.0, "nonnegative")?;
    r.f64_with("plant.noise_amplitude", &mut s.noise.amplitude, |v| v >= 0.0, "nonnegative")?;
    r.f64_with("plant.noise_frequency", &mut s.noise.frequency, |v| v >= 0.0, "nonnegative")?;

    // FT-PD and composite adaptation
    r.diagonal("gains.p", &mut s.ftpd.p, 2)?;
    r.diagonal("gains.d", &mut s.ftpd.d, 2)?;
    r.diagonal("gains.d_l", &mut s.ftpd.d_l, 2)?;
    r.positive("gains.r1", &mut s.ftpd.r1)?;
    r.positive("gains.r2", &mut s.ftpd.r2)?;
    if let Err(err) = s.ftpd.validate() {
        return Err(Error::ConfigRange { key: "gains.r1".into(), msg: err.to_string() });
    }
    r.positive("gains.gamma1", &mut s.adapt.gamma1)?;
    r.positive("gains.gamma2", &mut s.adapt.gamma2)?;
    r.positive("gains.d1", &mut s.adapt.d1)?;
    r.diagonal("gains.gamma", &mut s.adapt.gamma, 2)?;
    r.diagonal("gains.upsilon_u", &mut s.adapt.upsilon_u, 2)?;
    s.adapt.c = s.ftpd.b();
    if let Some(e) = r.take("gains.sat_c") {
        let c = Reader::float(&e)?;
        if (c - s.ftpd.b()).abs() > 1e-12 {
            return Err(Reader::range(&e, format!("must equal the velocity exponent b = {}", s.ftpd.b())));
        }
    }
    r.positive("gains.sat_d", &mut s.adapt.d)?;
    r.vector("gains.theta_hat_u0", &mut s.theta_hat_u0, 2, any, "finite")?;
    r.vector("gains.theta_hat0", &mut s.theta_hat0, 5, any, "finite")?;

    let c3 = &mut s.c3;
    r.positive("gains.c3_k1", &mut c3.k1)?;
    r.positive("gains.c3_k2", &mut c3.k2)?;
    r.positive("gains.c3_ks", &mut c3.ks)?;
    r.positive("gains.c3_gamma1", &mut c3.gamma_tau1)?;
    r.positive("gains.c3_k_tau1", &mut c3.k_tau1)?;
    r.positive("gains.c3_gamma2", &mut c3.gamma_tau2)?;
    r.positive("gains.c3_k_tau2", &mut c3.k_tau2)?;
    r.positive("gains.c3_floor", &mut c3.singularity_floor)?;
    c3.a = s.ftpd.a();
    let c4 = &mut s.c4;
    r.positive("gains.c4_k1", &mut c4.k1)?;
    r.positive("gains.c4_k2", &mut c4.k2)?;

    // regression filters and extensions
    r.positive("dre.lambda0", &mut s.lambda0)?;
    r.positive("dre.lambda1", &mut s.lambda1)?;
    r.positive("dre.alpha", &mut s.ls.alpha)?;
    r.positive("dre.beta0", &mut s.ls.beta0)?;
    r.positive("dre.f0", &mut s.ls.f0)?;
    r.positive("dre.xi", &mut s.ls.xi)?;
    r.vector("dre.rho0", &mut s.ls.rho0, 5, any, "finite")?;
    if let Some(norm) = r.parsed::<MatrixNorm>("dre.norm")? {
        s.ls.norm = norm;
    }
    if s.ls.xi < 1.0 / s.ls.f0 {
        return Err(Error::ConfigRange { key: "dre.xi".into(), msg: "must be at least 1/f0".into() });
    }
    r.positive("dre.lambda2", &mut s.kreis.lambda2)?;
    r.positive("dre.lambda3", &mut s.kreis.lambda3)?;
    r.positive("dre.c3_lambda2", &mut s.c3_kreis.lambda2)?;
    r.positive("dre.c3_lambda3", &mut s.c3_kreis.lambda3)?;
    // the Slotine–Li estimator shares the least-squares constants
    s.c4.alpha = s.ls.alpha;
    s.c4.beta0 = s.ls.beta0;
    s.c4.p0 = s.ls.f0;
    s.c4.k0 = s.ls.xi;
    s.c4.norm = s.ls.norm;

    if let Some((key, e)) = r.entries.iter().next() {
        return Err(Error::ConfigSyntax { line: e.line, msg: format!("unknown key `{key}`") });
    }
    s.validate().map_err(|err| Error::ConfigRange { key: "config".into(), msg: err.to_string() })?;
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}")),
    };
    Error::Io { path: path.to_path_buf(), source }
}

/// CSV column names for a trace whose estimate has `k` entries.
pub fn trace_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["t", "q1", "q2", "qd1", "qd2", "e11", "e12", "tau1", "tau2"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|i| format!("theta_hat_{i}")));
    h.extend(["Delta", "zeta1", "V1", "z1norm"].iter().map(|s| s.to_string()));
    h
}

/// Numeric rows in [`trace_header`] order. `z1norm` is `|Psi(q) theta_tilde_U|`.
pub fn trace_rows(trace: &Trace) -> Vec<Vec<f64>> {
    trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.t, r.q[0], r.q[1], r.qd[0], r.qd[1], r.e1[0], r.e1[1], r.tau[0], r.tau[1]];
            row.extend(r.theta_hat.iter());
            row.extend([r.delta, r.zeta1, r.v1, r.psi_theta_tilde.norm()]);
            row
        })
        .collect()
}

pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let k = trace.records.first().map_or(0, |r| r.theta_hat.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(trace_header(k)).map_err(|e| csv_err(path, e))?;
    for row in trace_rows(trace) {
        // `{}` on f64 prints the shortest string that parses back exactly
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Header and numeric rows of a trace CSV.
pub fn read_trace_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec.iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<f64>, _>>().map_err(|e| {
            Error::Io { path: path.to_path_buf(), source: std::io::Error::new(std::io::ErrorKind::InvalidData, e) }
        })?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn format_metrics(cfg: &SimConfig, m: &Metrics) -> String {
    let mut s = format!(
        "controller={}\nscenario={}\nparameterization={}\ndre={}\n",
        cfg.controller,
        cfg.scenario,
        cfg.parameterization,
        cfg.effective_dre()
    );
    for (k, v) in m.entries() {
        s.push_str(&format!("{k}={v:e}\n"));
    }
    s
}

/// Reads a flat `key=value` metrics file.
pub fn parse_metrics(text: &str) -> BTreeMap<String, String> {
    text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).collect()
}

/// Loads the config file (if any) and applies command-line overrides.
pub fn load(spec: &RunSpec) -> Result<RunConfig> {
    let text = match &spec.config {
        Some(p) => fs::read_to_string(p).map_err(io_err(p))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(c) = spec.controller {
        cfg.sim.controller = c;
    }
    if let Some(s) = spec.scenario {
        cfg.sim.scenario = s;
    }
    Ok(cfg)
}

/// Runs one simulation and writes `trace.csv` and `metrics.txt` into `dir`.
pub fn simulate_into(cfg: &RunConfig, dir: &Path) -> Result<Metrics> {
    let trace = run_closed_loop(&cfg.sim)?;
    let metrics = compute_metrics(&trace, &cfg.tolerances)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_trace_csv(&trace, &dir.join("trace.csv"))?;
    let mpath = dir.join("metrics.txt");
    fs::write(&mpath, format_metrics(&cfg.sim, &metrics)).map_err(io_err(&mpath))?;
    Ok(metrics)
}

fn report(err: &Error) -> i32 {
    eprintln!("ftlab: {err}");
    exit_code(err)
}

pub fn cmd_simulate(spec: &RunSpec) -> i32 {
    let run = || -> Result<Metrics> { simulate_into(&load(spec)?, &spec.out) };
    match run() {
        Ok(m) => {
            for (k, v) in m.entries() {
                println!("{k}={v:e}");
            }
            EXIT_OK
        }
        Err(e) => report(&e),
    }
}

pub fn cmd_verify(mutation: Mutation) -> i32 {
    let results = verify::run_all(mutation);
    let mut failed = Vec::new();
    for r in &results {
        println!("{} {:<28} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        eprintln!("ftlab: failed properties: {}", failed.join(", "));
        EXIT_PROPERTY
    }
}

/// Worker count for `sweep`: `FTLAB_THREADS` if set, else available cores.
pub fn sweep_threads(jobs: usize) -> usize {
    let cap = std::env::var("FTLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Runs every requested controller/scenario pair, one directory each.
pub fn sweep(spec: &RunSpec) -> Result<Vec<(ControllerKind, Scenario, Metrics)>> {
    let base = load(&RunSpec { controller: None, scenario: None, ..spec.clone() })?;
    let kinds: Vec<ControllerKind> = spec.controller.map_or_else(|| ControllerKind::ALL.to_vec(), |c| vec![c]);
    let scenarios: Vec<Scenario> = spec.scenario.map_or_else(|| vec![Scenario::Case1, Scenario::Case2], |s| vec![s]);
    let jobs: Vec<(ControllerKind, Scenario)> =
        kinds.iter().flat_map(|k| scenarios.iter().map(move |s| (*k, *s))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Metrics>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..sweep_threads(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(kind, scenario)) = jobs.get(i) else { break };
                let mut cfg = base.clone();
                cfg.sim.controller = kind;
                cfg.sim.scenario = scenario;
                let dir = spec.out.join(format!("{kind}_{scenario}"));
                let res = simulate_into(&cfg, &dir);
                results.lock().expect("sweep result lock")[i] = Some(res);
            });
        }
    });
    let mut out = Vec::with_capacity(jobs.len());
    for ((kind, scenario), res) in jobs.into_iter().zip(results.into_inner().expect("sweep result lock")) {
        out.push((kind, scenario, res.expect("every job ran")?));
    }
    let mut summary = String::from("controller,scenario");
    for (k, _) in out.first().map(|o| o.2.entries()).unwrap_or_default() {
        summary.push(',');
        summary.push_str(k);
    }
    summary.push('\n');
    for (k, s, m) in &out {
        summary.push_str(&format!("{k},{s}"));
        for (_, v) in m.entries() {
            summary.push_str(&format!(",{v:e}"));
        }
        summary.push('\n');
    }
    let path = spec.out.join("summary.csv");
    fs::write(&path, summary).map_err(io_err(&path))?;
    Ok(out)
}

pub fn cmd_sweep(spec: &RunSpec) -> i32 {
    match sweep(spec) {
        Ok(rows) => {
            for (k, s, m) in rows {
                println!(
                    "{k} {s}: settling_time={} steady_state_error={:e} chattering_amplitude={:e}",
                    m.settling_time, m.steady_state_error, m.chattering_amplitude
                );
            }
            EXIT_OK
        }
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_c1_case1_defaults() {
        let cfg = parse_config("").unwrap();
        let d = SimConfig::default();
        assert_eq!(cfg.sim.controller, ControllerKind::C1);
        assert_eq!(cfg.sim.scenario, Scenario::Case1);
        assert_eq!(cfg.sim.effective_dre(), DreKind::LeastSquares);
        assert_eq!(cfg.sim.ftpd, d.ftpd);
        assert_eq!(cfg.sim.adapt, d.adapt);
        assert_eq!(cfg.sim.ls, d.ls);
        assert_eq!(cfg.sim.c4, d.c4);
        assert_eq!(cfg.sim.physical, d.physical);
        assert_eq!(cfg.sim.dt, 5e-4);
    }

    #[test]
    fn controller_only() {
        let cfg = parse_config("controller=c3\n").unwrap();
        assert_eq!(cfg.sim.controller, ControllerKind::C3);
        assert_eq!(cfg.sim.c3, SimConfig::default().c3);
        let cfg = parse_config("controller = c2").unwrap();
        assert_eq!(cfg.sim.effective_dre(), DreKind::Kreisselmeier);
    }

    #[test]
    fn range_error_names_key() {
        match parse_config("dt=-1") {
            Err(Error::ConfigRange { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("{other:?}"),
        }
        match parse_config("[gains]\np = 0") {
            Err(Error::ConfigRange { key, .. }) => assert_eq!(key, "p"),
            other => panic!("{other:?}"),
        }
        match parse_config("gains.sat_c = 0.4") {
            Err(Error::ConfigRange { key, .. }) => assert_eq!(key, "gains.sat_c"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line() {
        match parse_config("controller=c1\n\nnonsense") {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_config("# comment\nsim.frobnicate = 1") {
            Err(Error::ConfigSyntax { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("frobnicate"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("[bogus]"), Err(Error::ConfigSyntax { line: 1, .. })));
        assert!(matches!(parse_config("dt = x"), Err(Error::ConfigSyntax { line: 1, .. })));
        assert!(matches!(parse_config("dt=1e-3\ndt=2e-3"), Err(Error::ConfigSyntax { line: 2, .. })));
    }

    #[test]
    fn sections_and_lists() {
        let text = "controller = c4\nscenario = case2\n[sim]\nt_final = 2\nq_d = [1.0, -0.5]\n[gains]\nd_l = 0.8, 0.9\n[dre]\nlambda0 = 2\nnorm = frobenius\n[plant]\nlc2 = 0.15\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sim.t_final, 2.0);
        assert_eq!(cfg.sim.q_d.as_slice(), &[1.0, -0.5]);
        assert_eq!(cfg.sim.ftpd.d_l.as_slice(), &[0.8, 0.9]);
        assert_eq!(cfg.sim.lambda0, 2.0);
        assert_eq!(cfg.sim.c4.norm, MatrixNorm::Frobenius);
        assert_eq!(cfg.sim.physical.lc2, 0.15);
        assert_eq!(cfg.sim.physical.lc1, 0.15);
        assert_eq!(cfg.sim.scenario, Scenario::Case2);
    }

    #[test]
    fn exponents_propagate() {
        let cfg = parse_config("gains.r1 = 1.2").unwrap();
        assert!((cfg.sim.adapt.c - cfg.sim.ftpd.b()).abs() < 1e-15);
        assert!((cfg.sim.c3.a - cfg.sim.ftpd.a()).abs() < 1e-15);
        assert!(matches!(parse_config("gains.r1 = 3"), Err(Error::ConfigRange { .. })));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::degenerate("x")), EXIT_DEGENERATE);
        assert_eq!(exit_code(&Error::ConfigSyntax { line: 1, msg: String::new() }), EXIT_CONFIG);
    }
}
