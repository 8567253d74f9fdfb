//! Config files, subcommand dispatch and CSV output.
//!
//! Config files are UTF-8 `key = value` lines; `#` starts a comment. Keys
//! marked per-link take one value for every link or a comma list with one
//! value per link. Schedules are `frame:value` comma lists starting at 0.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `n_links`, `n_antennas` | N, N_T | 3, 4 |
//! | `noise_mw` | per-link noise power | 1e-3 |
//! | `psp_base_mw` | signal-processing power per antenna | 115 |
//! | `pmax_mw` | transmit power cap | 200 |
//! | `pa_efficiency` | amplifier efficiency | 1 |
//! | `sinr_target_db` | per-link SINR target | 2 |
//! | `u_req` | per-link mean arrival rate | 0.3 |
//! | `arrivals` | `bernoulli` or `uniform` | bernoulli |
//! | `mcs_b`, `mcs_c` | per-link sigmoid centre (dB) and slope (1/dB) | 20, 0.451 |
//! | `pathloss`, `distance_m` | path-loss exponent, per-link distance | 3, 10 |
//! | `price_sell` | selling price | 1.0 |
//! | `price_buy` | constant buying price, replaces the default buy schedule | |
//! | `harvest_mw` | constant harvest, replaces the default harvest schedule | |
//! | `harvest_schedule`, `buy_price_schedule` | `frame:value` lists | built-in segments |
//! | `v` | control parameter V | 0.001 |
//! | `stop_tol`, `max_iter` | outer stop threshold and iteration cap | 1e-4, 50 |
//! | `frames`, `seed`, `solver` | run length, seed, `sabf` or `zfbf` | 4000, 1, sabf |
//! | `sweep` | `v` or `sinr` | v |
//! | `v_grid` | V values for `sweep` | 0.001, ..., 0.007 |
//! | `sinr_grid_db` | targets for `sweep = sinr` | 2, 4, 6, 8, 10 |
//! | `instances`, `q0` | channel draws and initial backlog for `converge` | 30, 5 |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngExt;

use crate::controller::{FrameRecord, Solver};
use crate::error::{Error, Result};
use crate::experiments::{convergence_study, gamma_sweep, run_trajectory, v_sweep, ConvergenceRecord, TradeoffRecord};
use crate::feasibility::{duality_fixed_point, min_power_beamforming};
use crate::model::{
    drift_bound_terms, grid_cost, grid_cost_convex, packet_departure, signal_processing_power, sinrs, ArrivalModel,
    EnergyPriceState, QueueState, SystemConfig,
};
use crate::sabf::{initial_point, kkt_residual, sabf_run};
use crate::scalar::db_to_linear;
use crate::stochastic::{draw_channel, streams, RngStream, Schedule};
use crate::zfbf::{power_subproblem, power_subproblem_closed_form, subproblem_objective, zf_matrix, ZfState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    V,
    Sinr,
}

/// Everything a config file can set beyond the system model.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub frames: usize,
    pub seed: u64,
    pub solver: Solver,
    pub sweep: SweepKind,
    pub v_grid: Vec<f64>,
    pub sinr_grid_db: Vec<f64>,
    pub instances: usize,
    pub q0: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            frames: 4000,
            seed: 1,
            solver: Solver::Sabf,
            sweep: SweepKind::V,
            v_grid: (1..=7).map(|k| k as f64 * 1e-3).collect(),
            sinr_grid_db: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            instances: 30,
            q0: 5.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub system: SystemConfig<f64>,
    pub schedule: Schedule<f64>,
    pub settings: Settings,
}

const KEYS: &[&str] = &[
    "n_links",
    "n_antennas",
    "noise_mw",
    "psp_base_mw",
    "pmax_mw",
    "pa_efficiency",
    "sinr_target_db",
    "u_req",
    "arrivals",
    "mcs_b",
    "mcs_c",
    "pathloss",
    "distance_m",
    "price_buy",
    "price_sell",
    "harvest_mw",
    "harvest_schedule",
    "buy_price_schedule",
    "v",
    "stop_tol",
    "max_iter",
    "frames",
    "seed",
    "solver",
    "sweep",
    "v_grid",
    "sinr_grid_db",
    "instances",
    "q0",
];

struct Entry {
    line: usize,
    value: String,
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn number<T: std::str::FromStr>(e: &Entry, key: &str, what: &str) -> Result<T> {
    e.value.trim().parse().map_err(|_| bad(e.line, format!("`{key}` expects {what}, got `{}`", e.value)))
}

fn list(e: &Entry, key: &str) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(e.line, format!("`{key}` expects numbers, got `{}`", s.trim()))))
        .collect()
}

fn per_link(e: &Entry, key: &str, n: usize) -> Result<Vec<f64>> {
    let v = list(e, key)?;
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        k if k == n => Ok(v),
        k => Err(bad(e.line, format!("`{key}` has {k} values for {n} links"))),
    }
}

fn breakpoints(e: &Entry, key: &str) -> Result<Vec<(usize, f64)>> {
    e.value
        .split(',')
        .map(|item| {
            let (f, v) = item
                .split_once(':')
                .ok_or_else(|| bad(e.line, format!("`{key}` entries must be frame:value, got `{}`", item.trim())))?;
            let f = f.trim().parse().map_err(|_| bad(e.line, format!("bad frame `{}` in `{key}`", f.trim())))?;
            let v = v.trim().parse().map_err(|_| bad(e.line, format!("bad value `{}` in `{key}`", v.trim())))?;
            Ok((f, v))
        })
        .collect()
}

/// Parses config text; missing keys keep the defaults.
pub fn parse_config_str(text: &str) -> Result<ParsedConfig> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| bad(line, format!("expected `key = value`, got `{content}`")))?;
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKey(key));
        }
        if let Some(prev) = entries.get(&key) {
            return Err(bad(line, format!("`{key}` already set on line {}", prev.line)));
        }
        entries.insert(key, Entry { line, value: v.trim().to_string() });
    }

    let n_links = entries.get("n_links").map(|e| number(e, "n_links", "an integer")).transpose()?.unwrap_or(3);
    let n_ant = entries.get("n_antennas").map(|e| number(e, "n_antennas", "an integer")).transpose()?.unwrap_or(4);
    let mut cfg = SystemConfig::<f64>::standard_with(n_links, n_ant);
    let mut settings = Settings::default();

    let links = |key: &str| entries.get(key).map(|e| per_link(e, key, n_links)).transpose();
    if let Some(v) = links("noise_mw")? {
        cfg.links.iter_mut().zip(v).for_each(|(l, x)| l.noise_power = x);
    }
    if let Some(v) = links("sinr_target_db")? {
        cfg.links.iter_mut().zip(v).for_each(|(l, x)| l.sinr_target = db_to_linear(x));
    }
    if let Some(v) = links("u_req")? {
        cfg.links.iter_mut().zip(v).for_each(|(l, x)| l.arrival_mean = x);
    }
    if let Some(v) = links("mcs_b")? {
        cfg.links.iter_mut().zip(v).for_each(|(l, x)| l.mcs_b = x);
    }
    if let Some(v) = links("mcs_c")? {
        cfg.links.iter_mut().zip(v).for_each(|(l, x)| l.mcs_c = x);
    }
    if let Some(v) = links("distance_m")? {
        cfg.links.iter_mut().zip(v).for_each(|(l, x)| l.distance = x);
    }
    let scalar = |key: &str| entries.get(key).map(|e| number::<f64>(e, key, "a number")).transpose();
    if let Some(x) = scalar("psp_base_mw")? {
        cfg.sp_base_power = x;
    }
    if let Some(x) = scalar("pmax_mw")? {
        cfg.max_tx_power = x;
    }
    if let Some(x) = scalar("pa_efficiency")? {
        cfg.pa_efficiency = x;
    }
    if let Some(x) = scalar("pathloss")? {
        cfg.pathloss_exp = x;
    }
    if let Some(x) = scalar("v")? {
        cfg.control_v = x;
    }
    if let Some(x) = scalar("stop_tol")? {
        cfg.sabf_tol = x;
    }
    if let Some(e) = entries.get("max_iter") {
        cfg.sabf_max_iter = number(e, "max_iter", "an integer")?;
    }
    if let Some(e) = entries.get("arrivals") {
        cfg.arrivals = match e.value.to_ascii_lowercase().as_str() {
            "bernoulli" => ArrivalModel::Bernoulli,
            "uniform" => ArrivalModel::Uniform,
            other => return Err(bad(e.line, format!("`arrivals` must be bernoulli or uniform, got `{other}`"))),
        };
    }
    let cfg_line = entries.values().map(|e| e.line).min().unwrap_or(0);
    cfg.validate().map_err(|err| bad(cfg_line, err.to_string()))?;

    let default = Schedule::<f64>::default_segments();
    let harvest = match (entries.get("harvest_schedule"), scalar("harvest_mw")?) {
        (Some(_), Some(_)) => {
            return Err(bad(entries["harvest_mw"].line, "set harvest_mw or harvest_schedule, not both"));
        }
        (Some(e), None) => breakpoints(e, "harvest_schedule")?,
        (None, Some(x)) => vec![(0, x)],
        (None, None) => default.harvest().to_vec(),
    };
    let buy = match (entries.get("buy_price_schedule"), scalar("price_buy")?) {
        (Some(_), Some(_)) => {
            return Err(bad(entries["price_buy"].line, "set price_buy or buy_price_schedule, not both"));
        }
        (Some(e), None) => breakpoints(e, "buy_price_schedule")?,
        (None, Some(x)) => vec![(0, x)],
        (None, None) => default.buy_price().to_vec(),
    };
    let sell = scalar("price_sell")?.unwrap_or(default.sell_price());
    let sched_line = ["harvest_schedule", "buy_price_schedule", "harvest_mw", "price_buy", "price_sell"]
        .iter()
        .filter_map(|k| entries.get(*k).map(|e| e.line))
        .min()
        .unwrap_or(0);
    let schedule = Schedule::new(harvest, buy, sell).map_err(|err| bad(sched_line, err.to_string()))?;

    if let Some(e) = entries.get("frames") {
        settings.frames = number(e, "frames", "an integer")?;
        if settings.frames == 0 {
            return Err(bad(e.line, "`frames` must be at least 1"));
        }
    }
    if let Some(e) = entries.get("seed") {
        settings.seed = number(e, "seed", "an unsigned integer")?;
    }
    if let Some(e) = entries.get("solver") {
        settings.solver = e.value.parse().map_err(|err: Error| bad(e.line, err.to_string()))?;
    }
    if let Some(e) = entries.get("sweep") {
        settings.sweep = match e.value.to_ascii_lowercase().as_str() {
            "v" => SweepKind::V,
            "sinr" => SweepKind::Sinr,
            other => return Err(bad(e.line, format!("`sweep` must be v or sinr, got `{other}`"))),
        };
    }
    if let Some(e) = entries.get("v_grid") {
        settings.v_grid = list(e, "v_grid")?;
        if settings.v_grid.iter().any(|&v| !(v > 0.0)) {
            return Err(bad(e.line, "`v_grid` values must be positive"));
        }
    }
    if let Some(e) = entries.get("sinr_grid_db") {
        settings.sinr_grid_db = list(e, "sinr_grid_db")?;
    }
    if let Some(e) = entries.get("instances") {
        settings.instances = number(e, "instances", "an integer")?;
    }
    if let Some(x) = scalar("q0")? {
        if !(x >= 0.0) {
            return Err(bad(entries["q0"].line, "`q0` must be nonnegative"));
        }
        settings.q0 = x;
    }
    Ok(ParsedConfig { system: cfg, schedule, settings })
}

pub fn parse_config(path: &Path) -> Result<ParsedConfig> {
    parse_config_str(&fs::read_to_string(path)?)
}

/// Nine significant digits in plain decimal notation; scientific only for
/// magnitudes where plain decimals would be unreadable.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..12).contains(&mag) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn run_csv(n_links: usize, records: &[FrameRecord]) -> String {
    let mut s = String::from("frame,G,Ptot,status,iters");
    for n in 1..=n_links {
        let _ = write!(s, ",sinr_{n},u_{n},q_{n}");
    }
    s.push('\n');
    for r in records {
        let _ = write!(s, "{},{},{},{},{}", r.frame, fmt_num(r.grid_cost), fmt_num(r.total_power), r.status.as_str(), r.iterations);
        for n in 0..n_links {
            let _ = write!(s, ",{},{},{}", fmt_num(r.sinr[n]), fmt_num(r.departure[n]), fmt_num(r.q[n]));
        }
        s.push('\n');
    }
    s
}

pub fn sweep_csv(n_links: usize, records: &[TradeoffRecord]) -> String {
    let with_target = records.iter().any(|r| r.sinr_target_db.is_some());
    let mut s = String::new();
    if with_target {
        s.push_str("sinr_target_db,");
    }
    s.push_str("V,solver,avg_grid_cost");
    for n in 1..=n_links {
        let _ = write!(s, ",avg_backlog_{n},delay_{n}");
    }
    s.push('\n');
    for r in records {
        if with_target {
            let _ = write!(s, "{},", r.sinr_target_db.map(fmt_num).unwrap_or_default());
        }
        let _ = write!(s, "{},{},{}", fmt_num(r.v), r.solver, fmt_num(r.avg_grid_cost));
        for n in 0..n_links {
            let _ = write!(s, ",{},{}", fmt_num(r.avg_backlog[n]), fmt_num(r.delay[n]));
        }
        s.push('\n');
    }
    s
}

pub fn converge_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from("seed,feasible,zfbf_iters,zfbf_converged,sabf_iters,sabf_warm_iters,sabf_total_iters,sabf_converged\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            r.feasible,
            r.zfbf_iterations,
            r.zfbf_converged,
            r.sabf_iterations,
            r.sabf_warm_iterations,
            r.sabf_total(),
            r.sabf_converged
        );
    }
    s
}

/// One line of the `validate` report.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Quick cross-checks of every solver against its independent route.
pub fn validate_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let cfg = SystemConfig::<f64>::standard();
    let mut rng = RngStream::new(seed, streams::INIT);

    let sp = signal_processing_power(&cfg);
    let u = packet_departure(db_to_linear(20.0), 20.0, 0.451);
    out.push(check("formula anchors", sp == 201.25 && u == 0.5, format!("P_sp {sp}, U at b {u}")));

    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p: f64 = rng.random_range(0.0..1000.0);
        let sell = rng.random_range(0.1..2.0);
        let e = EnergyPriceState { harvest: rng.random_range(0.0..500.0), buy_price: sell + rng.random_range(0.0..2.0), sell_price: sell };
        let (a, b) = (grid_cost(p, &e), grid_cost_convex(p, &e));
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
    }
    out.push(check("grid cost forms agree", worst <= 1e-12, format!("max rel diff {worst:.2e}")));

    let ok = (0..100_000).all(|_| {
        drift_bound_terms(rng.random_range(0.0..100.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))
    });
    out.push(check("queue drift inequality", ok, "100000 samples".into()));

    let mut ch_rng = RngStream::new(seed, streams::CHANNEL);
    let (mut worst, mut n_ok) = (0.0f64, 0);
    for _ in 0..20 {
        let ch = draw_channel(&cfg, &mut ch_rng);
        let (Ok((a, pa)), Ok((_, pb))) = (min_power_beamforming(&cfg, &ch), duality_fixed_point(&cfg, &ch, 1e-12, 10_000))
        else {
            continue;
        };
        n_ok += 1;
        worst = worst.max((pa - pb).abs() / pb);
        if let Ok(s) = sinrs(&cfg, &ch, &a.w) {
            for (x, l) in s.iter().zip(&cfg.links) {
                worst = worst.max((x - l.sinr_target).abs() / l.sinr_target);
            }
        }
    }
    out.push(check("min-power SOCP vs duality", n_ok > 0 && worst <= 1e-5, format!("{n_ok} instances, max rel diff {worst:.2e}")));

    let e = EnergyPriceState { harvest: 200.0, buy_price: 1.2, sell_price: 1.0 };
    let q = QueueState::filled(3, 5.0);
    let (mut worst, mut n_ok) = (0.0f64, 0);
    for _ in 0..20 {
        let ch = draw_channel(&cfg, &mut ch_rng);
        let Ok(w_zf) = zf_matrix(&ch) else { continue };
        let state = ZfState::initial(&cfg, w_zf, &q.q);
        let (Ok(a), Ok(b)) = (power_subproblem(&cfg, &e, &state), power_subproblem_closed_form(&cfg, &e, &state)) else {
            continue;
        };
        n_ok += 1;
        let (fa, fb) = (subproblem_objective(&cfg, &e, &state, &a), subproblem_objective(&cfg, &e, &state, &b));
        worst = worst.max((fa - fb).abs() / fb.abs().max(1e-12));
    }
    out.push(check("ZF conic vs closed form", n_ok > 0 && worst <= 1e-5, format!("{n_ok} instances, max rel diff {worst:.2e}")));

    let mut tight = cfg.clone();
    tight.sabf_tol = 1e-6;
    let (mut worst_kkt, mut worst_rise, mut n_ok) = (0.0f64, 0.0f64, 0);
    for _ in 0..10 {
        let ch = draw_channel(&tight, &mut ch_rng);
        let Ok((w0, _)) = initial_point(&tight, &ch, &e, &q) else { continue };
        let Ok(run) = sabf_run(&tight, &ch, &e, &q, w0) else { continue };
        n_ok += 1;
        for pair in run.state.trace.windows(2) {
            worst_rise = worst_rise.max(pair[1] - pair[0]);
        }
        worst_kkt = worst_kkt.max(kkt_residual(&tight, &ch, &e, &q, &run.state));
    }
    out.push(check(
        "SABF descent and KKT",
        n_ok > 0 && worst_rise <= 1e-9 && worst_kkt <= 1e-4,
        format!("{n_ok} instances, max rise {worst_rise:.2e}, max KKT residual {worst_kkt:.2e}"),
    ));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Converge,
    Validate,
}

#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub solver: Option<Solver>,
    pub frames: Option<usize>,
}

fn emit(out: &Option<PathBuf>, file: &str, body: &str, console: &mut dyn std::io::Write) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), body)?;
        }
        None => console.write_all(body.as_bytes())?,
    }
    Ok(())
}

/// Runs one subcommand. CSVs go to `<out>/<command>.csv`, or to `console`
/// when no directory is given. Returns whether everything passed (only
/// `validate` can report failure without an error).
pub fn dispatch(inv: &Invocation, console: &mut dyn std::io::Write) -> Result<bool> {
    let mut parsed = match &inv.config {
        Some(p) => parse_config(p)?,
        None => parse_config_str("")?,
    };
    let st = &mut parsed.settings;
    if let Some(s) = inv.seed {
        st.seed = s;
    }
    if let Some(s) = inv.solver {
        st.solver = s;
    }
    if let Some(f) = inv.frames {
        if f == 0 {
            return Err(Error::Config("--frames must be at least 1".into()));
        }
        st.frames = f;
    }
    let (cfg, sched, st) = (&parsed.system, &parsed.schedule, &parsed.settings);
    match inv.command {
        Command::Run => {
            let recs = run_trajectory(cfg, sched, st.solver, st.seed, st.frames)?;
            emit(&inv.out, "run.csv", &run_csv(cfg.n_links(), &recs), console)?;
        }
        Command::Sweep => {
            let recs = match st.sweep {
                SweepKind::V => v_sweep(cfg, sched, &st.v_grid, &Solver::ALL, st.seed, st.frames)?,
                SweepKind::Sinr => gamma_sweep(cfg, sched, &st.sinr_grid_db, &Solver::ALL, st.seed, st.frames)?,
            };
            emit(&inv.out, "sweep.csv", &sweep_csv(cfg.n_links(), &recs), console)?;
        }
        Command::Converge => {
            let seeds: Vec<u64> = (0..st.instances as u64).map(|k| st.seed.wrapping_add(k)).collect();
            let recs = convergence_study(cfg, &sched.at(0), &seeds, cfg.control_v, st.q0)?;
            emit(&inv.out, "converge.csv", &converge_csv(&recs), console)?;
        }
        Command::Validate => {
            let checks = validate_checks(st.seed);
            let mut all = true;
            for c in &checks {
                all &= c.passed;
                writeln!(console, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            return Ok(all);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_file_gives_defaults() {
        let p = parse_config_str("").unwrap();
        let c = &p.system;
        assert_eq!((c.n_links(), c.n_antennas), (3, 4));
        assert_eq!(c.max_tx_power, 200.0);
        assert_eq!(c.pathloss_exp, 3.0);
        for l in &c.links {
            assert_eq!(l.noise_power, 1e-3);
            assert_relative_eq!(l.sinr_target, 10f64.powf(0.2), max_relative = 1e-15);
            assert_eq!((l.arrival_mean, l.mcs_b, l.mcs_c, l.distance), (0.3, 20.0, 0.451, 10.0));
        }
        let e = p.schedule.at(0);
        assert_eq!((e.buy_price, e.sell_price), (1.2, 1.0));
        assert_eq!(p.schedule, Schedule::default_segments());
        assert_eq!(p.settings, Settings::default());
    }

    #[test]
    fn single_override() {
        let p = parse_config_str("v = 0.004  # larger V\n").unwrap();
        let mut expect = SystemConfig::<f64>::standard();
        expect.control_v = 0.004;
        assert_eq!(p.system, expect);
    }

    #[test]
    fn per_link_lists_and_schedules() {
        let text = "n_links = 2\nn_antennas = 3\nsinr_target_db = 0, 10\nharvest_schedule = 0:50, 10:80\nprice_buy = 2\nsolver = ZFBF\n";
        let p = parse_config_str(text).unwrap();
        assert_eq!(p.system.links[0].sinr_target, 1.0);
        assert_relative_eq!(p.system.links[1].sinr_target, 10.0, max_relative = 1e-15);
        assert_eq!(p.schedule.at(9).harvest, 50.0);
        assert_eq!(p.schedule.at(10).harvest, 80.0);
        assert_eq!(p.schedule.at(4000).buy_price, 2.0);
        assert_eq!(p.settings.solver, Solver::Zfbf);
    }

    #[test]
    fn errors_name_the_line_or_key() {
        assert!(matches!(parse_config_str("frobnicate = 3"), Err(Error::UnknownKey(k)) if k == "frobnicate"));
        assert!(matches!(parse_config_str("# c\nv = 0.1\nthis is not a pair"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_config_str("\nframes = many"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("n_links = 2\nmcs_b = 1,2,3"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("v = 1\nv = 2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("solver = mmse"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config_str("harvest_schedule = 5:10"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config_str("pmax_mw = -1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(201.25), "201.250000");
        assert_eq!(fmt_num(0.5), "0.500000000");
        assert_eq!(fmt_num(-1.0 / 3.0), "-0.333333333");
        assert_eq!(fmt_num(123456789.4), "123456789");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.5e-7), "1.50000000e-7");
    }

    fn inv(command: Command, out: Option<PathBuf>) -> Invocation {
        Invocation { command, config: None, out, seed: Some(3), solver: Some(Solver::Zfbf), frames: Some(1) }
    }

    #[test]
    fn run_with_one_frame_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        dispatch(&inv(Command::Run, Some(dir.path().to_path_buf())), &mut std::io::sink()).unwrap();
        let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "frame,G,Ptot,status,iters,sinr_1,u_1,q_1,sinr_2,u_2,q_2,sinr_3,u_3,q_3");
        assert_eq!(lines[1].split(',').count(), 14);
    }

    #[test]
    fn output_is_byte_identical_across_runs() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut i = inv(Command::Run, None);
        i.frames = Some(5);
        dispatch(&i, &mut a).unwrap();
        dispatch(&i, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_has_a_row_per_point_and_solver() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        fs::write(&cfg, "frames = 2\n").unwrap();
        let mut i = inv(Command::Sweep, None);
        i.config = Some(cfg);
        i.frames = None;
        let mut buf = Vec::new();
        dispatch(&i, &mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert_eq!(csv.lines().count(), 1 + 14);
        assert!(csv.starts_with("V,solver,avg_grid_cost,avg_backlog_1,delay_1"));
    }
}
