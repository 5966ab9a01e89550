//! Command-line driver: JSON run configurations, simulation output,
//! convergence studies, k₀ tables, condition checks and curve distances.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anisotropy::{check_stability_condition, Anisotropy, GammaTable};
use crate::diagnostics::{convergence_order, curve_distance, write_diagnostics_csv, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::geometry::{circle, ellipse, read_curve_csv, write_curve_csv, ClosedCurve, UnitVec2};
use crate::solver::{step_count, FlowKind, FlowProblem, NewtonSettings, CONDITION_GRID};
use crate::stabilization::{
    build_stabilizer_table, k0_at, StabilizerTable, DEFAULT_NHAT_GRID, DEFAULT_TABLE_POINTS, SIMULATION_TABLE_POINTS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONDITION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

pub const DEFAULT_SNAPSHOT_EVERY: usize = 100;

/// Environment variable capping the worker threads of `converge`.
pub const THREADS_ENV: &str = "ANIFLOW_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnisotropySpec {
    Isotropic,
    Case1,
    Kfold {
        beta: f64,
        k: u32,
        #[serde(default)]
        phase: f64,
    },
    /// `theta,gamma` CSV on a uniform grid.
    Table {
        file: PathBuf,
    },
}

impl AnisotropySpec {
    pub fn build(&self) -> Result<Anisotropy> {
        match self {
            AnisotropySpec::Isotropic => Ok(Anisotropy::Isotropic),
            AnisotropySpec::Case1 => Ok(Anisotropy::CaseI),
            AnisotropySpec::Kfold { beta, k, phase } => Anisotropy::kfold(*beta, *k, *phase),
            AnisotropySpec::Table { file } => Ok(Anisotropy::Table(GammaTable::from_csv(file)?)),
        }
    }

    /// Parses the command-line form: `isotropic`, `case1`,
    /// `kfold:beta=0.3,k=3[,phase=0]` or `table:gamma.csv`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "isotropic" if rest.is_empty() => Ok(AnisotropySpec::Isotropic),
            "case1" if rest.is_empty() => Ok(AnisotropySpec::Case1),
            "table" if !rest.is_empty() => Ok(AnisotropySpec::Table { file: rest.into() }),
            "kfold" => {
                let (mut beta, mut k, mut phase) = (None, None, 0.0);
                for item in rest.split(',').filter(|t| !t.is_empty()) {
                    let (key, value) = item
                        .split_once('=')
                        .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got {item:?}")))?;
                    let bad = || Error::InvalidInput(format!("bad value for {key}: {value:?}"));
                    match key.trim() {
                        "beta" => beta = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                        "k" => k = Some(value.trim().parse::<u32>().map_err(|_| bad())?),
                        "phase" => phase = value.trim().parse::<f64>().map_err(|_| bad())?,
                        other => return Err(Error::InvalidInput(format!("unknown kfold parameter {other:?}"))),
                    }
                }
                Ok(AnisotropySpec::Kfold {
                    beta: beta.ok_or_else(|| Error::InvalidInput("kfold needs beta".into()))?,
                    k: k.unwrap_or(3),
                    phase,
                })
            }
            _ => Err(Error::InvalidInput(format!(
                "unknown anisotropy {s:?}; expected isotropic, case1, kfold:beta=..,k=.. or table:<file>"
            ))),
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let AnisotropySpec::Table { file } = self {
            *file = base.join(&*file);
        }
    }
}

fn default_points() -> usize {
    SIMULATION_TABLE_POINTS
}

fn default_grid() -> usize {
    DEFAULT_NHAT_GRID
}

fn default_safety() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StabilizerSpec {
    /// Tabulated `safety × k₀`.
    Auto {
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_safety")]
        safety: f64,
    },
    /// `theta,k0` CSV as written by `k0-table`.
    File {
        file: PathBuf,
    },
    Constant {
        value: f64,
    },
}

impl Default for StabilizerSpec {
    fn default() -> Self {
        StabilizerSpec::Auto {
            points: SIMULATION_TABLE_POINTS,
            grid: DEFAULT_NHAT_GRID,
            safety: 1.0,
        }
    }
}

impl StabilizerSpec {
    /// With `force`, an auto table skips the global condition check and
    /// fails only where k₀ itself is undefined.
    pub fn build(&self, a: &Anisotropy, force: bool) -> Result<StabilizerTable> {
        match self {
            StabilizerSpec::Auto { points, grid, safety } if force => {
                if *points == 0 || !(*safety >= 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "invalid auto stabilizer (points {points}, safety {safety})"
                    )));
                }
                let values = (0..*points)
                    .map(|i| {
                        let n = UnitVec2::from_theta(2.0 * PI * i as f64 / *points as f64);
                        k0_at(a, n, *grid).map(|k| safety * k)
                    })
                    .collect::<Result<Vec<_>>>()?;
                StabilizerTable::new(values)
            }
            StabilizerSpec::Auto { points, grid, safety } => build_stabilizer_table(a, *points, *grid, *safety),
            StabilizerSpec::File { file } => StabilizerTable::from_csv(file),
            StabilizerSpec::Constant { value } => StabilizerTable::constant(*value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialShape {
    /// Semi-axes `a` (along x) and `b`.
    Ellipse {
        a: f64,
        b: f64,
    },
    Circle {
        r: f64,
    },
    /// `x,y` CSV; its node count overrides `N`.
    File {
        path: PathBuf,
    },
}

impl InitialShape {
    pub fn build(&self, nodes: usize) -> Result<ClosedCurve> {
        match self {
            InitialShape::Ellipse { a, b } => ellipse(*a, *b, nodes),
            InitialShape::Circle { r } => circle(*r, nodes),
            InitialShape::File { path } => read_curve_csv(path),
        }
    }
}

fn default_implicit() -> bool {
    true
}

fn default_snapshot_every() -> usize {
    DEFAULT_SNAPSHOT_EVERY
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub flow: FlowKind,
    pub anisotropy: AnisotropySpec,
    #[serde(rename = "N", alias = "n")]
    pub nodes: usize,
    pub tau: f64,
    pub t_end: f64,
    #[serde(default)]
    pub stabilizer: StabilizerSpec,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default = "default_implicit")]
    pub implicit: bool,
    pub initial_shape: InitialShape,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl SimConfig {
    /// Reads and validates a JSON config; relative paths inside it are
    /// taken relative to the config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: SimConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.anisotropy.resolve(base);
        if let StabilizerSpec::File { file } = &mut cfg.stabilizer {
            *file = base.join(&*file);
        }
        if let InitialShape::File { path } = &mut cfg.initial_shape {
            *path = base.join(&*path);
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 {
            return Err(Error::InvalidInput(format!("N must be at least 8, got {}", self.nodes)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t_end >= self.tau && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_end must be at least tau, got t_end={} tau={}",
                self.t_end, self.tau
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidInput("snapshot_every must be positive".into()));
        }
        self.newton.validate()
    }

    /// Builds the initial curve and the flow problem; `force` skips the
    /// energy-stability refusal.
    pub fn prepare(&self, force: bool) -> Result<(ClosedCurve, FlowProblem)> {
        let a = self.anisotropy.build()?;
        let report = check_stability_condition(&a, CONDITION_GRID);
        if !report.holds && !force {
            return Err(Error::ConditionViolated {
                angle: report.worst_angle,
                margin: report.worst_margin,
            });
        }
        let ktable = self.stabilizer.build(&a, force)?;
        let initial = self.initial_shape.build(self.nodes)?;
        Ok((
            initial,
            FlowProblem {
                flow: self.flow,
                anisotropy: a,
                ktable,
                tau: self.tau,
                newton: self.newton,
                implicit: self.implicit,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub flow: FlowKind,
    pub anisotropy: String,
    pub nodes: usize,
    pub tau: f64,
    pub steps: usize,
    pub t_final: f64,
    pub final_area: f64,
    pub final_energy: f64,
    pub max_abs_rel_area_loss: f64,
    pub monotone_energy: bool,
    pub final_mesh_ratio: f64,
    pub max_newton_iterations: usize,
}

/// Relative slack of the energy monotonicity flag in `summary.json`.
pub const MONOTONE_REL_TOL: f64 = 1e-12;

pub fn snapshot_file_name(step: usize) -> String {
    format!("curve_{step:06}.csv")
}

/// Failure of a run, tagged with the step that failed.
#[derive(Debug)]
pub struct RunFailure {
    pub step: usize,
    pub error: Error,
}

/// Runs `problem` from `initial` to `t_end`, streaming snapshots into
/// `out` and writing `diagnostics.csv` (also on failure) and
/// `summary.json`.
pub fn simulate_into(
    problem: &FlowProblem,
    initial: &ClosedCurve,
    t_end: f64,
    snapshot_every: usize,
    out: &Path,
) -> std::result::Result<Summary, RunFailure> {
    let at = |step: usize| move |error: Error| RunFailure { step, error };
    fs::create_dir_all(out).map_err(|e| at(0)(e.into()))?;
    write_curve_csv(initial, out.join(snapshot_file_name(0))).map_err(at(0))?;
    let steps = step_count(problem.tau, t_end);
    let a = &problem.anisotropy;
    let first = DiagnosticsRecord::evaluate(0.0, initial, a, None, 0).map_err(at(0))?;
    let reference = Some((first.area, first.energy));
    let mut records = vec![first];
    let mut done = 0;
    let outcome = problem.run_observed(initial, t_end, usize::MAX, |ev| {
        records.push(DiagnosticsRecord::evaluate(
            ev.t,
            &ev.result.new_curve,
            a,
            reference,
            ev.result.newton_iterations,
        )?);
        if ev.step % snapshot_every == 0 || ev.step == steps {
            write_curve_csv(&ev.result.new_curve, out.join(snapshot_file_name(ev.step)))?;
        }
        done = ev.step;
        Ok(())
    });
    write_diagnostics_csv(&records, out.join("diagnostics.csv")).map_err(at(done))?;
    let run = outcome.map_err(at(done + 1))?;
    let last = records.last().copied().unwrap_or(first);
    let summary = Summary {
        flow: problem.flow,
        anisotropy: a.label(),
        nodes: initial.len(),
        tau: problem.tau,
        steps,
        t_final: last.t,
        final_area: last.area,
        final_energy: last.energy,
        max_abs_rel_area_loss: run.max_abs_rel_area_loss(),
        monotone_energy: run.energy_monotone(MONOTONE_REL_TOL),
        final_mesh_ratio: last.mesh_ratio,
        max_newton_iterations: records.iter().map(|r| r.newton_iterations).max().unwrap_or(0),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| at(steps)(e.into()))?;
    fs::write(out.join("summary.json"), json + "\n").map_err(|e| at(steps)(e.into()))?;
    Ok(summary)
}

/// `N = 1/h`, rejecting mesh sizes that are not reciprocals of integers.
pub fn nodes_for_h(h: f64) -> Result<usize> {
    let n = (1.0 / h).round();
    if !(h > 0.0) || n < 3.0 || ((1.0 / h) - n).abs() > 1e-9 * n {
        return Err(Error::InvalidInput(format!(
            "mesh size h={h} is not 1/N for an integer N >= 3"
        )));
    }
    Ok(n as usize)
}

/// Row of `convergence.csv`; `order` is absent for the coarsest mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    pub order: Option<f64>,
}

pub fn write_convergence_csv(rows: &[ConvergenceRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["h", "error", "order"])?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.h),
            format!("{:.16e}", r.error),
            r.order.map(|o| format!("{o:.16e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Thread pool honoring [`THREADS_ENV`].
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))
}

fn final_curve(problem: &FlowProblem, initial: &ClosedCurve, t_end: f64) -> Result<ClosedCurve> {
    Ok(problem.run(initial, t_end, usize::MAX)?.final_curve)
}

/// Runs `cfg` with `N = 1/h`, `τ = h²` for each `h` and measures the
/// manifold distance to `reference` at `time`. Per-run output goes to
/// `out/h_<N>/`.
pub fn converge(
    cfg: &SimConfig,
    h_list: &[f64],
    reference: &ClosedCurve,
    time: f64,
    force: bool,
    out: &Path,
) -> Result<Vec<ConvergenceRow>> {
    if matches!(cfg.initial_shape, InitialShape::File { .. }) {
        return Err(Error::InvalidInput(
            "convergence studies need a generated initial shape".into(),
        ));
    }
    if h_list.is_empty() {
        return Err(Error::InvalidInput("empty h list".into()));
    }
    for w in h_list.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "h list must halve, got {} -> {}",
                w[0], w[1]
            )));
        }
    }
    let runs = h_list
        .iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.nodes = nodes_for_h(h)?;
            c.tau = h * h;
            c.t_end = time;
            c.validate()?;
            Ok((h, c))
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    let errors = thread_pool()?.install(|| {
        runs.par_iter()
            .map(|(h, c)| {
                let (initial, problem) = c.prepare(force)?;
                let curve = final_curve(&problem, &initial, time)?;
                let dir = out.join(format!("h_{}", c.nodes));
                fs::create_dir_all(&dir)?;
                write_curve_csv(&curve, dir.join("final.csv"))?;
                Ok((*h, curve_distance(&curve, reference)?))
            })
            .collect::<Result<Vec<(f64, f64)>>>()
    })?;
    let orders = if errors.len() >= 2 && errors.iter().all(|(_, e)| *e > 0.0) {
        convergence_order(&errors)?
    } else {
        vec![]
    };
    let rows: Vec<ConvergenceRow> = errors
        .iter()
        .enumerate()
        .map(|(i, &(h, error))| ConvergenceRow {
            h,
            error,
            order: i.checked_sub(1).and_then(|j| orders.get(j).copied()),
        })
        .collect();
    write_convergence_csv(&rows, out.join("convergence.csv"))?;
    Ok(rows)
}

fn plot_script() -> &'static str {
    r#"# Plots snapshots and diagnostics written by `aniflow simulate`.
# Usage: python3 plot.py  (run inside the output directory)
import csv
import glob

import matplotlib.pyplot as plt


def read(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


fig, ax = plt.subplots()
for path in sorted(glob.glob("curve_*.csv")):
    c = read(path)
    ax.plot(c["x"] + c["x"][:1], c["y"] + c["y"][:1], lw=0.8)
ax.set_aspect("equal")
fig.savefig("curves.png", dpi=150)

d = read("diagnostics.csv")
fig, axes = plt.subplots(1, 4, figsize=(16, 3.5))
for ax, key in zip(axes, ["norm_energy", "rel_area_loss", "newton_iters", "mesh_ratio"]):
    ax.plot(d["t"], d[key])
    ax.set_xlabel("t")
    ax.set_title(key)
fig.tight_layout()
fig.savefig("diagnostics.png", dpi=150)
"#
}

#[derive(Debug, Parser)]
#[command(
    name = "aniflow",
    version,
    about = "Anisotropic geometric flows of closed planar curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run even if the energy-stability condition fails.
        #[arg(long)]
        force: bool,
        /// Freeze the normal at the old curve (one linear solve per step).
        #[arg(long)]
        semi_implicit: bool,
        /// Also write a plotting script next to the CSVs.
        #[arg(long)]
        plots: bool,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Spatial convergence study with τ = h².
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, halving mesh sizes h = 1/N.
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<f64>,
        /// Reference: a JSON config (run to --time) or an `x,y` curve CSV.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        force: bool,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Tabulate the minimal stabilizing function as `theta,k0`.
    K0Table {
        #[arg(long)]
        anisotropy: String,
        #[arg(long, default_value_t = DEFAULT_TABLE_POINTS)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_NHAT_GRID)]
        grid: usize,
        #[arg(long, default_value_t = 1.0)]
        safety: f64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check 3γ(n) > γ(-n) on a uniform grid.
    CheckGamma {
        #[arg(long)]
        anisotropy: String,
        #[arg(long, default_value_t = CONDITION_GRID)]
        grid: usize,
    },
    /// Manifold distance between two `x,y` curve CSVs.
    Distance { first: PathBuf, second: PathBuf },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConditionViolated { .. } => EXIT_CONDITION,
        Error::NewtonDiverged { .. }
        | Error::LinearSolveFailed(_)
        | Error::DegenerateEdge { .. }
        | Error::NonFinite(_)
        | Error::RankDeficient(_)
        | Error::NonSimpleInput(..)
        | Error::ZeroArea => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn fail(context: &str, e: &Error, code: i32) -> i32 {
    eprintln!("error: {context}: {e}");
    code
}

fn cmd_simulate(config: &Path, force: bool, semi_implicit: bool, plots: bool, output_dir: Option<PathBuf>) -> i32 {
    let mut cfg = match SimConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail("config", &e, EXIT_CONFIG),
    };
    if semi_implicit {
        cfg.implicit = false;
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let (initial, problem) = match cfg.prepare(force) {
        Ok(p) => p,
        Err(e @ Error::ConditionViolated { .. }) => {
            return fail("anisotropy (pass --force to run anyway)", &e, EXIT_CONDITION)
        }
        Err(e) => {
            let code = exit_code(&e);
            return fail("setup", &e, if code == EXIT_SOLVER { EXIT_CONFIG } else { code });
        }
    };
    match simulate_into(&problem, &initial, cfg.t_end, cfg.snapshot_every, &cfg.output_dir) {
        Ok(s) => {
            if plots {
                if let Err(e) = fs::write(cfg.output_dir.join("plot.py"), plot_script()) {
                    return fail("plots", &e.into(), EXIT_CONFIG);
                }
            }
            println!(
                "{} steps to t={}: max |rel area loss| {:.3e}, energy monotone {}, output in {}",
                s.steps,
                s.t_final,
                s.max_abs_rel_area_loss,
                s.monotone_energy,
                cfg.output_dir.display()
            );
            EXIT_OK
        }
        Err(RunFailure { step, error }) => {
            let code = exit_code(&error);
            if code == EXIT_SOLVER {
                eprintln!(
                    "error: solver failed at step {step} (t = {}): {error}; try a smaller tau such as {}",
                    step as f64 * cfg.tau,
                    cfg.tau / 2.0
                );
                code
            } else {
                fail(&format!("step {step}"), &error, code)
            }
        }
    }
}

fn load_reference(path: &Path, time: f64, force: bool) -> Result<ClosedCurve> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return read_curve_csv(path);
    }
    let mut cfg = SimConfig::load(path)?;
    cfg.t_end = time;
    cfg.validate()?;
    let (initial, problem) = cfg.prepare(force)?;
    final_curve(&problem, &initial, time)
}

fn cmd_converge(
    config: &Path,
    h: &[f64],
    reference: &Path,
    time: f64,
    force: bool,
    output_dir: Option<PathBuf>,
) -> i32 {
    let cfg = match SimConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail("config", &e, EXIT_CONFIG),
    };
    if !(time > 0.0 && time.is_finite()) {
        return fail(
            "time",
            &Error::InvalidInput(format!("--time must be positive, got {time}")),
            EXIT_CONFIG,
        );
    }
    let out = output_dir.unwrap_or_else(|| cfg.output_dir.clone());
    let reference = match load_reference(reference, time, force) {
        Ok(c) => c,
        Err(e) => return fail("reference", &e, exit_code(&e)),
    };
    match converge(&cfg, h, &reference, time, force, &out) {
        Ok(rows) => {
            println!("h,error,order");
            for r in rows {
                let order = r.order.map(|o| format!("{o:.4}")).unwrap_or_default();
                println!("{},{:.6e},{order}", r.h, r.error);
            }
            EXIT_OK
        }
        Err(e) => fail("convergence study", &e, exit_code(&e)),
    }
}

fn cmd_k0_table(anisotropy: &str, points: usize, grid: usize, safety: f64, out: Option<PathBuf>) -> i32 {
    let a = match AnisotropySpec::parse(anisotropy).and_then(|s| s.build()) {
        Ok(a) => a,
        Err(e) => return fail("anisotropy", &e, EXIT_CONFIG),
    };
    let table = match build_stabilizer_table(&a, points, grid, safety) {
        Ok(t) => t,
        Err(e) => return fail("k0 table", &e, exit_code(&e)),
    };
    let written = match out {
        Some(path) => table.write_csv(path),
        None => table.write_csv_to(std::io::stdout().lock()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => fail("output", &e, EXIT_CONFIG),
    }
}

fn cmd_check_gamma(anisotropy: &str, grid: usize) -> i32 {
    let a = match AnisotropySpec::parse(anisotropy).and_then(|s| s.build()) {
        Ok(a) => a,
        Err(e) => return fail("anisotropy", &e, EXIT_CONFIG),
    };
    if grid == 0 {
        return fail(
            "grid",
            &Error::InvalidInput("grid must be positive".into()),
            EXIT_CONFIG,
        );
    }
    let r = check_stability_condition(&a, grid);
    println!("anisotropy: {}", a.label());
    println!("condition 3γ(n) > γ(-n): {}", if r.holds { "holds" } else { "fails" });
    println!("min margin: {:.16e}", r.worst_margin);
    println!("at theta: {:.16e}", r.worst_angle);
    if r.holds {
        EXIT_OK
    } else {
        EXIT_CONDITION
    }
}

fn cmd_distance(first: &Path, second: &Path) -> i32 {
    let result = read_curve_csv(first)
        .and_then(|a| Ok((a, read_curve_csv(second)?)))
        .and_then(|(a, b)| curve_distance(&a, &b));
    match result {
        Ok(d) => {
            println!("{d:.16e}");
            EXIT_OK
        }
        Err(e) => fail("distance", &e, EXIT_CONFIG),
    }
}

/// Parses `args` (including the program name) and runs the subcommand;
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Simulate {
            config,
            force,
            semi_implicit,
            plots,
            output_dir,
        } => cmd_simulate(&config, force, semi_implicit, plots, output_dir),
        Command::Converge {
            config,
            h,
            reference,
            time,
            force,
            output_dir,
        } => cmd_converge(&config, &h, &reference, time, force, output_dir),
        Command::K0Table {
            anisotropy,
            points,
            grid,
            safety,
            out,
        } => cmd_k0_table(&anisotropy, points, grid, safety, out),
        Command::CheckGamma { anisotropy, grid } => cmd_check_gamma(&anisotropy, grid),
        Command::Distance { first, second } => cmd_distance(&first, &second),
    }
}
