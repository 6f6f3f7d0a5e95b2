//! Batch experiments and their manifests.
//!
//! An [`Experiment`] bundles the inputs of one multi-point computation: a
//! mode-locking diagram over a parameter slice, a zoom of that diagram
//! centred on a shrinking point, a sawtooth tongue diagram driven by a
//! sector's slope rule, the recurrent slab of a return map together with an
//! iterated point cloud, or an error ladder comparing the return map with
//! its one-dimensional model across family sizes.
//!
//! [`run`] executes an experiment into an output directory, writing CSV and
//! PPM/PGM artifacts plus a `manifest.json` recording the inputs, seed,
//! tolerances, per-item failures, a summary, and the wall time. Failures of
//! individual cells or ladder rungs are recorded and the run continues.
//! Rerunning with the same configuration and seed reproduces every CSV and
//! image byte for byte; the manifest differs only in its wall time.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::grid::{write_pgm, GridAxis, ScanGrid};
use crate::manifold::{
    centre_frame, invariant_set, recurrent_set, theorem_verify, InvariantOptions, ManifoldError,
    TheoremSample,
};
use crate::plmap::{mode_lock_scan, OrbitOptions, ParamSlice, ScanConfig, ScanMode};
use crate::sawtooth::{tongue_scan, RotationOptions};
use crate::sectors::{SectorError, SectorSpec};
use crate::shrink::{locate, ShrinkError};
use crate::symbolic::{FamilySign, RotationalParams, SymbolicError};
use crate::tol;

/// Errors from experiment configuration or execution.
#[derive(Debug, Error)]
pub enum ScanError {
    #[error("unknown parameter slice {0:?}")]
    UnknownSlice(String),
    #[error("bad experiment config: {0}")]
    Config(String),
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Shrink(#[from] ShrinkError),
    #[error(transparent)]
    Sector(#[from] SectorError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// One grid axis of an experiment config.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn to_axis(&self, name: &str) -> GridAxis {
        GridAxis::new(name, self.min, self.max, self.count)
    }
}

/// Orbit-detection controls exposed to config files; remaining fields keep
/// their library defaults.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSpec {
    pub transient: usize,
    pub iterates: usize,
    pub period_cap: usize,
}

impl Default for OrbitSpec {
    fn default() -> OrbitSpec {
        let o = OrbitOptions::default();
        OrbitSpec {
            transient: o.n_transient,
            iterates: o.n_max,
            period_cap: o.p_max,
        }
    }
}

impl OrbitSpec {
    pub fn to_options(&self) -> OrbitOptions {
        OrbitOptions {
            n_transient: self.transient,
            n_max: self.iterates,
            p_max: self.period_cap,
            ..OrbitOptions::default()
        }
    }
}

/// Rotation-number estimation controls exposed to config files.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationSpec {
    pub transient: usize,
    pub iterates: usize,
}

impl Default for RotationSpec {
    fn default() -> RotationSpec {
        let r = RotationOptions::default();
        RotationSpec {
            transient: r.transient,
            iterates: r.n_iter,
        }
    }
}

impl RotationSpec {
    pub fn to_options(&self) -> RotationOptions {
        RotationOptions {
            transient: self.transient,
            n_iter: self.iterates,
            ..RotationOptions::default()
        }
    }
}

/// Point-cloud iteration controls exposed to config files; the seed comes
/// from the run, not the experiment.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudSpec {
    pub n_points: usize,
    pub n_iterations: usize,
    pub n_bins: usize,
    pub cluster_gap: f64,
    pub q_scale: f64,
}

impl Default for CloudSpec {
    fn default() -> CloudSpec {
        let o = InvariantOptions::default();
        CloudSpec {
            n_points: o.n_points,
            n_iterations: o.n_iterations,
            n_bins: o.n_bins,
            cluster_gap: o.cluster_gap,
            q_scale: o.q_scale,
        }
    }
}

impl CloudSpec {
    pub fn to_options(&self, seed: u64) -> InvariantOptions {
        InvariantOptions {
            n_points: self.n_points,
            n_iterations: self.n_iterations,
            n_bins: self.n_bins,
            seed,
            cluster_gap: self.cluster_gap,
            q_scale: self.q_scale,
        }
    }
}

fn default_mode() -> String {
    "cycle-solve".to_string()
}

fn default_period_cap() -> i64 {
    50
}

fn default_zoom_count() -> [usize; 2] {
    [128, 64]
}

fn default_zoom_cap() -> i64 {
    100
}

fn default_w_axis() -> AxisSpec {
    AxisSpec {
        min: 0.0,
        max: 1.0,
        count: 128,
    }
}

fn default_theta_count() -> usize {
    64
}

fn default_sign() -> String {
    "plus".to_string()
}

fn default_n_containment() -> usize {
    1000
}

fn default_n_z() -> usize {
    400
}

fn default_c0() -> f64 {
    0.5
}

/// One batch experiment, deserializable from a `kind = "..."` config table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    /// Mode-locking diagram over a two-parameter slice.
    Diagram {
        slice: String,
        x: AxisSpec,
        y: AxisSpec,
        #[serde(default = "default_mode")]
        mode: String,
        #[serde(default = "default_period_cap")]
        period_cap: i64,
        #[serde(default)]
        orbit: OrbitSpec,
    },
    /// Diagram over a window centred on a located shrinking point.
    Zoom {
        slice: String,
        base: [i64; 3],
        guess: [f64; 2],
        half_width: [f64; 2],
        #[serde(default = "default_zoom_count")]
        count: [usize; 2],
        #[serde(default = "default_mode")]
        mode: String,
        #[serde(default = "default_zoom_cap")]
        period_cap: i64,
        #[serde(default)]
        orbit: OrbitSpec,
    },
    /// Sawtooth tongue diagram with slopes supplied by a sector of a located
    /// shrinking point.
    Tongues {
        slice: String,
        base: [i64; 3],
        guess: [f64; 2],
        #[serde(default = "default_sign")]
        sign: String,
        k: i64,
        dl: i64,
        #[serde(default = "default_w_axis")]
        w: AxisSpec,
        #[serde(default = "default_theta_count")]
        theta_count: usize,
        #[serde(default)]
        rotation: RotationSpec,
    },
    /// Recurrent slab of the return map at one parameter point: containment
    /// sampling, seam continuity, and an iterated point cloud.
    Recurrent {
        slice: String,
        base: [i64; 3],
        guess: [f64; 2],
        point: [f64; 2],
        k: i64,
        dl: i64,
        #[serde(default)]
        q_cap: Option<f64>,
        #[serde(default = "default_n_containment")]
        n_containment: usize,
        #[serde(default)]
        cloud: CloudSpec,
    },
    /// Error ladder comparing the reduced return map with its sawtooth model
    /// across family sizes.
    Ladder {
        slice: String,
        base: [i64; 3],
        guess: [f64; 2],
        #[serde(default = "default_sign")]
        sign: String,
        dl: i64,
        ks: Vec<i64>,
        #[serde(default = "default_n_z")]
        n_z: usize,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        q_cap: Option<f64>,
        #[serde(default = "default_c0")]
        c0: f64,
    },
}

impl Experiment {
    /// Stable kind label used in artifact names and the manifest.
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Diagram { .. } => "diagram",
            Experiment::Zoom { .. } => "zoom",
            Experiment::Tongues { .. } => "tongues",
            Experiment::Recurrent { .. } => "recurrent",
            Experiment::Ladder { .. } => "ladder",
        }
    }
}

/// One recorded failure of a cell or ladder rung.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Failure {
    pub label: String,
    pub message: String,
}

/// Provenance record written next to the artifacts.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub kind: String,
    /// Echo of the resolved experiment config.
    pub inputs: Value,
    pub seed: u64,
    pub threads: usize,
    /// Numeric tolerances in effect for this experiment kind.
    pub tolerances: BTreeMap<&'static str, f64>,
    /// Artifact file names, in the order written.
    pub artifacts: Vec<String>,
    /// Per-item failures; the run continues past them.
    pub failures: Vec<Failure>,
    /// Kind-specific result digest.
    pub summary: Value,
    /// Wall-clock duration; the only field that varies between reruns.
    pub wall_seconds: f64,
}

/// Paths and manifest of a completed run.
#[derive(Debug)]
pub struct RunOutput {
    pub manifest_path: PathBuf,
    pub artifact_paths: Vec<PathBuf>,
    pub manifest: Manifest,
}

fn parse_mode(mode: &str) -> Result<ScanMode, ScanError> {
    match mode {
        "cycle-solve" => Ok(ScanMode::CycleSolve),
        "orbit" => Ok(ScanMode::Orbit),
        other => Err(ScanError::Config(format!(
            "unknown scan mode {other:?}; expected \"cycle-solve\" or \"orbit\""
        ))),
    }
}

fn parse_sign(sign: &str) -> Result<FamilySign, ScanError> {
    match sign {
        "plus" | "+" => Ok(FamilySign::Plus),
        "minus" | "-" => Ok(FamilySign::Minus),
        other => Err(ScanError::Config(format!(
            "unknown family sign {other:?}; expected \"plus\" or \"minus\""
        ))),
    }
}

fn parse_base(base: &[i64; 3]) -> Result<RotationalParams, ScanError> {
    Ok(RotationalParams::new(base[0], base[1], base[2])?)
}

fn slice_by_name(name: &str) -> Result<ParamSlice, ScanError> {
    ParamSlice::by_name(name).ok_or_else(|| ScanError::UnknownSlice(name.to_string()))
}

/// Pulls an angle out of the `±pad` neighbourhood of the nearest multiple of
/// `π/2`, where the tangent-based slope formulas degenerate. `upward` picks
/// the side the angle is moved to.
pub fn away_from_pole(theta: f64, pad: f64, upward: bool) -> f64 {
    let step = std::f64::consts::FRAC_PI_2;
    let k = (theta / step).round();
    let d = theta - k * step;
    if d.abs() >= pad {
        theta
    } else if upward {
        k * step + pad
    } else {
        k * step - pad
    }
}

/// Margin kept between θ-grid endpoints and multiples of π/2.
pub const THETA_POLE_PAD: f64 = 0.05;

fn write_artifact(
    dir: &Path,
    name: &str,
    artifacts: &mut Vec<PathBuf>,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
) -> Result<(), ScanError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(fs::File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    artifacts.push(path);
    Ok(())
}

/// A small numeric table with `# key = value` metadata lines, written and
/// re-read losslessly (floats use the shortest round-trip form).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Table {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Table, ScanError> {
        let mut table = Table::default();
        let mut seen_header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                match rest.split_once('=') {
                    Some((k, v)) => table
                        .meta
                        .push((k.trim().to_string(), v.trim().to_string())),
                    None => table.meta.push((rest.to_string(), String::new())),
                }
                continue;
            }
            if !seen_header {
                table.columns = line.split(',').map(|c| c.trim().to_string()).collect();
                seen_header = true;
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse()).collect();
            let row = row.map_err(|e| ScanError::Csv {
                line: i + 1,
                message: format!("{e}"),
            })?;
            if row.len() != table.columns.len() {
                return Err(ScanError::Csv {
                    line: i + 1,
                    message: format!(
                        "expected {} cells, found {}",
                        table.columns.len(),
                        row.len()
                    ),
                });
            }
            table.rows.push(row);
        }
        if !seen_header {
            return Err(ScanError::Csv {
                line: 0,
                message: "missing header row".to_string(),
            });
        }
        Ok(table)
    }
}

/// Executes an experiment, writing its artifacts and manifest into
/// `out_dir` (created if missing). The seed drives every sampled stage;
/// grid scans are deterministic and ignore it.
pub fn run(exp: &Experiment, out_dir: &Path, seed: u64) -> Result<RunOutput, ScanError> {
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut tolerances = BTreeMap::new();
    let summary = match exp {
        Experiment::Diagram {
            slice,
            x,
            y,
            mode,
            period_cap,
            orbit,
        } => run_diagram(
            slice,
            *x,
            *y,
            mode,
            *period_cap,
            orbit,
            out_dir,
            &mut artifacts,
            &mut tolerances,
        )?,
        Experiment::Zoom {
            slice,
            base,
            guess,
            half_width,
            count,
            mode,
            period_cap,
            orbit,
        } => run_zoom(
            slice,
            base,
            *guess,
            *half_width,
            *count,
            mode,
            *period_cap,
            orbit,
            out_dir,
            &mut artifacts,
            &mut tolerances,
        )?,
        Experiment::Tongues {
            slice,
            base,
            guess,
            sign,
            k,
            dl,
            w,
            theta_count,
            rotation,
        } => run_tongues(
            slice,
            base,
            *guess,
            sign,
            *k,
            *dl,
            *w,
            *theta_count,
            rotation,
            out_dir,
            &mut artifacts,
            &mut tolerances,
        )?,
        Experiment::Recurrent {
            slice,
            base,
            guess,
            point,
            k,
            dl,
            q_cap,
            n_containment,
            cloud,
        } => run_recurrent(
            slice,
            base,
            *guess,
            *point,
            *k,
            *dl,
            *q_cap,
            *n_containment,
            cloud,
            seed,
            out_dir,
            &mut artifacts,
            &mut failures,
            &mut tolerances,
        )?,
        Experiment::Ladder {
            slice,
            base,
            guess,
            sign,
            dl,
            ks,
            n_z,
            delta,
            q_cap,
            c0,
        } => run_ladder(
            slice,
            base,
            *guess,
            sign,
            *dl,
            ks,
            *n_z,
            *delta,
            *q_cap,
            *c0,
            out_dir,
            &mut artifacts,
            &mut failures,
            &mut tolerances,
        )?,
    };
    let manifest = Manifest {
        kind: exp.kind().to_string(),
        inputs: serde_json::to_value(exp)?,
        seed,
        threads: rayon::current_num_threads(),
        tolerances,
        artifacts: artifacts
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
        failures,
        summary,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(RunOutput {
        manifest_path,
        artifact_paths: artifacts,
        manifest,
    })
}

/// Rotation-number labels ranked by the fraction of cells they lock.
fn top_regions(grid: &ScanGrid, limit: usize) -> Vec<Value> {
    let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for cell in grid.cells.iter().flatten() {
        *counts.entry((cell.m, cell.n)).or_insert(0) += 1;
    }
    let mut ranked: Vec<((u32, u32), usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(limit)
        .map(|((m, n), hits)| {
            json!({
                "m": m,
                "n": n,
                "fraction": hits as f64 / grid.cells.len() as f64,
            })
        })
        .collect()
}

fn locked_fraction(grid: &ScanGrid) -> f64 {
    grid.cells.iter().flatten().count() as f64 / grid.cells.len() as f64
}

fn cycle_tolerances(tolerances: &mut BTreeMap<&'static str, f64>) {
    tolerances.insert("period_tol", tol::PERIOD_TOL);
    tolerances.insert("admissible_tol", tol::ADMISSIBLE_TOL);
    tolerances.insert("condition_refuse", tol::CONDITION_REFUSE);
    tolerances.insert("divergence_bound", tol::DIVERGENCE_BOUND);
}

#[allow(clippy::too_many_arguments)]
fn run_diagram(
    slice_name: &str,
    x: AxisSpec,
    y: AxisSpec,
    mode: &str,
    period_cap: i64,
    orbit: &OrbitSpec,
    dir: &Path,
    artifacts: &mut Vec<PathBuf>,
    tolerances: &mut BTreeMap<&'static str, f64>,
) -> Result<Value, ScanError> {
    let slice = slice_by_name(slice_name)?;
    let (xn, yn) = slice.param_names();
    let cfg = ScanConfig {
        x: x.to_axis(xn),
        y: y.to_axis(yn),
        mode: parse_mode(mode)?,
        period_cap,
        orbit: orbit.to_options(),
    };
    let grid = mode_lock_scan(&slice, &cfg);
    write_artifact(dir, "diagram.csv", artifacts, |w| grid.write_csv(w))?;
    write_artifact(dir, "diagram.ppm", artifacts, |w| grid.write_ppm(w))?;
    cycle_tolerances(tolerances);
    Ok(json!({
        "locked_fraction": locked_fraction(&grid),
        "top_regions": top_regions(&grid, 8),
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_zoom(
    slice_name: &str,
    base: &[i64; 3],
    guess: [f64; 2],
    half_width: [f64; 2],
    count: [usize; 2],
    mode: &str,
    period_cap: i64,
    orbit: &OrbitSpec,
    dir: &Path,
    artifacts: &mut Vec<PathBuf>,
    tolerances: &mut BTreeMap<&'static str, f64>,
) -> Result<Value, ScanError> {
    let slice = slice_by_name(slice_name)?;
    let base = parse_base(base)?;
    let data = locate(&slice, &base, (guess[0], guess[1]), tol::LOCATE_TOL)?;
    let (xn, yn) = slice.param_names();
    let cfg = ScanConfig {
        x: GridAxis::new(
            xn,
            data.xi.0 - half_width[0],
            data.xi.0 + half_width[0],
            count[0],
        ),
        y: GridAxis::new(
            yn,
            data.xi.1 - half_width[1],
            data.xi.1 + half_width[1],
            count[1],
        ),
        mode: parse_mode(mode)?,
        period_cap,
        orbit: orbit.to_options(),
    };
    let grid = mode_lock_scan(&slice, &cfg);
    write_artifact(dir, "zoom.csv", artifacts, |w| grid.write_csv(w))?;
    write_artifact(dir, "zoom.ppm", artifacts, |w| grid.write_ppm(w))?;
    cycle_tolerances(tolerances);
    tolerances.insert("locate_tol", tol::LOCATE_TOL);
    Ok(json!({
        "xi_star": [data.xi.0, data.xi.1],
        "rho_max": data.rho_max,
        "a": data.a,
        "b": data.b,
        "c": data.c,
        "locked_fraction": locked_fraction(&grid),
        "top_regions": top_regions(&grid, 8),
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_tongues(
    slice_name: &str,
    base: &[i64; 3],
    guess: [f64; 2],
    sign: &str,
    k: i64,
    dl: i64,
    w: AxisSpec,
    theta_count: usize,
    rotation: &RotationSpec,
    dir: &Path,
    artifacts: &mut Vec<PathBuf>,
    tolerances: &mut BTreeMap<&'static str, f64>,
) -> Result<Value, ScanError> {
    let slice = slice_by_name(slice_name)?;
    let base = parse_base(base)?;
    let sign = parse_sign(sign)?;
    let data = locate(&slice, &base, (guess[0], guess[1]), tol::LOCATE_TOL)?;
    let spec = SectorSpec::new(&data, sign, k, dl)?;
    let theta_lo = away_from_pole(spec.theta_min(), THETA_POLE_PAD, true);
    let theta_hi = away_from_pole(spec.theta_max(), THETA_POLE_PAD, false);
    let w_axis = w.to_axis("w");
    let theta_axis = GridAxis::new("theta", theta_lo, theta_hi, theta_count);
    let scan = tongue_scan(
        &spec.slope_rule(),
        &w_axis,
        &theta_axis,
        &rotation.to_options(),
    );
    let grid = scan.to_scan_grid();
    write_artifact(dir, "tongues.csv", artifacts, |w| grid.write_csv(w))?;
    write_artifact(dir, "tongues.ppm", artifacts, |w| grid.write_ppm(w))?;
    let multipliers: Vec<f64> = scan.cells.iter().map(|c| c.multiplier).collect();
    write_artifact(dir, "multiplier.pgm", artifacts, |w| {
        write_pgm(w, &scan.x, &scan.y, &multipliers, "stability multiplier")
    })?;
    tolerances.insert("snap_tol", tol::SNAP_TOL);
    tolerances.insert("orbit_closure_tol", tol::ORBIT_CLOSURE_TOL);
    tolerances.insert("locate_tol", tol::LOCATE_TOL);
    let mid = 0.5 * (theta_lo + theta_hi);
    let (a_l, a_r) = spec.slopes(mid).unwrap_or((f64::NAN, f64::NAN));
    Ok(json!({
        "xi_star": [data.xi.0, data.xi.1],
        "theta_window": [spec.theta_min(), spec.theta_max()],
        "theta_scanned": [theta_lo, theta_hi],
        "slope_ratio": spec.slope_ratio(),
        "slopes_at_mid": [a_l, a_r],
        "locked_fraction": locked_fraction(&grid),
        "stability_loss_cells": scan.stability_loss_pairs().len(),
        "top_regions": top_regions(&grid, 8),
    }))
}

/// Standard-normal draw by the polar method, so fast directions are sampled
/// isotropically before projection.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[allow(clippy::too_many_arguments)]
fn run_recurrent(
    slice_name: &str,
    base: &[i64; 3],
    guess: [f64; 2],
    point: [f64; 2],
    k: i64,
    dl: i64,
    q_cap: Option<f64>,
    n_containment: usize,
    cloud: &CloudSpec,
    seed: u64,
    dir: &Path,
    artifacts: &mut Vec<PathBuf>,
    failures: &mut Vec<Failure>,
    tolerances: &mut BTreeMap<&'static str, f64>,
) -> Result<Value, ScanError> {
    let slice = slice_by_name(slice_name)?;
    let base = parse_base(base)?;
    let data = locate(&slice, &base, (guess[0], guess[1]), tol::LOCATE_TOL)?;
    let frame = centre_frame(&slice, &data.base, (point[0], point[1]))?;
    let set = recurrent_set(&frame, &data, k, dl, q_cap)?;
    let dim = frame.dim();

    // Containment: seed uniformly over the slab, apply one return, and
    // count images that remain inside.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_seeded = 0usize;
    let mut n_mapped = 0usize;
    let mut n_inside = 0usize;
    let mut worst_face_distance = 0.0f64;
    for i in 0..n_containment {
        let h = set.domain.h_l + rng.gen::<f64>() * set.domain.width();
        let mut q = DVector::from_fn(dim, |_, _| gaussian(&mut rng));
        q -= &frame.zeta * frame.omega.dot(&q);
        let norm = q.norm();
        if norm < 1e-12 {
            continue;
        }
        q *= set.q_radius * rng.gen::<f64>().sqrt() / norm;
        let x = frame.v(h) + q;
        match set.contains(&frame, &x, 1.0) {
            Ok(m) if m.inside => {}
            _ => continue,
        }
        n_seeded += 1;
        let step = match set.return_map(&frame, &x) {
            Ok(s) => s,
            Err(e) => {
                if failures.len() < 16 {
                    failures.push(Failure {
                        label: format!("containment sample {i}"),
                        message: format!("{e}"),
                    });
                }
                continue;
            }
        };
        n_mapped += 1;
        match set.contains(&frame, &step.x, 1.0) {
            Ok(m) if m.inside => n_inside += 1,
            Ok(m) => {
                let d = (m.h - m.lower).abs().min((m.upper - m.h).abs());
                worst_face_distance = worst_face_distance.max(d);
            }
            Err(e) => {
                if failures.len() < 16 {
                    failures.push(Failure {
                        label: format!("containment image {i}"),
                        message: format!("{e}"),
                    });
                }
            }
        }
    }

    // Seam continuity: a face point and its identified partner must return
    // to the same image.
    let mut seam_gap = 0.0f64;
    for _ in 0..16 {
        let mut q = DVector::from_fn(dim, |_, _| gaussian(&mut rng));
        q -= &frame.zeta * frame.omega.dot(&q);
        let norm = q.norm();
        if norm < 1e-12 {
            continue;
        }
        q *= 0.8 * set.q_radius / norm;
        let upper = frame.v(set.psi_upper(&q)) + &q;
        let lower = frame.step(&upper);
        match (set.return_map(&frame, &upper), set.return_map(&frame, &lower)) {
            (Ok(fu), Ok(fl)) => {
                seam_gap = seam_gap.max((&fu.x - &fl.x).norm() / (1.0 + fu.x.norm()));
            }
            (u, l) => {
                for (tag, r) in [("upper", u), ("lower", l)] {
                    if let Err(e) = r {
                        if failures.len() < 16 {
                            failures.push(Failure {
                                label: format!("seam sample ({tag} face)"),
                                message: format!("{e}"),
                            });
                        }
                    }
                }
            }
        }
    }

    let report = invariant_set(&set, &frame, &cloud.to_options(seed));
    let mut cloud_csv = Table::new(&["z", "h", "q_norm"])
        .with_meta("kind", "recurrent")
        .with_meta("point", format!("{},{}", point[0], point[1]))
        .with_meta("k", k)
        .with_meta("dl", dl)
        .with_meta("h_l", set.domain.h_l)
        .with_meta("h_r", set.domain.h_r)
        .with_meta("q_radius", set.q_radius);
    for s in &report.samples {
        cloud_csv.push(vec![s.z, s.h, s.q_norm]);
    }
    write_artifact(dir, "cloud.csv", artifacts, |w| cloud_csv.write(w))?;
    let mut iter_csv = Table::new(&["iteration", "max_q"]);
    for (i, q) in report.max_q_per_iter.iter().enumerate() {
        iter_csv.push(vec![(i + 1) as f64, *q]);
    }
    write_artifact(dir, "iterates.csv", artifacts, |w| iter_csv.write(w))?;

    tolerances.insert("locate_tol", tol::LOCATE_TOL);
    tolerances.insert("unit_eig_tol", tol::UNIT_EIG_TOL);
    tolerances.insert("boundary_residual_tol", tol::BOUNDARY_RESIDUAL_TOL);
    Ok(json!({
        "xi_star": [data.xi.0, data.xi.1],
        "point": [point[0], point[1]],
        "h_l": set.domain.h_l,
        "h_r": set.domain.h_r,
        "q_cap": set.q_cap,
        "q_radius": set.q_radius,
        "containment": {
            "n_seeded": n_seeded,
            "n_mapped": n_mapped,
            "n_inside": n_inside,
            "fraction": if n_mapped > 0 { n_inside as f64 / n_mapped as f64 } else { f64::NAN },
            "worst_escape_face_distance": worst_face_distance,
        },
        "seam_gap": seam_gap,
        "cloud": {
            "in_domain_fraction": report.in_domain_fraction,
            "coverage": report.coverage,
            "cluster_count": report.cluster_count,
            "dropped": report.dropped,
        },
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_ladder(
    slice_name: &str,
    base: &[i64; 3],
    guess: [f64; 2],
    sign: &str,
    dl: i64,
    ks: &[i64],
    n_z: usize,
    delta: Option<f64>,
    q_cap: Option<f64>,
    c0: f64,
    dir: &Path,
    artifacts: &mut Vec<PathBuf>,
    failures: &mut Vec<Failure>,
    tolerances: &mut BTreeMap<&'static str, f64>,
) -> Result<Value, ScanError> {
    let slice = slice_by_name(slice_name)?;
    let base = parse_base(base)?;
    let sign = parse_sign(sign)?;
    let data = locate(&slice, &base, (guess[0], guess[1]), tol::LOCATE_TOL)?;
    let mut table = Table::new(&[
        "k",
        "delta",
        "theta",
        "sup_z_error",
        "mean_z_error",
        "sup_h_error",
        "dk_agreement",
        "len_agreement",
        "n_evaluated",
        "n_excluded",
    ])
    .with_meta("kind", "ladder")
    .with_meta("dl", dl)
    .with_meta("sign", sign)
    .with_meta("n_z", n_z);
    let mut sup_errors = Vec::new();
    let mut agreements = Vec::new();
    for &k in ks {
        let row = SectorSpec::new(&data, sign, k, dl).map_err(ScanError::from).and_then(|spec| {
            let sample = TheoremSample {
                delta,
                theta: None,
                q_cap,
                n_z,
                c0,
            };
            Ok(theorem_verify(&slice, &data, &spec, &sample)?)
        });
        match row {
            Ok(report) => {
                table.push(vec![
                    k as f64,
                    report.delta,
                    report.theta,
                    report.sup_z_error,
                    report.mean_z_error,
                    report.sup_h_error,
                    report.dk_agreement,
                    report.len_agreement,
                    report.n_evaluated as f64,
                    report.n_excluded as f64,
                ]);
                sup_errors.push(report.sup_z_error);
                agreements.push(report.dk_agreement);
            }
            Err(e) => failures.push(Failure {
                label: format!("k={k}"),
                message: format!("{e}"),
            }),
        }
    }
    write_artifact(dir, "ladder.csv", artifacts, |w| table.write(w))?;
    tolerances.insert("locate_tol", tol::LOCATE_TOL);
    tolerances.insert("boundary_residual_tol", tol::BOUNDARY_RESIDUAL_TOL);
    let monotone = sup_errors.windows(2).all(|w| w[1] < w[0]);
    Ok(json!({
        "xi_star": [data.xi.0, data.xi.1],
        "ks": ks,
        "sup_z_errors": sup_errors,
        "dk_agreements": agreements,
        "sup_error_monotone": monotone,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "modelock-scan-{tag}-{}",
            std::process::id()
        ));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn table_round_trips() {
        let mut t = Table::new(&["x", "y"])
            .with_meta("kind", "test")
            .with_meta("note", "a = b");
        t.push(vec![0.1, -2.0]);
        t.push(vec![f64::NAN, 3.5e-17]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = Table::read(buf.as_slice()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.meta, t.meta);
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[0], t.rows[0]);
        assert!(back.rows[1][0].is_nan());
        assert_eq!(back.rows[1][1], t.rows[1][1]);
    }

    #[test]
    fn table_rejects_ragged_rows() {
        let text = "a,b\n1.0,2.0\n3.0\n";
        assert!(matches!(
            Table::read(text.as_bytes()),
            Err(ScanError::Csv { line: 3, .. })
        ));
    }

    #[test]
    fn pole_margin_is_enforced() {
        let step = std::f64::consts::FRAC_PI_2;
        for mult in 0..5 {
            let pole = mult as f64 * step;
            let up = away_from_pole(pole + 0.01, 0.05, true);
            let down = away_from_pole(pole - 0.01, 0.05, false);
            assert!((up - pole - 0.05).abs() < 1e-12);
            assert!((pole - down - 0.05).abs() < 1e-12);
        }
        let clear = 1.0;
        assert_eq!(away_from_pole(clear, 0.05, true), clear);
    }

    #[test]
    fn experiment_config_round_trips() {
        let exp = Experiment::Ladder {
            slice: "bcnf3-fig1".to_string(),
            base: [3, 3, 8],
            guess: [-1.45, 0.1],
            sign: "plus".to_string(),
            dl: 0,
            ks: vec![2, 3],
            n_z: 80,
            delta: None,
            q_cap: None,
            c0: 0.5,
        };
        let text = serde_json::to_string(&exp).unwrap();
        let back: Experiment = serde_json::from_str(&text).unwrap();
        assert_eq!(back.kind(), "ladder");
        let value = serde_json::to_value(&back).unwrap();
        assert_eq!(value["kind"], "ladder");
        assert_eq!(value["ks"], json!([2, 3]));
    }

    #[test]
    fn unknown_slice_and_mode_are_rejected() {
        let exp = Experiment::Diagram {
            slice: "nope".to_string(),
            x: AxisSpec {
                min: 0.0,
                max: 1.0,
                count: 2,
            },
            y: AxisSpec {
                min: 0.0,
                max: 1.0,
                count: 2,
            },
            mode: "cycle-solve".to_string(),
            period_cap: 10,
            orbit: OrbitSpec::default(),
        };
        let dir = temp_dir("badslice");
        assert!(matches!(
            run(&exp, &dir, 7),
            Err(ScanError::UnknownSlice(_))
        ));
        assert!(parse_mode("sideways").is_err());
        assert!(parse_sign("both").is_err());
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn diagram_reruns_are_byte_identical() {
        let exp = Experiment::Diagram {
            slice: "bcnf3-fig1".to_string(),
            x: AxisSpec {
                min: -1.6,
                max: -1.3,
                count: 10,
            },
            y: AxisSpec {
                min: 0.05,
                max: 0.2,
                count: 5,
            },
            mode: "cycle-solve".to_string(),
            period_cap: 20,
            orbit: OrbitSpec::default(),
        };
        let dir_a = temp_dir("rerun-a");
        let dir_b = temp_dir("rerun-b");
        let out_a = run(&exp, &dir_a, 7).unwrap();
        let out_b = run(&exp, &dir_b, 7).unwrap();
        assert_eq!(out_a.manifest.artifacts, out_b.manifest.artifacts);
        for (a, b) in out_a.artifact_paths.iter().zip(&out_b.artifact_paths) {
            let bytes_a = fs::read(a).unwrap();
            let bytes_b = fs::read(b).unwrap();
            assert_eq!(bytes_a, bytes_b, "artifact {a:?} differs between reruns");
        }
        // The grid CSV is re-readable and carries locks.
        let grid =
            ScanGrid::read_csv(io::BufReader::new(fs::File::open(&out_a.artifact_paths[0]).unwrap()))
                .unwrap();
        assert_eq!(grid.cells.len(), 50);
        assert!(grid.cells.iter().flatten().count() > 0);
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn ladder_writes_rows_and_manifest() {
        let exp = Experiment::Ladder {
            slice: "bcnf3-fig1".to_string(),
            base: [3, 3, 8],
            guess: [-1.45, 0.1],
            sign: "plus".to_string(),
            dl: 0,
            ks: vec![2, 3],
            n_z: 60,
            delta: None,
            q_cap: None,
            c0: 0.5,
        };
        let dir = temp_dir("ladder");
        let out = run(&exp, &dir, 7).unwrap();
        assert!(out.manifest.failures.is_empty(), "{:?}", out.manifest.failures);
        let table =
            Table::read(io::BufReader::new(fs::File::open(&out.artifact_paths[0]).unwrap()))
                .unwrap();
        assert_eq!(table.rows.len(), 2);
        let k_col = table.column("k").unwrap();
        let sup_col = table.column("sup_z_error").unwrap();
        assert_eq!(table.rows[0][k_col], 2.0);
        assert_eq!(table.rows[1][k_col], 3.0);
        assert!(table.rows.iter().all(|r| r[sup_col].is_finite()));
        assert!(out.manifest_path.exists());
        let manifest_text = fs::read_to_string(&out.manifest_path).unwrap();
        let value: Value = serde_json::from_str(&manifest_text).unwrap();
        assert_eq!(value["kind"], "ladder");
        assert!(value["tolerances"]["locate_tol"].as_f64().unwrap() > 0.0);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn recurrent_experiment_reports_containment() {
        let exp = Experiment::Recurrent {
            slice: "bcnf3-fig1".to_string(),
            base: [3, 3, 8],
            guess: [-1.45, 0.1],
            point: [-1.45, 0.1],
            k: 2,
            dl: 0,
            q_cap: Some(0.07),
            n_containment: 200,
            cloud: CloudSpec {
                n_points: 60,
                n_iterations: 15,
                ..CloudSpec::default()
            },
        };
        let dir = temp_dir("recurrent");
        let out = run(&exp, &dir, 7).unwrap();
        let s = &out.manifest.summary;
        assert!(s["containment"]["fraction"].as_f64().unwrap() > 0.97);
        assert!(s["seam_gap"].as_f64().unwrap() < 1e-9);
        assert!(s["cloud"]["in_domain_fraction"].as_f64().unwrap() > 0.99);
        let cloud =
            Table::read(io::BufReader::new(fs::File::open(&out.artifact_paths[0]).unwrap()))
                .unwrap();
        assert_eq!(cloud.columns, vec!["z", "h", "q_norm"]);
        assert!(!cloud.rows.is_empty());
        let _ = fs::remove_dir_all(&dir);
    }
}
