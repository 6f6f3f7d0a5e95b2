//! Command-line interface to the mode-locking toolkit.
//!
//! One binary, seven subcommands: symbolic words, shrinking-point location,
//! sector geometry, the skew sawtooth map, parameter-grid scans, a
//! verification battery, and batch experiments from config files. Output is
//! plain text or CSV with `#`-prefixed metadata lines; grids also get PPM or
//! PGM images. Every run starts by echoing its resolved configuration as
//! `#` lines.
//!
//! Exit codes: 0 on success, 1 when a solver or experiment fails, 2 on
//! usage errors.

use std::fmt::Display;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use modelock::plmap::ParamSlice;
use modelock::sawtooth::{
    lyapunov, rotation_number, sw_step, RotationOptions, SawtoothParams,
};
use modelock::scan::{away_from_pole, AxisSpec, Experiment, OrbitSpec, Table, THETA_POLE_PAD};
use modelock::sectors::{sector_corners, CornerKind, SectorSpec};
use modelock::shrink::{eta_nu, locate, ShrinkPointData};
use modelock::symbolic::{farey_roots, g_word, shift, FamilySign, RotationalParams};
use modelock::tol;

#[derive(Parser)]
#[command(
    name = "modelock",
    version,
    about = "Mode-locking analysis for piecewise-linear maps near shrinking points",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a rotational word, its shifts, family members, and Farey roots.
    Word(WordArgs),
    /// Locate a shrinking point and print its invariants and angle table.
    Shrink(ShrinkArgs),
    /// Describe a sector: angle window, slopes, ratios, corner points.
    Sectors(SectorsArgs),
    /// Iterate the skew sawtooth map: orbit traces, rotation numbers,
    /// Lyapunov exponents.
    Sawtooth(SawtoothArgs),
    /// Scan a two-parameter grid for mode-locked solutions (CSV + PPM).
    Mlscan(MlscanArgs),
    /// Run the numeric self-check battery at a shrinking point.
    Verify(VerifyArgs),
    /// Run a batch experiment described by a TOML config file.
    Run(RunArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Word(args) => cmd_word(&args),
        Command::Shrink(args) => cmd_shrink(&args),
        Command::Sectors(args) => cmd_sectors(&args),
        Command::Sawtooth(args) => cmd_sawtooth(&args),
        Command::Mlscan(args) => cmd_mlscan(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Run(args) => cmd_run(&args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn echo(key: &str, value: impl Display) {
    println!("# {key} = {value}");
}

fn parse_triple(s: &str) -> Result<[i64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated integers, got {s:?}"));
    }
    let mut out = [0i64; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|e| format!("{e}"))?;
    }
    Ok(out)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    }
    Ok([
        parts[0].trim().parse().map_err(|e| format!("{e}"))?,
        parts[1].trim().parse().map_err(|e| format!("{e}"))?,
    ])
}

fn parse_axis(s: &str) -> Result<AxisSpec, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected min,max,count (e.g. \"-2.4,-1.2,128\"), got {s:?}"
        ));
    }
    Ok(AxisSpec {
        min: parts[0].trim().parse().map_err(|e| format!("{e}"))?,
        max: parts[1].trim().parse().map_err(|e| format!("{e}"))?,
        count: parts[2].trim().parse().map_err(|e| format!("{e}"))?,
    })
}

fn parse_family(s: &str) -> Result<(String, i64, i64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected sign,k,dl (e.g. \"plus,2,0\"), got {s:?}"));
    }
    Ok((
        parts[0].trim().to_string(),
        parts[1].trim().parse().map_err(|e| format!("{e}"))?,
        parts[2].trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn family_sign(s: &str) -> Result<FamilySign> {
    match s {
        "plus" | "+" => Ok(FamilySign::Plus),
        "minus" | "-" => Ok(FamilySign::Minus),
        other => bail!("unknown family sign {other:?}; expected \"plus\" or \"minus\""),
    }
}

fn base_params(triple: &[i64; 3]) -> Result<RotationalParams> {
    RotationalParams::new(triple[0], triple[1], triple[2])
        .with_context(|| format!("invalid rotation triple {triple:?}"))
}

fn named_slice(name: &str) -> Result<ParamSlice> {
    ParamSlice::by_name(name).with_context(|| format!("unknown parameter slice {name:?}"))
}

fn locate_point(
    slice: &ParamSlice,
    base: &RotationalParams,
    guess: [f64; 2],
) -> Result<ShrinkPointData> {
    locate(slice, base, (guess[0], guess[1]), tol::LOCATE_TOL)
        .with_context(|| format!("shrinking-point search from guess {guess:?} failed"))
}

/// Configures the global worker pool from a flag or the MODELOCK_THREADS
/// environment variable; returns the effective thread count.
fn configure_threads(flag: Option<usize>) -> Result<usize> {
    let requested = flag.or_else(|| {
        std::env::var("MODELOCK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = requested {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("worker pool was already configured")?;
    }
    Ok(rayon::current_num_threads())
}

#[derive(Args)]
struct WordArgs {
    /// Rotation triple l,m,n of the base word.
    #[arg(long, value_parser = parse_triple)]
    rot: [i64; 3],
    /// Cyclic shift applied to the word (may be negative).
    #[arg(long, default_value_t = 0)]
    shift: i64,
    /// Also print the family word for sign,k,dl (sign is "plus" or "minus").
    #[arg(long, value_parser = parse_family)]
    family: Option<(String, i64, i64)>,
    /// Also print the Farey roots of m/n.
    #[arg(long)]
    farey: bool,
}

fn cmd_word(args: &WordArgs) -> Result<()> {
    let base = base_params(&args.rot)?;
    echo("rot", format!("{},{},{}", base.ell, base.m, base.n));
    echo("shift", args.shift);
    let word = shift(&base.word(), args.shift);
    println!("{word}");
    if let Some((sign, k, dl)) = &args.family {
        let sign = family_sign(sign)?;
        let (w, idx) = g_word(sign, *k, *dl, &base)?;
        echo(
            "family",
            format!("sign={sign} k={k} dl={dl} l={} m={} n={}", idx.ell, idx.m, idx.n),
        );
        println!("{w}");
    }
    if args.farey {
        let roots = farey_roots(&base);
        echo(
            "farey",
            format!(
                "left={}/{} right={}/{}",
                roots.left.0, roots.left.1, roots.right.0, roots.right.1
            ),
        );
    }
    Ok(())
}

#[derive(Args)]
struct ShrinkArgs {
    /// Rotation triple l,m,n of the base word.
    #[arg(long, value_parser = parse_triple)]
    base: [i64; 3],
    /// Parameter slice name from the built-in registry.
    #[arg(long, default_value = "bcnf3-fig1")]
    slice: String,
    /// Initial guess for the two slice parameters.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    guess: [f64; 2],
    /// Family-offset window printed in the angle table.
    #[arg(long, value_parser = parse_pair_i64, default_value = "-2,2", allow_hyphen_values = true)]
    dl_range: [i64; 2],
}

fn parse_pair_i64(s: &str) -> Result<[i64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated integers, got {s:?}"));
    }
    Ok([
        parts[0].trim().parse().map_err(|e| format!("{e}"))?,
        parts[1].trim().parse().map_err(|e| format!("{e}"))?,
    ])
}

fn cmd_shrink(args: &ShrinkArgs) -> Result<()> {
    let slice = named_slice(&args.slice)?;
    let base = base_params(&args.base)?;
    echo("slice", slice.name());
    echo("base", format!("{},{},{}", base.ell, base.m, base.n));
    echo("guess", format!("{},{}", args.guess[0], args.guess[1]));
    echo("locate_tol", tol::LOCATE_TOL);
    let data = locate_point(&slice, &base, args.guess)?;
    let (eta, nu) = eta_nu(&slice, &base, data.xi)?;
    echo("xi_star", format!("{},{}", data.xi.0, data.xi.1));
    echo("residual", (eta.powi(2) + nu.powi(2)).sqrt());
    echo("lambda", data.lambda);
    echo("rho_max", data.rho_max);
    echo("a", data.a);
    echo("b", data.b);
    echo("c", data.c);
    echo("fourt_residual", data.fourt_residual());
    let gen = data.genericity_report();
    echo(
        "generic",
        format!("{} (adj_term = {})", gen.generic, gen.adj_term),
    );
    echo("mode_locking", gen.mode_locking);
    let table = data.kappa_table(args.dl_range[0], args.dl_range[1])?;
    let mut csv = Table::new(&[
        "dl",
        "kappa_plus",
        "theta_plus",
        "kappa_minus",
        "theta_minus",
    ]);
    for row in &table.rows {
        csv.push(vec![
            row.dl as f64,
            row.kappa_plus,
            row.theta_plus.unwrap_or(f64::NAN),
            row.kappa_minus,
            row.theta_minus.unwrap_or(f64::NAN),
        ]);
    }
    let mut out = Vec::new();
    csv.write(&mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}

#[derive(Args)]
struct SectorsArgs {
    /// Rotation triple l,m,n of the base word.
    #[arg(long, value_parser = parse_triple)]
    base: [i64; 3],
    /// Parameter slice name from the built-in registry.
    #[arg(long, default_value = "bcnf3-fig1")]
    slice: String,
    /// Initial guess for the two slice parameters.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    guess: [f64; 2],
    /// Family sign, "plus" or "minus".
    #[arg(long, default_value = "plus")]
    sign: String,
    /// Family size.
    #[arg(long)]
    k: i64,
    /// Family offset.
    #[arg(long)]
    dl: i64,
    /// Sample angle for the slope table; defaults to the window midpoint.
    /// Angles are kept 0.05 rad clear of multiples of pi/2, where the
    /// tangent-based slope formulas degenerate.
    #[arg(long)]
    theta: Option<f64>,
    /// Also solve and print the sector's corner points.
    #[arg(long)]
    corners: bool,
}

fn cmd_sectors(args: &SectorsArgs) -> Result<()> {
    let slice = named_slice(&args.slice)?;
    let base = base_params(&args.base)?;
    let sign = family_sign(&args.sign)?;
    echo("slice", slice.name());
    echo("base", format!("{},{},{}", base.ell, base.m, base.n));
    echo("sector", format!("sign={sign} k={} dl={}", args.k, args.dl));
    let data = locate_point(&slice, &base, args.guess)?;
    echo("xi_star", format!("{},{}", data.xi.0, data.xi.1));
    let spec = if args.corners {
        sector_corners(&slice, &data, sign, args.k, args.dl)?
    } else {
        SectorSpec::new(&data, sign, args.k, args.dl)?
    };
    echo(
        "theta_window",
        format!("{},{}", spec.theta_min(), spec.theta_max()),
    );
    echo("kappa_lo", spec.kappa_lo);
    echo("kappa_hi", spec.kappa_hi);
    echo("mixed", spec.mixed());
    echo("slope_ratio", spec.slope_ratio());
    echo("kappa_ratio", spec.kappa_ratio(&data));
    let theta = args.theta.unwrap_or_else(|| {
        away_from_pole(
            0.5 * (spec.theta_min() + spec.theta_max()),
            THETA_POLE_PAD,
            true,
        )
    });
    let (a_l, a_r) = spec.slopes(theta)?;
    echo("theta", theta);
    echo("a_L", a_l);
    echo("a_R", a_r);
    if args.corners {
        let mut csv = Table::new(&["k", "dl", "stability_loss", "xi1", "xi2", "r", "theta"]);
        for c in &spec.corners {
            csv.push(vec![
                c.k as f64,
                c.dl as f64,
                match c.kind {
                    CornerKind::SubShrink => 0.0,
                    CornerKind::StabilityLoss => 1.0,
                },
                c.xi.0,
                c.xi.1,
                c.r,
                c.theta,
            ]);
        }
        let mut out = Vec::new();
        csv.write(&mut out)?;
        print!("{}", String::from_utf8_lossy(&out));
    }
    Ok(())
}

#[derive(Args)]
struct SawtoothArgs {
    /// Left slope (< 1, may be negative).
    #[arg(long = "aL", allow_hyphen_values = true)]
    a_l: f64,
    /// Right slope (> 1).
    #[arg(long = "aR")]
    a_r: f64,
    /// Offset parameter.
    #[arg(long, allow_hyphen_values = true)]
    w: f64,
    /// Print an orbit trace of this many steps as CSV.
    #[arg(long)]
    trace: Option<usize>,
    /// Estimate the rotation number.
    #[arg(long)]
    rho: bool,
    /// Estimate the Lyapunov exponent over this many steps.
    #[arg(long)]
    lyapunov: Option<usize>,
    /// Initial point of traces and estimates.
    #[arg(long, default_value_t = 0.0)]
    z0: f64,
}

fn cmd_sawtooth(args: &SawtoothArgs) -> Result<()> {
    let p = SawtoothParams::new(args.a_l, args.a_r, args.w)?;
    echo("a_L", p.a_l);
    echo("a_R", p.a_r);
    echo("w", p.w);
    echo("z_sw", p.z_sw);
    echo("invertible", p.invertible());
    let mut acted = false;
    if let Some(n) = args.trace {
        acted = true;
        let mut csv = Table::new(&["step", "z"]);
        let mut z = args.z0;
        csv.push(vec![0.0, z]);
        for i in 1..=n {
            z = sw_step(&p, z);
            csv.push(vec![i as f64, z]);
        }
        let mut out = Vec::new();
        csv.write(&mut out)?;
        print!("{}", String::from_utf8_lossy(&out));
    }
    if args.rho {
        acted = true;
        let rho = rotation_number(&p, &RotationOptions::default());
        echo("rho", rho.value());
        match rho.snapped {
            Some((num, den)) => echo("snapped", format!("{num}/{den}")),
            None => echo("snapped", "none"),
        }
        echo("unique", rho.unique);
    }
    if let Some(n) = args.lyapunov {
        acted = true;
        echo("lyapunov", lyapunov(&p, n.max(1_000)));
    }
    if !acted {
        bail!("nothing to do: pass --trace N, --rho, or --lyapunov N");
    }
    Ok(())
}

#[derive(Args)]
struct MlscanArgs {
    /// Parameter slice name from the built-in registry.
    #[arg(long, default_value = "bcnf3-fig1")]
    slice: String,
    /// First parameter axis as min,max,count.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    x: AxisSpec,
    /// Second parameter axis as min,max,count.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    y: AxisSpec,
    /// "cycle-solve" enumerates words and solves cycles; "orbit" iterates
    /// from the origin and classifies the attractor.
    #[arg(long, default_value = "cycle-solve")]
    mode: String,
    /// Largest period enumerated in cycle-solve mode.
    #[arg(long, default_value_t = 50)]
    period_cap: i64,
    /// Output directory for diagram.csv, diagram.ppm, manifest.json.
    #[arg(long, default_value = "out/mlscan")]
    out_dir: PathBuf,
    /// Seed recorded in the manifest (grid scans are deterministic).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads; MODELOCK_THREADS overrides the default.
    #[arg(long)]
    threads: Option<usize>,
}

fn cmd_mlscan(args: &MlscanArgs) -> Result<()> {
    let threads = configure_threads(args.threads)?;
    let exp = Experiment::Diagram {
        slice: args.slice.clone(),
        x: args.x,
        y: args.y,
        mode: args.mode.clone(),
        period_cap: args.period_cap,
        orbit: OrbitSpec::default(),
    };
    echo("slice", &args.slice);
    echo("x", format!("{},{},{}", args.x.min, args.x.max, args.x.count));
    echo("y", format!("{},{},{}", args.y.min, args.y.max, args.y.count));
    echo("mode", &args.mode);
    echo("period_cap", args.period_cap);
    echo("out_dir", args.out_dir.display());
    echo("threads", threads);
    let out = modelock::scan::run(&exp, &args.out_dir, args.seed)?;
    for path in &out.artifact_paths {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", out.manifest_path.display());
    println!(
        "summary: {}",
        serde_json::to_string(&out.manifest.summary)?
    );
    Ok(())
}

#[derive(Args)]
struct VerifyArgs {
    /// Rotation triple l,m,n of the base word.
    #[arg(long, value_parser = parse_triple)]
    base: [i64; 3],
    /// Parameter slice name from the built-in registry.
    #[arg(long, default_value = "bcnf3-fig1")]
    slice: String,
    /// Initial guess for the two slice parameters.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    guess: [f64; 2],
    /// Sector offsets cross-checked through both slope-ratio routes.
    #[arg(long, default_value = "0,1", value_parser = parse_pair_i64, allow_hyphen_values = true)]
    dls: [i64; 2],
    /// Family size used for the sector checks.
    #[arg(long, default_value_t = 2)]
    k: i64,
}

struct Battery {
    failures: usize,
}

impl Battery {
    fn check(&mut self, name: &str, pass: bool, value: impl Display) {
        if pass {
            println!("ok    {name} = {value}");
        } else {
            println!("FAIL  {name} = {value}");
            self.failures += 1;
        }
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let slice = named_slice(&args.slice)?;
    let base = base_params(&args.base)?;
    echo("slice", slice.name());
    echo("base", format!("{},{},{}", base.ell, base.m, base.n));
    echo("guess", format!("{},{}", args.guess[0], args.guess[1]));
    let data = locate_point(&slice, &base, args.guess)?;
    echo("xi_star", format!("{},{}", data.xi.0, data.xi.1));
    let mut battery = Battery { failures: 0 };
    let (eta, nu) = eta_nu(&slice, &base, data.xi)?;
    let residual = (eta.powi(2) + nu.powi(2)).sqrt();
    battery.check("switching_residual", residual < 1e-10, residual);
    let unit_gap = (data.lambda - 1.0).abs();
    battery.check("unit_eigenvalue_gap", unit_gap < tol::UNIT_EIG_RESIDUAL, unit_gap);
    battery.check(
        "fourt_residual",
        data.fourt_residual() < 1e-8,
        data.fourt_residual(),
    );
    battery.check("rho_max_below_one", data.rho_max < 1.0, data.rho_max);
    battery.check("c_positive", data.c > 0.0, data.c);
    let gen = data.genericity_report();
    battery.check("genericity", gen.generic, gen.adj_term);
    for &dl in &args.dls {
        for sign in [FamilySign::Plus, FamilySign::Minus] {
            let spec = match SectorSpec::new(&data, sign, args.k, dl) {
                Ok(spec) => spec,
                Err(e) => {
                    println!("skip  sector sign={sign} dl={dl}: {e}");
                    continue;
                }
            };
            let tan_route = spec.slope_ratio();
            let kappa_route = spec.kappa_ratio(&data);
            let gap = (tan_route - kappa_route).abs() / tan_route.abs().max(1e-300);
            battery.check(
                &format!("slope_ratio_agreement[{sign},{dl}]"),
                gap < 1e-6,
                gap,
            );
            battery.check(
                &format!("window_nonempty[{sign},{dl}]"),
                spec.theta_max() > spec.theta_min(),
                spec.theta_max() - spec.theta_min(),
            );
        }
    }
    if battery.failures > 0 {
        bail!("{} checks failed", battery.failures);
    }
    println!("all checks passed");
    Ok(())
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file: optional out_dir/seed/threads keys plus an
    /// [experiment] table with kind = "diagram" | "zoom" | "tongues" |
    /// "recurrent" | "ladder". Theta grids keep 0.05 rad clear of multiples
    /// of pi/2, where the slope formulas degenerate.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Sampling seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config file and MODELOCK_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Deserialize)]
struct RunFile {
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    experiment: Experiment,
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let file: RunFile = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;
    let out_dir = args
        .out_dir
        .clone()
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let threads = configure_threads(args.threads.or(file.threads))?;
    echo("config", args.config.display());
    echo("kind", file.experiment.kind());
    echo("out_dir", out_dir.display());
    echo("seed", seed);
    echo("threads", threads);
    echo(
        "experiment",
        serde_json::to_string(&file.experiment)?,
    );
    let out = modelock::scan::run(&file.experiment, &out_dir, seed)?;
    if !out.manifest.failures.is_empty() {
        for f in &out.manifest.failures {
            eprintln!("failed item {}: {}", f.label, f.message);
        }
    }
    for path in &out.artifact_paths {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", out.manifest_path.display());
    println!(
        "summary: {}",
        serde_json::to_string(&out.manifest.summary)?
    );
    Ok(())
}
