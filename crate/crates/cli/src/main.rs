//! `rectif`: command-line access to the rectifiability diagnostics.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rectif_core::check::{
    generate, run_checker, scan, Checker, CriterionConfig, CriterionReport, GeneratorSpec, ScanReport, SCHEMA_VERSION,
};
use rectif_core::coeffs::{alpha_plane, beta1, p_density, theta, thin_boundary_constant, Beta1Options, PlaneMode};
use rectif_core::kernels::{FieldSpec, KernelSpec};
use rectif_core::lattice::{
    bad_cells, build_lattice, carve_inner, low_density_cells, stopping_cells, verify_lattice, LatticeParams,
};
use rectif_core::measure::{load_measure, write_measure, Ball, Cube, DiscreteMeasure, Region};
use rectif_core::potential::{
    operator_norm, oscillation, pv_estimate, schur_bound, t_eps_field, weak_limit, TruncationSchedule,
};

#[derive(Parser)]
#[command(name = "rectif", version, about = "Rectifiability diagnostics for discrete measures")]
struct Cli {
    /// Criterion configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Plane,
    Segment,
    LipschitzGraph,
    FourCornerCantor,
    Circle,
    TwoPopulation,
    Collar,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Frozen,
    Fd,
    Suppressed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckerArg {
    Ball,
    MainLemma,
    DensityScaled,
}

impl From<CheckerArg> for Checker {
    fn from(c: CheckerArg) -> Self {
        match c {
            CheckerArg::Ball => Checker::Ball,
            CheckerArg::MainLemma => Checker::MainLemma,
            CheckerArg::DensityScaled => Checker::DensityScaled,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic measure as CSV.
    Gen {
        kind: GenKind,
        /// Intrinsic dimension n (plane, graph, collar).
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Side of the parameter cube, or segment length.
        #[arg(long, default_value_t = 2.0)]
        side: f64,
        #[arg(long, default_value_t = 0.05)]
        slope: f64,
        #[arg(long, default_value_t = 6)]
        generation: u32,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 8)]
        dust: usize,
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        #[arg(long, default_value_t = 1e-9)]
        dust_weight: f64,
        #[arg(long, default_value_t = 0.05)]
        width: f64,
    },
    /// Densities and flatness coefficients on a ball or cube.
    Coeffs {
        measure: PathBuf,
        /// `c1,...,cd,r`
        #[arg(long)]
        ball: Option<String>,
        /// `c1,...,cd,side`
        #[arg(long)]
        cube: Option<String>,
        /// Exponent of the P density.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value = "heuristic")]
        plane_mode: String,
        /// Grid spacing for the α-number (cube only).
        #[arg(long)]
        grid_h: Option<f64>,
    },
    /// Truncated potentials, principal values, norms and oscillation.
    Potential {
        measure: PathBuf,
        #[arg(long)]
        point: Option<String>,
        /// Decreasing truncations for the principal value.
        #[arg(long)]
        eps_schedule: Option<String>,
        /// Decreasing radii for the averaged weak limit.
        #[arg(long)]
        r_schedule: Option<String>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, value_enum, default_value = "frozen")]
        kernel: KernelKind,
        /// Box side of the numeric kernel.
        #[arg(long, default_value_t = 1.0)]
        box_side: f64,
        /// Gauge scale of the suppressed kernel.
        #[arg(long, default_value_t = 1.0)]
        gauge_scale: f64,
        #[arg(long)]
        norm: bool,
        #[arg(long)]
        oscillation: bool,
        /// `ball:c1,...,cd,r` or `cube:c1,...,cd,side`
        #[arg(long)]
        region: Option<String>,
    },
    /// Build and dump the lattice with its stopping-time families.
    Lattice {
        measure: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        k0: f64,
        #[arg(long, default_value_t = 16.0)]
        a0: f64,
        #[arg(long, default_value_t = 4)]
        generations: usize,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        alpha_tilde: Option<f64>,
        #[arg(long)]
        kappa0: Option<f64>,
        /// `c1,...,cd,side`
        #[arg(long)]
        q0: Option<String>,
        #[arg(long)]
        audit: bool,
    },
    /// Evaluate one criterion checker.
    Check {
        measure: PathBuf,
        #[arg(long, value_enum, default_value = "ball")]
        checker: CheckerArg,
        #[arg(long)]
        center: String,
        /// Ball radius or cube side.
        #[arg(long)]
        size: f64,
        /// Exit with status 2 when a hypothesis fails.
        #[arg(long)]
        strict: bool,
    },
    /// Run a checker over a grid of centers and sizes.
    Scan {
        measure: PathBuf,
        #[arg(long, value_enum, default_value = "ball")]
        checker: CheckerArg,
        /// Semicolon-separated centers, e.g. `0,0;0.5,0`.
        #[arg(long)]
        centers: String,
        #[arg(long)]
        sizes: String,
        /// Also write one CSV row per hypothesis of every report.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Summarize report JSON files.
    Report { files: Vec<PathBuf> },
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number `{t}`")))
        .collect()
}

/// Splits `c1,...,cd,s` into center and size.
fn center_size(s: &str) -> Result<(Vec<f64>, f64)> {
    let mut v = parse_list(s)?;
    let size = v.pop().ok_or_else(|| anyhow!("empty center/size list"))?;
    if v.is_empty() {
        bail!("missing center coordinates in `{s}`");
    }
    Ok((v, size))
}

fn parse_region(s: &str) -> Result<Region> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| anyhow!("region must be ball:... or cube:..."))?;
    let (c, size) = center_size(rest)?;
    Ok(match kind {
        "ball" => Region::Ball(Ball::new(c, size)?),
        "cube" => Region::Cube(Cube::new(c, size)?),
        other => bail!("unknown region kind `{other}`"),
    })
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<CriterionConfig> {
    let mut cfg: CriterionConfig = match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => CriterionConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut h = io::stdout().lock();
            h.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                h.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(v)?)
}

fn field_of(spec: &KernelSpec) -> FieldSpec {
    match spec {
        KernelSpec::Frozen { field, .. } | KernelSpec::Numeric { field, .. } => field.clone(),
        KernelSpec::Suppressed { base, .. } => field_of(base),
    }
}

fn main() -> ExitCode {
    // Status 2 is reserved for `check --strict`, so usage errors exit with 1.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            // Library errors already embed their source text; skip repeated links.
            let mut msg = String::new();
            for cause in e.chain() {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&c);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen {
            kind,
            n,
            count,
            side,
            slope,
            generation,
            radius,
            dust,
            height,
            dust_weight,
            width,
        } => {
            let spec = match kind {
                GenKind::Plane => GeneratorSpec::Plane { n, count, side },
                GenKind::Segment => GeneratorSpec::Segment { count, length: side },
                GenKind::LipschitzGraph => GeneratorSpec::LipschitzGraph {
                    n,
                    count,
                    side,
                    slope,
                    seed: cfg.seed,
                },
                GenKind::FourCornerCantor => GeneratorSpec::FourCornerCantor { generation },
                GenKind::Circle => GeneratorSpec::Circle { count, radius },
                GenKind::TwoPopulation => GeneratorSpec::TwoPopulation {
                    count,
                    length: side,
                    dust,
                    height,
                    dust_weight,
                },
                GenKind::Collar => GeneratorSpec::Collar { n, count, side, width },
            };
            let mu = generate(&spec)?;
            let mut buf = Vec::new();
            write_measure(&mu, &mut buf)?;
            emit(out, std::str::from_utf8(&buf)?)?;
        }
        Command::Coeffs {
            measure,
            ball,
            cube,
            gamma,
            plane_mode,
            grid_h,
        } => {
            let mu = load(&measure)?;
            let mode = match plane_mode.as_str() {
                "heuristic" => PlaneMode::Heuristic,
                "exhaustive" => PlaneMode::Exhaustive,
                other => bail!("unknown plane mode `{other}`"),
            };
            let opts = Beta1Options {
                restarts: cfg.beta_restarts,
                level: cfg.beta_level,
                seed: cfg.seed,
            };
            let mut res = serde_json::Map::new();
            res.insert("schema".into(), json!(SCHEMA_VERSION));
            res.insert("measure_hash".into(), json!(mu.content_hash()));
            if let Some(b) = ball {
                let (c, r) = center_size(&b)?;
                let ball = Ball::new(c, r)?;
                let b1 = beta1(&mu, &ball, mode, &opts)?;
                res.insert("theta".into(), json!({ "value": theta(&mu, &ball) }));
                res.insert(
                    "beta1".into(),
                    json!({
                        "value": b1.value,
                        "argmin": b1.plane,
                        "diagnostics": { "lower_bound": b1.lower_bound, "normal_gap": b1.normal_gap, "atoms": b1.atoms },
                    }),
                );
                if let Some(g) = gamma {
                    res.insert("p_density_ball".into(), json!({ "value": p_density(&mu, &Region::Ball(ball), g)? }));
                }
            }
            if let Some(q) = cube {
                let (c, side) = center_size(&q)?;
                let cube = Cube::new(c.clone(), side)?;
                res.insert(
                    "thin_boundary".into(),
                    json!({ "value": thin_boundary_constant(&mu, &cube, &cfg.lambdas)?, "diagnostics": { "lambdas": cfg.lambdas } }),
                );
                if let Some(g) = gamma {
                    res.insert("p_density_cube".into(), json!({ "value": p_density(&mu, &Region::Cube(cube.clone()), g)? }));
                }
                let h = grid_h.unwrap_or(side / cfg.alpha_cells as f64);
                let b1 = beta1(&mu, &Ball::new(c, 0.5 * side)?, mode, &opts)?;
                let a = alpha_plane(&mu, &cube, &b1.plane, h)?;
                res.insert(
                    "alpha".into(),
                    json!({
                        "value": a.alpha,
                        "argmin": { "plane": b1.plane, "c": a.c },
                        "diagnostics": { "distance": a.distance, "plane_nodes": a.plane_nodes },
                    }),
                );
            }
            emit_json(out, &Value::Object(res))?;
        }
        Command::Potential {
            measure,
            point,
            eps_schedule,
            r_schedule,
            tol,
            kernel,
            box_side,
            gauge_scale,
            norm,
            oscillation: osc,
            region,
        } => {
            let mu = load(&measure)?;
            let base = cfg.kernel_spec(mu.dim());
            let spec = match kernel {
                KernelKind::Frozen => base,
                KernelKind::Fd => KernelSpec::Numeric {
                    field: field_of(&base),
                    box_side,
                    cells: 64,
                },
                KernelKind::Suppressed => KernelSpec::Suppressed {
                    base: Box::new(base),
                    scale: gauge_scale,
                },
            };
            let poles: Vec<Vec<f64>> = mu.points().map(|p| p.to_vec()).collect();
            let k = spec.build(&poles)?;
            let ones = vec![1.0; mu.len()];
            let mut res = serde_json::Map::new();
            res.insert("schema".into(), json!(SCHEMA_VERSION));
            res.insert("kernel".into(), json!(spec));
            res.insert("measure_hash".into(), json!(mu.content_hash()));
            if let Some(p) = point {
                let x = parse_list(&p)?;
                if let Some(s) = eps_schedule {
                    let sched = TruncationSchedule::decreasing(parse_list(&s)?, tol)?;
                    res.insert("pv".into(), json!(pv_estimate(&mu, &ones, &x, &sched, k.as_ref())?));
                }
                if let Some(s) = r_schedule {
                    let sched = TruncationSchedule::decreasing(parse_list(&s)?, tol)?;
                    res.insert("weak_limit".into(), json!(weak_limit(&mu, &ones, &x, &sched, k.as_ref())?));
                }
            }
            if norm || osc {
                let reg = parse_region(region.as_deref().ok_or_else(|| anyhow!("--norm/--oscillation need --region"))?)?;
                if norm {
                    res.insert("norm".into(), json!(operator_norm(&mu, &reg, k.as_ref(), cfg.eps0)?));
                    res.insert("schur_bound".into(), json!(schur_bound(&mu, &reg, k.as_ref(), cfg.eps0)?));
                }
                if osc {
                    let field = t_eps_field(&mu, &ones, 0.0, k.as_ref())?;
                    res.insert("oscillation".into(), json!(oscillation(&mu, &reg, &field)?));
                }
            }
            emit_json(out, &Value::Object(res))?;
        }
        Command::Lattice {
            measure,
            k0,
            a0,
            generations,
            theta0,
            alpha_tilde,
            kappa0,
            q0,
            audit,
        } => {
            let mu = load(&measure)?;
            let params = LatticeParams {
                k0,
                a0,
                max_generations: generations,
            };
            let mut lat = build_lattice(&mu, &params)?;
            let mut res = serde_json::Map::new();
            res.insert("schema".into(), json!(SCHEMA_VERSION));
            res.insert("measure_hash".into(), json!(mu.content_hash()));
            if let Some(th) = theta0 {
                let at = match alpha_tilde {
                    Some(a) => a,
                    None => cfg.resolved_alpha_tilde(mu.n(), mu.dim())?,
                };
                let ld = low_density_cells(&mut lat, &mu, th)?;
                let stop = stopping_cells(&mut lat, &ld, th, mu.n(), at)?;
                res.insert("low_density".into(), json!(ld));
                res.insert("stop".into(), json!(stop));
                if let Some(q) = &q0 {
                    let (c, side) = center_size(q)?;
                    let bad = bad_cells(&mut lat, &stop.cells, &Cube::new(c, side)?);
                    res.insert("bad".into(), json!(bad));
                }
                if let Some(k) = kappa0 {
                    let carved = carve_inner(&mu, &lat, &stop.cells, k)?;
                    res.insert(
                        "carved".into(),
                        json!({ "mass_drop": carved.mass_drop, "kept_atoms": carved.kept_atoms.len() }),
                    );
                }
            }
            if audit {
                res.insert("audit".into(), json!(verify_lattice(&lat, &mu)));
            }
            let cells: Vec<Value> = lat
                .cells
                .iter()
                .map(|c| {
                    json!({
                        "id": c.id, "generation": c.generation, "parent": c.parent, "center": c.center,
                        "r": c.r, "ell": c.ell, "atoms": c.members.len(), "flags": c.flags,
                    })
                })
                .collect();
            res.insert("params".into(), json!(lat.params));
            res.insert("regime_deviation".into(), json!(lat.regime_deviation));
            res.insert("cells".into(), Value::Array(cells));
            emit_json(out, &Value::Object(res))?;
        }
        Command::Check {
            measure,
            checker,
            center,
            size,
            strict,
        } => {
            let mu = load(&measure)?;
            let c = parse_list(&center)?;
            let rep = checked(&mu, checker.into(), &c, size, &cfg)?;
            emit(out, &rep.to_json())?;
            if strict && !rep.overall {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Scan {
            measure,
            checker,
            centers,
            sizes,
            csv,
        } => {
            let mu = load(&measure)?;
            let cs: Vec<Vec<f64>> = centers
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(parse_list)
                .collect::<Result<_>>()?;
            let rep = scan(&mu, &cs, &parse_list(&sizes)?, &cfg, checker.into());
            if let Some(p) = csv {
                fs::write(&p, scan_csv(&rep)).with_context(|| format!("writing {}", p.display()))?;
            }
            emit(out, &serde_json::to_string_pretty(&rep)?)?;
        }
        Command::Report { files } => {
            if files.is_empty() {
                bail!("no report files given");
            }
            let mut text = String::new();
            for f in files {
                let raw = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
                text.push_str(&format!("== {}\n", f.display()));
                if let Ok(s) = serde_json::from_str::<ScanReport>(&raw) {
                    text.push_str(&format!("scan: {} reports, pass fraction {:.4}\n", s.reports.len(), s.pass_fraction));
                    for r in &s.reports {
                        text.push_str(&summary(r));
                    }
                } else {
                    let r: CriterionReport =
                        serde_json::from_str(&raw).with_context(|| format!("{} is not a report", f.display()))?;
                    text.push_str(&summary(&r));
                }
            }
            emit(out, &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load(path: &Path) -> Result<DiscreteMeasure> {
    load_measure(path).with_context(|| format!("loading {}", path.display()))
}

/// A single check whose evaluation errors surface as CLI errors.
fn checked(mu: &DiscreteMeasure, checker: Checker, c: &[f64], size: f64, cfg: &CriterionConfig) -> Result<CriterionReport> {
    let rep = run_checker(mu, checker, c, size, cfg);
    if let Some(h) = rep.hypothesis("evaluation") {
        bail!("{}", h.flag.clone().unwrap_or_default());
    }
    Ok(rep)
}

fn summary(r: &CriterionReport) -> String {
    let mut s = format!(
        "{:?} at {:?} size {}: {}\n",
        r.checker,
        r.center,
        r.size,
        if r.overall { "PASS" } else { "FAIL" }
    );
    for (i, h) in r.hypotheses.iter().enumerate() {
        s.push_str(&format!(
            "  ({}) {:<18} {:>14.6e} vs {:>12.6e}  margin {:>+12.4e}  {}{}\n",
            i + 1,
            h.name,
            h.measured,
            h.threshold,
            h.margin,
            if h.pass { "pass" } else { "FAIL" },
            h.flag.as_ref().map(|f| format!("  [{f}]")).unwrap_or_default()
        ));
    }
    s
}

fn scan_csv(rep: &ScanReport) -> String {
    let mut s = String::from("center,size,overall,hypothesis,measured,threshold,margin,pass\n");
    for r in &rep.reports {
        let c: Vec<String> = r.center.iter().map(|v| v.to_string()).collect();
        for h in &r.hypotheses {
            s.push_str(&format!(
                "\"{}\",{},{},{},{},{},{},{}\n",
                c.join(" "),
                r.size,
                r.overall,
                h.name,
                h.measured,
                h.threshold,
                h.margin,
                h.pass
            ));
        }
    }
    s
}
