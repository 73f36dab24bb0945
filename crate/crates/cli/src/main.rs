use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use wfsd::brownian::{encode_dump, sample_fine_increments, PathSpec};
use wfsd::config::{parse_exponents, ConfigMap};
use wfsd::harness::{run_experiment, ErrorMetric, ExperimentConfig, ModelSpec};
use wfsd::model::{classify_boundaries, BoundaryReport, Preset, WfParams};
use wfsd::plot::render_svg;
use wfsd::scalar::{parse_scheme_list, simulate_path, SchemeId, StepContext};
use wfsd::table::{parse_table, rows_from_report, write_table, Manifest};
use wfsd::three_state::{simulate_path3, ClampPolicy, SimplexState, Stepper3};
use wfsd::Error;

#[derive(Parser)]
#[command(name = "wfsd", version, about = "Boundary-preserving Wright-Fisher SDE schemes and strong-error experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate strong errors over a ladder of step sizes and write a CSV table
    Convergence(ConvergenceArgs),
    /// Simulate one seeded path and write its trajectory as CSV
    Simulate(SimulateArgs),
    /// Report boundary attainability of a scalar model
    Classify(ClassifyArgs),
    /// Render a convergence CSV as an SVG log-log plot
    Plot(PlotArgs),
    /// List the built-in parameter sets
    Presets,
}

#[derive(Args, Default)]
struct ModelArgs {
    /// set-i, set-ii or set-iii
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    k1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k3: Option<f64>,
    /// Initial value for explicit k1, k2, k3 (defaults to k1/k2)
    #[arg(long)]
    x0: Option<f64>,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// key = value file; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated schemes under test
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reference grid exponent (dt = 2^-k)
    #[arg(long)]
    ref_exp: Option<u32>,
    /// Test exponents, e.g. 3..12 or 3,5,7
    #[arg(long)]
    exps: Option<String>,
    #[arg(long)]
    batches: Option<usize>,
    /// Paths per batch
    #[arg(long)]
    paths: Option<usize>,
    /// Drop paths on which EM, EM3 or HYB leave the domain
    #[arg(long)]
    reject_exits: bool,
    #[arg(long)]
    clamp_eps: Option<f64>,
    /// terminal or max-over-nodes
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    scheme: String,
    /// Step size exponent: dt = 2^-exp
    #[arg(long)]
    exp: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    path_index: u64,
    #[arg(long)]
    clamp_eps: Option<f64>,
    /// Also write the path's increments in the binary dump format
    #[arg(long)]
    dump_increments: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV written by `convergence`
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
}

/// Failure with the process exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::StepSizeViolation { .. } | Error::Domain { .. } | Error::ExitedDomain { .. } => 3,
            Error::AllPathsRejected => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    config_error(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convergence(a) => convergence(a),
        Command::Simulate(a) => simulate(a),
        Command::Classify(a) => classify(a),
        Command::Plot(a) => plot(a),
        Command::Presets => presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn merge_model(cfg: &mut ConfigMap, m: &ModelArgs) {
    if let Some(p) = &m.preset {
        cfg.set("preset", p.clone());
    }
    for (key, v) in [("k1", m.k1), ("k2", m.k2), ("k3", m.k3), ("x0", m.x0)] {
        if let Some(v) = v {
            cfg.set(key, v.to_string());
        }
    }
}

fn parsed<T: std::str::FromStr>(cfg: &ConfigMap, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    Ok(cfg.get_parsed(key)?)
}

/// Resolves the model from a preset or explicit coefficients; returns it with its label.
fn resolve_model(cfg: &ConfigMap) -> CliResult<(ModelSpec, String, Option<Preset>)> {
    let ks = [parsed::<f64>(cfg, "k1")?, parsed::<f64>(cfg, "k2")?, parsed::<f64>(cfg, "k3")?];
    match (cfg.get("preset"), ks) {
        (Some(_), [Some(_), ..] | [_, Some(_), _] | [.., Some(_)]) => {
            Err(config_error("give either a preset or k1, k2, k3, not both"))
        }
        (Some(p), _) => {
            let preset: Preset = p.parse()?;
            Ok((ModelSpec::from_preset(preset)?, preset.name().to_string(), Some(preset)))
        }
        (None, [Some(k1), Some(k2), Some(k3)]) => {
            let params = WfParams::new(k1, k2, k3)?;
            let x0 = parsed::<f64>(cfg, "x0")?.unwrap_or(k1 / k2);
            if !(0.0..=1.0).contains(&x0) {
                return Err(config_error(format!("initial value {x0} is outside [0, 1]")));
            }
            Ok((ModelSpec::Scalar { params, x0 }, format!("k1={k1};k2={k2};k3={k3}"), None))
        }
        _ => Err(config_error("a model is required: --preset or all of --k1, --k2, --k3")),
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn convergence(a: ConvergenceArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => ConfigMap::parse(&std::fs::read_to_string(p).map_err(|e| io_error(p, e))?)?,
        None => ConfigMap::default(),
    };
    merge_model(&mut cfg, &a.model);
    let flags: [(&str, Option<String>); 9] = [
        ("schemes", a.schemes.clone()),
        ("reference", a.reference.clone()),
        ("seed", a.seed.map(|v| v.to_string())),
        ("ref-exp", a.ref_exp.map(|v| v.to_string())),
        ("exps", a.exps.clone()),
        ("batches", a.batches.map(|v| v.to_string())),
        ("paths", a.paths.map(|v| v.to_string())),
        ("clamp-eps", a.clamp_eps.map(|v| v.to_string())),
        ("metric", a.metric.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v);
        }
    }
    if a.reject_exits {
        cfg.set("reject-exits", "true");
    }
    if let Some(w) = a.workers {
        cfg.set("workers", w.to_string());
    }

    let (model, label, _) = resolve_model(&cfg)?;
    let schemes = parse_scheme_list(cfg.get("schemes").ok_or_else(|| config_error("--schemes is required"))?)?;
    let reference: SchemeId = match cfg.get("reference") {
        Some(r) => r.parse()?,
        None => schemes[0],
    };
    let seed: u64 = parsed(&cfg, "seed")?
        .ok_or_else(|| config_error("--seed is required so that every table can be reproduced"))?;
    let mut ec = ExperimentConfig::new(model, label, schemes, reference, seed);
    if let Some(v) = parsed(&cfg, "ref-exp")? {
        ec.ref_exp = v;
    }
    if let Some(v) = cfg.get("exps") {
        ec.test_exps = parse_exponents(v)?;
    }
    if let Some(v) = parsed(&cfg, "batches")? {
        ec.batches = v;
    }
    if let Some(v) = parsed(&cfg, "paths")? {
        ec.paths_per_batch = v;
    }
    if let Some(v) = parsed::<f64>(&cfg, "clamp-eps")? {
        ec.clamp = ClampPolicy::new(v)?;
    }
    ec.reject_exits = parsed::<bool>(&cfg, "reject-exits")?.unwrap_or(false);
    ec.metric = match cfg.get("metric") {
        None | Some("terminal") => ErrorMetric::Terminal,
        Some("max-over-nodes") | Some("max") => ErrorMetric::MaxOverNodes,
        Some(other) => return Err(config_error(format!("unknown metric '{other}' (terminal or max-over-nodes)"))),
    };
    ec.workers = parsed(&cfg, "workers")?;
    let known = [
        "preset", "k1", "k2", "k3", "x0", "schemes", "reference", "seed", "ref-exp", "exps", "batches", "paths",
        "reject-exits", "clamp-eps", "metric", "workers",
    ];
    if let Some(k) = cfg.keys().find(|k| !known.contains(k)) {
        return Err(config_error(format!("unknown configuration key '{k}'")));
    }

    let (report, timings) = run_experiment(&ec)?;

    let mut m = Manifest::default();
    m.push("tool", format!("wfsd {}", env!("CARGO_PKG_VERSION")));
    m.push("command", "convergence");
    for (k, v) in cfg.iter() {
        m.push(format!("config.{k}"), v);
    }
    m.push("seed", seed);
    m.push("reference", format!("{} at 2^-{}", report.reference, report.ref_exp));
    m.push("paths_total", report.total_paths);
    m.push("paths_rejected", report.paths_rejected);
    m.push("reference_clamp_events", report.reference_clamps);
    for rep in &report.reports {
        if let Some(f) = rep.order {
            m.push(format!("order.{}", rep.scheme), format!("{:.4} (rms residual {:.4})", f.slope, f.residual));
        }
        for row in rep.rows.iter().filter(|r| r.clamp_events > 0) {
            m.push(format!("clamp_events.{}.{}", rep.scheme, row.dt_exp), row.clamp_events);
        }
    }
    let row_ids = report.rows().map(|r| format!("runtime.{}.{}", r.scheme, r.dt_exp));
    for (id, d) in row_ids.zip(&timings.per_row) {
        m.push(id, format!("{:.3}s", d.as_secs_f64()));
    }
    m.push("runtime.reference", format!("{:.3}s", timings.reference.as_secs_f64()));
    m.push("runtime.total", format!("{:.3}s", timings.total.as_secs_f64()));
    m.push("timestamp_unix", unix_seconds());

    let text = write_table(&m, &rows_from_report(&report))?;
    emit(a.out.as_deref(), &text)
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let mut cfg = ConfigMap::default();
    merge_model(&mut cfg, &a.model);
    let (model, _, _) = resolve_model(&cfg)?;
    let scheme: SchemeId = a.scheme.parse()?;
    let spec = PathSpec {
        horizon: 1.0,
        fine_exp: a.exp,
        dims: model.dims(),
        master_seed: a.seed,
        path_index: a.path_index,
    };
    let inc = sample_fine_increments(&spec)?;
    if let Some(p) = &a.dump_increments {
        std::fs::write(p, encode_dump(&spec, &inc)?).map_err(|e| io_error(p, e))?;
    }
    let dt = inc.dt();
    let mut s = String::new();
    match model {
        ModelSpec::Scalar { params, x0 } => {
            let ctx = StepContext::new(params, dt)?;
            let path = simulate_path(scheme, &ctx, x0, inc.component(0))?;
            s.push_str("t,y,exited\n");
            for (n, y) in path.values.iter().enumerate() {
                let flag = u8::from(path.exited_at == Some(n));
                let _ = writeln!(s, "{},{},{}", n as f64 * dt, y, flag);
            }
        }
        ModelSpec::ThreeState { coeffs, y0 } => {
            let policy = match a.clamp_eps {
                Some(e) => ClampPolicy::new(e)?,
                None => ClampPolicy::default(),
            };
            let st = Stepper3::new(scheme, coeffs, dt, policy)?;
            let path = simulate_path3(&st, y0, [inc.component(0), inc.component(1), inc.component(2)])?;
            s.push_str("t,y1,y2,y3,exited\n");
            for (n, v) in path.values.iter().enumerate() {
                let SimplexState { y1, y2 } = *v;
                let flag = u8::from(path.exited_at == Some(n));
                let _ = writeln!(s, "{},{},{},{},{}", n as f64 * dt, y1, y2, v.y3(), flag);
            }
            if path.clamp_events > 0 {
                eprintln!("clamp events: {}", path.clamp_events);
            }
        }
    }
    emit(a.out.as_deref(), &s)
}

fn describe(name: &str, b: &BoundaryReport, out: &mut String) {
    let verdict = |u: bool| if u { "unattainable" } else { "attainable" };
    let _ = writeln!(out, "{name}");
    let _ = writeln!(
        out,
        "  left  (x = 0): exponent 2 k1 / k3^2 = {:.6}  -> {}  (quadrature estimate {:.4}, {})",
        b.left_exponent,
        verdict(b.left_unattainable),
        b.left_probe.estimated_exponent,
        if b.left_probe.divergent { "divergent" } else { "convergent" }
    );
    let _ = writeln!(
        out,
        "  right (x = 1): exponent 2 (k2 - k1) / k3^2 = {:.6}  -> {}  (quadrature estimate {:.4}, {})",
        b.right_exponent,
        verdict(b.right_unattainable),
        b.right_probe.estimated_exponent,
        if b.right_probe.divergent { "divergent" } else { "convergent" }
    );
    let _ = writeln!(out, "  quadrature agrees: {}", if b.probe_agrees() { "yes" } else { "no" });
}

fn classify(a: ClassifyArgs) -> CliResult<()> {
    let mut cfg = ConfigMap::default();
    merge_model(&mut cfg, &a.model);
    let (model, label, _) = resolve_model(&cfg)?;
    let mut out = String::new();
    match model {
        ModelSpec::Scalar { params, .. } => {
            let _ = writeln!(out, "k1 = {}, k2 = {}, k3 = {}", params.k1(), params.k2(), params.k3());
            describe(&label, &classify_boundaries(&params), &mut out);
        }
        ModelSpec::ThreeState { coeffs, y0 } => {
            let _ = writeln!(out, "frozen margins at the steady state ({}, {})", y0.y1, y0.y2);
            let margins = coeffs.frozen_margins([y0.y1, y0.y2])?;
            for (i, p) in margins.iter().enumerate() {
                let _ = writeln!(out, "X{}: k1 = {:.6}, k2 = {:.6}, k3 = {:.6}", i + 1, p.k1(), p.k2(), p.k3());
                describe(&format!("{label} X{}", i + 1), &classify_boundaries(p), &mut out);
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| io_error(&a.input, e))?;
    let (manifest, rows) = parse_table(&text)?;
    let title = a.title.unwrap_or_else(|| {
        let set = rows[0].param_set.clone();
        match manifest.get("reference") {
            Some(r) => format!("{set}, reference {r}"),
            None => set,
        }
    });
    let svg = render_svg(&rows, &manifest, &title);
    emit(a.out.as_deref(), &svg)
}

fn presets() -> CliResult<()> {
    let mut out = String::new();
    for p in Preset::ALL {
        if let Some(r) = p.channel_rates() {
            let (w, x0) = p.scalar().expect("scalar preset");
            let _ = writeln!(
                out,
                "{}: A = {}, B = {}, N_r = {}  ->  k1 = {}, k2 = {}, k3 = {:.6}, x0 = {:.6}",
                p.name(),
                r.opening,
                r.closing,
                r.channels,
                w.k1(),
                w.k2(),
                w.k3(),
                x0
            );
        } else if let Some(m) = p.multi_params() {
            let k = m.coefficients()?;
            let [x1, x2] = k.steady_state()?;
            let _ = writeln!(
                out,
                "{}: A = {:?}, B = {:?}, C = {:?}  ->  steady state ({x1:.6}, {x2:.6}, {:.6})",
                p.name(),
                m.a,
                m.b,
                m.c,
                1.0 - x1 - x2
            );
        }
    }
    print!("{out}");
    Ok(())
}
