//! The `isoflow` command line.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, AnalysisError, SeparationTolerances};
use crate::flow::{self, FlowError, FlowOptions, Variant};
use crate::invariants::{self, InvariantError};
use crate::io::{self, fmt_f64, json_text, stamp, OutputSet};
use crate::poly::{q_to_f64, Q};
use crate::rank2::{self, Rank2Error};
use crate::svg::{Frame, Svg};
use crate::weyl::{canonical_chamber_center, default_zero_tol, stratum_of, Family, RootSystem, RootSystemSpec, WeylError};

#[derive(Debug, Parser)]
#[command(name = "isoflow", version, about = "Mean curvature flow of isoparametric submanifolds, reduced to the Weyl chamber")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the chamber flow; writes trajectory.csv and collapse.json
    Flow(Common),
    /// Exact invariant trajectory; writes invariants.json (and recovered.csv with --samples)
    Exact(Common),
    /// Print the collapse time, limit and singularity type as JSON
    Collapse(Common),
    /// Print the minimal point as JSON
    Minimal(Common),
    /// Spherical portrait for I2(g) or A(3); writes portrait.csv and portrait.svg
    Portrait(Common),
    /// Run the property checks and print a pass/fail table
    Verify(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Euclidean,
    Spherical,
    Focal,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Root-system spec as inline JSON or a path to a JSON file
    #[arg(long)]
    pub spec: Option<String>,
    /// A, B, D or I2
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub g: Option<u32>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long)]
    pub m1: Option<u32>,
    #[arg(long)]
    pub m2: Option<u32>,
    #[arg(long, value_enum, default_value_t = VariantArg::Euclidean)]
    pub variant: VariantArg,
    /// Start angle for I2
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// center, minimal, or comma-separated coordinates (decimals or p/q)
    #[arg(long, allow_hyphen_values = true)]
    pub initial: Option<String>,
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample count for exact, portrait and verify
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(s) | CliError::Runtime(s) => f.write_str(s),
        }
    }
}

impl From<WeylError> for CliError {
    fn from(e: WeylError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Weyl(w) => w.into(),
            FlowError::NotOnSphere(_) | FlowError::WallContact { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<InvariantError> for CliError {
    fn from(e: InvariantError) -> Self {
        match e {
            InvariantError::Weyl(w) => w.into(),
            InvariantError::UnsupportedFamily(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<Rank2Error> for CliError {
    fn from(e: Rank2Error) -> Self {
        match e {
            Rank2Error::Weyl(w) => w.into(),
            Rank2Error::Flow(f) => f.into(),
            Rank2Error::UnsupportedG(_) | Rank2Error::UnequalMultiplicities(_) | Rank2Error::AngleOutOfRange(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Weyl(w) => w.into(),
            AnalysisError::Flow(f) => f.into(),
            AnalysisError::Unsupported(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Parsed and validated run configuration; its JSON form is echoed into every
/// output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub spec: RootSystemSpec,
    pub variant: VariantArg,
    pub initial: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub tol: f64,
    pub t_end: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_args(command: &str, a: &Common) -> Result<Self, CliError> {
        let spec = match &a.spec {
            Some(s) => {
                if a.family.is_some() || a.k.is_some() || a.g.is_some() || a.m.is_some() || a.m1.is_some() || a.m2.is_some() {
                    return Err(CliError::Usage("--spec cannot be combined with --family/--k/--g/--m/--m1/--m2".into()));
                }
                let text = if s.trim_start().starts_with('{') {
                    s.clone()
                } else {
                    fs::read_to_string(s).map_err(|e| CliError::Usage(format!("cannot read spec {s}: {e}")))?
                };
                RootSystemSpec::from_json(&text)?
            }
            None => {
                let fam = a
                    .family
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("either --spec or --family is required".into()))?;
                RootSystemSpec {
                    family: fam.to_ascii_uppercase(),
                    k: a.k,
                    g: a.g,
                    m: a.m,
                    m1: a.m1,
                    m2: a.m2,
                }
            }
        };
        spec.build()?;
        if !(a.tol > 0.0 && a.tol < 1e-2) {
            return Err(CliError::Usage(format!("--tol must lie in (0, 1e-2), got {}", a.tol)));
        }
        if let Some(t) = a.t_end {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Usage(format!("--t-end must be positive, got {t}")));
            }
        }
        if a.theta.is_some() && a.initial.is_some() {
            return Err(CliError::Usage("--theta and --initial are exclusive".into()));
        }
        Ok(Self {
            command: command.into(),
            spec,
            variant: a.variant,
            initial: a.initial.clone().unwrap_or_else(|| if a.theta.is_some() { "theta".into() } else { "center".into() }),
            theta: a.theta,
            tol: a.tol,
            t_end: a.t_end,
            seed: a.seed,
            samples: a.samples,
            out_dir: a.out_dir.clone(),
        })
    }

    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn root_system(&self) -> Result<RootSystem, CliError> {
        Ok(self.spec.build()?)
    }

    fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            tol: self.tol,
            t_end: self.t_end,
        }
    }
}

/// A start point; `exact` holds the rational coordinates when every
/// component was given as an integer or `p/q`.
pub struct Start {
    pub x: DVector<f64>,
    pub exact: Option<Vec<Q>>,
}

fn parse_coords(text: &str) -> Result<(Vec<f64>, Option<Vec<Q>>), CliError> {
    let mut xs = Vec::new();
    let mut qs = Some(Vec::new());
    for tok in text.split(',').map(str::trim) {
        if let Ok(q) = tok.parse::<Q>() {
            xs.push(q_to_f64(&q));
            if let Some(v) = qs.as_mut() {
                v.push(q);
            }
        } else if let Ok(f) = tok.parse::<f64>() {
            if !f.is_finite() {
                return Err(CliError::Usage(format!("non-finite coordinate {tok:?}")));
            }
            xs.push(f);
            qs = None;
        } else {
            return Err(CliError::Usage(format!("cannot parse coordinate {tok:?}")));
        }
    }
    Ok((xs, qs))
}

pub fn resolve_start(rs: &RootSystem, cfg: &RunConfig) -> Result<Start, CliError> {
    if let Some(th) = cfg.theta {
        if !matches!(rs.family(), Family::I2(_)) {
            return Err(CliError::Usage("--theta applies to family I2 only".into()));
        }
        return Ok(Start {
            x: DVector::from_vec(vec![th.cos(), th.sin()]),
            exact: None,
        });
    }
    match cfg.initial.as_str() {
        "center" => Ok(Start {
            x: canonical_chamber_center(rs).coords,
            exact: None,
        }),
        "minimal" => Ok(Start {
            x: analysis::find_minimal_point(rs)?.point(),
            exact: None,
        }),
        text => {
            let (xs, qs) = parse_coords(text)?;
            let x = DVector::from_vec(xs);
            rs.check_dim(&x)?;
            Ok(Start { x, exact: qs })
        }
    }
}

fn variant_for(rs: &RootSystem, cfg: &RunConfig, x0: &DVector<f64>) -> Result<Variant, CliError> {
    Ok(match cfg.variant {
        VariantArg::Euclidean => Variant::Euclidean,
        VariantArg::Spherical => Variant::Spherical,
        VariantArg::Focal => Variant::Focal(stratum_of(rs, x0, default_zero_tol(x0))?.vanishing),
    })
}

/// Result of a command: text for stdout and files to write.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub files: OutputSet,
    pub code: i32,
}

pub fn run_command(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Flow(a) => cmd_flow(&RunConfig::from_args("flow", a)?),
        Command::Exact(a) => cmd_exact(&RunConfig::from_args("exact", a)?),
        Command::Collapse(a) => cmd_collapse(&RunConfig::from_args("collapse", a)?),
        Command::Minimal(a) => cmd_minimal(&RunConfig::from_args("minimal", a)?),
        Command::Portrait(a) => cmd_portrait(&RunConfig::from_args("portrait", a)?),
        Command::Verify(a) => cmd_verify(&RunConfig::from_args("verify", a)?),
    }
}

fn out_dir(cmd: &Command) -> PathBuf {
    match cmd {
        Command::Flow(a) | Command::Exact(a) | Command::Collapse(a) | Command::Minimal(a) | Command::Portrait(a) | Command::Verify(a) => {
            a.out_dir.clone()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ISOFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("ISOFLOW_THREADS must be a positive integer, got {v:?}")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs the command and writes its files; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.code();
    }
    match run_command(&cli.command) {
        Ok(out) => {
            if let Err(e) = out.files.commit(&out_dir(&cli.command)) {
                eprintln!("error: writing output: {e}");
                return 2;
            }
            print!("{}", out.stdout);
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn vec_json(x: &DVector<f64>) -> Value {
    json!(x.iter().copied().collect::<Vec<_>>())
}

pub fn cmd_flow(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rs = cfg.root_system()?;
    let start = resolve_start(&rs, cfg)?;
    let variant = variant_for(&rs, cfg, &start.x)?;
    let traj = flow::integrate(&rs, &start.x, variant, &cfg.flow_options())?;
    let echo = cfg.echo();
    let report = match &traj.collapse {
        Some(c) => serde_json::to_value(c).expect("report serializes"),
        None => json!({ "collapsed": false, "t_last": traj.t_last() }),
    };
    let mut files = OutputSet::new();
    files.add("trajectory.csv", io::trajectory_csv(&traj, &echo));
    files.add("collapse.json", json_text(&stamp(report, &echo)));
    let stdout = match &traj.collapse {
        Some(c) => format!("collapsed at T = {} ({} samples)\n", fmt_f64(c.t_collapse), traj.samples.len()),
        None => format!("reached t = {} without collapse ({} samples)\n", fmt_f64(traj.t_last()), traj.samples.len()),
    };
    Ok(Outcome { stdout, files, code: 0 })
}

pub fn cmd_exact(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rs = cfg.root_system()?;
    let start = resolve_start(&rs, cfg)?;
    let spherical = match cfg.variant {
        VariantArg::Euclidean => false,
        VariantArg::Spherical => true,
        VariantArg::Focal => return Err(CliError::Usage("exact trajectories are available for the euclidean and spherical variants".into())),
    };
    let traj = match &start.exact {
        Some(q) => invariants::exact_trajectory_rational(&rs, q, spherical, true)?,
        None => invariants::exact_trajectory(&rs, &start.x, spherical)?,
    };
    let mut value = traj.to_json_value();
    let t_collapse = if spherical {
        let t = flow::integrate(&rs, &start.x, Variant::Spherical, &cfg.flow_options())?;
        t.collapse.map(|c| c.t_collapse)
    } else {
        let c = match &start.exact {
            Some(q) => invariants::exact_collapse_time_rational(&rs, q)?,
            None => invariants::exact_collapse_time(&rs, &start.x)?,
        };
        value["collapse_bracket"] = json!([c.bracket.0, c.bracket.1]);
        value["x_limit"] = vec_json(&c.x_limit.coords);
        value["stratum"] = json!(c.x_limit.stratum);
        Some(c.t_collapse)
    };
    value["T"] = json!(t_collapse);
    let echo = cfg.echo();
    let mut files = OutputSet::new();
    files.add("invariants.json", json_text(&stamp(value, &echo)));
    if let Some(n) = cfg.samples {
        let t_stop = cfg
            .t_end
            .or(t_collapse.map(|t| 0.9 * t))
            .ok_or_else(|| CliError::Runtime("no collapse time; pass --t-end".into()))?;
        let k = rs.dim();
        let mut csv = io::csv_preamble(&echo);
        csv.push('t');
        for i in 1..=k {
            csv.push_str(&format!(",x{i}"));
        }
        for i in 1..=traj.degrees.len() {
            csv.push_str(&format!(",y{i}"));
        }
        csv.push('\n');
        for i in 0..=n.max(1) {
            let t = t_stop * i as f64 / n.max(1) as f64;
            let y = traj.eval(t);
            let p = invariants::recover_point(&rs, &y)?;
            csv.push_str(&fmt_f64(t));
            for v in p.coords.iter().chain(y.iter()) {
                csv.push(',');
                csv.push_str(&fmt_f64(*v));
            }
            csv.push('\n');
        }
        files.add("recovered.csv", csv);
    }
    let stdout = match t_collapse {
        Some(t) => format!("T = {}\n", fmt_f64(t)),
        None => "no collapse\n".into(),
    };
    Ok(Outcome { stdout, files, code: 0 })
}

pub fn cmd_collapse(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rs = cfg.root_system()?;
    let start = resolve_start(&rs, cfg)?;
    let variant = variant_for(&rs, cfg, &start.x)?;
    let traj = flow::integrate(&rs, &start.x, variant.clone(), &cfg.flow_options())?;
    let report = traj
        .collapse
        .as_ref()
        .ok_or_else(|| CliError::Runtime(format!("no collapse before t = {}", traj.t_last())))?;
    let class = analysis::classify_singularity(&rs, report);
    let exact = if matches!(variant, Variant::Euclidean) {
        let r = match &start.exact {
            Some(q) => invariants::exact_collapse_time_rational(&rs, q),
            None => invariants::exact_collapse_time(&rs, &start.x),
        };
        r.ok()
    } else {
        None
    };
    let (t, method, x_limit, stratum) = match &exact {
        Some(e) => (e.t_collapse, "exact", vec_json(&e.x_limit.coords), json!(e.x_limit.stratum)),
        None => (report.t_collapse, "numeric", json!(report.x_limit), json!(report.active_walls)),
    };
    let value = json!({
        "T": t,
        "method": method,
        "T_numeric": report.t_collapse,
        "x_limit": x_limit,
        "stratum": stratum,
        "m": class.fiber_dim,
        "fiber_type": class.fiber_type,
        "top_stratum": class.top_stratum,
        "typeI": class.type_i,
        "rate_estimate": report.rate_estimate,
        "typeI_estimate": report.type_i_estimate,
        "rate_ok": class.rate_ok,
        "typeI_ok": class.type_i_ok,
        "heuristic_extrapolation": report.heuristic_extrapolation,
    });
    Ok(Outcome {
        stdout: json_text(&stamp(value, &cfg.echo())),
        files: OutputSet::new(),
        code: 0,
    })
}

pub fn cmd_minimal(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rs = cfg.root_system()?;
    let mp = analysis::find_minimal_point(&rs)?;
    let mut value = serde_json::to_value(&mp).expect("minimal point serializes");
    if let Family::I2(_) = rs.family() {
        value["theta"] = json!(mp.direction[1].atan2(mp.direction[0]));
    }
    Ok(Outcome {
        stdout: json_text(&stamp(value, &cfg.echo())),
        files: OutputSet::new(),
        code: 0,
    })
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const FILL: [&str; 3] = ["#fbe3e3", "#e0ecf7", "#e2f2e0"];

fn wall_color(walls: &[usize], w: Option<usize>) -> &'static str {
    match w.and_then(|w| walls.iter().position(|&x| x == w)) {
        Some(i) => PALETTE[i % PALETTE.len()],
        None => "#7f7f7f",
    }
}

pub fn cmd_portrait(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rs = cfg.root_system()?;
    match rs.family() {
        Family::A(3) => {
            let m = match rs.multiplicities() {
                crate::weyl::Multiplicities::Uniform(m) => m,
                crate::weyl::Multiplicities::Two { m1, .. } => m1,
            };
            portrait_a3(cfg, &rs, m)
        }
        Family::I2(g) => portrait_rank2(cfg, &rs, g as u32),
        f => Err(CliError::Usage(format!("portraits are available for I2(g) and A(3), not {f}"))),
    }
}

fn portrait_a3(cfg: &RunConfig, rs: &RootSystem, m: u32) -> Result<Outcome, CliError> {
    let p = analysis::a3_portrait(m, cfg.samples.unwrap_or(300), cfg.seed)?;
    let echo = cfg.echo();
    let verts: Vec<DVector<f64>> = p.vertices.iter().map(|v| DVector::from_column_slice(v)).collect();
    let basis = nalgebra::DMatrix::from_columns(&verts);
    let svd = basis.clone().svd(true, true);

    let mut csv = io::csv_preamble(&echo);
    csv.push_str("b1,b2,b3,u,v,region,predicted_wall,limit_wall,T\n");
    for s in &p.starts {
        let x = DVector::from_column_slice(&s.x0);
        let b = svd.solve(&x, 1e-14).expect("vertex basis has full rank");
        let b = &b / b.sum();
        let wall = |w: Option<usize>| w.map(|w| w.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(b[0]),
            fmt_f64(b[1]),
            fmt_f64(b[2]),
            fmt_f64(s.chart.0),
            fmt_f64(s.chart.1),
            s.region.label(),
            wall(s.predicted_wall),
            wall(s.observed_wall),
            fmt_f64(s.t_collapse)
        ));
    }

    // sampled flow lines
    let lines: Vec<Vec<(f64, f64)>> = p
        .starts
        .iter()
        .take(24)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|s| -> Result<Vec<(f64, f64)>, CliError> {
            let x = DVector::from_column_slice(&s.x0);
            let traj = flow::integrate(rs, &x, Variant::Spherical, &FlowOptions::default())?;
            Ok(traj.samples.iter().map(|q| p.to_chart(q.x.as_slice())).collect())
        })
        .collect::<Result<_, _>>()?;

    let corners: Vec<(f64, f64)> = p.vertices.iter().map(|v| p.to_chart(v)).collect();
    let size = 640.0;
    let fr = Frame::fit(&corners, size, 40.0);
    let mut svg = Svg::new(size, size);
    svg.comment(&format!("config: {echo}"));
    svg.comment(io::VERSION);
    for k in 1..=3 {
        let poly: Vec<(f64, f64)> = p.region_polygon(k).into_iter().map(|q| fr.map(q)).collect();
        svg.polygon(&poly, FILL[k - 1], "none", 0.0);
    }
    let outline: Vec<(f64, f64)> = corners.iter().map(|&c| fr.map(c)).collect();
    svg.polygon(&outline, "none", "black", 1.5);
    for l in &lines {
        let pts: Vec<(f64, f64)> = l.iter().map(|&q| fr.map(q)).collect();
        svg.polyline(&pts, "#999999", 0.6);
    }
    for s in &p.separatrices {
        let pts: Vec<(f64, f64)> = s.points.iter().map(|x| fr.map(p.to_chart(x))).collect();
        svg.polyline(&pts, "black", 1.2);
    }
    for s in &p.starts {
        svg.circle(fr.map(s.chart), 2.0, wall_color(&p.region_walls, s.observed_wall));
    }
    svg.circle(fr.map((0.0, 0.0)), 4.0, "black");
    svg.text(fr.map((0.0, 0.0)), 12.0, " p0");
    for (i, &c) in corners.iter().enumerate() {
        svg.text(fr.map(c), 12.0, &format!("p{} ({})", i + 1, p.vertex_fibers[i]));
    }

    let mut files = OutputSet::new();
    files.add("portrait.csv", csv);
    files.add("portrait.svg", svg.finish());
    let stdout = format!("{} starts, {:.1}% matched their predicted wall\n", p.starts.len(), 100.0 * p.agreement());
    Ok(Outcome { stdout, files, code: 0 })
}

fn portrait_rank2(cfg: &RunConfig, rs: &RootSystem, g: u32) -> Result<Outcome, CliError> {
    let (m1, m2) = match rs.multiplicities() {
        crate::weyl::Multiplicities::Uniform(m) => (m, m),
        crate::weyl::Multiplicities::Two { m1, m2 } => (m1, m2),
    };
    let portrait = rank2::spherical_phase_portrait(g, m1, m2)?;
    let arc = std::f64::consts::PI / g as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut thetas: Vec<f64> = (0..cfg.samples.unwrap_or(60)).map(|_| rng.random_range(0.0..arc)).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.retain(|&t| t > 1e-9 && t < arc - 1e-9);
    let results: Vec<(Option<usize>, f64)> = thetas
        .par_iter()
        .map(|&th| -> Result<(Option<usize>, f64), CliError> {
            let x = DVector::from_vec(vec![th.cos(), th.sin()]);
            let traj = flow::integrate(rs, &x, Variant::Spherical, &FlowOptions::default())?;
            Ok(match traj.collapse {
                Some(c) => (if c.top_stratum { c.active_walls.first().copied() } else { None }, c.t_collapse),
                None => (None, f64::NAN),
            })
        })
        .collect::<Result<_, _>>()?;
    let echo = cfg.echo();
    let mut csv = io::csv_preamble(&echo);
    csv.push_str("theta,region,limit_wall,T\n");
    for (th, (w, t)) in thetas.iter().zip(&results) {
        let region = if *th < portrait.p0 { "below" } else { "above" };
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(*th),
            region,
            w.map(|w| w.to_string()).unwrap_or_default(),
            fmt_f64(*t)
        ));
    }

    // Euclidean flow lines in the chamber sector
    let starts: Vec<f64> = (1..12).map(|i| arc * i as f64 / 12.0).collect();
    let lines: Vec<Vec<(f64, f64)>> = starts
        .par_iter()
        .map(|&th| -> Result<Vec<(f64, f64)>, CliError> {
            let x = DVector::from_vec(vec![th.cos(), th.sin()]);
            let traj = flow::integrate(rs, &x, Variant::Euclidean, &FlowOptions::default())?;
            Ok(traj.samples.iter().map(|s| (s.x[0], s.x[1])).collect())
        })
        .collect::<Result<_, _>>()?;

    let arc_pts: Vec<(f64, f64)> = (0..=90).map(|i| arc * i as f64 / 90.0).map(|t| (t.cos(), t.sin())).collect();
    let mut sector = vec![(0.0, 0.0)];
    sector.extend(arc_pts.iter().copied());
    let size = 640.0;
    let fr = Frame::fit(&sector, size, 40.0);
    let mut svg = Svg::new(size, size);
    svg.comment(&format!("config: {echo}"));
    svg.comment(io::VERSION);
    let sec: Vec<(f64, f64)> = sector.iter().map(|&q| fr.map(q)).collect();
    svg.polygon(&sec, FILL[1], "black", 1.5);
    for l in &lines {
        let pts: Vec<(f64, f64)> = l.iter().map(|&q| fr.map(q)).collect();
        svg.polyline(&pts, "#999999", 0.8);
    }
    for o in &portrait.orbits {
        let pts: Vec<(f64, f64)> = o.samples.iter().map(|&(_, th)| fr.map((th.cos(), th.sin()))).collect();
        svg.polyline(&pts, "black", 2.0);
    }
    let walls: Vec<usize> = rs.simple_roots().to_vec();
    for (th, (w, _)) in thetas.iter().zip(&results) {
        svg.circle(fr.map((1.02 * th.cos(), 1.02 * th.sin())), 3.0, wall_color(&walls, *w));
    }
    let p0 = (portrait.p0.cos(), portrait.p0.sin());
    svg.circle(fr.map(p0), 5.0, "black");
    svg.text(fr.map((1.05 * p0.0, 1.05 * p0.1)), 12.0, "p0");
    let mut files = OutputSet::new();
    files.add("portrait.csv", csv);
    files.add("portrait.svg", svg.finish());
    let stdout = format!("{} starts, p0 at theta = {}\n", thetas.len(), fmt_f64(portrait.p0));
    Ok(Outcome { stdout, files, code: 0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: Option<bool>,
}

fn check(name: &str, value: f64, bound: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound,
        pass: Some(value <= bound),
    }
}

fn skipped(name: &str) -> Check {
    Check {
        name: name.into(),
        value: f64::NAN,
        bound: f64::NAN,
        pass: None,
    }
}

/// Central-difference derivative of the invariants along the Euclidean field.
pub fn invariant_derivative_oracle(rs: &RootSystem, x: &DVector<f64>) -> Result<Vec<f64>, FlowError> {
    let v = flow::mcv_euclidean(rs, x)?;
    let h = 1e-5 * x.norm() / v.norm().max(1e-300);
    let yp = invariants::eval_invariants(rs, &(x + &v * h));
    let ym = invariants::eval_invariants(rs, &(x - &v * h));
    Ok(yp.iter().zip(&ym).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// The property suites at desk scale for one root system.
pub fn verify_suite(rs: &RootSystem, seed: u64, samples: usize) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<DVector<f64>> = (0..samples).map(|_| rs.random_unit_chamber_point(&mut rng)).collect();
    let n = rs.n() as f64;
    let opts = FlowOptions::default();
    let trajs: Vec<flow::Trajectory> = starts
        .par_iter()
        .map(|x| flow::integrate(rs, x, Variant::Euclidean, &opts))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();

    let radial = trajs
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| (s.norm_sq - (1.0 - 2.0 * n * s.t)).abs()))
        .fold(0.0, f64::max);
    out.push(check("radial identity", radial, 1e-7));

    let exact: Option<Vec<f64>> = trajs.iter().map(|t| exact_time(rs, &t.x0)).collect();
    match exact {
        Some(te) => {
            let t_err = trajs
                .iter()
                .zip(&te)
                .map(|(t, e)| {
                    let c = t.collapse.as_ref().map(|c| c.t_collapse).unwrap_or(f64::NAN);
                    ((c - e) / e).abs()
                })
                .fold(0.0, f64::max);
            out.push(check("collapse time, numeric vs exact", t_err, 1e-4));
        }
        None => out.push(skipped("collapse time, numeric vs exact")),
    }

    match invariants::exact_recursion(rs) {
        Ok(rec) => {
            let mut worst: f64 = 0.0;
            for x in &starts {
                let y = invariants::eval_invariants(rs, x);
                let want = invariant_derivative_oracle(rs, x)?;
                let got = rec.eval(&y);
                for (r, (a, b)) in got.iter().zip(&want).enumerate() {
                    let scale = b.abs().max(x.norm().powi(rec.degrees[r] as i32 - 2));
                    worst = worst.max((a - b).abs() / scale);
                }
            }
            out.push(check("recursion vs derivative oracle", worst, 1e-6));

            let mut worst: f64 = 0.0;
            for (x, t) in starts.iter().zip(&trajs) {
                let it = invariants::exact_trajectory(rs, x, false)?;
                let t_stop = 0.9 * t.collapse.as_ref().map(|c| c.t_collapse).unwrap_or(t.t_last());
                for s in t.samples.iter().filter(|s| s.t <= t_stop) {
                    let a = invariants::eval_invariants(rs, &s.x);
                    let b = it.eval(s.t);
                    for (r, (p, q)) in a.iter().zip(&b).enumerate() {
                        let scale = q.abs().max(s.norm_sq.sqrt().powi(it.degrees[r] as i32));
                        worst = worst.max((p - q).abs() / scale);
                    }
                }
            }
            out.push(check("exact vs numeric invariants", worst, 1e-6));

            let mut worst: f64 = 0.0;
            for x in &starts {
                let y = invariants::eval_invariants(rs, x);
                let p = invariants::recover_point(rs, &y)?;
                worst = worst.max((&p.coords - x).amax());
            }
            out.push(check("invariant round trip", worst, 1e-9));
        }
        Err(_) => {
            out.push(skipped("recursion vs derivative oracle"));
            out.push(skipped("exact vs numeric invariants"));
            out.push(skipped("invariant round trip"));
        }
    }

    let mp = analysis::find_minimal_point(rs)?;
    out.push(check("minimal point residual", mp.residual, 1e-10));

    let sep = analysis::separation_check(rs, &starts[..starts.len().min(4)], Variant::Euclidean, &SeparationTolerances::default())?;
    out.push(check(
        "euclidean separation failures",
        sep.pairs.iter().filter(|p| !p.pass).count() as f64,
        0.0,
    ));
    let sep = analysis::separation_check(rs, &starts[..starts.len().min(4)], Variant::Spherical, &SeparationTolerances::default())?;
    out.push(check(
        "spherical separation failures",
        sep.pairs.iter().filter(|p| !p.pass).count() as f64,
        0.0,
    ));
    Ok(out)
}

fn exact_time(rs: &RootSystem, x: &DVector<f64>) -> Option<f64> {
    invariants::exact_collapse_time(rs, x).ok().map(|c| c.t_collapse)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rs = cfg.root_system()?;
    let checks = verify_suite(&rs, cfg.seed, cfg.samples.unwrap_or(5).max(2))?;
    let mut stdout = format!("# {} verify, seed {}\n", rs.family(), cfg.seed);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let verdict = match c.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        stdout.push_str(&format!("{verdict}  {:<width$}  {:.3e} (bound {:.1e})\n", c.name, c.value, c.bound));
    }
    let ok = checks.iter().all(|c| c.pass != Some(false));
    stdout.push_str(if ok { "all checks passed\n" } else { "some checks failed\n" });
    Ok(Outcome {
        stdout,
        files: OutputSet::new(),
        code: if ok { 0 } else { 2 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn common(args: &[&str]) -> Common {
        let mut v = vec!["isoflow", "flow"];
        v.extend_from_slice(args);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Flow(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn spec_flags_and_json_agree() {
        let a = RunConfig::from_args("flow", &common(&["--family", "B", "--k", "2", "--m1", "1", "--m2", "2"])).unwrap();
        let b = RunConfig::from_args("flow", &common(&["--spec", r#"{"family":"B","k":2,"m1":1,"m2":2}"#])).unwrap();
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.spec.to_json(), r#"{"family":"B","k":2,"m1":1,"m2":2}"#);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        for args in [
            &["--spec", "{\"family\":\"Q\"}"][..],
            &["--family", "A", "--k", "2"],
            &["--family", "A", "--k", "2", "--m", "1", "--theta", "0.1"],
            &["--family", "A", "--k", "2", "--m", "1", "--tol=-1"],
        ] {
            let r = RunConfig::from_args("flow", &common(args)).and_then(|c| cmd_flow(&c));
            assert_eq!(r.unwrap_err().code(), 1, "{args:?}");
        }
    }

    #[test]
    fn rational_coordinates() {
        let (x, q) = parse_coords("-1/2, 0, 1/2").unwrap();
        assert_eq!(x, vec![-0.5, 0.0, 0.5]);
        assert!(q.unwrap()[1].is_zero());
        let (_, q) = parse_coords("0.1,2").unwrap();
        assert!(q.is_none());
        assert!(parse_coords("a,b").is_err());
    }

    #[test]
    fn derivative_oracle_matches_recursion() {
        let rs = crate::weyl::build_root_system(Family::B(3), crate::weyl::Multiplicities::Two { m1: 2, m2: 1 }).unwrap();
        let x = canonical_chamber_center(&rs).coords;
        let rec = invariants::exact_recursion(&rs).unwrap();
        let got = rec.eval(&invariants::eval_invariants(&rs, &x));
        let want = invariant_derivative_oracle(&rs, &x).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-7 * b.abs().max(1.0));
        }
    }
}
