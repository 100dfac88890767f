//! Command-line front end: single evaluations, trajectories, scans and
//! compensation runs, written as CSV or JSON.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numerical failures.

pub mod parse;
pub mod table;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dualdress::applications::{
    acceleration, compensate, magic_point, refine_max, scan2d, Axis3, CompensationProblem,
    CompensationSolution, MagicSearch, Param, Quantity, ScanGrid,
};
use dualdress::dynamics::{
    cs_detection, first_order_precession, landre_detection, trajectory_analytic, trajectory_exact,
};
use dualdress::floquet::{principal_values, response_tensors, solve_floquet, PrincipalKind};
use dualdress::perturbation::{Perturbation, QCoefficients};
use dualdress::propagator::{DriveConfig, HarmonicTerm, IntegratorSettings, StaticField, Waveform};
use dualdress::spinmath::{Mat3, Vec3};

use parse::{parse_angle, parse_f64, parse_grid, parse_harmonic, parse_range, parse_vec3};
use table::{fmt_f64, Cell, Table};

#[derive(Parser, Debug)]
#[command(
    name = "dualdress",
    version,
    about = "Floquet effective fields of a spin one-half under bichromatic dressing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Effective field, eigenphases, Larmor frequency and axis for one configuration.
    Floquet(Base),
    /// First- and second-order perturbative fields, tensors and Q coefficients.
    Perturb(Base),
    /// Numerical g and f tensors with the principal values of g.
    Tensors(Base),
    /// Spin expectation values from the exact propagator and/or the analytic form.
    Traj(TrajArgs),
    /// Single dressing with a static y field: Larmor frequency, axis and sidebands.
    Landre(LandreArgs),
    /// p = 1 dual dressing detection: Larmor frequency, A_x, DC offset, sidebands.
    Cs(Base),
    /// A quantity over a two-dimensional parameter grid.
    Scan(ScanArgs),
    /// Larmor acceleration, optionally refined over a grid.
    Accelerate(AccelerateArgs),
    /// Null effective-field components with the free harmonic amplitudes.
    Compensate(CompensateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DriveArgs {
    /// Strong x-drive amplitude Ω_x.
    #[arg(long, default_value = "0", value_parser = parse_f64)]
    pub omega_x: f64,
    /// y-drive amplitude Ω_y.
    #[arg(long, default_value = "0", value_parser = parse_f64)]
    pub omega_y: f64,
    /// Harmonic p of the y drive.
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    /// Relative phase Φ in radians (`pi/2` style accepted).
    #[arg(long, default_value = "0", value_parser = parse_angle, allow_hyphen_values = true)]
    pub phi: f64,
    /// Common phase shift ψ, used with --shifted.
    #[arg(long, default_value = "0", value_parser = parse_angle, allow_hyphen_values = true)]
    pub psi: f64,
    /// Shift both drives by ψ.
    #[arg(long)]
    pub shifted: bool,
    /// Extra y harmonic `order:amplitude[:phase]`; repeatable.
    #[arg(long = "harmonic", value_parser = parse_harmonic, allow_hyphen_values = true)]
    pub harmonics: Vec<HarmonicTerm>,
    /// Static field ω₀ as `x,y,z`.
    #[arg(long, default_value = "0,0,0", value_parser = parse_vec3, allow_hyphen_values = true)]
    pub b0: Vec3,
    #[arg(long, default_value_t = 1e-11)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-13)]
    pub abs_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// `key = value` file mirroring the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Base {
    #[command(flatten)]
    pub drive: DriveArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Analytic,
    Both,
}

#[derive(Args, Debug, Clone)]
pub struct TrajArgs {
    #[command(flatten)]
    pub base: Base,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    #[arg(long, default_value = "100", value_parser = parse_f64)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1001)]
    pub samples: usize,
    /// Initial Bloch vector; the analytic form assumes `1,0,0`.
    #[arg(long, default_value = "1,0,0", value_parser = parse_vec3, allow_hyphen_values = true)]
    pub initial: Vec3,
}

#[derive(Args, Debug, Clone)]
pub struct LandreArgs {
    #[command(flatten)]
    pub base: Base,
    #[arg(long, default_value = "200", value_parser = parse_f64)]
    pub t_end: f64,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[command(flatten)]
    pub base: Base,
    /// `param:lo:hi:n,param:lo:hi:n`, params among omega_x, omega_y, phi, psi, b0_x, b0_y, b0_z.
    #[arg(long)]
    pub grid: String,
    /// h_x, h_y, h_z, larmor, acceleration or principal_values_kind.
    #[arg(long, default_value = "larmor")]
    pub quantity: String,
}

#[derive(Args, Debug, Clone)]
pub struct AccelerateArgs {
    #[command(flatten)]
    pub base: Base,
    /// Scan grid whose maximum is refined.
    #[arg(long)]
    pub grid: Option<String>,
    /// Restrict the refinement to `lo1:hi1,lo2:hi2`.
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct CompensateArgs {
    #[command(flatten)]
    pub base: Base,
    /// Indices of the harmonics whose amplitudes are solved for; all by default.
    #[arg(long, value_delimiter = ',')]
    pub free: Vec<usize>,
    /// Components to null, e.g. `y,z`.
    #[arg(long, default_value = "y,z")]
    pub targets: String,
    /// Also minimize the sensitivity to Ω_x.
    #[arg(long)]
    pub magic: bool,
    #[arg(long, default_value = "2.5:3.2")]
    pub bracket: String,
    /// Off-magic Ω_x setting the sensitivity scale.
    #[arg(long, default_value = "2", value_parser = parse_f64)]
    pub reference: f64,
    #[arg(long, default_value_t = 15)]
    pub samples: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<dualdress::Error> for Failure {
    fn from(e: dualdress::Error) -> Self {
        Failure::Numeric(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl DriveArgs {
    fn drive(&self) -> Outcome<DriveConfig> {
        let mut cfg = DriveConfig {
            omega_x_amp: self.omega_x,
            omega_y_amp: self.omega_y,
            harmonic_p: self.p,
            phase_phi: self.phi,
            phase_psi: self.psi,
            waveform: Waveform::CosinePair,
        };
        match (self.shifted, self.harmonics.is_empty()) {
            (true, false) => return Err(usage("--shifted cannot be combined with --harmonic")),
            (true, true) => cfg.waveform = Waveform::ShiftedCosinePair,
            (false, false) => cfg = cfg.with_harmonics(self.harmonics.clone()),
            (false, true) => {}
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    fn field(&self) -> StaticField {
        StaticField::from(self.b0)
    }

    fn settings(&self) -> Outcome<IntegratorSettings> {
        let s = IntegratorSettings {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            ..Default::default()
        };
        s.validate().map_err(|e| usage(e.to_string()))?;
        Ok(s)
    }

    fn echo(&self, t: &mut Table) {
        t.meta("omega_x", fmt_f64(self.omega_x))
            .meta("omega_y", fmt_f64(self.omega_y))
            .meta("p", self.p)
            .meta("phi", fmt_f64(self.phi))
            .meta("psi", fmt_f64(self.psi))
            .meta("shifted", self.shifted);
        for (k, h) in self.harmonics.iter().enumerate() {
            t.meta(
                &format!("harmonic.{k}"),
                format!("{}:{}:{}", h.order, fmt_f64(h.amplitude), fmt_f64(h.phase)),
            );
        }
        t.meta(
            "b0",
            format!("{},{},{}", fmt_f64(self.b0.x), fmt_f64(self.b0.y), fmt_f64(self.b0.z)),
        )
        .meta("rel_tol", fmt_f64(self.rel_tol))
        .meta("abs_tol", fmt_f64(self.abs_tol));
    }
}

fn header(command: &str, drive: &DriveArgs, columns: &[&str]) -> Table {
    let mut t = Table::new(columns);
    t.meta("tool", format!("dualdress {}", env!("CARGO_PKG_VERSION")))
        .meta("command", command);
    drive.echo(&mut t);
    t
}

fn vec_entries(t: &mut Table, name: &str, v: Vec3) {
    for (c, x) in ["x", "y", "z"].iter().zip([v.x, v.y, v.z]) {
        t.entry(&format!("{name}_{c}"), x);
    }
}

fn mat_entries(t: &mut Table, name: &str, m: &Mat3) {
    let axes = ["x", "y", "z"];
    for i in 0..3 {
        for j in 0..3 {
            t.entry(&format!("{name}_{}{}", axes[i], axes[j]), m[i][j]);
        }
    }
}

fn tensor_entries(t: &mut Table, name: &str, f: &[[[f64; 3]; 3]; 3]) {
    let axes = ["x", "y", "z"];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                t.entry(&format!("{name}_{}{}{}", axes[i], axes[j], axes[k]), f[i][j][k]);
            }
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn linspace(t_end: f64, samples: usize) -> Outcome<Vec<f64>> {
    if samples < 2 || !(t_end > 0.0) {
        return Err(usage("need --samples >= 2 and a positive --t-end"));
    }
    Ok((0..samples)
        .map(|k| t_end * k as f64 / (samples - 1) as f64)
        .collect())
}

fn floquet_cmd(b: &Base) -> Outcome<Table> {
    let d = &b.drive;
    let sol = solve_floquet(&d.drive()?, &d.field(), &d.settings()?)?;
    let mut t = header("floquet", d, &["name", "value"]);
    vec_entries(&mut t, "h", sol.h);
    t.entry("lambda_plus", sol.lambda_plus);
    t.entry("lambda_minus", sol.lambda_minus);
    t.entry("larmor", sol.larmor);
    vec_entries(&mut t, "u", sol.u.unwrap_or(Vec3::new(f64::NAN, f64::NAN, f64::NAN)));
    t.entry("degenerate", flag(sol.degenerate));
    Ok(t)
}

fn perturb_cmd(b: &Base) -> Outcome<Table> {
    let d = &b.drive;
    let pert = Perturbation::new(&d.drive()?)?;
    let field = d.field();
    let first = pert.first_order(&field);
    let second = pert.second_order(&field);
    let mut t = header("perturb", d, &["name", "value"]);
    vec_entries(&mut t, "hs1", first.hs1);
    vec_entries(&mut t, "h1", first.h1);
    mat_entries(&mut t, "g1", &first.g1);
    vec_entries(&mut t, "hs2", second.hs2);
    vec_entries(&mut t, "h2", second.h2);
    mat_entries(&mut t, "g2", &second.g2);
    tensor_entries(&mut t, "f2", &second.f2);
    vec_entries(&mut t, "h", pert.field(&field));
    for (name, v) in QCoefficients::NAMES.iter().zip(pert.q().values()) {
        t.entry(name, v);
    }
    Ok(t)
}

fn tensors_cmd(b: &Base) -> Outcome<Table> {
    let d = &b.drive;
    let r = response_tensors(&d.drive()?, &d.settings()?)?;
    let pv = principal_values(&r.g);
    let mut t = header("tensors", d, &["name", "value"]);
    vec_entries(&mut t, "hs", r.h_s);
    mat_entries(&mut t, "g", &r.g);
    tensor_entries(&mut t, "f", &r.f);
    for (k, v) in pv.values.iter().enumerate() {
        t.entry(&format!("pv{k}_re"), v.re);
        t.entry(&format!("pv{k}_im"), v.im);
    }
    t.entry("kind", flag(pv.kind == PrincipalKind::OneRealOnePair));
    t.entry("eta0", pv.eta0.unwrap_or(f64::NAN));
    Ok(t)
}

fn traj_cmd(a: &TrajArgs) -> Outcome<Table> {
    let d = &a.base.drive;
    let (cfg, field) = (d.drive()?, d.field());
    let taus = linspace(a.t_end, a.samples)?;
    let analytic = a.method != Method::Exact;
    if analytic && a.initial != Vec3::X {
        return Err(usage("the analytic trajectory starts from --initial 1,0,0"));
    }
    let mut columns = vec!["tau"];
    let exact = match a.method {
        Method::Analytic => None,
        _ => {
            columns.extend(["sx", "sy", "sz"]);
            Some(trajectory_exact(&cfg, &field, a.initial, &taus, &d.settings()?)?)
        }
    };
    let approx = if analytic {
        columns.extend(["sx_analytic", "sy_analytic", "sz_analytic"]);
        let (larmor, u) = first_order_precession(&cfg, &field)?;
        Some((larmor, trajectory_analytic(&cfg, larmor, u, &taus)?))
    } else {
        None
    };
    let mut t = header("traj", d, &columns);
    t.meta("method", format!("{:?}", a.method).to_lowercase())
        .meta("initial", format!("{},{},{}", fmt_f64(a.initial.x), fmt_f64(a.initial.y), fmt_f64(a.initial.z)));
    if let Some((larmor, _)) = &approx {
        t.meta("larmor_first_order", fmt_f64(*larmor));
    }
    for (k, &tau) in taus.iter().enumerate() {
        let mut row: Vec<Cell> = vec![tau.into()];
        if let Some(e) = &exact {
            row.extend([e.sx[k].into(), e.sy[k].into(), e.sz[k].into()]);
        }
        if let Some((_, an)) = &approx {
            row.extend([an.sx[k].into(), an.sy[k].into(), an.sz[k].into()]);
        }
        t.push(row);
    }
    Ok(t)
}

fn landre_cmd(a: &LandreArgs) -> Outcome<Table> {
    let d = &a.base.drive;
    let taus = linspace(a.t_end, a.samples)?;
    let r = landre_detection(d.omega_x, d.b0.y, d.psi, &taus)?;
    let mut t = header("landre", d, &["name", "value"]);
    t.meta("t_end", fmt_f64(a.t_end)).meta("samples", a.samples);
    t.entry("larmor", r.larmor);
    vec_entries(&mut t, "u", r.u);
    for (k, v) in r.sidebands_y.iter().enumerate() {
        t.entry(&format!("sideband_y_{k}"), *v);
    }
    for (k, v) in r.sidebands_z.iter().enumerate() {
        t.entry(&format!("sideband_z_{k}"), *v);
    }
    Ok(t)
}

fn cs_cmd(b: &Base) -> Outcome<Table> {
    let d = &b.drive;
    let r = cs_detection(&d.drive()?, &d.field())?;
    let mut t = header("cs", d, &["name", "value"]);
    t.entry("larmor_1", r.larmor_1);
    vec_entries(&mut t, "u", r.u);
    t.entry("a_x", r.a_x);
    t.entry("dc_offset", r.dc_offset);
    for (k, v) in r.sideband_amplitudes.iter().enumerate() {
        t.entry(&format!("sideband_{k}"), *v);
    }
    Ok(t)
}

fn scan_grid(d: &DriveArgs, spec: &str) -> Outcome<ScanGrid> {
    let (axis1, axis2) = parse_grid(spec).map_err(usage)?;
    let grid = ScanGrid {
        axis1,
        axis2,
        drive: d.drive()?,
        field: d.field(),
        settings: d.settings()?,
    };
    grid.validate().map_err(|e| usage(e.to_string()))?;
    Ok(grid)
}

fn scan_cmd(a: &ScanArgs) -> Outcome<Table> {
    let d = &a.base.drive;
    let quantity: Quantity = a.quantity.parse().map_err(|e: dualdress::Error| usage(e.to_string()))?;
    let grid = scan_grid(d, &a.grid)?;
    let res = scan2d(&grid, quantity)?;
    let (n1, n2) = (grid.axis1.param.name(), grid.axis2.param.name());
    let mut t = header("scan", d, &[n1, n2, "value", "h_x", "h_y", "h_z", "fold", "ok"]);
    t.meta("grid", &a.grid).meta("quantity", quantity.name());
    for (k, node) in res.nodes.iter().enumerate() {
        if let Some(e) = &node.error {
            t.meta(&format!("error.{k}"), e);
        }
    }
    let nan = f64::NAN;
    for node in &res.nodes {
        let h = node.h.unwrap_or(Vec3::new(nan, nan, nan));
        t.push(vec![
            node.v1.into(),
            node.v2.into(),
            node.value.unwrap_or(nan).into(),
            h.x.into(),
            h.y.into(),
            h.z.into(),
            flag(node.fold).into(),
            flag(node.error.is_none()).into(),
        ]);
    }
    Ok(t)
}

fn accelerate_cmd(a: &AccelerateArgs) -> Outcome<Table> {
    let d = &a.base.drive;
    let mut t = header("accelerate", d, &["name", "value"]);
    t.entry("acceleration", acceleration(&d.drive()?, &d.field(), &d.settings()?)?);
    if let Some(spec) = &a.grid {
        let grid = scan_grid(d, spec)?;
        let window = match &a.window {
            Some(w) => {
                let parts: Vec<&str> = w.split(',').collect();
                if parts.len() != 2 {
                    return Err(usage("--window expects lo1:hi1,lo2:hi2"));
                }
                Some((parse_range(parts[0]).map_err(usage)?, parse_range(parts[1]).map_err(usage)?))
            }
            None => None,
        };
        let res = scan2d(&grid, Quantity::Acceleration)?;
        let r = refine_max(&res, window)?;
        t.meta("grid", spec);
        if let Some(w) = &a.window {
            t.meta("window", w);
        }
        t.entry("scan_max", res.values().fold(f64::NEG_INFINITY, f64::max));
        t.entry(&format!("refined_{}", grid.axis1.param), r.location.0);
        t.entry(&format!("refined_{}", grid.axis2.param), r.location.1);
        t.entry("refined_value", r.value);
        t.entry("boundary", flag(r.boundary));
        t.entry("failed_nodes", res.failures() as f64);
    }
    Ok(t)
}

fn solution_entries(t: &mut Table, s: &CompensationSolution, targets: &[Axis3]) {
    for (k, a) in s.amplitudes.iter().enumerate() {
        t.entry(&format!("amplitude_{k}"), *a);
    }
    vec_entries(t, "h", s.h);
    t.entry("residual", s.residual_norm());
    t.entry("iterations", s.iterations as f64);
    for (axis, d) in targets.iter().zip(&s.sensitivity) {
        let c = ["x", "y", "z"][axis.index()];
        t.entry(&format!("dh{c}_domega_x"), *d);
    }
    if let Some(v) = s.magic_value {
        t.entry("omega_x", v);
    }
    if let Some(v) = s.sensitivity_check {
        t.entry("sensitivity_check", v);
    }
    if let Some(v) = s.suppression {
        t.entry("suppression", v);
        t.entry("magic", flag(s.magic));
    }
}

fn compensate_cmd(a: &CompensateArgs) -> Outcome<Table> {
    let d = &a.base.drive;
    let drive = d.drive()?;
    let targets = a
        .targets
        .split(',')
        .map(|s| s.trim().parse::<Axis3>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    let free = if a.free.is_empty() {
        (0..drive.harmonics().len()).collect()
    } else {
        a.free.clone()
    };
    let problem = CompensationProblem {
        drive,
        field: d.field(),
        free_terms: free,
        targets: targets.clone(),
        magic_parameter: a.magic.then_some(Param::OmegaX),
        settings: d.settings()?,
    };
    problem.validate().map_err(|e| usage(e.to_string()))?;
    let mut t = header("compensate", d, &["name", "value"]);
    t.meta("targets", &a.targets).meta("magic", a.magic);
    let sol = if a.magic {
        let bracket = parse_range(&a.bracket).map_err(usage)?;
        let search = MagicSearch {
            samples: a.samples,
            ..MagicSearch::new(bracket, a.reference)
        };
        t.meta("bracket", &a.bracket)
            .meta("reference", fmt_f64(a.reference))
            .meta("samples", a.samples);
        magic_point(&problem, &search)?
    } else {
        compensate(&problem)?
    };
    solution_entries(&mut t, &sol, &targets);
    Ok(t)
}

fn output_args(c: &Command) -> &OutputArgs {
    match c {
        Command::Floquet(b) | Command::Perturb(b) | Command::Tensors(b) | Command::Cs(b) => &b.output,
        Command::Traj(a) => &a.base.output,
        Command::Landre(a) => &a.base.output,
        Command::Scan(a) => &a.base.output,
        Command::Accelerate(a) => &a.base.output,
        Command::Compensate(a) => &a.base.output,
    }
}

fn execute(c: &Command) -> Outcome<Table> {
    match c {
        Command::Floquet(b) => floquet_cmd(b),
        Command::Perturb(b) => perturb_cmd(b),
        Command::Tensors(b) => tensors_cmd(b),
        Command::Traj(a) => traj_cmd(a),
        Command::Landre(a) => landre_cmd(a),
        Command::Cs(b) => cs_cmd(b),
        Command::Scan(a) => scan_cmd(a),
        Command::Accelerate(a) => accelerate_cmd(a),
        Command::Compensate(a) => compensate_cmd(a),
    }
}

/// Splices `--config` file values in after the subcommand name.
fn expand_config(argv: Vec<String>) -> Outcome<Vec<String>> {
    let mut path = None;
    for (k, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(k + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
    let tokens = parse::config_tokens(&text, &argv).map_err(usage)?;
    let Some(sub) = argv.iter().skip(1).position(|a| !a.starts_with('-')) else {
        return Ok(argv);
    };
    let at = sub + 2;
    let mut out = argv[..at].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

fn write_table<W: Write>(t: &Table, format: Format, out: W) -> std::io::Result<()> {
    match format {
        Format::Csv => t.write_csv(out),
        Format::Json => t.write_json(out),
    }
}

/// Runs the CLI with `argv[0]` the program name, writing to the given streams.
pub fn run_with<O: Write, E: Write>(argv: Vec<String>, stdout: &mut O, stderr: &mut E) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(Failure::Usage(m) | Failure::Numeric(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let table = match execute(&cli.command) {
        Ok(t) => t,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            return 1;
        }
        Err(Failure::Numeric(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            return 2;
        }
    };
    let o = output_args(&cli.command);
    let written = match &o.out {
        Some(path) => fs::File::create(path).and_then(|f| {
            let mut w = std::io::BufWriter::new(f);
            write_table(&table, o.format, &mut w)?;
            w.flush()
        }),
        None => write_table(&table, o.format, &mut *stdout),
    };
    match written {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot write output: {e}");
            2
        }
    }
}

pub fn run(argv: Vec<String>) -> i32 {
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
