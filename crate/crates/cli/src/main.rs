use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use subdiff_lab::calculus::{default_schedule, directional_derivative, eps_enlargement, subdifferential, verify_link};
use subdiff_lab::monotone::{check_absorbing, check_maximal_monotone, dual_grid_for, polar_samples, sample_subdiff_graph};
use subdiff_lab::optimality::{directional_test, refute_optimality, subdiff_test, TestReport, Verdict, OPT_TOL};
use subdiff_lab::suite::{run_suite, OutputFormat, SuiteConfig};
use subdiff_lab::variational::{ekeland_point, mean_value_witness, EKELAND_TOL};
use subdiff_lab::{parse_box, parse_function, BoxRegion, Error, GridSpec, PLFunction, Point};

const VERIFIED: u8 = 0;
const REFUTED: u8 = 1;
const INCONCLUSIVE: u8 = 2;
const USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "subdiff-lab", version, about = "First-order optimality checks for piecewise-linear functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Value of f at --at.
    Eval(Opts),
    /// Directional derivative f'(at; dir).
    Dd(Opts),
    /// Subdifferential at --at, as polytope vertices.
    Subdiff(Opts),
    /// Enlarged subdifferential samples at --at for --eps.
    Enlarge(Opts),
    /// Checks f'(at; dir) <= sup of the enlargement along the eps schedule.
    Link(Opts),
    /// Perturbed minimizer near --at for --eps and --lambda.
    Ekeland(Opts),
    /// Mean value witness between --from and --at for --lambda.
    Mvi(Opts),
    /// Optimality of --at over --region through directional derivatives.
    CheckminDd(Opts),
    /// Optimality of --at over --region through subgradients.
    CheckminSub(Opts),
    /// Witness that --at is not a minimizer over --region.
    Refute(Opts),
    /// Sampled monotone polar of the subdifferential graph.
    Polar(Opts),
    /// Checks that the sampled polar lies in the subdifferential.
    Absorb(Opts),
    /// Checks maximal monotonicity of a convex subdifferential.
    Maxmono(Opts),
    /// Runs the seeded random-instance suite.
    Suite(SuiteOpts),
}

#[derive(Args)]
struct Opts {
    /// Function in the .plf language, or @path to a .plf file.
    #[arg(long)]
    func: String,
    /// Point, e.g. "0.5" or "0.1,0.2".
    #[arg(long, allow_hyphen_values = true)]
    at: Option<String>,
    /// Direction.
    #[arg(long, allow_hyphen_values = true)]
    dir: Option<String>,
    /// Start point for mvi.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Region, e.g. "box(-1,1)" or "box(-1,1; 0,2)".
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    grid_h: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated eps values.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct SuiteOpts {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Small instance counts for a fast smoke run.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    grid_h: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    schedule: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

struct Outcome {
    code: u8,
    body: Value,
    /// Rows for CSV output; falls back to the top-level fields of `body`.
    table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

impl Outcome {
    fn new(code: u8, body: Value) -> Self {
        Self { code, body, table: None }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { VERIFIED });
        }
    };
    if let Some(n) = std::env::var("SUBDIFF_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(out) => ExitCode::from(out),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE)
        }
    }
}

fn run(cmd: Command) -> Result<u8, Error> {
    let (out, format) = match cmd {
        Command::Suite(o) => return suite(o),
        Command::Eval(o) => (eval(&o)?, o.format),
        Command::Dd(o) => (dd(&o)?, o.format),
        Command::Subdiff(o) => (subdiff(&o)?, o.format),
        Command::Enlarge(o) => (enlarge(&o)?, o.format),
        Command::Link(o) => (link(&o)?, o.format),
        Command::Ekeland(o) => (ekeland(&o)?, o.format),
        Command::Mvi(o) => (mvi(&o)?, o.format),
        Command::CheckminDd(o) => (checkmin(&o, false)?, o.format),
        Command::CheckminSub(o) => (checkmin(&o, true)?, o.format),
        Command::Refute(o) => (refute(&o)?, o.format),
        Command::Polar(o) => (polar(&o)?, o.format),
        Command::Absorb(o) => (absorb(&o)?, o.format),
        Command::Maxmono(o) => (maxmono(&o)?, o.format),
    };
    print!("{}", render(&out, format));
    Ok(out.code)
}

fn render(out: &Outcome, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(&out.body).expect("json value") + "\n",
        Format::Text => text_lines(&out.body, ""),
        Format::Csv => match &out.table {
            Some((header, rows)) => {
                let mut s = header.join(",") + "\n";
                for r in rows {
                    s.push_str(&(r.join(",") + "\n"));
                }
                s
            }
            None => {
                let mut s = String::from("field,value\n");
                if let Value::Object(m) = &out.body {
                    for (k, v) in m {
                        s.push_str(&format!("{k},{}\n", csv_cell(v)));
                    }
                }
                s
            }
        },
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(_) | Value::Bool(_) | Value::Null => v.to_string(),
        other => format!("\"{}\"", other.to_string().replace('"', "\"\"")),
    }
}

fn text_lines(v: &Value, indent: &str) -> String {
    match v {
        Value::Object(m) => m
            .iter()
            .map(|(k, v)| match v {
                Value::Object(_) => format!("{indent}{k}:\n{}", text_lines(v, &format!("{indent}  "))),
                _ => format!("{indent}{k}: {}\n", csv_cell(v).trim_matches('"')),
            })
            .collect(),
        other => format!("{indent}{other}\n"),
    }
}

fn load_function(spec: &str) -> Result<PLFunction, Error> {
    let text = match spec.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {path}: {e}")))?,
        None => spec.to_string(),
    };
    parse_function(&text)
}

fn parse_point(text: &str, dim: usize, what: &str) -> Result<Point, Error> {
    let coords = text
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split([',', ' ', ';'])
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("--{what}: '{s}' is not a number")))
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    if coords.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: coords.len() });
    }
    Point::new(&coords)
}

fn parse_schedule(text: Option<&str>) -> Result<Vec<f64>, Error> {
    match text {
        None => Ok(default_schedule()),
        Some(t) => t
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("--schedule: '{s}' is not a number")))
            })
            .collect(),
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T, Error> {
    v.ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
}

struct Ctx {
    f: PLFunction,
    opts_region: Option<BoxRegion>,
}

impl Ctx {
    fn new(o: &Opts) -> Result<Self, Error> {
        let f = load_function(&o.func)?;
        let opts_region = o.region.as_deref().map(parse_box).transpose()?;
        if let Some(r) = &opts_region {
            if r.dim() != f.dim() {
                return Err(Error::DimensionMismatch { expected: f.dim(), got: r.dim() });
            }
        }
        Ok(Self { f, opts_region })
    }

    fn point(&self, text: Option<&String>, flag: &str) -> Result<Point, Error> {
        parse_point(need(text.map(String::as_str), flag)?, self.f.dim(), flag)
    }

    /// --region, else the domain of f, else the cube [-2, 2]^n.
    fn region(&self) -> Result<BoxRegion, Error> {
        match (self.opts_region, self.f.domain()) {
            (Some(r), _) => Ok(r),
            (None, Some(d)) => Ok(*d),
            (None, None) => BoxRegion::cube(self.f.dim(), -2.0, 2.0),
        }
    }

    fn grid(&self, o: &Opts) -> Result<GridSpec, Error> {
        let region = self.region()?;
        match o.grid_h {
            Some(h) => GridSpec::new(h, region),
            None => Ok(GridSpec::default_for(region)),
        }
    }
}

fn eval(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let v = c.f.evaluate(&x)?;
    Ok(Outcome::new(VERIFIED, json!({ "x": x, "value": v })))
}

fn dd(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let d = c.point(o.dir.as_ref(), "dir")?;
    let v = directional_derivative(&c.f, &x, &d)?;
    Ok(Outcome::new(VERIFIED, json!({ "x": x, "d": d, "derivative": v })))
}

fn subdiff(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let p = subdifferential(&c.f, &x)?.canonical();
    let mut out = Outcome::new(VERIFIED, json!({ "x": x, "subdifferential": p }));
    out.table = Some((
        (1..=c.f.dim()).map(|i| format!("xstar{i}")).collect(),
        p.vertices().iter().map(|v| v.coords().iter().map(f64::to_string).collect()).collect(),
    ));
    Ok(out)
}

fn enlarge(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let samples = eps_enlargement(&c.f, &x, need(o.eps, "eps")?, &c.grid(o)?)?;
    let n = c.f.dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("fx".into());
    header.extend((1..=n).map(|i| format!("xstar{i}")));
    let rows = samples
        .iter()
        .map(|s| {
            let mut r: Vec<String> = s.x.coords().iter().map(f64::to_string).collect();
            r.push(s.fx.to_string());
            r.extend(s.xstar.coords().iter().map(f64::to_string));
            r
        })
        .collect();
    let mut out = Outcome::new(VERIFIED, json!({ "xbar": x, "eps": o.eps, "count": samples.len(), "samples": samples }));
    out.table = Some((header, rows));
    Ok(out)
}

fn link(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let d = c.point(o.dir.as_ref(), "dir")?;
    let schedule = parse_schedule(o.schedule.as_deref())?;
    let r = verify_link(&c.f, &x, &d, &schedule, &c.grid(o)?)?;
    let code = if r.pass { VERIFIED } else { REFUTED };
    Ok(Outcome::new(code, serde_json::to_value(&r).expect("report")))
}

fn ekeland(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let w = ekeland_point(&c.f, &x, need(o.eps, "eps")?, need(o.lambda, "lambda")?)?;
    let ok = w.perturbed_min_gap <= EKELAND_TOL && w.f_xeps <= w.f_xbar + EKELAND_TOL && w.distance <= w.lambda;
    Ok(Outcome::new(if ok { VERIFIED } else { REFUTED }, serde_json::to_value(&w).expect("witness")))
}

fn mvi(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.from.as_ref(), "from")?;
    let xbar = c.point(o.at.as_ref(), "at")?;
    let w = mean_value_witness(&c.f, &x, &xbar, need(o.lambda, "lambda")?)?;
    let tol = o.tol.unwrap_or(EKELAND_TOL);
    let ok = w.slope_slack() >= -tol && w.value_slack() >= -tol;
    Ok(Outcome::new(if ok { VERIFIED } else { REFUTED }, serde_json::to_value(&w).expect("witness")))
}

fn verdict_code(r: &TestReport) -> u8 {
    match r.verdict {
        Verdict::OptimalCertified => VERIFIED,
        Verdict::NotOptimal => REFUTED,
        Verdict::Inconclusive => INCONCLUSIVE,
    }
}

fn checkmin(o: &Opts, via_subgradients: bool) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    let (region, grid) = (c.region()?, c.grid(o)?);
    let r = if via_subgradients {
        subdiff_test(&c.f, &region, &x, &grid)?
    } else {
        directional_test(&c.f, &region, &x, &grid)?
    };
    Ok(Outcome::new(verdict_code(&r), serde_json::to_value(&r).expect("report")))
}

fn refute(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let x = c.point(o.at.as_ref(), "at")?;
    match refute_optimality(&c.f, &c.region()?, &x, &c.grid(o)?) {
        Ok(w) => {
            let valid = w.is_valid(o.tol.unwrap_or(OPT_TOL));
            let mut body = serde_json::to_value(&w).expect("witness");
            body["valid"] = json!(valid);
            Ok(Outcome::new(if valid { REFUTED } else { INCONCLUSIVE }, body))
        }
        Err(Error::IsActuallyOptimal) => Ok(Outcome::new(
            VERIFIED,
            json!({ "xbar": x, "optimal": true, "message": Error::IsActuallyOptimal.to_string() }),
        )),
        Err(Error::RefutationFailed(m)) => Ok(Outcome::new(INCONCLUSIVE, json!({ "xbar": x, "message": m }))),
        Err(e) => Err(e),
    }
}

fn graph_table(g: &subdiff_lab::OperatorGraph) -> (Vec<String>, Vec<Vec<String>>) {
    let csv = g.to_csv();
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn polar(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let grid = c.grid(o)?;
    let t = sample_subdiff_graph(&c.f, &grid)?;
    let p = polar_samples(&t, &grid, &dual_grid_for(&c.f, grid.h)?, o.tol.unwrap_or(1e-9))?;
    let mut out = Outcome::new(VERIFIED, json!({ "graph_samples": t.len(), "polar_members": p.len(), "polar": p }));
    out.table = Some(graph_table(&p));
    Ok(out)
}

fn absorb(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let grid = c.grid(o)?;
    let tol = o.tol.unwrap_or(2.0 * grid.h * c.f.lipschitz());
    let r = check_absorbing(&c.f, &grid, &dual_grid_for(&c.f, grid.h)?, tol)?;
    Ok(Outcome::new(if r.pass { VERIFIED } else { REFUTED }, serde_json::to_value(&r).expect("report")))
}

fn maxmono(o: &Opts) -> Result<Outcome, Error> {
    let c = Ctx::new(o)?;
    let grid = c.grid(o)?;
    let tol = o.tol.unwrap_or(1e-9);
    let ok = check_maximal_monotone(&c.f, &grid, &dual_grid_for(&c.f, grid.h)?, tol)?;
    Ok(Outcome::new(if ok { VERIFIED } else { REFUTED }, json!({ "maximal_monotone": ok, "tol": tol, "h": grid.h })))
}

fn suite(o: SuiteOpts) -> Result<u8, Error> {
    let mut cfg = if o.quick { SuiteConfig::quick() } else { SuiteConfig::default() };
    cfg.seed = o.seed;
    if let Some(h) = o.grid_h {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("--grid-h must be positive, got {h}")));
        }
        cfg.h = h;
    }
    if let Some(t) = o.tol {
        cfg.tol = t;
    }
    if o.schedule.is_some() {
        cfg.eps_schedule = parse_schedule(o.schedule.as_deref())?;
    }
    cfg.format = match o.format {
        Format::Json => OutputFormat::Json,
        Format::Csv => OutputFormat::Csv,
        Format::Text => OutputFormat::Text,
    };
    let report = run_suite(&cfg);
    print!("{}", report.render(cfg.format));
    Ok(if report.pass { VERIFIED } else { REFUTED })
}
