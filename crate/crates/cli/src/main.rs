//! `qrisk`: command-line front end for quantile risk measures.

use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use quantile_risk::io::{load_distortion, load_distribution};
use quantile_risk::properties::build_counterexample;
use quantile_risk::riskmeasures::{compare_domains, DomainRelation};
use quantile_risk::suite::{self, Matrix, Status};
use quantile_risk::{Distortion, DomainClass, Error, Evaluator, ExtendedRisk, Tolerances};

/// Version tag written into every JSON record.
const SCHEMA: &str = "qrisk/1";

#[derive(Parser, Debug)]
#[command(name = "qrisk", version, about = "Quantile (distortion) risk measures of one-dimensional laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Seed for randomized checks; overrides the suite config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Absolute tolerance of quantile and tail integrals.
    #[arg(long, global = true, value_parser = positive, allow_negative_numbers = true)]
    quadrature_tol: Option<f64>,

    /// Absolute tolerance of the mixture integral.
    #[arg(long, global = true, value_parser = positive, allow_negative_numbers = true)]
    mixture_tol: Option<f64>,

    /// Bracket width that stops the infimum search.
    #[arg(long, global = true, value_parser = positive, allow_negative_numbers = true)]
    infimum_tol: Option<f64>,

    /// Increment below which the divergence probe counts as converged.
    #[arg(long, global = true, value_parser = positive, allow_negative_numbers = true)]
    probe_cauchy: Option<f64>,

    /// Increment above which the divergence probe counts as growing.
    #[arg(long, global = true, value_parser = positive, allow_negative_numbers = true)]
    probe_growth: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Quantile,
    Choquet,
    Mixture,
    All,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EsForm {
    StopLoss,
    Infimum,
    Quantile,
    All,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Lq,
    Acerbi,
    Pichler,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate rho_Q[X].
    Eval {
        /// CSV sample, JSON file or inline JSON distribution.
        #[arg(long)]
        dist: String,
        /// JSON file or inline JSON distortion.
        #[arg(long)]
        distortion: String,
        #[arg(long, value_enum, default_value_t = Method::Quantile)]
        method: Method,
    },
    /// Expected shortfall at level alpha.
    Es {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = EsForm::StopLoss)]
        form: EsForm,
    },
    /// Value at risk (lower and upper quantile) at level alpha.
    Var {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        alpha: f64,
    },
    /// Spectral density of a convex distortion.
    Spectrum {
        #[arg(long)]
        distortion: String,
        /// Number of grid points for plot-ready samples of s and D.
        #[arg(long, default_value_t = 0)]
        points: usize,
    },
    /// Structural convexity test with a midpoint witness.
    CheckConvexity {
        #[arg(long)]
        distortion: String,
    },
    /// Joint table violating subadditivity for a non-convex distortion.
    Counterexample {
        #[arg(long)]
        distortion: String,
        /// Scale parameter `a > 0` of the table.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
    },
    /// Membership of X in the LQ, Acerbi and Pichler domains.
    Classify {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        distortion: String,
        #[arg(long, value_enum, default_value_t = ClassArg::All)]
        class: ClassArg,
    },
    /// Ordering evidence for the domains of two distortions on [delta, 1).
    Compare {
        #[arg(long)]
        distortion: String,
        #[arg(long)]
        against: String,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
    },
    /// Run the check matrix; the built-in matrix when no config is given.
    Suite {
        /// JSON config with `distributions`, `distortions`, `trials` and `seed`.
        #[arg(long)]
        config: Option<String>,
        /// Random tables per convex distortion.
        #[arg(long)]
        trials: Option<u64>,
    },
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("tolerance must be positive, got {s}"))
    }
}

/// A rendered result: summary fields plus an optional table.
struct Report {
    command: &'static str,
    fields: Vec<(String, Value)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Report {
    fn new(command: &'static str) -> Self {
        Report {
            command,
            fields: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn field(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.fields.push((key.to_string(), value.into()));
        self
    }

    fn table(mut self, columns: Vec<&'static str>, rows: Vec<Vec<Value>>) -> Self {
        self.columns = columns;
        self.rows = rows;
        self
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.json(),
            Format::Csv => self.csv(),
            Format::Table => self.text(),
        }
    }

    fn json(&self) -> String {
        let mut obj = Map::new();
        obj.insert("schema".into(), SCHEMA.into());
        obj.insert("command".into(), self.command.into());
        for (k, v) in &self.fields {
            obj.insert(k.clone(), v.clone());
        }
        if !self.columns.is_empty() {
            let rows: Vec<Value> = self
                .rows
                .iter()
                .map(|r| {
                    let m: Map<String, Value> =
                        self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect();
                    Value::Object(m)
                })
                .collect();
            obj.insert("rows".into(), Value::Array(rows));
        }
        let mut out = serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable");
        out.push('\n');
        out
    }

    fn csv(&self) -> String {
        let mut out = String::new();
        if self.columns.is_empty() {
            out.push_str("key,value\n");
            for (k, v) in &self.fields {
                out.push_str(&format!("{},{}\n", csv_cell(k), csv_cell(&plain(v))));
            }
        } else {
            out.push_str(&self.columns.join(","));
            out.push('\n');
            for r in &self.rows {
                let cells: Vec<String> = r.iter().map(|v| csv_cell(&plain(v))).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        out
    }

    fn text(&self) -> String {
        let mut out = String::new();
        let width = self.fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.fields {
            out.push_str(&format!("{k:<width$}  {}\n", plain(v)));
        }
        if !self.columns.is_empty() {
            if !self.fields.is_empty() {
                out.push('\n');
            }
            let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(plain).collect()).collect();
            let widths: Vec<usize> = (0..self.columns.len())
                .map(|i| {
                    cells
                        .iter()
                        .map(|r| r[i].len())
                        .chain([self.columns[i].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |vals: Vec<&str>| -> String {
                let parts: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
                format!("{}\n", parts.join("  ").trim_end())
            };
            out.push_str(&line(self.columns.clone()));
            for r in &cells {
                out.push_str(&line(r.iter().map(String::as_str).collect()));
            }
        }
        out
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn risk(v: ExtendedRisk) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn evaluator(g: &Global) -> Result<Evaluator> {
    let mut tol = Tolerances::default();
    if let Some(v) = g.quadrature_tol {
        tol.quadrature = v;
    }
    if let Some(v) = g.mixture_tol {
        tol.mixture = v;
    }
    if let Some(v) = g.infimum_tol {
        tol.infimum = v;
    }
    if let Some(v) = g.probe_cauchy {
        tol.probe_cauchy = v;
    }
    if let Some(v) = g.probe_growth {
        tol.probe_growth = v;
    }
    Ok(Evaluator::new(tol)?)
}

fn dist_arg(arg: &str) -> Result<quantile_risk::Distribution> {
    load_distribution(arg).with_context(|| format!("loading distribution {arg}"))
}

fn distortion_arg(arg: &str) -> Result<Distortion> {
    load_distortion(arg).with_context(|| format!("loading distortion {arg}"))
}

/// Runs a command; `Ok(false)` reports failed checks.
fn run(cli: &Cli, out: &mut impl Write) -> Result<bool> {
    let ev = evaluator(&cli.global)?;
    let mut ok = true;
    let report = match &cli.command {
        Command::Eval { dist, distortion, method } => {
            let x = dist_arg(dist)?;
            let d = distortion_arg(distortion)?;
            let mut rows = Vec::new();
            if matches!(method, Method::Quantile | Method::All) {
                rows.push(vec![json!("quantile"), risk(ev.rho_quantile(&x, &d)?)]);
            }
            if matches!(method, Method::Choquet | Method::All) {
                rows.push(vec![json!("choquet"), risk(ev.rho_choquet(&x, &d)?)]);
            }
            if *method == Method::Mixture || (*method == Method::All && d.is_convex()) {
                rows.push(vec![json!("mixture"), risk(ev.rho_mixture(&x, &d)?)]);
            }
            Report::new("eval")
                .field("distribution", x.describe())
                .field("distortion", d.label())
                .table(vec!["method", "value"], rows)
        }
        Command::Es { dist, alpha, form } => {
            let x = dist_arg(dist)?;
            let mut rows = Vec::new();
            if matches!(form, EsForm::StopLoss | EsForm::All) {
                rows.push(vec![json!("stop-loss"), risk(ev.expected_shortfall(&x, *alpha)?), Value::Null]);
            }
            if matches!(form, EsForm::Infimum | EsForm::All) {
                let r = ev.expected_shortfall_infimum(&x, *alpha)?;
                rows.push(vec![json!("infimum"), json!(r.value), json!(r.minimizer)]);
            }
            if matches!(form, EsForm::Quantile | EsForm::All) {
                let d = Distortion::expected_shortfall(*alpha)?;
                rows.push(vec![json!("quantile"), risk(ev.rho_quantile(&x, &d)?), Value::Null]);
            }
            Report::new("es")
                .field("distribution", x.describe())
                .field("alpha", *alpha)
                .table(vec!["form", "value", "minimizer"], rows)
        }
        Command::Var { dist, alpha } => {
            let x = dist_arg(dist)?;
            let q = x.quantiles(*alpha)?;
            Report::new("var")
                .field("distribution", x.describe())
                .field("alpha", *alpha)
                .field("lower", q.lower)
                .field("upper", q.upper)
        }
        Command::Spectrum { distortion, points } => {
            let d = distortion_arg(distortion)?;
            let s = d.spectral()?;
            let mut report = Report::new("spectrum")
                .field("distortion", d.label())
                .field("pieces", serde_json::to_value(s.pieces())?);
            if *points > 0 {
                let n = (*points).max(2);
                let rows = (0..n)
                    .map(|k| {
                        let u = k as f64 / (n - 1) as f64;
                        let density = if u < 1.0 { json!(s.eval(u)) } else { Value::Null };
                        vec![json!(u), density, json!(d.eval(u))]
                    })
                    .collect();
                report = report.table(vec!["u", "density", "distortion"], rows);
            }
            report
        }
        Command::CheckConvexity { distortion } => {
            let d = distortion_arg(distortion)?;
            let c = d.convexity();
            let mut report = Report::new("check-convexity")
                .field("distortion", d.label())
                .field("convex", c.convex);
            if let Some(w) = c.witness {
                report = report
                    .field("witness_u", w.u)
                    .field("witness_eps", w.eps)
                    .field("excess", w.excess);
            }
            report
        }
        Command::Counterexample { distortion, a } => {
            let d = distortion_arg(distortion)?;
            let ce = build_counterexample(&d, *a)?;
            let mut rows = Vec::new();
            for (i, &x) in ce.table.xs().iter().enumerate() {
                for (j, &y) in ce.table.ys().iter().enumerate() {
                    let p = ce.table.probabilities()[i][j];
                    if p > 0.0 {
                        rows.push(vec![json!(x), json!(y), json!(p)]);
                    }
                }
            }
            Report::new("counterexample")
                .field("distortion", d.label())
                .field("a", ce.a)
                .field("witness_u", ce.witness.u)
                .field("witness_eps", ce.witness.eps)
                .field("rho_x", ce.rho_x)
                .field("rho_y", ce.rho_y)
                .field("rho_sum", ce.rho_sum)
                .field("gap", ce.gap)
                .field("closed_form_gap", ce.closed_form_gap)
                .table(vec!["x", "y", "probability"], rows)
        }
        Command::Classify { dist, distortion, class } => {
            let x = dist_arg(dist)?;
            let d = distortion_arg(distortion)?;
            let classes: Vec<DomainClass> = match class {
                ClassArg::Lq => vec![DomainClass::LQ],
                ClassArg::Acerbi => vec![DomainClass::Acerbi],
                ClassArg::Pichler => vec![DomainClass::Pichler],
                ClassArg::All => DomainClass::ALL.to_vec(),
            };
            let rows = classes
                .into_iter()
                .map(|c| {
                    let v = ev.classify(&x, &d, c);
                    let probe = v.probe.as_ref();
                    vec![
                        json!(c.name()),
                        serde_json::to_value(v.verdict).expect("serializable"),
                        serde_json::to_value(v.method).expect("serializable"),
                        probe.map_or(Value::Null, |p| serde_json::to_value(p.verdict).expect("serializable")),
                        probe
                            .and_then(|p| p.partial_integrals.last().copied())
                            .filter(|v| v.is_finite())
                            .map_or(Value::Null, |v| json!(v)),
                    ]
                })
                .collect();
            Report::new("classify")
                .field("distribution", x.describe())
                .field("distortion", d.label())
                .table(vec!["class", "verdict", "method", "probe", "last_partial_integral"], rows)
        }
        Command::Compare { distortion, against, delta } => {
            let d1 = distortion_arg(distortion)?;
            let d2 = distortion_arg(against)?;
            let c = compare_domains(&d1, &d2, *delta)?;
            let relation = match c.relation {
                DomainRelation::Equal => "equal",
                DomainRelation::FirstInSecond => "first-in-second",
                DomainRelation::SecondInFirst => "second-in-first",
                DomainRelation::Incomparable => "incomparable",
            };
            let sandwich = |s: Option<quantile_risk::riskmeasures::Sandwich>| match s {
                Some(s) => json!(format!("es_n({}, {})", s.n, s.alpha)),
                None => Value::Null,
            };
            Report::new("compare")
                .field("first", d1.label())
                .field("second", d2.label())
                .field("delta", c.delta)
                .field("first_in_second", c.first_in_second)
                .field("second_in_first", c.second_in_first)
                .field("first_sandwich", sandwich(c.first_equals_expectation_domain))
                .field("second_sandwich", sandwich(c.second_equals_expectation_domain))
                .field("relation", relation)
        }
        Command::Suite { config, trials } => {
            let mut matrix = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
                    Matrix::from_json(&text)?
                }
                None => Matrix::default_matrix(),
            };
            if let Some(t) = trials {
                matrix.trials = *t;
            }
            if let Some(seed) = cli.global.seed {
                matrix.seed = seed;
            }
            let report = suite::run(&matrix, &ev)?;
            ok = report.all_green();
            let status = |s: Status| match s {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::ExpectedFailure => "expected-failure",
            };
            let rows = report
                .results
                .iter()
                .map(|r| {
                    vec![
                        serde_json::to_value(r.check).expect("serializable"),
                        r.distribution.clone().map_or(Value::Null, Value::String),
                        r.distortion.clone().map_or(Value::Null, Value::String),
                        json!(status(r.status)),
                        json!(r.detail),
                    ]
                })
                .collect();
            Report::new("suite")
                .field("passed", report.passed)
                .field("failed", report.failed)
                .field("expected_failures", report.expected_failures)
                .field("trials", matrix.trials)
                .field("seed", matrix.seed)
                .table(vec!["check", "distribution", "distortion", "status", "detail"], rows)
        }
    };
    out.write_all(report.render(cli.global.format).as_bytes())?;
    Ok(ok)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_domain_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("qrisk: suite reported failing checks");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("qrisk: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
