use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use macroreal::bounds::{
    em_ruled_out, excluded_region, exclusion_line, gap, ruled_out, ruled_out_samples,
    theorem1_premises_hold, worst_case_epsilon_frequencies, ExperimentFrequencies, Premises,
    PREMISE_TOL,
};
use macroreal::fragment::{
    fragment_t1, fragment_t2, fragment_to_ptm, validate_fragment, QuantumFragment,
};
use macroreal::ontic::OnticModel;
use macroreal::overlap::{fmt_f64, support_curve};
use macroreal::ptm::PtmTable;
use macroreal::reproduce::{reproduce, ReferenceValues};
use macroreal::search::{decode, maximize_gap_with};
use macroreal::support::model_support_curve;

#[derive(Parser, Debug)]
#[command(
    name = "macroreal",
    version,
    about = "Macrorealism bounds for qutrit prepare-transform-measure fragments"
)]
struct Cli {
    /// Premise tolerance for fragment checks.
    #[arg(long, global = true, default_value_t = PREMISE_TOL)]
    tol: f64,
    /// Seed for randomized commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Which {
    T1,
    T2,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct FragmentSource {
    /// Built-in fragment.
    #[arg(long)]
    which: Option<Which>,
    /// Fragment JSON file.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Probability table, gap and premise residuals of a fragment.
    Fragment {
        #[command(flatten)]
        source: FragmentSource,
    },
    /// Support curve alpha -> omega(f_P, alpha f_q) of a model.
    Curve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "P")]
        prep: String,
        #[arg(long, default_value = "q1")]
        q: String,
        /// Grid range used when the curve is not a single pair of densities.
        #[arg(long, default_value_t = 4.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Excluded (alpha, beta) region from frequencies, optionally tested
    /// against a model's support curve.
    Exclude {
        #[arg(long)]
        freqs: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "P")]
        prep: String,
        #[arg(long, default_value = "q1")]
        q: String,
        /// Also write the region boundary CSV here.
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Worst-case noise threshold below which mixing models stay excluded.
    Epsilon {
        #[arg(long, conflicts_with_all = ["which", "input"])]
        freqs: Option<PathBuf>,
        #[arg(long, conflicts_with = "input")]
        which: Option<Which>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Mixing-model exclusion check on frequencies.
    EmCheck {
        #[arg(long)]
        freqs: PathBuf,
        /// Apply worst-case noise of this size first.
        #[arg(long)]
        adversarial: Option<f64>,
    },
    /// Maximize the gap over premise-free real fragments.
    Search {
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        /// Let psi carry complex phases.
        #[arg(long)]
        complex: bool,
    },
    /// Recompute the reference numbers and compare.
    Reproduce {
        /// Skip the search.
        #[arg(long)]
        fast: bool,
        /// JSON overriding expected values.
        #[arg(long)]
        expected: Option<PathBuf>,
    },
    /// Validate an input file.
    Validate {
        #[arg(long, value_enum)]
        kind: InputKind,
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InputKind {
    Fragment,
    Model,
    Table,
    Freqs,
}

enum Failure {
    /// Bad input: exit 2.
    Input(anyhow::Error),
    /// Computation ran but a check failed: exit 1.
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type CmdResult = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.tol.is_nan() || cli.tol <= 0.0 {
        eprintln!("error: --tol must be positive");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(text) => match emit(cli.out.as_deref(), &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(text)) => {
            let _ = emit(cli.out.as_deref(), &text);
            ExitCode::from(1)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_fragment(path: &Path) -> anyhow::Result<QuantumFragment> {
    QuantumFragment::from_json(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<OnticModel> {
    OnticModel::from_json(&read(path)?)
        .with_context(|| format!("loading model {}", path.display()))
}

fn load_freqs(path: &Path) -> anyhow::Result<ExperimentFrequencies> {
    ExperimentFrequencies::from_json(&read(path)?)
        .with_context(|| format!("loading frequencies {}", path.display()))
}

fn builtin(which: Which) -> QuantumFragment {
    match which {
        Which::T1 => fragment_t1(),
        Which::T2 => fragment_t2(),
    }
}

fn resolve_fragment(which: Option<Which>, input: Option<&Path>) -> anyhow::Result<QuantumFragment> {
    match (which, input) {
        (Some(w), None) => Ok(builtin(w)),
        (None, Some(p)) => load_fragment(p),
        _ => Err(anyhow!("give exactly one of --which or --input")),
    }
}

/// Fragment with a validation report; invalid fragments are input errors.
fn checked_table(frag: &QuantumFragment, tol: f64) -> Result<PtmTable, Failure> {
    let report = validate_fragment(frag, tol.max(1e-10));
    if !report.is_empty() {
        return Err(Failure::Input(anyhow!(
            "fragment failed validation:\n{}",
            serde_json::to_string_pretty(&report).expect("serializable")
        )));
    }
    Ok(fragment_to_ptm(frag).map_err(anyhow::Error::from)?)
}

fn table_csv(table: &PtmTable) -> String {
    let mut out = String::from("measurement,preparation,outcome,probability\n");
    for (m, p, probs) in table.rows() {
        let outcomes = table.outcomes(m).unwrap_or_default();
        for (o, x) in outcomes.iter().zip(probs) {
            let _ = writeln!(out, "{m},{p},{o},{}", fmt_f64(*x));
        }
    }
    out
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Fragment { source } => cmd_fragment(cli, source),
        Command::Curve {
            model,
            prep,
            q,
            alpha_max,
            points,
        } => cmd_curve(cli, model, prep, q, *alpha_max, *points),
        Command::Exclude {
            freqs,
            model,
            prep,
            q,
            region,
            points,
        } => cmd_exclude(
            cli,
            freqs,
            model.as_deref(),
            prep,
            q,
            region.as_deref(),
            *points,
        ),
        Command::Epsilon {
            freqs,
            which,
            input,
        } => cmd_epsilon(freqs.as_deref(), *which, input.as_deref()),
        Command::EmCheck { freqs, adversarial } => cmd_em_check(freqs, *adversarial),
        Command::Search { restarts, complex } => cmd_search(cli, *restarts, *complex),
        Command::Reproduce { fast, expected } => cmd_reproduce(cli, *fast, expected.as_deref()),
        Command::Validate { kind, path } => cmd_validate(cli, *kind, path),
    }
}

fn cmd_fragment(cli: &Cli, source: &FragmentSource) -> CmdResult {
    let frag = resolve_fragment(source.which, source.input.as_deref())?;
    let table = checked_table(&frag, cli.tol)?;
    if cli.format == Format::Csv {
        return Ok(table_csv(&table));
    }
    let premises = Premises::from_table(&table).map_err(anyhow::Error::from)?;
    let g = gap(&table).map_err(anyhow::Error::from)?;
    let hold = theorem1_premises_hold(&table, cli.tol).map_err(anyhow::Error::from)?;
    Ok(pretty(&json!({
        "fragment": frag,
        "table": table,
        "gap": g,
        "premises": premises,
        "premises_hold": hold,
        "tol": cli.tol,
    })))
}

/// Exact breakpoint curve when `prep` and `q` each have a single density.
fn exact_curve(
    model: &OnticModel,
    prep: &str,
    q: &str,
) -> anyhow::Result<Option<macroreal::overlap::SupportCurve>> {
    let preps = model.preparation(prep)?;
    let gens = model.eigen_generators(q)?;
    if preps.len() == 1 && gens.len() == 1 {
        Ok(Some(support_curve(
            preps[0].as_slice(),
            gens[0].as_slice(),
        )?))
    } else {
        Ok(None)
    }
}

fn alpha_grid(alpha_max: f64, points: usize) -> anyhow::Result<Vec<f64>> {
    if alpha_max.is_nan() || alpha_max <= 0.0 || points < 2 {
        return Err(anyhow!("need --alpha-max > 0 and --points >= 2"));
    }
    Ok((0..points)
        .map(|i| alpha_max * i as f64 / (points - 1) as f64)
        .collect())
}

fn cmd_curve(
    cli: &Cli,
    model: &Path,
    prep: &str,
    q: &str,
    alpha_max: f64,
    points: usize,
) -> CmdResult {
    let m = load_model(model)?;
    if let Some(curve) = exact_curve(&m, prep, q)? {
        return Ok(match cli.format {
            Format::Csv => curve.to_csv(),
            Format::Json => pretty(&json!({
                "prep": prep,
                "q": q,
                "exact": true,
                "breakpoints": curve.breakpoints(),
                "asymptote": curve.asymptote(),
                "unreachable_mass": curve.unreachable_mass(),
            })),
        });
    }
    let grid = alpha_grid(alpha_max, points)?;
    let samples = model_support_curve(&m, prep, q, &grid).map_err(anyhow::Error::from)?;
    Ok(match cli.format {
        Format::Csv => {
            let mut out = String::from("alpha,omega\n");
            for (a, v) in &samples {
                let _ = writeln!(out, "{},{}", fmt_f64(*a), fmt_f64(*v));
            }
            out
        }
        Format::Json => pretty(&json!({
            "prep": prep,
            "q": q,
            "exact": false,
            "samples": samples,
        })),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_exclude(
    cli: &Cli,
    freqs: &Path,
    model: Option<&Path>,
    prep: &str,
    q: &str,
    region_path: Option<&Path>,
    points: usize,
) -> CmdResult {
    let f = load_freqs(freqs)?;
    let line = exclusion_line(&f);
    let region = excluded_region(&f);
    let grid = region.default_grid(points);
    let csv = region.to_csv(&grid);
    if let Some(p) = region_path {
        fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?;
    }
    if cli.format == Format::Csv {
        return Ok(csv);
    }
    let verdict = match model {
        None => Value::Null,
        Some(path) => {
            let m = load_model(path)?;
            let v = match exact_curve(&m, prep, q)? {
                Some(curve) => ruled_out(&curve, &line),
                None => {
                    let hi = grid.last().copied().unwrap_or(10.0).max(1.0);
                    let samples = model_support_curve(&m, prep, q, &alpha_grid(hi, points.max(2))?)
                        .map_err(anyhow::Error::from)?;
                    ruled_out_samples(&samples, &line)
                }
            };
            json!({
                "model": path,
                "prep": prep,
                "q": q,
                "ruled_out": v.ruled_out,
                "witness_alpha": v.witness_alpha,
            })
        }
    };
    Ok(pretty(&json!({
        "frequencies": f,
        "line": line,
        "beta_bound_at_zero": region.beta_bound(0.0),
        "zero_crossing": region.zero_crossing(),
        "em_ruled_out": em_ruled_out(&f),
        "verdict": verdict,
    })))
}

fn cmd_epsilon(freqs: Option<&Path>, which: Option<Which>, input: Option<&Path>) -> CmdResult {
    let (source, f) = match freqs {
        Some(p) => (p.display().to_string(), load_freqs(p)?),
        None => {
            let frag = resolve_fragment(which, input)?;
            let table = checked_table(&frag, PREMISE_TOL)?;
            let label = match (which, input) {
                (Some(w), _) => format!("{w:?}").to_lowercase(),
                (_, Some(p)) => p.display().to_string(),
                _ => unreachable!(),
            };
            (
                label,
                ExperimentFrequencies::from_table(&table).map_err(anyhow::Error::from)?,
            )
        }
    };
    let report = worst_case_epsilon_frequencies(&f).map_err(anyhow::Error::from)?;
    Ok(pretty(&json!({
        "source": source,
        "frequencies": f,
        "epsilon": report.epsilon,
        "coefficients": report.coefficients,
        "residual": report.residual,
    })))
}

fn cmd_em_check(freqs: &Path, adversarial: Option<f64>) -> CmdResult {
    let mut f = load_freqs(freqs)?;
    if let Some(eps) = adversarial {
        f = f.adversarial(eps).map_err(anyhow::Error::from)?;
    }
    Ok(pretty(&json!({
        "frequencies": f,
        "adversarial": adversarial,
        "line": exclusion_line(&f),
        "em_ruled_out": em_ruled_out(&f),
    })))
}

fn cmd_search(cli: &Cli, restarts: usize, complex: bool) -> CmdResult {
    if restarts == 0 {
        return Err(Failure::Input(anyhow!("--restarts must be at least 1")));
    }
    let r = maximize_gap_with(restarts, cli.seed, complex);
    Ok(pretty(&json!({
        "best_value": r.best_value,
        "best_params": r.best_params,
        "best_fragment": decode(&r.best_params),
        "restarts": restarts,
        "seed": cli.seed,
        "complex": complex,
        "per_restart_values": r.per_restart_values,
    })))
}

fn cmd_reproduce(cli: &Cli, fast: bool, expected: Option<&Path>) -> CmdResult {
    let reference = match expected {
        Some(p) => serde_json::from_str::<ReferenceValues>(&read(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ReferenceValues::default(),
    };
    let r = reproduce(&reference, fast, cli.seed).map_err(anyhow::Error::from)?;
    let text = match cli.format {
        Format::Json => pretty(
            &json!({ "passed": r.passed(), "rows": r.rows, "search_skipped": r.search_skipped }),
        ),
        Format::Csv => {
            let mut out = String::from("check,expected,computed,lower,upper,pass\n");
            for row in &r.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.name,
                    fmt_f64(row.expected),
                    fmt_f64(row.computed),
                    fmt_f64(row.lower),
                    fmt_f64(row.upper),
                    row.pass
                );
            }
            out
        }
    };
    if r.passed() {
        Ok(text)
    } else {
        eprint!("{}", r.render());
        let names: Vec<&str> = r.failures().iter().map(|row| row.name.as_str()).collect();
        eprintln!("failed: {}", names.join(", "));
        Err(Failure::Check(text))
    }
}

fn cmd_validate(cli: &Cli, kind: InputKind, path: &Path) -> CmdResult {
    let report = match kind {
        InputKind::Fragment => {
            let frag = load_fragment(path)?;
            let report = validate_fragment(&frag, cli.tol.max(1e-10));
            if !report.is_empty() {
                return Err(Failure::Input(anyhow!(
                    "invalid fragment:\n{}",
                    serde_json::to_string_pretty(&report).expect("serializable")
                )));
            }
            json!({ "kind": "fragment", "valid": true })
        }
        InputKind::Model => {
            let m = load_model(path)?;
            json!({ "kind": "model", "valid": true, "states": m.size() })
        }
        InputKind::Table => {
            let text = read(path)?;
            let table: PtmTable = serde_json::from_str(&text).context("parsing table")?;
            json!({ "kind": "table", "valid": true, "preparations": table.preparations() })
        }
        InputKind::Freqs => {
            load_freqs(path)?;
            json!({ "kind": "freqs", "valid": true })
        }
    };
    Ok(pretty(&report))
}
