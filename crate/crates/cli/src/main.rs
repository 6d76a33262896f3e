//! `sqd`: split questionnaire designs from the command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sqd_core::estimation::ObservedDataset;
use sqd_core::io::{
    read_design, read_params, read_responses, write_design, write_json, write_study_csv, EstimationFile, ParamsFile,
};
use sqd_core::pattern::srs_design;
use sqd_core::pipeline::{
    design_from_pilot, estimate, evaluate_design, params_from_estimate, split_rows, DesignVariant, PipelineConfig,
    PipelineReport,
};
use sqd_core::simulation::{run_study, Profile};
use sqd_core::theory::{theory_row, TwoGroupSpec};
use sqd_core::{ModelKind, Scenario, SqdError, StudyResult, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "sqd", version, about = "A-optimal split questionnaire designs")]
struct Cli {
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate parameters from pilot responses and optimize a design.
    Design(DesignArgs),
    /// Run a Monte-Carlo study from a scenario file or a preset.
    Simulate(SimulateArgs),
    /// Evaluate a design at given parameters.
    Evaluate(EvaluateArgs),
    /// Emit closed-form two-group curves as CSV.
    Theory(TheoryArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModelArg {
    Mvn,
    Zmvln,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mvn => ModelKind::Mvn,
            ModelArg::Zmvln => ModelKind::Zmvln,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum VariantArg {
    Local,
    Bayes,
    Minimax,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Pilot responses: CSV with a header row, empty cells missing.
    #[arg(long)]
    pilot: PathBuf,
    #[arg(long, value_enum, default_value = "mvn")]
    model: ModelArg,
    /// Items per respondent.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, value_enum, default_value = "local")]
    variant: VariantArg,
    /// Prior draws for the Bayes variant.
    #[arg(long, default_value_t = 200)]
    bayes_draws: usize,
    /// Shrinkage grid step for the minimax variant.
    #[arg(long, default_value_t = 0.1)]
    minimax_grid: f64,
    /// Hold out this fraction of pilot rows and evaluate the design on estimates from them.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Design JSON path; the report goes next to it with a `.report.json` suffix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario, e.g. `sim1-g2-q8`; repeatable.
    #[arg(long)]
    preset: Vec<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate count override.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    /// Output prefix; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value = "mvn")]
    model: ModelArg,
    /// Report JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// Items per group.
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<usize>,
    /// Within-group correlations.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    rho1: Vec<f64>,
    /// Between-group correlations.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    rho2: Vec<f64>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DesignReport {
    model: ModelKind,
    variant: DesignVariant,
    k: usize,
    m: usize,
    n_pilot: usize,
    seed: u64,
    estimation: EstimationFile,
    criterion_srs: f64,
    criterion_opt: f64,
    re_a: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    holdout: Option<HoldoutReport>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct HoldoutReport {
    n: usize,
    criterion_srs: f64,
    criterion_opt: f64,
    re_a: f64,
}

fn variant(args: &DesignArgs) -> DesignVariant {
    match args.variant {
        VariantArg::Local => DesignVariant::Local,
        VariantArg::Bayes => DesignVariant::Bayes { draws: args.bayes_draws },
        VariantArg::Minimax => DesignVariant::Minimax { step: args.minimax_grid },
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn holdout_report(report: &PipelineReport, model: ModelKind, data: &ObservedDataset) -> anyhow::Result<HoldoutReport> {
    let params = params_from_estimate(model, &estimate(model, data)?)?;
    let ps = report.result.design.shared_pattern_set();
    let crit = params.criterion(ps.clone())?;
    let criterion_srs = crit.value(srs_design(ps)?.probs())?;
    let criterion_opt = crit.value(report.result.design.probs())?;
    Ok(HoldoutReport {
        n: data.n(),
        criterion_srs,
        criterion_opt,
        re_a: criterion_srs / criterion_opt,
    })
}

fn cmd_design(args: DesignArgs) -> anyhow::Result<()> {
    let table = read_responses(&args.pilot).with_context(|| format!("reading {}", args.pilot.display()))?;
    let model = ModelKind::from(args.model);
    let (pilot, rest) = match args.holdout {
        None => (table.data.clone(), None),
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                bail!(SqdError::InvalidArgument(format!("holdout fraction {f} outside (0, 1)")));
            }
            let n_first = ((1.0 - f) * table.data.n() as f64).round() as usize;
            let (a, b) = split_rows(&table.data, n_first, args.seed)?;
            (a, Some(b))
        }
    };
    let config = PipelineConfig::new(model, args.m, variant(&args), args.seed);
    let report = design_from_pilot(&pilot, &config)?;
    let holdout = rest.map(|d| holdout_report(&report, model, &d)).transpose()?;
    let out = DesignReport {
        model,
        variant: config.variant,
        k: pilot.k(),
        m: args.m,
        n_pilot: pilot.n(),
        seed: args.seed,
        estimation: EstimationFile::new(table.items.clone(), &report.estimation),
        criterion_srs: report.criterion_srs,
        criterion_opt: report.criterion_opt,
        re_a: report.re_a,
        objective: report.result.value,
        iterations: report.result.iterations,
        converged: report.result.converged,
        holdout,
        warnings: report.warnings.clone(),
    };
    write_design(&args.out, &report.result.design)?;
    write_json(&sibling(&args.out, ".params.json"), &ParamsFile::from_params(&report.params))?;
    write_json(&sibling(&args.out, ".report.json"), &out)?;
    println!(
        "K = {}, m = {}, {} variant: criterion SRS {:.6}, optimized {:.6}, RE_A {:.4}",
        out.k, out.m, args.variant.to_possible_value().unwrap().get_name(), out.criterion_srs, out.criterion_opt, out.re_a
    );
    if let Some(h) = &out.holdout {
        println!(
            "holdout (n = {}): criterion SRS {:.6}, optimized {:.6}, RE_A {:.4}",
            h.n, h.criterion_srs, h.criterion_opt, h.re_a
        );
    }
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let profile = match args.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let mut scenarios: Vec<Scenario> = match &args.scenario {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
            vec![serde_json::from_reader(std::io::BufReader::new(file)).map_err(SqdError::from)?]
        }
        None => args.preset.iter().map(|p| Scenario::preset(p)).collect::<Result<_, _>>()?,
    };
    for sc in &mut scenarios {
        *sc = sc.with_profile(profile);
        if let Some(seed) = args.seed {
            sc.seed = seed;
        }
        if let Some(r) = args.replications {
            sc.replications = r;
        }
        sc.validate()?;
    }
    let results: Vec<StudyResult> = scenarios.iter().map(run_study).collect::<Result<_, _>>()?;
    write_json(&sibling(&args.out, ".json"), &results)?;
    let csv = File::create(sibling(&args.out, ".csv")).map_err(SqdError::from)?;
    write_study_csv(BufWriter::new(csv), &results)?;
    for r in &results {
        for d in &r.designs {
            println!(
                "{} {}: MSE {:.6} RE_MSE {} RE_A {}",
                r.label,
                d.design.name(),
                d.mse,
                d.re_mse.map_or("-".into(), |x| format!("{x:.4}")),
                d.re_a.map_or("-".into(), |x| format!("{x:.4}")),
            );
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let design = read_design(&args.design).with_context(|| format!("reading {}", args.design.display()))?;
    let params = read_params(&args.params, args.model.into()).with_context(|| format!("reading {}", args.params.display()))?;
    let report = evaluate_design(&params, &design)?;
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn cmd_theory(args: TheoryArgs) -> anyhow::Result<()> {
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(SqdError::from)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for &rho1 in &args.rho1 {
        for &rho2 in &args.rho2 {
            for &q in &args.q {
                w.serialize(theory_row(&TwoGroupSpec::new(q, rho1, rho2)?)?).map_err(SqdError::from)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn error_code(e: &anyhow::Error) -> &'static str {
    let Some(e) = e.chain().find_map(|c| c.downcast_ref::<SqdError>()) else {
        return "io";
    };
    match e {
        SqdError::InvalidArgument(_) => "invalid-argument",
        SqdError::DesignSpaceTooLarge { .. } => "design-space-too-large",
        SqdError::UncoveredItem { .. } => "uncovered-item",
        SqdError::SingularInformation { .. } => "singular-information",
        SqdError::SingularPattern { .. } => "singular-pattern",
        SqdError::NotPositiveDefinite(_) => "not-positive-definite",
        SqdError::DimensionMismatch(_) => "dimension-mismatch",
        SqdError::Estimation(_) => "estimation",
        SqdError::Parse { .. } => "parse",
        SqdError::StudyAborted { .. } => "study-aborted",
        SqdError::Io(_) => "io",
        SqdError::Json(_) => "json",
        SqdError::Csv(_) => "csv",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(SqdError::InvalidArgument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Theory(a) => cmd_theory(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let body: Vec<&str> = msg.lines().take_while(|l| !l.starts_with("Usage:")).collect();
            eprintln!("sqd: error: usage: {}", one_line(body.join(" ").trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqd: error: {}: {}", error_code(&e), one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
