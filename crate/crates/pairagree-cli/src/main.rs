//! `pairagree`: agreement analysis between two binary measurement methods.
//!
//! The workflow is `validate` -> `fit` -> (`test` | `ba` | `kappa` | `icc`),
//! where `fit` writes a plain-text state file that the downstream commands
//! read, plus `simulate` and `power` for synthetic-data studies.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/output error, 3 numerical
//! failure.

mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pairagree::agreement::{ba_summary, cohen_kappa, icc, model_kappa, BaScale};
use pairagree::data::{parse_wide_csv, validate, widen_to_long, CsvColumns, OutcomeLabels};
use pairagree::glmm::{
    fit, wald_test, FitOptions, ModelSpec, RaterEffect, ResidualCorrelation, TimeTrend,
};
use pairagree::report::{
    fmt_f64, parse_fit_state, parse_key_values, write_fit_state, Document, FitState,
};
use pairagree::sim::{
    generate, replicate_rng, run_size_power, RaterAssignment, SimConfig,
};
use pairagree::Error;

#[derive(Parser)]
#[command(
    name = "pairagree",
    version,
    about = "Agreement analysis for two binary measurement methods",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a wide-format CSV dataset and report its structure
    Validate(ValidateArgs),
    /// Fit the probit mixed model and write a fit-state file
    Fit(FitArgs),
    /// Wald test of equal method effects from a fit state
    Test(TestArgs),
    /// Bland-Altman summary and diagram from a fit state
    Ba(BaArgs),
    /// Model-based and naive Cohen's kappa from a fit state
    Kappa(KappaArgs),
    /// Per-method intraclass correlations from a fit state
    Icc(IccArgs),
    /// Generate a synthetic dataset from the model
    Simulate(SimulateArgs),
    /// Size/power sweep of the equal-methods test over a beta_1 grid
    Power(PowerArgs),
}

#[derive(Args, Clone)]
struct CsvArgs {
    /// Outcome label mapped to 1
    #[arg(long, default_value = "Positive")]
    positive: String,
    /// Outcome label mapped to 0
    #[arg(long, default_value = "Negative")]
    negative: String,
    #[arg(long, default_value = "id")]
    col_id: String,
    #[arg(long, default_value = "time")]
    col_time: String,
    #[arg(long, default_value = "y1")]
    col_y1: String,
    #[arg(long, default_value = "y2")]
    col_y2: String,
    #[arg(long, default_value = "rater1")]
    col_rater1: String,
    #[arg(long, default_value = "rater2")]
    col_rater2: String,
}

impl CsvArgs {
    fn columns(&self) -> CsvColumns {
        CsvColumns {
            id: self.col_id.clone(),
            time: self.col_time.clone(),
            outcome_m1: self.col_y1.clone(),
            outcome_m2: self.col_y2.clone(),
            rater_m1: self.col_rater1.clone(),
            rater_m2: self.col_rater2.clone(),
        }
    }

    fn labels(&self) -> OutcomeLabels {
        OutcomeLabels {
            positive: self.positive.clone(),
            negative: self.negative.clone(),
        }
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output file (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Suppress the generation timestamp header
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct ValidateArgs {
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrendArg {
    Linear,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResidArg {
    Ar1,
    Independent,
}

#[derive(Clone, Copy, ValueEnum)]
enum RatersArg {
    Included,
    Omitted,
}

#[derive(Args)]
struct FitArgs {
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    /// Fit-state output file
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    no_timestamp: bool,
    #[arg(long, value_enum, default_value = "linear")]
    trend: TrendArg,
    #[arg(long, value_enum, default_value = "ar1")]
    resid: ResidArg,
    #[arg(long, value_enum, default_value = "included")]
    raters: RatersArg,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 200)]
    max_inner: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Skip variance-component standard errors
    #[arg(long)]
    no_vc_se: bool,
}

#[derive(Args)]
struct TestArgs {
    state: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Latent,
    Probability,
    LogProbability,
}

#[derive(Args)]
struct BaArgs {
    state: PathBuf,
    #[arg(long, value_enum, default_value = "latent")]
    scale: ScaleArg,
    /// Write the diagram as SVG to this path
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct KappaArgs {
    state: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct IccArgs {
    state: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Campaign seed; defaults to 42 with a notice on stderr
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate stream to draw (datasets with different indices are
    /// independent)
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct PowerArgs {
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Campaign seed; defaults to 42 with a notice on stderr
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the power curves as SVG to this path
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are successes, everything else is a
            // usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn usage_err(msg: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: msg.into(),
    }
}

fn io_err(path: &Path, e: &std::io::Error) -> CliError {
    CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match e {
            Error::Numerical(_) => 3,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, &e))
}

fn emit(out: &OutputArgs, body: &str) -> Result<(), CliError> {
    let mut text = String::new();
    if !out.no_timestamp {
        let _ = writeln!(
            text,
            "# generated {}",
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        );
    }
    text.push_str(body);
    match &out.output {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, &e))?;
                }
            }
            std::fs::write(path, text).map_err(|e| io_err(path, &e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_dataset(
    path: &Path,
    csv: &CsvArgs,
) -> Result<pairagree::data::LongDataset, CliError> {
    let text = read_file(path)?;
    let paired = parse_wide_csv(&text, &csv.columns(), &csv.labels())?;
    Ok(widen_to_long(&paired)?)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            eprintln!("note: no --seed given, using default seed 42");
            42
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Test(args) => cmd_test(args),
        Command::Ba(args) => cmd_ba(args),
        Command::Kappa(args) => cmd_kappa(args),
        Command::Icc(args) => cmd_icc(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Power(args) => cmd_power(args),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data, &args.csv)?;
    let report = validate(&ds);
    let mut doc = Document::new();
    {
        let s = doc.section("dataset");
        s.push(("subjects".into(), report.n_subjects.to_string()));
        s.push(("raters".into(), report.n_raters.to_string()));
        s.push(("records".into(), report.n_records.to_string()));
        s.push(("min_times_per_subject".into(), report.min_times.to_string()));
        s.push(("max_times_per_subject".into(), report.max_times.to_string()));
        s.push(("prevalence_m1".into(), fmt_f64(report.prevalence[0])));
        s.push(("prevalence_m2".into(), fmt_f64(report.prevalence[1])));
        s.push((
            "complete_separation".into(),
            report.complete_separation.to_string(),
        ));
    }
    if !report.messages.is_empty() {
        let s = doc.section("warnings");
        for (k, m) in report.messages.iter().enumerate() {
            s.push((format!("warning_{k}"), m.clone()));
        }
    }
    emit(&args.out, &doc.render())
}

fn model_spec(args: &FitArgs) -> ModelSpec {
    ModelSpec {
        time_trend: match args.trend {
            TrendArg::Linear => TimeTrend::Linear,
            TrendArg::None => TimeTrend::None,
        },
        residual_correlation: match args.resid {
            ResidArg::Ar1 => ResidualCorrelation::Ar1,
            ResidArg::Independent => ResidualCorrelation::Independent,
        },
        rater_effect: match args.raters {
            RatersArg::Included => RaterEffect::Included,
            RatersArg::Omitted => RaterEffect::Omitted,
        },
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data, &args.csv)?;
    let spec = model_spec(&args);
    let opts = FitOptions {
        max_outer: args.max_outer,
        max_inner_evals: args.max_inner,
        outer_tol: args.tol,
        compute_vc_se: !args.no_vc_se,
        ..FitOptions::default()
    };
    let result = fit(&ds, spec, &opts)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let converged = result.converged;
    let state = FitState::from_fit(result, &ds);
    let out = OutputArgs {
        output: Some(args.output.clone()),
        no_timestamp: args.no_timestamp,
    };
    emit(&out, &write_fit_state(&state))?;

    // short summary on stdout
    let f = &state.fit;
    println!("converged: {converged} ({} outer iterations)", f.n_outer_iterations);
    println!(
        "beta_1 = {:.4} (se {:.4})   beta_2 = {:.4} (se {:.4})",
        f.fixed.beta_1,
        f.fixed.se_beta_1(),
        f.fixed.beta_2,
        f.fixed.se_beta_2()
    );
    if let Some(theta) = f.fixed.theta {
        println!("time slope = {theta:.4}");
    }
    println!(
        "sigma2_gamma = {:.4}   sigma2_alpha1 = {:.4}   sigma2_alpha2 = {:.4}   rho = {:.4}",
        f.vc.sigma2_gamma, f.vc.sigma2_alpha1, f.vc.sigma2_alpha2, f.vc.rho
    );
    Ok(())
}

fn load_state(path: &Path) -> Result<FitState, CliError> {
    Ok(parse_fit_state(&read_file(path)?)?)
}

fn cmd_test(args: TestArgs) -> Result<(), CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(usage_err("--level must be in (0, 1)"));
    }
    let state = load_state(&args.state)?;
    let test = wald_test(&state.fit, args.level)?;
    let mut doc = Document::new();
    let s = doc.section("wald_test");
    s.push(("null".into(), "beta_1 = beta_2".into()));
    s.push(("estimate".into(), fmt_f64(test.estimate)));
    s.push(("std_error".into(), fmt_f64(test.std_error)));
    s.push(("statistic".into(), fmt_f64(test.statistic)));
    s.push(("p_value".into(), fmt_f64(test.p_value)));
    s.push(("level".into(), fmt_f64(test.level)));
    s.push(("ci_low".into(), fmt_f64(test.ci_low)));
    s.push(("ci_high".into(), fmt_f64(test.ci_high)));
    emit(&args.out, &doc.render())
}

fn cmd_ba(args: BaArgs) -> Result<(), CliError> {
    let state = load_state(&args.state)?;
    let scale = match args.scale {
        ScaleArg::Latent => BaScale::Latent,
        ScaleArg::Probability => BaScale::Probability,
        ScaleArg::LogProbability => BaScale::LogProbability,
    };
    let ba = ba_summary(&state.summaries, scale)?;
    if !ba.dropped_subjects.is_empty() {
        let labels: Vec<&str> = ba
            .dropped_subjects
            .iter()
            .map(|&i| state.subject_labels[i].as_str())
            .collect();
        eprintln!(
            "warning: dropped {} subject(s) with zero probability on the log scale: {}",
            labels.len(),
            labels.join(" ")
        );
    }

    // CSV body with the summary mirrored in comment lines
    let mut body = String::new();
    let _ = writeln!(body, "# scale = {}", ba.scale.label());
    let _ = writeln!(body, "# mean_difference = {}", fmt_f64(ba.mean_diff));
    let _ = writeln!(body, "# sd_difference = {}", fmt_f64(ba.sd_diff));
    let _ = writeln!(body, "# loa_low = {}", fmt_f64(ba.loa_low));
    let _ = writeln!(body, "# loa_high = {}", fmt_f64(ba.loa_high));
    let _ = writeln!(body, "# fraction_within_loa = {}", fmt_f64(ba.pct_within));
    body.push_str("subject,average,difference\n");
    for p in &ba.points {
        let _ = writeln!(
            body,
            "{},{},{}",
            state.subject_labels[p.0],
            fmt_f64(p.1),
            fmt_f64(p.2)
        );
    }
    if let Some(path) = &args.svg {
        let svg_out = OutputArgs {
            output: Some(path.clone()),
            no_timestamp: true,
        };
        emit(&svg_out, &svg::ba_svg(&ba))?;
    }
    emit(&args.out, &body)
}

fn kappa_section(doc: &mut Document, name: &str, k: &pairagree::agreement::KappaResult) {
    let s = doc.section(name);
    s.push(("a_both_negative".into(), k.a.to_string()));
    s.push(("b_only_m1_positive".into(), k.b.to_string()));
    s.push(("c_only_m2_positive".into(), k.c.to_string()));
    s.push(("d_both_positive".into(), k.d.to_string()));
    s.push(("observed_agreement".into(), fmt_f64(k.p_o)));
    s.push(("chance_agreement".into(), fmt_f64(k.p_e)));
    s.push(("kappa".into(), fmt_f64(k.kappa)));
    s.push(("std_error".into(), fmt_f64(k.std_error)));
    s.push(("ci_low".into(), fmt_f64(k.ci_low)));
    s.push(("ci_high".into(), fmt_f64(k.ci_high)));
    s.push(("degenerate".into(), k.degenerate.to_string()));
}

fn cmd_kappa(args: KappaArgs) -> Result<(), CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(usage_err("--level must be in (0, 1)"));
    }
    let state = load_state(&args.state)?;
    let model = model_kappa(&state.summaries, args.level)?;
    let (a, b, c, d) = state.naive;
    let mut doc = Document::new();
    kappa_section(&mut doc, "model_kappa", &model);
    match cohen_kappa(a, b, c, d, args.level) {
        Ok(naive) => kappa_section(&mut doc, "naive_kappa", &naive),
        Err(e) => {
            let s = doc.section("naive_kappa");
            s.push(("unavailable".into(), e.to_string()));
        }
    }
    emit(&args.out, &doc.render())
}

fn cmd_icc(args: IccArgs) -> Result<(), CliError> {
    let state = load_state(&args.state)?;
    let r = icc(&state.fit.vc);
    let mut doc = Document::new();
    let s = doc.section("icc");
    s.push(("method_1".into(), fmt_f64(r.icc_m1)));
    s.push(("method_2".into(), fmt_f64(r.icc_m2)));
    emit(&args.out, &doc.render())
}

fn sim_config_from_file(path: &Path) -> Result<SimConfig, CliError> {
    let map = parse_key_values(&read_file(path)?)?;
    let mut cfg = SimConfig::model1(100, 30, 5);
    let mut unknown: Vec<&str> = Vec::new();
    for (key, value) in &map {
        let bad = |k: &str| usage_err(format!("config key {k}: bad value {value:?}"));
        match key.as_str() {
            "model" => match value.as_str() {
                "1" => {
                    let base = SimConfig::model1(cfg.n_subjects, cfg.n_raters, cfg.n_times);
                    cfg = SimConfig {
                        seed: cfg.seed,
                        rater_assignment: cfg.rater_assignment,
                        ..base
                    };
                }
                "2" => {
                    let base = SimConfig::model2(cfg.n_subjects, cfg.n_raters, cfg.n_times);
                    cfg = SimConfig {
                        seed: cfg.seed,
                        rater_assignment: cfg.rater_assignment,
                        ..base
                    };
                }
                _ => return Err(usage_err(format!("config key model: expected 1 or 2, got {value:?}"))),
            },
            "n_subjects" => cfg.n_subjects = value.parse().map_err(|_| bad(key))?,
            "n_raters" => cfg.n_raters = value.parse().map_err(|_| bad(key))?,
            "n_times" => cfg.n_times = value.parse().map_err(|_| bad(key))?,
            "beta_1" => cfg.beta_1 = value.parse().map_err(|_| bad(key))?,
            "beta_2" => cfg.beta_2 = value.parse().map_err(|_| bad(key))?,
            "time_slope" => cfg.time_slope = value.parse().map_err(|_| bad(key))?,
            "sigma2_gamma" => cfg.sigma2_gamma = value.parse().map_err(|_| bad(key))?,
            "sigma2_alpha1" => cfg.sigma2_alpha1 = value.parse().map_err(|_| bad(key))?,
            "sigma2_alpha2" => cfg.sigma2_alpha2 = value.parse().map_err(|_| bad(key))?,
            "rho" => cfg.rho = value.parse().map_err(|_| bad(key))?,
            "rater_assignment" => {
                cfg.rater_assignment = match value.as_str() {
                    "fresh" => RaterAssignment::FreshPerVisit,
                    "persistent" => RaterAssignment::PersistentPair,
                    _ => return Err(usage_err(format!(
                        "config key rater_assignment: expected fresh or persistent, got {value:?}"
                    ))),
                };
            }
            // power-only keys are tolerated here so one file can drive both
            "beta1_grid" | "n_replicates" | "alpha" | "specs" => {}
            other => unknown.push(other),
        }
    }
    if !unknown.is_empty() {
        return Err(usage_err(format!("unknown config keys: {}", unknown.join(", "))));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = sim_config_from_file(&args.config)?;
    cfg.seed = resolve_seed(args.seed);
    let ds = generate(&cfg, &mut replicate_rng(cfg.seed, args.replicate))?;

    // wide CSV: one row per (subject, time) with both methods
    let mut body = String::new();
    body.push_str("id,time,y1,y2,rater1,rater2\n");
    let label = |y: u8| if y == 1 { "Positive" } else { "Negative" };
    let records = ds.records();
    let mut k = 0;
    while k < records.len() {
        let m1 = &records[k];
        // records are sorted by (subject, method, time); method 2 rows of the
        // same subject follow its method 1 rows
        let t_count = ds.subject_times(m1.subject_index).len();
        for off in 0..t_count {
            let r1 = &records[k + off];
            let r2 = &records[k + t_count + off];
            let _ = writeln!(
                body,
                "{},{},{},{},{},{}",
                ds.subject_labels()[r1.subject_index],
                fmt_f64(r1.time),
                label(r1.outcome),
                label(r2.outcome),
                ds.rater_labels()[r1.rater_index],
                ds.rater_labels()[r2.rater_index],
            );
        }
        k += 2 * t_count;
    }
    emit(&args.out, &body)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || usage_err(format!("bad beta1_grid {spec:?} (use start:step:end or a comma list)"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let step: f64 = parts[1].parse().map_err(|_| bad())?;
        let end: f64 = parts[2].parse().map_err(|_| bad())?;
        if !(step > 0.0) || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 0.5).floor() as usize;
        Ok((0..=n).map(|k| start + step * k as f64).collect())
    } else {
        spec.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn cmd_power(args: PowerArgs) -> Result<(), CliError> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(usage_err("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage_err(format!("thread pool: {e}")))?;
    }
    let mut cfg = sim_config_from_file(&args.config)?;
    cfg.seed = resolve_seed(args.seed);
    let map = parse_key_values(&read_file(&args.config)?)?;
    let grid = parse_grid(map.get("beta1_grid").map(String::as_str).unwrap_or("1.6:0.2:2.2"))?;
    let n_replicates: usize = map
        .get("n_replicates")
        .map(|v| v.parse().map_err(|_| usage_err("bad n_replicates")))
        .transpose()?
        .unwrap_or(100);
    let alpha: f64 = map
        .get("alpha")
        .map(|v| v.parse().map_err(|_| usage_err("bad alpha")))
        .transpose()?
        .unwrap_or(0.05);
    let spec_names = map
        .get("specs")
        .map(String::as_str)
        .unwrap_or("with_rater,without_rater");
    let mut specs = Vec::new();
    for name in spec_names.split(',').map(str::trim) {
        let spec = match name {
            "with_rater" => ModelSpec::default(),
            "without_rater" => ModelSpec {
                rater_effect: RaterEffect::Omitted,
                ..ModelSpec::default()
            },
            other => return Err(usage_err(format!("unknown spec {other:?}"))),
        };
        specs.push((name.to_string(), spec));
    }

    let opts = FitOptions {
        compute_vc_se: false,
        ..FitOptions::default()
    };
    let points = run_size_power(&cfg, &grid, n_replicates, &specs, alpha, &opts)?;

    let mut body = String::new();
    let _ = writeln!(body, "# seed = {}", cfg.seed);
    let _ = writeln!(body, "# alpha = {}", fmt_f64(alpha));
    body.push_str("beta_1,spec,n_reps,rejection_rate\n");
    for p in &points {
        let _ = writeln!(
            body,
            "{},{},{},{}",
            fmt_f64(p.beta_1),
            p.spec_label,
            p.n_replicates,
            fmt_f64(p.rejection_rate)
        );
    }
    if let Some(path) = &args.svg {
        let svg_out = OutputArgs {
            output: Some(path.clone()),
            no_timestamp: true,
        };
        emit(&svg_out, &svg::power_svg(&points, alpha))?;
    }
    emit(&args.out, &body)
}
