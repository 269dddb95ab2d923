//! Command-line front end. `run` returns the process exit code: 0 when the
//! report was written, otherwise the error category's code.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{EffectEntry, Inference, LearnerEntry, RunConfig};
use crate::data::{validate, EffectSpec, ObservedData, Regime};
use crate::effects::{decompose_ate, disparity_decompose, Decomposition, DisparityOptions, EffectEstimate};
use crate::error::{Error, Result};
use crate::estimators::{estimate_regimes, EstimateDiagnostics, EstimationSettings, EstimatorOptions, Method};
use crate::inference::{bootstrap, rubin_pool, BootstrapOptions};
use crate::ingest::{read_csv, read_grouped_csv, write_csv, BlockSpec, DataSpec};
use crate::nuisance::{ChainMode, FitOptions, LearnerPolicy, LearnerSettings};
use crate::report::{
    BootstrapInfo, DecompositionReport, DiagnosticsReport, EffectReport, InputFlag, LearnerEntryReport, NuisanceReport,
    Report, Warning, WarningCode, SCHEMA_VERSION, VARIANCE_CAVEAT,
};
use crate::simulation::{generate, run_study, Case, DisparityDgp, DgpCoefficients, StudyEstimator, StudyGrid};

#[derive(Debug, Parser)]
#[command(name = "pathmed", version, about = "Path-specific mediation effects for a binary treatment")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate named or custom effects.
    Estimate(RunArgs),
    /// Split the ATE into one component per path.
    Decompose(RunArgs),
    /// Decompose an outcome gap between two groups (no covariates).
    Disparity(RunArgs),
    /// Run the robustness study on synthetic data.
    Simulate(SimArgs),
    /// Write one synthetic sample as CSV.
    Generate(GenArgs),
}

/// Flags shared by the estimation commands. Flags override the config file.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Input CSV; repeat for multiply imputed datasets.
    #[arg(long = "input", short = 'i')]
    pub inputs: Vec<PathBuf>,
    /// Report path (JSON).
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    #[arg(long, alias = "group")]
    pub treatment: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// One mediator block per flag, in causal order: `m1` or `name:c1,c2`.
    #[arg(long = "mediator")]
    pub mediators: Vec<String>,
    /// Comma-separated discrete mediator columns.
    #[arg(long, value_delimiter = ',')]
    pub discrete: Option<Vec<String>>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// `eif` or `bootstrap`.
    #[arg(long)]
    pub inference: Option<String>,
    #[arg(long)]
    pub bootstrap_replicates: Option<usize>,
    /// `collapsed` or `full`.
    #[arg(long)]
    pub chain: Option<String>,
    /// Effect name (`NDE`, `cPSE_M2`, ...) or regime pair `011-001`; repeatable.
    #[arg(long = "effect")]
    pub effects: Vec<String>,
    /// Flip order for `decompose`, e.g. `3,2,1`.
    #[arg(long, value_delimiter = ',')]
    pub ordering: Option<Vec<usize>>,
    /// `role=learner` or `role=learner:col1,col2`; role is `default`, `piK`, `muK` or `fK`.
    #[arg(long = "learner")]
    pub learners: Vec<String>,
    /// Flag the run as a misspecification experiment.
    #[arg(long)]
    pub misspecified: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Comma-separated cases from a-e.
    #[arg(long, value_delimiter = ',')]
    pub cases: Option<Vec<String>>,
    /// Comma-separated estimators (w-a, ri, ri-w-w, ri-ri-w, par-eif2, par2-eif2, np-eif2, np-eif2-cf, tmle-eif2, tmle-eif2-cf).
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[arg(long, default_value_t = 20240521)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Long-format CSV output.
    #[arg(long, default_value = "study.csv")]
    pub csv: PathBuf,
    /// JSON summary output.
    #[arg(long, default_value = "study.json")]
    pub json: PathBuf,
    /// Full-size study: 1000 replicates and every estimator.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 20240521)]
    pub seed: u64,
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Discrete two-group design (columns a, m1, m2, y) instead of the covariate design.
    #[arg(long)]
    pub disparity: bool,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    match execute(&cli.command) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}

/// Runs one command and returns the files written.
pub fn execute(cmd: &Command) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Estimate(a) => {
            let plan = Plan::build(a)?;
            let report = plan.estimate()?;
            finish(&plan, report)
        }
        Command::Decompose(a) => {
            let plan = Plan::build(a)?;
            let report = plan.decompose()?;
            finish(&plan, report)
        }
        Command::Disparity(a) => {
            let plan = Plan::build(a)?;
            let report = plan.disparity()?;
            finish(&plan, report)
        }
        Command::Simulate(a) => simulate(a),
        Command::Generate(a) => {
            if a.disparity {
                let g = DisparityDgp::default().generate(a.n, a.seed)?;
                write_csv(g.data(), &a.output)?;
            } else {
                write_csv(&generate(&DgpCoefficients::default(), a.n, a.seed)?, &a.output)?;
            }
            Ok(vec![a.output.clone()])
        }
    }
}

fn finish(plan: &Plan, report: Report) -> Result<Vec<PathBuf>> {
    if report.warnings.iter().any(|w| w.code == WarningCode::VarianceNotRobust) {
        eprintln!("note: {VARIANCE_CAVEAT}");
    }
    report.write(&plan.output)?;
    Ok(vec![plan.output.clone()])
}

/// Folds command-line flags into the config; flags win.
pub fn merge(mut cfg: RunConfig, a: &RunArgs) -> Result<RunConfig> {
    if !a.inputs.is_empty() {
        cfg.inputs = a.inputs.clone();
    }
    if a.output.is_some() {
        cfg.output = a.output.clone();
    }
    let touches_data = a.treatment.is_some()
        || a.outcome.is_some()
        || a.covariates.is_some()
        || !a.mediators.is_empty()
        || a.discrete.is_some();
    if touches_data {
        let mut d = cfg.data.take().unwrap_or_default();
        if let Some(t) = &a.treatment {
            d.treatment = t.clone();
        }
        if let Some(o) = &a.outcome {
            d.outcome = o.clone();
        }
        if let Some(c) = &a.covariates {
            d.covariates = c.iter().filter(|s| !s.is_empty()).cloned().collect();
        }
        if !a.mediators.is_empty() {
            d.mediators = a.mediators.iter().map(|m| parse_block(m)).collect::<Result<_>>()?;
        }
        if let Some(ds) = &a.discrete {
            d.discrete = ds.clone();
        }
        cfg.data = Some(d);
    }
    macro_rules! take {
        ($field:ident) => {
            if a.$field.is_some() {
                cfg.$field = a.$field.clone();
            }
        };
    }
    take!(method);
    take!(folds);
    take!(seed);
    take!(clip);
    take!(level);
    take!(bootstrap_replicates);
    take!(ordering);
    if let Some(i) = &a.inference {
        cfg.inference = Some(i.parse()?);
    }
    if let Some(c) = &a.chain {
        cfg.chain = Some(match c.as_str() {
            "collapsed" => ChainMode::Collapsed,
            "full" => ChainMode::Full,
            other => return Err(Error::Config(format!("unknown chain mode '{other}' (expected collapsed or full)"))),
        });
    }
    if !a.effects.is_empty() {
        cfg.effects = a.effects.iter().map(|e| e.parse()).collect::<Result<Vec<EffectEntry>>>()?;
    }
    for l in &a.learners {
        let (role, rest) = l
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("learner flag '{l}' must look like role=learner[:cols]")))?;
        let entry = match rest.split_once(':') {
            Some((learner, cols)) => LearnerEntry::Detailed {
                learner: learner.to_string(),
                covariates: Some(cols.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()),
            },
            None => LearnerEntry::Name(rest.to_string()),
        };
        cfg.learners.insert(role.trim().to_string(), entry);
    }
    if a.misspecified {
        cfg.misspecified = Some(true);
    }
    Ok(cfg)
}

fn parse_block(s: &str) -> Result<BlockSpec> {
    let (name, cols) = match s.split_once(':') {
        Some((n, c)) => (n.to_string(), c),
        None => (s.split(',').next().unwrap_or(s).to_string(), s),
    };
    let columns: Vec<String> = cols.split(',').map(str::trim).filter(|c| !c.is_empty()).map(str::to_string).collect();
    if name.is_empty() || columns.is_empty() {
        return Err(Error::Config(format!("bad mediator block '{s}'")));
    }
    Ok(BlockSpec { name, columns })
}

/// A resolved run: config, loaded inputs and estimation settings.
struct Plan {
    cfg: RunConfig,
    output: PathBuf,
    method: Method,
    spec: DataSpec,
    inference: Inference,
    level: f64,
    clip: f64,
    seed: u64,
    folds: usize,
    chain: ChainMode,
}

impl Plan {
    fn build(a: &RunArgs) -> Result<Plan> {
        let base = match &a.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let cfg = merge(base, a)?;
        if cfg.inputs.is_empty() {
            return Err(Error::Config("no input files (use --input or `inputs` in the config)".into()));
        }
        let output = cfg.output.clone().ok_or_else(|| Error::Config("no output path (use --output)".into()))?;
        let spec = cfg.data.clone().ok_or_else(|| Error::Config("no data roles declared (config [data] or flags)".into()))?;
        let method: Method = cfg.method.as_deref().unwrap_or("eif2").parse()?;
        let level = cfg.level.unwrap_or(0.95);
        if !(0.0 < level && level < 1.0) {
            return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
        }
        Ok(Plan {
            output,
            method,
            spec,
            inference: cfg.inference.unwrap_or_default(),
            level,
            clip: cfg.clip.unwrap_or(0.01),
            seed: cfg.seed.unwrap_or(20240521),
            folds: cfg.folds.unwrap_or(1).max(1),
            chain: cfg.chain.unwrap_or_default(),
            cfg,
        })
    }

    fn load(&self) -> Result<Vec<ObservedData>> {
        let data: Vec<ObservedData> = self.cfg.inputs.iter().map(|p| read_csv(p, &self.spec)).collect::<Result<_>>()?;
        let first = &data[0];
        for (i, d) in data.iter().enumerate().skip(1) {
            if d.k() != first.k() || d.x_names() != first.x_names() {
                return Err(Error::Data(format!("input {} does not match the layout of the first input", i + 1)));
            }
        }
        Ok(data)
    }

    fn settings(&self, data: &ObservedData) -> Result<EstimationSettings> {
        Ok(EstimationSettings {
            policy: self.cfg.policy(data.x_names())?,
            fit: FitOptions { chain: self.chain, seed: self.seed, ..FitOptions::default() },
            estimator: EstimatorOptions { clip: self.clip, seed: self.seed, ..EstimatorOptions::default() },
            folds: self.folds,
        })
    }

    fn skeleton(&self, command: &str, data: &[ObservedData], policy: &LearnerPolicy) -> Report {
        let names = data.first().map(|d| d.x_names().to_vec()).unwrap_or_default();
        let mut learners = vec![learner_entry("default", &policy.default, &names)];
        for (role, c) in &policy.overrides {
            learners.push(learner_entry(&role.to_string(), c, &names));
        }
        let mut report = Report {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            method: self.method.to_string(),
            inputs: self.cfg.inputs.iter().map(|p| p.display().to_string()).collect(),
            n: data.iter().map(ObservedData::n).collect(),
            k: data.first().map_or(0, ObservedData::k),
            folds: self.folds,
            seed: self.seed,
            clip: self.clip,
            level: self.level,
            inference: match self.inference {
                Inference::Eif => "eif".into(),
                Inference::Bootstrap => "bootstrap".into(),
            },
            effects: vec![],
            decomposition: None,
            nuisances: NuisanceReport {
                chain: match self.chain {
                    ChainMode::Collapsed => "collapsed".into(),
                    ChainMode::Full => "full".into(),
                },
                learners,
                fits: 0,
            },
            diagnostics: DiagnosticsReport {
                clipped: 0,
                clip_checks: 0,
                clip_rate: 0.0,
                max_weight: 0.0,
                positivity_flags: vec![],
            },
            warnings: vec![],
        };
        if self.cfg.misspecification_flags() {
            report.push_warning(Warning::new(WarningCode::VarianceNotRobust, VARIANCE_CAVEAT));
        }
        report
    }

    fn positivity(&self, data: &[ObservedData], report: &mut Report) -> Result<()> {
        for (i, d) in data.iter().enumerate() {
            for flag in validate(d, self.clip)?.positivity_flags {
                report.diagnostics.positivity_flags.push(InputFlag { input: i, flag });
            }
        }
        Ok(())
    }

    fn estimate(&self) -> Result<Report> {
        let data = self.load()?;
        let specs = self.cfg.effect_specs(&data[0])?;
        let settings = self.settings(&data[0])?;
        let mut report = self.skeleton("estimate", &data, &settings.policy);
        self.positivity(&data, &mut report)?;
        let mut diag = EstimateDiagnostics::default();
        // per_input[i][e]
        let mut per_input: Vec<Vec<EffectEstimate>> = Vec::with_capacity(data.len());
        let mut boot_info: Vec<Vec<BootstrapInfo>> = Vec::new();
        for d in &data {
            let (effects, fits, warnings) = effects_for(d, &specs, &self.method, &settings, self.level, &mut diag)?;
            report.nuisances.fits += fits;
            for w in warnings {
                report.push_warning(Warning::classify(&w));
            }
            let effects = match self.inference {
                Inference::Eif => effects,
                Inference::Bootstrap => {
                    let (effects, info, warns) = self.bootstrap_effects(d, &specs, &settings, effects)?;
                    boot_info.push(info);
                    for w in warns {
                        report.push_warning(Warning::classify(&w));
                    }
                    effects
                }
            };
            per_input.push(effects);
        }
        for (e, _) in specs.iter().enumerate() {
            let column: Vec<&EffectEstimate> = per_input.iter().map(|v| &v[e]).collect();
            let mut r = pool(&column)?;
            if let Some(info) = boot_info.first() {
                r.bootstrap = Some(BootstrapInfo {
                    replicates: info[e].replicates,
                    failures: boot_info.iter().map(|b| b[e].failures).sum(),
                });
            }
            report.effects.push(r);
        }
        fill_diagnostics(&mut report, &diag);
        Ok(report)
    }

    fn bootstrap_effects(
        &self,
        data: &ObservedData,
        specs: &[EffectSpec],
        settings: &EstimationSettings,
        mut effects: Vec<EffectEstimate>,
    ) -> Result<(Vec<EffectEstimate>, Vec<BootstrapInfo>, Vec<String>)> {
        let opts = BootstrapOptions {
            replicates: self.cfg.bootstrap_replicates.unwrap_or(1000),
            level: self.level,
            seed: self.seed,
            adaptive_learners: settings.policy.is_adaptive(),
            ..BootstrapOptions::default()
        };
        let mut info = Vec::with_capacity(specs.len());
        let mut warnings = Vec::new();
        for (spec, e) in specs.iter().zip(effects.iter_mut()) {
            let b = bootstrap(data, &opts, |sample, seed| {
                let mut s = settings.clone();
                s.fit.seed = seed;
                s.estimator.seed = seed;
                crate::effects::estimate_effect(sample, spec, &self.method, &s).map(|e| e.point)
            })?;
            e.se = Some(b.se);
            e.ci = Some(b.ci);
            info.push(BootstrapInfo { replicates: b.replicates.len(), failures: b.failures });
            warnings.extend(b.warnings);
        }
        Ok((effects, info, warnings))
    }

    fn no_bootstrap(&self, command: &str) -> Result<()> {
        if self.inference == Inference::Bootstrap {
            return Err(Error::Config(format!("bootstrap inference is available for `estimate`, not `{command}`")));
        }
        Ok(())
    }

    fn decompose(&self) -> Result<Report> {
        self.no_bootstrap("decompose")?;
        let data = self.load()?;
        let settings = self.settings(&data[0])?;
        let mut report = self.skeleton("decompose", &data, &settings.policy);
        self.positivity(&data, &mut report)?;
        let ordering = self.cfg.ordering.as_deref();
        let decs = data
            .iter()
            .map(|d| decompose_ate(d, &self.method, ordering, &settings).map(|dec| relevel(dec, self.level)))
            .collect::<Result<Vec<_>>>()?;
        self.attach_decomposition(&mut report, decs)?;
        Ok(report)
    }

    fn disparity(&self) -> Result<Report> {
        self.no_bootstrap("disparity")?;
        if self.folds > 1 {
            return Err(Error::Config("disparity decomposition does not cross-fit; drop --folds".into()));
        }
        let grouped = self.cfg.inputs.iter().map(|p| read_grouped_csv(p, &self.spec)).collect::<Result<Vec<_>>>()?;
        let data: Vec<ObservedData> = grouped.iter().map(|g| g.data().clone()).collect();
        let policy = self.cfg.policy(&[])?;
        let mut report = self.skeleton("disparity", &data, &policy);
        let opts = DisparityOptions {
            policy,
            learner: LearnerSettings::default(),
            clip: self.clip,
            level: self.level,
            seed: self.seed,
        };
        let decs = grouped.iter().map(|g| disparity_decompose(g, &self.method, &opts)).collect::<Result<Vec<_>>>()?;
        self.attach_decomposition(&mut report, decs)?;
        Ok(report)
    }

    fn attach_decomposition(&self, report: &mut Report, decs: Vec<Decomposition>) -> Result<()> {
        let mut diag = EstimateDiagnostics::default();
        for d in &decs {
            let tol = 1e-10 * d.ate.point.abs().max(1.0);
            if d.telescoping_error() > tol {
                return Err(Error::Numeric(format!(
                    "components do not sum to the total (error {:.3e})",
                    d.telescoping_error()
                )));
            }
            report.nuisances.fits += d.fits;
            diag.absorb(&d.diagnostics);
            for w in &d.warnings {
                report.push_warning(Warning::classify(w));
            }
        }
        let ates: Vec<&EffectEstimate> = decs.iter().map(|d| &d.ate).collect();
        let ate = pool(&ates)?;
        let components = (0..decs[0].components.len())
            .map(|c| pool(&decs.iter().map(|d| &d.components[c]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let telescoping_error = (components.iter().map(|c| c.point).sum::<f64>() - ate.point).abs();
        report.decomposition =
            Some(DecompositionReport { ate, components, ordering: decs[0].ordering.clone(), telescoping_error });
        fill_diagnostics(report, &diag);
        Ok(())
    }
}

fn relevel(mut d: Decomposition, level: f64) -> Decomposition {
    for e in d.components.iter_mut().chain(std::iter::once(&mut d.ate)) {
        if let Some(se) = e.se {
            e.ci = Some(crate::inference::wald_ci(e.point, se * se, level));
        }
        e.level = level;
    }
    d
}

fn learner_entry(role: &str, c: &crate::nuisance::LearnerChoice, names: &[String]) -> LearnerEntryReport {
    LearnerEntryReport {
        role: role.to_string(),
        learner: c.learner.to_string(),
        covariates: c
            .covariates
            .as_ref()
            .map(|idx| idx.iter().map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}"))).collect()),
    }
}

fn fill_diagnostics(report: &mut Report, diag: &EstimateDiagnostics) {
    report.diagnostics.clipped = diag.clipped;
    report.diagnostics.clip_checks = diag.clip_checks;
    report.diagnostics.clip_rate = diag.clip_rate();
    report.diagnostics.max_weight = diag.max_weight;
    if diag.clip_rate() > 0.01 {
        report.push_warning(Warning::new(
            WarningCode::ClipRate,
            format!(
                "{:.1}% of probabilities were clipped at {} ({} of {})",
                100.0 * diag.clip_rate(),
                report.clip,
                diag.clipped,
                diag.clip_checks
            ),
        ));
    }
}

/// Estimates every effect on one dataset, sharing fits across all regimes.
fn effects_for(
    data: &ObservedData,
    specs: &[EffectSpec],
    method: &Method,
    settings: &EstimationSettings,
    level: f64,
    diag: &mut EstimateDiagnostics,
) -> Result<(Vec<EffectEstimate>, usize, Vec<String>)> {
    let mut regimes: Vec<Regime> = Vec::new();
    for s in specs {
        for r in [&s.comparison, &s.baseline] {
            if !regimes.contains(r) {
                regimes.push(r.clone());
            }
        }
    }
    let est = estimate_regimes(data, &regimes, method, settings)?;
    let by_regime: BTreeMap<String, usize> = regimes.iter().enumerate().map(|(i, r)| (r.to_string(), i)).collect();
    let mut warnings = est.warnings.clone();
    for e in &est.estimates {
        diag.absorb(&e.diagnostics);
        warnings.extend(e.diagnostics.warnings.iter().cloned());
    }
    let effects = specs
        .iter()
        .map(|s| {
            let c = &est.estimates[by_regime[&s.comparison.to_string()]];
            let b = &est.estimates[by_regime[&s.baseline.to_string()]];
            EffectEstimate::from_estimates(s.clone(), c, b, level)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((effects, est.fits, warnings))
}

/// Rubin-pools one effect over inputs; a single input passes through.
fn pool(per_input: &[&EffectEstimate]) -> Result<EffectReport> {
    let first = per_input[0];
    if per_input.len() == 1 {
        return Ok(EffectReport::from_estimate(first));
    }
    let points: Vec<f64> = per_input.iter().map(|e| e.point).collect();
    let with_se = per_input.iter().all(|e| e.se.is_some());
    let variances: Vec<f64> = per_input.iter().map(|e| e.se.map_or(0.0, |s| s * s)).collect();
    let pooled = rubin_pool(&points, &variances)?;
    let m = per_input.len() as f64;
    let thetas = (
        per_input.iter().map(|e| e.theta_comparison).sum::<f64>() / m,
        per_input.iter().map(|e| e.theta_baseline).sum::<f64>() / m,
    );
    Ok(EffectReport::pooled(first, &pooled, thetas, with_se))
}

fn simulate(a: &SimArgs) -> Result<Vec<PathBuf>> {
    let mut grid = StudyGrid { n: a.n, reps: a.reps, seed: a.seed, folds: a.folds, ..StudyGrid::default() };
    if a.full {
        grid.reps = 1000;
        grid.estimators = StudyEstimator::all();
    }
    if let Some(c) = &a.cases {
        grid.cases = c.iter().map(|s| s.parse::<Case>()).collect::<Result<_>>()?;
    }
    if let Some(e) = &a.estimators {
        grid.estimators = e.iter().map(|s| s.parse::<StudyEstimator>()).collect::<Result<_>>()?;
    }
    let report = run_study(&grid)?;
    report.write_csv(&a.csv)?;
    report.write_summary_json(&a.json)?;
    Ok(vec![a.csv.clone(), a.json.clone()])
}

/// Convenience for callers holding a path to a config file.
pub fn run_config(command: &str, config: &Path) -> i32 {
    run(["pathmed", command, "--config", &config.display().to_string()])
}
