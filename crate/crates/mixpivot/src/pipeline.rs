//! End-to-end runs: data, sampling, relabelling, metrics, reports.
//!
//! A run is configured once ([`PipelineConfig`]), validated eagerly,
//! and executed over `replications` independent repetitions. Each
//! repetition derives its own seeds from the master seed (repetition
//! `r` uses `derive(derive(master, r), k)` with `k` = 1 for data, 2
//! for the sampler, 3 for fits), so runs are reproducible and
//! repetitions can execute in parallel without sharing state. The
//! `PIVOTAL_THREADS` environment variable caps the worker count.
//!
//! [`run_pipeline`] executes the pivot-anchored method and writes, into
//! the output directory: the first repetition's data, relabelled chain,
//! sidecar report and group-probability matrix, plus `kept.csv` and
//! `metrics.csv` rows covering every repetition. [`run_compare`] runs
//! the pivot-anchored method next to the configured reference methods
//! on the first repetition's chain and reports estimates, errors,
//! switch rates and timings per method.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Dataset, MixtureChain};
use crate::chainfile::{self, fmt_real};
use crate::error::{Error, Result};
use crate::pivotal::{MusParams, PivotSet, MUS_MAX_GROUPS};
use crate::seeds;
use crate::sim::gibbs::{gibbs_multivariate, gibbs_univariate, GibbsConfig};
use crate::sim::metrics::{
    component_errors, estimate_component_means, switch_rate, SwitchKey,
};
use crate::sim::{generate_scenario, read_sample_csv, Scenario};
use crate::similarity::{estimate_group_probs, full_iteration_set, Divisor};
use crate::strategy::{
    pivot_selector_with, relabel_strategy, ManualPivotStrategy, PivotalStrategy,
    RelabelOutput, RelabelRequest, RelabelStrategy,
};

/// Where the observations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// Generate from a benchmark scenario (fresh draw per repetition).
    Scenario(Scenario),
    /// Read a CSV of observations (shared across repetitions).
    Data(PathBuf),
}

/// Agglomeration rule for the clustering step. Only complete linkage
/// is implemented; the enum exists so configs can name the rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::Config(format!(
                "unknown linkage {other:?}, only \"complete\" is implemented"
            ))),
        }
    }
}

/// Full configuration of a pipeline or comparison run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: InputSource,
    /// Units to generate per repetition (scenario input only).
    pub units: usize,
    /// Components the sampler fits.
    pub components: usize,
    /// Groups the relabelled output distinguishes; defaults to
    /// `components` when `None`.
    pub groups: Option<usize>,
    /// Recorded draws per repetition (after burn-in).
    pub iterations: usize,
    pub burnin: usize,
    pub seed: u64,
    /// Pivot selector tag: `a..f` or `mus`.
    pub criterion: String,
    pub mus: MusParams,
    pub linkage: Linkage,
    /// Reference methods for [`run_compare`].
    pub baselines: Vec<String>,
    pub replications: usize,
    pub out_dir: PathBuf,
    /// Normalise group probabilities over the kept sweeps instead of
    /// dividing by the original chain length.
    pub normalize_q: bool,
    /// Fixed pivot units (1-based), bypassing pivot selection.
    pub manual_pivots: Option<Vec<usize>>,
}

impl PipelineConfig {
    /// Configuration with the full-scale defaults: n = 1000 units,
    /// H = 3000 recorded draws, B = 100 repetitions, four components,
    /// criterion `b`, no burn-in.
    pub fn new(input: InputSource, out_dir: impl Into<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            input,
            units: 1000,
            components: 4,
            groups: None,
            iterations: 3000,
            burnin: 0,
            seed: 0,
            criterion: "b".into(),
            mus: MusParams::default(),
            linkage: Linkage::Complete,
            baselines: Vec::new(),
            replications: 100,
            out_dir: out_dir.into(),
            normalize_q: false,
            manual_pivots: None,
        }
    }

    /// Groups the output distinguishes.
    pub fn effective_groups(&self) -> usize {
        self.groups.unwrap_or(self.components)
    }

    /// Checks every statically checkable constraint; called by the run
    /// functions before any data is generated or sampled.
    pub fn validate(&self) -> Result<()> {
        if self.units == 0
            || self.components == 0
            || self.iterations == 0
            || self.replications == 0
        {
            return Err(Error::Config(
                "units, components, iterations and replications must be positive".into(),
            ));
        }
        let groups = self.effective_groups();
        if groups == 0 || groups > self.components {
            return Err(Error::Config(format!(
                "group count {} must be between 1 and the component count {}",
                groups, self.components
            )));
        }
        if self.criterion == "mus" && groups > MUS_MAX_GROUPS {
            return Err(Error::Config(format!(
                "MUS capped at {MUS_MAX_GROUPS} groups, requested {groups}"
            )));
        }
        pivot_selector_with(&self.criterion, self.mus).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        })?;
        if self.mus.m == 0 {
            return Err(Error::Config("MUS candidate count must be positive".into()));
        }
        if !(self.mus.eps >= 0.0) {
            return Err(Error::Config("MUS tolerance must be non-negative".into()));
        }
        for tag in &self.baselines {
            let strategy = relabel_strategy(tag).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Config(m),
                other => other,
            })?;
            if strategy.name() == "pivotal" {
                return Err(Error::Config(format!(
                    "{tag:?} is the method under comparison, not a baseline"
                )));
            }
        }
        if let Some(pivots) = &self.manual_pivots {
            if pivots.len() != groups {
                return Err(Error::Config(format!(
                    "{} manual pivots supplied for {} groups",
                    pivots.len(),
                    groups
                )));
            }
        }
        if let InputSource::Data(path) = &self.input {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "input data file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// Summary of one repetition of [`run_pipeline`].
#[derive(Debug, Clone, Serialize)]
pub struct RepSummary {
    /// 1-based repetition number.
    pub replication: usize,
    pub kept_proportion: f64,
    pub dropped_excess_groups: usize,
    pub dropped_pivot_collisions: usize,
    /// Pivot units, 1-based.
    pub pivots: Vec<usize>,
    /// Component mean estimates, row-major `groups x d`.
    pub estimates: Vec<f64>,
    /// Per-component Euclidean estimation error, when truth is known and
    /// the group count matches it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
}

/// Result of [`run_pipeline`], also written to the output directory.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub reps: Vec<RepSummary>,
    pub out_dir: PathBuf,
}

impl PipelineReport {
    pub fn mean_kept_proportion(&self) -> f64 {
        self.reps.iter().map(|r| r.kept_proportion).sum::<f64>() / self.reps.len() as f64
    }
}

#[derive(Serialize)]
struct SidecarReport<'a> {
    method: &'a str,
    criterion: &'a str,
    units: usize,
    components: usize,
    groups: usize,
    iterations: usize,
    seed: u64,
    pivots: &'a [usize],
    kept_proportion: f64,
    dropped_excess_groups: usize,
    dropped_pivot_collisions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_switch_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relabelled_switch_rate: Option<f64>,
}

struct RepOutcome {
    summary: RepSummary,
    /// Artifacts kept only for the first repetition.
    artifacts: Option<RepArtifacts>,
}

struct RepArtifacts {
    data: Dataset,
    raw: MixtureChain,
    output: RelabelOutput,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Builds the worker pool honouring `PIVOTAL_THREADS`.
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("PIVOTAL_THREADS") {
        let threads: usize = raw
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| {
                Error::Config(format!(
                    "PIVOTAL_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

fn rep_seeds(master: u64, rep: usize) -> (u64, u64, u64) {
    let rep_master = seeds::derive(master, rep as u64);
    (
        seeds::derive(rep_master, 1),
        seeds::derive(rep_master, 2),
        seeds::derive(rep_master, 3),
    )
}

/// Data and ground truth for one repetition.
struct RepData {
    data: Dataset,
    truth: Option<(Vec<f64>, usize)>,
    scenario: Option<Scenario>,
}

fn load_rep_data(config: &PipelineConfig, shared: Option<&Dataset>, data_seed: u64) -> Result<RepData> {
    match &config.input {
        InputSource::Scenario(s) => {
            let sample = stage("generate", generate_scenario(*s, config.units, data_seed))?;
            Ok(RepData {
                data: sample.data,
                truth: Some((sample.truth_means, sample.groups)),
                scenario: Some(*s),
            })
        }
        InputSource::Data(_) => Ok(RepData {
            data: shared.expect("shared data loaded before the repetitions").clone(),
            truth: None,
            scenario: None,
        }),
    }
}

fn sample_chain(
    config: &PipelineConfig,
    data: &Dataset,
    scenario: Option<Scenario>,
    seed: u64,
) -> Result<MixtureChain> {
    let gibbs = GibbsConfig {
        components: config.components,
        iterations: config.iterations + config.burnin,
        burnin: config.burnin,
        permute_move: true,
        prior: None,
        init: None,
    };
    let mut chain = stage(
        "sample",
        if data.dim() == 1 {
            gibbs_univariate(data, &gibbs, seed)
        } else {
            gibbs_multivariate(data, &gibbs, seed)
        },
    )?;
    if let Some(s) = scenario {
        let mut meta = chain.meta().clone();
        meta.scenario = Some(s.tag().to_string());
        chain.set_meta(meta);
    }
    Ok(chain)
}

fn pivotal_strategy_for(config: &PipelineConfig) -> Result<Box<dyn RelabelStrategy>> {
    match &config.manual_pivots {
        Some(units) => {
            let n = match &config.input {
                InputSource::Scenario(_) => config.units,
                // Validated against the real unit count when running.
                InputSource::Data(_) => units.iter().copied().max().unwrap_or(1),
            };
            Ok(Box::new(ManualPivotStrategy {
                pivots: PivotSet::manual(units.clone(), n)?,
            }))
        }
        None => Ok(Box::new(PivotalStrategy::new(pivot_selector_with(
            &config.criterion,
            config.mus,
        )?))),
    }
}

fn run_one_rep(
    config: &PipelineConfig,
    shared: Option<&Dataset>,
    rep: usize,
    keep_artifacts: bool,
) -> Result<RepOutcome> {
    let (data_seed, gibbs_seed, fit_seed) = rep_seeds(config.seed, rep);
    let rep_data = load_rep_data(config, shared, data_seed)?;
    let raw = sample_chain(config, &rep_data.data, rep_data.scenario, gibbs_seed)?;

    let strategy = pivotal_strategy_for(config)?;
    let request = RelabelRequest::new(&raw)
        .groups(config.effective_groups())
        .data(&rep_data.data)
        .seed(fit_seed);
    let output = stage("relabel", strategy.run(&request))?;

    let estimates = estimate_component_means(&output.chain);
    let errors = match &rep_data.truth {
        Some((truth, truth_groups)) if *truth_groups == output.chain.g() => Some(stage(
            "metrics",
            component_errors(&estimates, truth, output.chain.g(), output.chain.d()),
        )?),
        _ => None,
    };

    let (excess, collisions, pivots) = match (&output.filter, &output.pivots) {
        (Some(f), Some(p)) => (
            f.excess_groups.len(),
            f.pivot_collisions.len(),
            p.units.clone(),
        ),
        _ => (0, 0, Vec::new()),
    };
    let summary = RepSummary {
        replication: rep + 1,
        kept_proportion: output.kept_proportion(),
        dropped_excess_groups: excess,
        dropped_pivot_collisions: collisions,
        pivots,
        estimates,
        errors,
    };
    Ok(RepOutcome {
        summary,
        artifacts: keep_artifacts.then_some(RepArtifacts {
            data: rep_data.data,
            raw,
            output,
        }),
    })
}

fn write_kept_csv(path: &Path, reps: &[RepSummary]) -> Result<()> {
    let mut out = String::from(
        "replication,kept_proportion,dropped_excess_groups,dropped_pivot_collisions\n",
    );
    for r in reps {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.replication,
            fmt_real(r.kept_proportion),
            r.dropped_excess_groups,
            r.dropped_pivot_collisions
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_metrics_csv(path: &Path, scenario: Option<Scenario>, method: &str, reps: &[RepSummary]) -> Result<()> {
    let mut out = String::from("scenario,method,replication,component,value\n");
    let tag = scenario.map_or_else(|| "-".to_string(), |s| s.tag().to_string());
    for r in reps {
        if let Some(errors) = &r.errors {
            for (k, &v) in errors.iter().enumerate() {
                out.push_str(&format!(
                    "{tag},{method},{},{},{}\n",
                    r.replication,
                    k + 1,
                    fmt_real(v)
                ));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn method_label(config: &PipelineConfig) -> String {
    if config.manual_pivots.is_some() {
        "pivotal:manual".to_string()
    } else {
        format!("pivotal:{}", config.criterion)
    }
}

/// Runs the pivot-anchored pipeline over every repetition and writes
/// the report files. See the module docs for the output layout.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let shared = match &config.input {
        InputSource::Data(path) => {
            let (data, _labels) = stage("load", read_sample_csv(path))?;
            Some(data)
        }
        InputSource::Scenario(_) => None,
    };

    let pool = thread_pool()?;
    let outcomes: Vec<RepOutcome> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| run_one_rep(config, shared.as_ref(), rep, rep == 0))
            .collect::<Result<Vec<_>>>()
    })?;

    fs::create_dir_all(&config.out_dir)?;
    let reps: Vec<RepSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let scenario = match &config.input {
        InputSource::Scenario(s) => Some(*s),
        InputSource::Data(_) => None,
    };
    let method = method_label(config);

    write_kept_csv(&config.out_dir.join("kept.csv"), &reps)?;
    write_metrics_csv(&config.out_dir.join("metrics.csv"), scenario, &method, &reps)?;

    let first = outcomes
        .into_iter()
        .next()
        .expect("at least one repetition")
        .artifacts
        .expect("first repetition keeps artifacts");

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(first.data.units());
    for i in 0..first.data.units() {
        rows.push(first.data.row(i).to_vec());
    }
    write_plain_csv(&config.out_dir.join("data.csv"), &rows)?;

    let relabelled_path = config.out_dir.join("relabelled.ndjson");
    stage("report", chainfile::save_chain(&first.output.chain, &relabelled_path))?;

    let divisor = if config.normalize_q {
        Divisor::SubsetSize
    } else {
        Divisor::Fixed(config.iterations)
    };
    let q = stage(
        "report",
        estimate_group_probs(
            &first.output.chain,
            &full_iteration_set(&first.output.chain),
            divisor,
        ),
    )?;
    q.write_csv(config.out_dir.join("groupprobs.csv"))?;

    let raw_rate = switch_rate(&first.raw, SwitchKey::MuDim(0)).ok();
    let post_rate = if first.output.chain.h() >= 2 {
        switch_rate(&first.output.chain, SwitchKey::MuDim(0)).ok()
    } else {
        None
    };
    let sidecar = SidecarReport {
        method: &method,
        criterion: &config.criterion,
        units: first.data.units(),
        components: config.components,
        groups: config.effective_groups(),
        iterations: config.iterations,
        seed: config.seed,
        pivots: &reps[0].pivots,
        kept_proportion: reps[0].kept_proportion,
        dropped_excess_groups: reps[0].dropped_excess_groups,
        dropped_pivot_collisions: reps[0].dropped_pivot_collisions,
        raw_switch_rate: raw_rate,
        relabelled_switch_rate: post_rate,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("cannot serialise report: {e}")))?;
    fs::write(config.out_dir.join("report.json"), json + "\n")?;

    Ok(PipelineReport {
        reps,
        out_dir: config.out_dir.clone(),
    })
}

fn write_plain_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    if let Some(first) = rows.first() {
        let header: Vec<String> = (1..=first.len()).map(|j| format!("y{j}")).collect();
        writeln!(f, "{}", header.join(","))?;
    }
    for row in rows {
        let fields: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        writeln!(f, "{}", fields.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// One method's results in a comparison run.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Component mean estimates, row-major `groups x d`.
    pub estimates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_rate: Option<f64>,
    pub kept_proportion: f64,
    pub seconds: f64,
}

/// Result of [`run_compare`].
#[derive(Debug, Clone)]
pub struct CompareReport {
    /// Raw-chain row first, then the pivot-anchored method, then the
    /// baselines in configured order.
    pub methods: Vec<MethodSummary>,
    pub out_dir: PathBuf,
}

impl CompareReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn file_tag(method: &str) -> String {
    method.replace(':', "_")
}

/// Runs the pivot-anchored method and every configured baseline on the
/// first repetition's chain, writing `estimates.csv`, `errors.csv` (when
/// truth is known), `summary.csv` and one relabelled chain per method.
pub fn run_compare(config: &PipelineConfig) -> Result<CompareReport> {
    config.validate()?;
    if config.baselines.is_empty() {
        return Err(Error::Config(
            "comparison run needs at least one baseline method".into(),
        ));
    }

    let shared = match &config.input {
        InputSource::Data(path) => {
            let (data, _labels) = stage("load", read_sample_csv(path))?;
            Some(data)
        }
        InputSource::Scenario(_) => None,
    };
    let (data_seed, gibbs_seed, fit_seed) = rep_seeds(config.seed, 0);
    let rep_data = load_rep_data(config, shared.as_ref(), data_seed)?;

    let sample_start = Instant::now();
    let raw = sample_chain(config, &rep_data.data, rep_data.scenario, gibbs_seed)?;
    let sample_seconds = sample_start.elapsed().as_secs_f64();

    fs::create_dir_all(&config.out_dir)?;

    let mut methods = Vec::new();
    methods.push(MethodSummary {
        method: "raw".into(),
        estimates: estimate_component_means(&raw),
        errors: None,
        switch_rate: switch_rate(&raw, SwitchKey::MuDim(0)).ok(),
        kept_proportion: 1.0,
        seconds: sample_seconds,
    });

    let mut strategies: Vec<(String, Box<dyn RelabelStrategy>)> = Vec::new();
    strategies.push((method_label(config), pivotal_strategy_for(config)?));
    for tag in &config.baselines {
        strategies.push((tag.clone(), relabel_strategy(tag)?));
    }

    for (label, strategy) in strategies {
        let request = RelabelRequest::new(&raw)
            .groups(config.effective_groups())
            .data(&rep_data.data)
            .seed(fit_seed);
        let start = Instant::now();
        let output = stage("relabel", strategy.run(&request))?;
        let seconds = start.elapsed().as_secs_f64();
        let estimates = estimate_component_means(&output.chain);
        let errors = match &rep_data.truth {
            Some((truth, tg)) if *tg == output.chain.g() => Some(stage(
                "metrics",
                component_errors(&estimates, truth, output.chain.g(), output.chain.d()),
            )?),
            _ => None,
        };
        let rate = if output.chain.h() >= 2 {
            switch_rate(&output.chain, SwitchKey::MuDim(0)).ok()
        } else {
            None
        };
        stage(
            "report",
            chainfile::save_chain(
                &output.chain,
                config
                    .out_dir
                    .join(format!("relabelled_{}.ndjson", file_tag(&label))),
            ),
        )?;
        methods.push(MethodSummary {
            method: label,
            estimates,
            errors,
            switch_rate: rate,
            kept_proportion: output.kept_proportion(),
            seconds,
        });
    }

    let d = rep_data.data.dim();
    let mut estimates_csv = String::from("method,component,dim,value\n");
    let mut errors_csv = String::from("method,component,value\n");
    let mut any_errors = false;
    let mut summary_csv = String::from("method,switch_rate,kept_proportion,seconds\n");
    for m in &methods {
        let groups = m.estimates.len() / d;
        for k in 0..groups {
            for j in 0..d {
                estimates_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    m.method,
                    k + 1,
                    j + 1,
                    fmt_real(m.estimates[k * d + j])
                ));
            }
        }
        if let Some(errors) = &m.errors {
            any_errors = true;
            for (k, &v) in errors.iter().enumerate() {
                errors_csv.push_str(&format!("{},{},{}\n", m.method, k + 1, fmt_real(v)));
            }
        }
        summary_csv.push_str(&format!(
            "{},{},{},{}\n",
            m.method,
            m.switch_rate.map_or_else(|| "-".into(), fmt_real),
            fmt_real(m.kept_proportion),
            fmt_real(m.seconds)
        ));
    }
    fs::write(config.out_dir.join("estimates.csv"), estimates_csv)?;
    if any_errors {
        fs::write(config.out_dir.join("errors.csv"), errors_csv)?;
    }
    fs::write(config.out_dir.join("summary.csv"), summary_csv)?;

    Ok(CompareReport {
        methods,
        out_dir: config.out_dir.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Big enough that Scenario B's four clusters are identifiable and
    // relabelling reliably keeps sweeps; still fast.
    fn small_config(dir: &Path) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(InputSource::Scenario(Scenario::B), dir);
        cfg.units = 500;
        cfg.iterations = 300;
        cfg.burnin = 50;
        cfg.replications = 2;
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn config_validation_catches_bad_tags() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.criterion = "q".into();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = small_config(dir.path());
        cfg.criterion = "mus".into();
        cfg.components = 7;
        assert!(cfg.validate().unwrap_err().to_string().contains("MUS capped"));

        let mut cfg = small_config(dir.path());
        cfg.baselines = vec!["pivotal".into()];
        assert!(cfg.validate().is_err());
        cfg.baselines = vec!["nope".into()];
        assert!(cfg.validate().is_err());

        let mut cfg = small_config(dir.path());
        cfg.groups = Some(5);
        assert!(cfg.validate().is_err());

        let mut cfg = small_config(dir.path());
        cfg.replications = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = small_config(dir.path());
        cfg.input = InputSource::Data(dir.path().join("missing.csv"));
        assert!(cfg.validate().is_err());

        let mut cfg = small_config(dir.path());
        cfg.manual_pivots = Some(vec![1, 2, 3]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pipeline_writes_reports_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let mut cfg = small_config(&out_a);
        let report = run_pipeline(&cfg).unwrap();
        assert_eq!(report.reps.len(), 2);
        for rep in &report.reps {
            assert!(rep.kept_proportion > 0.0 && rep.kept_proportion <= 1.0);
            assert_eq!(rep.pivots.len(), 4);
            assert_eq!(rep.estimates.len(), 8);
            let errors = rep.errors.as_ref().unwrap();
            assert_eq!(errors.len(), 4);
        }
        for file in [
            "kept.csv",
            "metrics.csv",
            "data.csv",
            "relabelled.ndjson",
            "groupprobs.csv",
            "report.json",
        ] {
            assert!(out_a.join(file).exists(), "{file}");
        }
        let saved = crate::chainfile::load_chain(out_a.join("relabelled.ndjson")).unwrap();
        assert_eq!(saved.g(), 4);
        let report_json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_a.join("report.json")).unwrap()).unwrap();
        assert_eq!(report_json["method"], "pivotal:b");
        assert_eq!(report_json["pivots"].as_array().unwrap().len(), 4);

        // Same config, fresh directory: byte-identical CSVs.
        cfg.out_dir = out_b.clone();
        run_pipeline(&cfg).unwrap();
        for file in ["kept.csv", "metrics.csv", "groupprobs.csv"] {
            assert_eq!(
                fs::read(out_a.join(file)).unwrap(),
                fs::read(out_b.join(file)).unwrap(),
                "{file}"
            );
        }
    }

    #[test]
    fn normalized_group_probs_rows_sum_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.replications = 1;
        cfg.normalize_q = true;
        run_pipeline(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("groupprobs.csv")).unwrap();
        for line in text.lines() {
            let sum: f64 = line.split(',').map(|v| v.parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12, "{line}");
        }
    }

    #[test]
    fn pipeline_reads_csv_input() {
        let dir = tempfile::tempdir().unwrap();
        let sample = generate_scenario(Scenario::B, 400, 3).unwrap();
        let data_path = dir.path().join("input.csv");
        crate::sim::write_sample_csv(&sample, &data_path).unwrap();
        let mut cfg = PipelineConfig::new(InputSource::Data(data_path), dir.path().join("out"));
        cfg.iterations = 150;
        cfg.burnin = 30;
        cfg.replications = 1;
        let report = run_pipeline(&cfg).unwrap();
        // Truth is not propagated through CSV input.
        assert!(report.reps[0].errors.is_none());
        let metrics = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 1);
    }

    #[test]
    fn compare_runs_baselines_on_one_chain() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.replications = 1;
        cfg.units = 300;
        cfg.iterations = 150;
        cfg.burnin = 30;
        cfg.baselines = vec!["pk".into(), "ordering".into()];
        let report = run_compare(&cfg).unwrap();
        let names: Vec<&str> = report.methods.iter().map(|m| m.method.as_str()).collect();
        assert_eq!(names, ["raw", "pivotal:b", "pk", "ordering"]);
        // The permutation move keeps the raw chain switching.
        assert!(report.method("raw").unwrap().switch_rate.unwrap() > 0.0);
        for m in &report.methods {
            assert_eq!(m.estimates.len(), 8);
            if m.method != "raw" {
                assert!(m.errors.is_some());
                assert!(dir.path().join(format!("relabelled_{}.ndjson", file_tag(&m.method))).exists());
            }
        }
        for file in ["estimates.csv", "errors.csv", "summary.csv"] {
            assert!(dir.path().join(file).exists(), "{file}");
        }
        let no_baselines = {
            let mut c = small_config(dir.path());
            c.baselines.clear();
            c
        };
        assert!(run_compare(&no_baselines).is_err());
    }
}
