//! Command-line interface for pivotal relabelling of mixture MCMC
//! chains. Each pipeline stage is its own subcommand so runs can be
//! scripted stage by stage; `pipeline` and `compare` execute the whole
//! flow.
//!
//! Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when
//! relabelling is impossible because no iteration survives the filter
//! (a legitimate statistical outcome, distinguished so scripts can
//! react to it).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use mixpivot::chainfile::{load_chain, save_chain};
use mixpivot::pipeline::{
    run_compare, run_pipeline, InputSource, Linkage, PipelineConfig,
};
use mixpivot::pivotal::{MusParams, PivotSet, MUS_MAX_GROUPS};
use mixpivot::sim::gibbs::{gibbs_multivariate, gibbs_univariate, GibbsConfig};
use mixpivot::sim::metrics::{estimate_component_means, switch_rate, SwitchKey};
use mixpivot::sim::{generate_scenario, read_sample_csv, write_sample_csv, Scenario};
use mixpivot::similarity::{estimate_group_probs, full_iteration_set, Divisor};
use mixpivot::strategy::{
    pivot_selector_with, relabel_strategy, ManualPivotStrategy, PivotalStrategy,
    RelabelRequest, RelabelStrategy,
};
use mixpivot::{Dataset, Error};
use mixpivot::chainfile::fmt_real;

#[derive(Parser)]
#[command(
    name = "mixpivot",
    version,
    about = "Correct label switching in mixture-model MCMC output by anchoring on pivotal units"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark data and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a data CSV and write the raw chain.
    Sample(SampleArgs),
    /// Relabel a saved chain by pivot anchoring.
    Relabel(RelabelArgs),
    /// Relabel a saved chain with a reference method.
    Baseline(BaselineArgs),
    /// Summarise a saved chain (estimates and switch rates).
    Metrics(MetricsArgs),
    /// Run generate, sample, relabel and metrics end to end.
    Pipeline(PipelineArgs),
    /// Run the pivot-anchored method next to reference methods.
    Compare(CompareArgs),
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_linkage(s: &str) -> Result<Linkage, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark scenario (A, B or C).
    #[arg(long, value_parser = parse_scenario)]
    scenario: Scenario,
    /// Units to draw.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Input data CSV (header y1..yd, optional true_label column).
    #[arg(long)]
    data: PathBuf,
    /// Mixture components to fit.
    #[arg(long = "G", default_value_t = 4)]
    components: usize,
    /// Recorded draws (the sampler runs this many plus the burn-in).
    #[arg(long, default_value_t = 3000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output chain path (NDJSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RelabelArgs {
    /// Input chain (NDJSON).
    #[arg(long)]
    chain: PathBuf,
    /// Groups to anchor; defaults to the chain's component count.
    #[arg(long = "G-hat")]
    g_hat: Option<usize>,
    /// Pivot selection criterion: a-f or mus.
    #[arg(long, default_value = "b")]
    criterion: String,
    /// Candidate units per group for MUS.
    #[arg(long = "mus-M", default_value_t = 5)]
    mus_m: usize,
    /// Zero tolerance for MUS.
    #[arg(long = "mus-eps", default_value_t = 0.0)]
    mus_eps: f64,
    /// Fixed pivot units (1-based, comma separated), bypassing selection.
    #[arg(long, value_delimiter = ',')]
    pivots: Vec<usize>,
    /// Normalise group probabilities over kept sweeps instead of the
    /// full chain length.
    #[arg(long)]
    normalize_q: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    /// Input chain (NDJSON).
    #[arg(long)]
    chain: PathBuf,
    /// Method: pk, stephens, or ordering[:mu<k>|:pi].
    #[arg(long)]
    method: String,
    /// Observed data CSV (required by stephens).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Input chain (NDJSON).
    #[arg(long)]
    chain: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["scenario", "data"])))]
struct RunCommonArgs {
    /// Benchmark scenario to generate data from (A, B or C).
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// CSV of observations, instead of generating a scenario.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Units per generated data set (scenario input only).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Mixture components to fit.
    #[arg(long = "G", default_value_t = 4)]
    components: usize,
    /// Groups the relabelled output distinguishes; defaults to --G.
    #[arg(long = "G-hat")]
    g_hat: Option<usize>,
    /// Recorded draws (the sampler runs this many plus the burn-in).
    #[arg(long, default_value_t = 3000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pivot selection criterion: a-f or mus.
    #[arg(long, default_value = "b")]
    criterion: String,
    /// Candidate units per group for MUS.
    #[arg(long = "mus-M", default_value_t = 5)]
    mus_m: usize,
    /// Zero tolerance for MUS.
    #[arg(long = "mus-eps", default_value_t = 0.0)]
    mus_eps: f64,
    /// Agglomeration rule for the clustering step.
    #[arg(long, default_value = "complete", value_parser = parse_linkage)]
    linkage: Linkage,
    /// Independent repetitions.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Fixed pivot units (1-based, comma separated), bypassing selection.
    #[arg(long, value_delimiter = ',')]
    pivots: Vec<usize>,
    /// Normalise group probabilities over kept sweeps.
    #[arg(long)]
    normalize_q: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: RunCommonArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: RunCommonArgs,
    /// Reference method to include (repeatable): pk, stephens,
    /// ordering[:mu<k>|:pi].
    #[arg(long = "baseline", required = true)]
    baselines: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let ok = matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_no_valid_iterations() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Sample(args) => sample(args),
        Command::Relabel(args) => relabel(args),
        Command::Baseline(args) => baseline(args),
        Command::Metrics(args) => metrics(args),
        Command::Pipeline(args) => pipeline(args),
        Command::Compare(args) => compare(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let sample = generate_scenario(args.scenario, args.n, args.seed)?;
    write_sample_csv(&sample, &args.out)?;
    println!(
        "wrote {} units from scenario {} to {}",
        args.n,
        args.scenario,
        args.out.display()
    );
    Ok(())
}

fn sample(args: SampleArgs) -> Result<(), Error> {
    let (data, _labels) = read_sample_csv(&args.data)?;
    let cfg = GibbsConfig {
        components: args.components,
        iterations: args.iters + args.burnin,
        burnin: args.burnin,
        permute_move: true,
        prior: None,
    };
    let chain = if data.dim() == 1 {
        gibbs_univariate(&data, &cfg, args.seed)?
    } else {
        gibbs_multivariate(&data, &cfg, args.seed)?
    };
    save_chain(&chain, &args.out)?;
    println!(
        "sampled {} draws of a {}-component chain to {}",
        chain.h(),
        chain.g(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RelabelReport<'a> {
    method: &'a str,
    criterion: &'a str,
    units: usize,
    components: usize,
    groups: usize,
    input_iterations: usize,
    pivots: &'a [usize],
    kept_proportion: f64,
    dropped_excess_groups: usize,
    dropped_pivot_collisions: usize,
    /// 1-based input iteration numbers that survived the filter, in
    /// order; row k of the saved chain is kept[k].
    kept: &'a [usize],
    excess_groups: &'a [usize],
    pivot_collisions: &'a [usize],
}

fn relabel(args: RelabelArgs) -> Result<(), Error> {
    let chain = load_chain(&args.chain)?;
    let groups = args.g_hat.unwrap_or(chain.g());
    let strategy: Box<dyn RelabelStrategy> = if args.pivots.is_empty() {
        if args.criterion == "mus" && groups > MUS_MAX_GROUPS {
            return Err(Error::Config(format!(
                "MUS capped at {MUS_MAX_GROUPS} groups, requested {groups}"
            )));
        }
        let selector = pivot_selector_with(
            &args.criterion,
            MusParams {
                m: args.mus_m,
                eps: args.mus_eps,
            },
        )?;
        Box::new(PivotalStrategy::new(selector))
    } else {
        if args.pivots.len() != groups {
            return Err(Error::Config(format!(
                "{} pivots supplied for {} groups",
                args.pivots.len(),
                groups
            )));
        }
        Box::new(ManualPivotStrategy {
            pivots: PivotSet::manual(args.pivots.clone(), chain.n())?,
        })
    };

    let output = strategy.run(&RelabelRequest::new(&chain).groups(groups))?;
    fs::create_dir_all(&args.out)?;
    save_chain(&output.chain, args.out.join("relabelled.ndjson"))?;

    let divisor = if args.normalize_q {
        Divisor::SubsetSize
    } else {
        Divisor::Fixed(chain.h())
    };
    let q = estimate_group_probs(
        &output.chain,
        &full_iteration_set(&output.chain),
        divisor,
    )?;
    q.write_csv(args.out.join("groupprobs.csv"))?;

    let pivots = output.pivots.as_ref().expect("pivot method sets pivots");
    let filter = output.filter.as_ref().expect("pivot method sets filter");
    let method = output
        .chain
        .meta()
        .relabelled_by
        .clone()
        .unwrap_or_default();
    let report = RelabelReport {
        method: &method,
        criterion: &pivots.method,
        units: chain.n(),
        components: chain.g(),
        groups,
        input_iterations: chain.h(),
        pivots: &pivots.units,
        kept_proportion: filter.kept_proportion(),
        dropped_excess_groups: filter.excess_groups.len(),
        dropped_pivot_collisions: filter.pivot_collisions.len(),
        kept: &filter.kept,
        excess_groups: &filter.excess_groups,
        pivot_collisions: &filter.pivot_collisions,
    };
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "kept {} of {} iterations ({:.1}%), pivots {:?} -> {}",
        filter.kept.len(),
        chain.h(),
        100.0 * filter.kept_proportion(),
        pivots.units,
        args.out.display()
    );
    Ok(())
}

fn baseline(args: BaselineArgs) -> Result<(), Error> {
    let chain = load_chain(&args.chain)?;
    let strategy = relabel_strategy(&args.method)?;
    if strategy.name() == "pivotal" {
        return Err(Error::Config(
            "use the relabel command for the pivot-anchored method".into(),
        ));
    }
    let data: Option<Dataset> = match &args.data {
        Some(path) => Some(read_sample_csv(path)?.0),
        None => None,
    };
    if strategy.needs_data() && data.is_none() {
        return Err(Error::Config(format!(
            "method {} needs --data",
            strategy.name()
        )));
    }
    let mut request = RelabelRequest::new(&chain).seed(args.seed);
    if let Some(d) = &data {
        request = request.data(d);
    }
    let output = strategy.run(&request)?;
    fs::create_dir_all(&args.out)?;
    let tag = args.method.replace(':', "_");
    let path = args.out.join(format!("relabelled_{tag}.ndjson"));
    save_chain(&output.chain, &path)?;
    write_estimates_csv(&args.out.join("estimates.csv"), &output.chain)?;
    println!("relabelled by {} -> {}", args.method, path.display());
    Ok(())
}

fn write_estimates_csv(path: &std::path::Path, chain: &mixpivot::MixtureChain) -> Result<(), Error> {
    let estimates = estimate_component_means(chain);
    let mut out = String::from("component,dim,value\n");
    for k in 0..chain.g() {
        for j in 0..chain.d() {
            out.push_str(&format!(
                "{},{},{}\n",
                k + 1,
                j + 1,
                fmt_real(estimates[k * chain.d() + j])
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    units: usize,
    components: usize,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    relabelled_by: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    switch_rate_mu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    switch_rate_pi: Option<f64>,
}

fn metrics(args: MetricsArgs) -> Result<(), Error> {
    let chain = load_chain(&args.chain)?;
    fs::create_dir_all(&args.out)?;
    write_estimates_csv(&args.out.join("estimates.csv"), &chain)?;
    let report = MetricsReport {
        units: chain.n(),
        components: chain.g(),
        iterations: chain.h(),
        relabelled_by: chain.meta().relabelled_by.clone(),
        switch_rate_mu1: switch_rate(&chain, SwitchKey::MuDim(0)).ok(),
        switch_rate_pi: switch_rate(&chain, SwitchKey::Pi).ok(),
    };
    write_json(&args.out.join("summary.json"), &report)?;
    println!(
        "summarised {} iterations -> {}",
        chain.h(),
        args.out.display()
    );
    Ok(())
}

fn build_config(common: RunCommonArgs, baselines: Vec<String>) -> Result<PipelineConfig, Error> {
    let input = match (common.scenario, common.data) {
        (Some(s), None) => InputSource::Scenario(s),
        (None, Some(p)) => InputSource::Data(p),
        // The clap group guarantees exactly one.
        _ => unreachable!("input group enforces exactly one source"),
    };
    Ok(PipelineConfig {
        input,
        units: common.n,
        components: common.components,
        groups: common.g_hat,
        iterations: common.iters,
        burnin: common.burnin,
        seed: common.seed,
        criterion: common.criterion,
        mus: MusParams {
            m: common.mus_m,
            eps: common.mus_eps,
        },
        linkage: common.linkage,
        baselines,
        replications: common.reps,
        out_dir: common.out,
        normalize_q: common.normalize_q,
        manual_pivots: (!common.pivots.is_empty()).then(|| common.pivots.clone()),
    })
}

fn pipeline(args: PipelineArgs) -> Result<(), Error> {
    let config = build_config(args.common, Vec::new())?;
    let report = run_pipeline(&config)?;
    println!(
        "mean kept proportion {:.4} over {} repetitions -> {}",
        report.mean_kept_proportion(),
        report.reps.len(),
        report.out_dir.display()
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let config = build_config(args.common, args.baselines)?;
    let report = run_compare(&config)?;
    for m in &report.methods {
        let rate = m
            .switch_rate
            .map_or_else(|| "-".to_string(), |r| format!("{r:.4}"));
        println!(
            "{:<14} switch_rate {:<8} kept {:.4}  {:.3}s",
            m.method, rate, m.kept_proportion, m.seconds
        );
    }
    println!("-> {}", report.out_dir.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialise report: {e}")))?;
    fs::write(path, json + "\n")?;
    Ok(())
}
