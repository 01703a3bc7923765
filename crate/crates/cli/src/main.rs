//! Command-line driver for lattice generation, avalanche and percolation
//! experiments, fits, and figure reproduction.

mod fit;
mod plot;
mod reproduce;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierlat::ensemble::{
    parse_settings, run_experiment, with_workers, workers_from_env, write_results, ExperimentConfig,
    ExperimentKind, ResultSet, Setting,
};
use hierlat::lattice::{self, LatticeSpec};
use hierlat::percolation::{fill_trajectory, largest_jump, total_capacity};
use hierlat::seed::{purpose_seed, seed_stream, Purpose};
use hierlat::{Error, Result};

#[derive(Parser)]
#[command(name = "hierlat", version, about = "Avalanches and packet percolation on branching hierarchical lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one lattice and print it with its capacities
    Generate(GenerateArgs),
    /// Avalanche-time ensemble for a test weight f * W_T
    Avalanche(AvalancheArgs),
    /// One packet-filling trajectory, S and S1 after every insertion
    Percolate(PercolateArgs),
    /// Ensemble mean of S and S1 over a packet-density grid
    Sweep(SweepArgs),
    /// Mean largest jump versus size for perturbed V lattices
    Jumpscale(JumpscaleArgs),
    /// Fit a power law, a normal or a size-scaling law to a result file
    Fit(fit::FitArgs),
    /// Rerun the experiment behind one figure and compare with quoted numbers
    Reproduce(reproduce::ReproduceArgs),
}

#[derive(Args, Default)]
struct LatticeArgs {
    /// Lattice family: base, v or perturbed-v [default: v]
    #[arg(long)]
    family: Option<String>,
    /// Sets width and depth together
    #[arg(long)]
    size: Option<usize>,
    /// Sites per layer [default: 100]
    #[arg(long)]
    width: Option<usize>,
    /// Number of layers [default: 100]
    #[arg(long)]
    depth: Option<usize>,
    /// Left-connection probability of the base family [default: 0.5]
    #[arg(long)]
    p: Option<f64>,
    /// Flip probability of the perturbed-v family
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Key-value configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed [default: 0, with a warning]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of realizations [default: 100]
    #[arg(long, short = 'r')]
    realizations: Option<usize>,
    /// Result file; printed to stdout when absent
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RuleArgs {
    /// Packet motion: pass-through or greedy-descent [default: pass-through]
    #[arg(long)]
    motion: Option<String>,
    /// Deposit site: fixed (one per realization) or uniform [default: fixed]
    #[arg(long)]
    deposit: Option<String>,
    /// Cluster adjacency: links or grid [default: links]
    #[arg(long)]
    connectivity: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Lattice seed [default: 0]
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also draw the layers with capacities, marking trunk sites with `*`
    #[arg(long)]
    annotate: bool,
    /// Write the text form here instead of stdout
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AvalancheArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Test weight as a fraction of the trunk capacity [default: 0.05]
    #[arg(long, short = 'f')]
    fraction: Option<f64>,
    /// Also fail at saturated sites below the deposit site
    #[arg(long)]
    strict_failure: bool,
    /// Cycle guard per avalanche [default: 10 * depth]
    #[arg(long)]
    max_cycles: Option<usize>,
    /// Power-law fit window on bin centers, `lo,hi`
    #[arg(long)]
    fit_window: Option<String>,
    /// Logarithmic bin base [default: 1.3]
    #[arg(long)]
    log_base: Option<f64>,
}

#[derive(Args)]
struct PercolateArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    rules: RuleArgs,
    /// Master seed [default: 0, with a warning]
    #[arg(long)]
    seed: Option<u64>,
    /// Realization index under the master seed
    #[arg(long, default_value_t = 0)]
    index: u64,
    /// Packets to deposit [default: total capacity]
    #[arg(long)]
    packets: Option<u64>,
    /// Trajectory CSV; printed to stdout when absent
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    rules: RuleArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated packet densities
    #[arg(long, conflicts_with = "mu_step")]
    mu_grid: Option<String>,
    /// Grid spacing from 0 to the total capacity per site [default: 1]
    #[arg(long)]
    mu_step: Option<f64>,
}

#[derive(Args)]
struct JumpscaleArgs {
    #[command(flatten)]
    rules: RuleArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated lattice sides, at least 3
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated perturbation probabilities; 0 is the V lattice
    #[arg(long = "q")]
    q_list: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Avalanche(a) => avalanche(a),
        Command::Percolate(a) => percolate(a),
        Command::Sweep(a) => sweep(a),
        Command::Jumpscale(a) => jumpscale(a),
        Command::Fit(a) => fit::run(a),
        Command::Reproduce(a) => reproduce::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn push(settings: &mut Vec<Setting>, key: &str, value: Option<impl ToString>) {
    if let Some(v) = value {
        settings.push(Setting::new(key, v.to_string()));
    }
}

impl LatticeArgs {
    fn push_settings(&self, s: &mut Vec<Setting>) {
        push(s, "family", self.family.as_ref());
        push(s, "width", self.width.or(self.size));
        push(s, "depth", self.depth.or(self.size));
        push(s, "p", self.p);
        push(s, "q", self.q);
    }

    fn spec(&self, seed: u64) -> Result<LatticeSpec> {
        let mut s = vec![Setting::new("kind", "avalanche")];
        self.push_settings(&mut s);
        let c = ExperimentConfig::from_settings(&s, Path::new("<flags>"))?;
        let spec = LatticeSpec::new(c.width, c.depth, c.family, seed);
        spec.validate()?;
        Ok(spec)
    }
}

impl RuleArgs {
    fn push_settings(&self, s: &mut Vec<Setting>) {
        push(s, "motion", self.motion.as_ref());
        push(s, "deposit", self.deposit.as_ref());
        push(s, "connectivity", self.connectivity.as_ref());
    }
}

/// File settings first, then `kind`, then flags, so flags win. The caller
/// validates once any derived fields are filled in.
fn resolve(kind: ExperimentKind, run: &RunArgs, flags: Vec<Setting>) -> Result<ExperimentConfig> {
    let mut settings = Vec::new();
    if let Some(path) = &run.config {
        let text = std::fs::read_to_string(path)?;
        settings = parse_settings(&text, path)?;
        if let Some(k) = settings.iter().find(|s| s.key == "kind") {
            if k.value != kind.name() {
                return Err(Error::Config {
                    field: "kind",
                    reason: format!("config file is `{}` but the command runs `{}`", k.value, kind.name()),
                });
            }
        }
    }
    settings.push(Setting::new("kind", kind.name()));
    settings.extend(flags);
    push(&mut settings, "seed", run.seed);
    push(&mut settings, "realizations", run.realizations);
    push(&mut settings, "output", run.output.as_ref().map(|p| p.display().to_string()));
    if !settings.iter().any(|s| s.key == "seed") {
        eprintln!("warning: no seed given; using master seed 0");
    }
    let origin = run.config.clone().unwrap_or_else(|| PathBuf::from("<flags>"));
    ExperimentConfig::from_settings(&settings, &origin)
}

fn execute(config: &ExperimentConfig) -> Result<ResultSet> {
    with_workers(workers_from_env(), || run_experiment(config))?
}

fn emit(results: &ResultSet) -> Result<()> {
    match &results.config.output {
        Some(path) => {
            write_results(results, path)?;
            for (k, v) in &results.summary {
                println!("{k} = {v}");
            }
            println!("results written to {}", path.display());
        }
        None => print!("{}", results.to_text()),
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = a.lattice.spec(a.seed)?;
    let lat = lattice::generate(&spec)?;
    let caps = lattice::compute_capacities(&lat);
    let text = lattice::write_lattice_text(&lat, &caps);
    match &a.output {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    if a.annotate {
        let clusters = lattice::label_clusters(&lat);
        let trunk = lattice::find_trunk(&lat, &caps, &clusters);
        println!();
        println!(
            "trunk capacity W_T = {}{}",
            trunk.capacity,
            if trunk.linked { "" } else { " (trunk sites not all linked)" }
        );
        let cell = caps.values().iter().max().map_or(1, |m| m.to_string().len()) + 3;
        for layer in 0..lat.depth() {
            let mut line = format!("{:>4} ", layer + 1);
            for col in 0..lat.width() {
                let s = lat.site(layer, col);
                let dir = lat.direction(s).map_or(' ', |d| d.as_char());
                let mark = if trunk.sites.contains(&s) { '*' } else { ' ' };
                line.push_str(&format!("{:>w$}", format!("{}{dir}{mark}", caps.get(s)), w = cell));
            }
            println!("{}", line.trim_end());
        }
    }
    Ok(())
}

fn avalanche(a: AvalancheArgs) -> Result<()> {
    let mut s = Vec::new();
    a.lattice.push_settings(&mut s);
    push(&mut s, "fraction", a.fraction);
    if a.strict_failure {
        push(&mut s, "strict_failure", Some(true));
    }
    push(&mut s, "max_cycles", a.max_cycles);
    push(&mut s, "fit_window", a.fit_window.as_ref());
    push(&mut s, "log_base", a.log_base);
    let config = resolve(ExperimentKind::Avalanche, &a.run, s)?;
    config.validate()?;
    emit(&execute(&config)?)
}

fn percolate(a: PercolateArgs) -> Result<()> {
    let mut s = Vec::new();
    a.lattice.push_settings(&mut s);
    a.rules.push_settings(&mut s);
    let run = RunArgs {
        seed: a.seed,
        realizations: Some(1),
        ..RunArgs::default()
    };
    let config = resolve(ExperimentKind::PercolationSweep, &run, s)?;
    let spec = config.lattice_spec();
    spec.validate()?;
    let n_max = a.packets.unwrap_or_else(|| total_capacity(&spec));
    let sub = seed_stream(config.seed, a.index);
    let lat = lattice::generate(&LatticeSpec {
        seed: purpose_seed(sub, Purpose::Lattice),
        ..spec
    })?;
    let caps = lattice::compute_capacities(&lat);
    let traj = fill_trajectory(&lat, &caps, n_max, purpose_seed(sub, Purpose::Dynamics), &config.percolation);
    let mut out = String::from("n,mu,s,s1\n");
    for (n, mu, s, s1) in traj.records() {
        out.push_str(&format!("{n},{mu},{s},{s1}\n"));
    }
    let jump = largest_jump(&traj);
    let summary = format!(
        "sub_seed = {sub}\nlargest jump = {} at n = {} (mu = {})",
        jump.delta, jump.n_star, jump.mu_c
    );
    match &a.output {
        Some(path) => {
            std::fs::write(path, out)?;
            println!("{summary}");
        }
        None => {
            print!("{out}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut s = Vec::new();
    a.lattice.push_settings(&mut s);
    a.rules.push_settings(&mut s);
    push(&mut s, "mu_grid", a.mu_grid.as_ref());
    let mut config = resolve(ExperimentKind::PercolationSweep, &a.run, s)?;
    if a.mu_grid.is_none() && (a.mu_step.is_some() || config.mu_grid.is_empty()) {
        config.lattice_spec().validate()?;
        config.mu_grid = step_grid(&config.lattice_spec(), a.mu_step.unwrap_or(1.0))?;
    }
    config.validate()?;
    emit(&execute(&config)?)
}

/// `0, step, 2 step, ...` up to the total capacity per site.
pub fn step_grid(spec: &LatticeSpec, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config {
            field: "mu_step",
            reason: format!("{step} must be positive"),
        });
    }
    let max = total_capacity(spec) as f64 / spec.sites() as f64;
    let count = (max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

fn jumpscale(a: JumpscaleArgs) -> Result<()> {
    let mut s = Vec::new();
    a.rules.push_settings(&mut s);
    push(&mut s, "sizes", a.sizes.as_ref());
    push(&mut s, "q_list", a.q_list.as_ref());
    let config = resolve(ExperimentKind::JumpScaling, &a.run, s)?;
    config.validate()?;
    emit(&execute(&config)?)
}
