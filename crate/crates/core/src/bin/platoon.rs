use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use platoon_core::controllers::{Controller, StrategyParams};
use platoon_core::experiment::{
    curves_table, default_curve_grid, emit_plot_data, p_grid, read_metrics_csv, run_sweep, verify_probability_model,
    verify_stability, write_metrics_csv, CellStatus, SweepSpec,
};
use platoon_core::fleet::{generate_sequence, write_sequence_csv, FleetSpec};
use platoon_core::par::Execution;
use platoon_core::platoon::StrategyCombo;
use platoon_core::sim;

#[derive(Parser)]
#[command(name = "platoon", version, about = "Mixed-traffic ring road experiments")]
struct Cli {
    /// Run the per-cell work on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the density x penetration x combination grid.
    Sweep(SweepArgs),
    /// Compare simulated vehicle-class shares with the closed form.
    VerifyProb(ProbArgs),
    /// Report string stability margins of the linear controllers.
    VerifyStability(StabilityArgs),
    /// Equilibrium fuel and emission factors over speed.
    Curves(CurvesArgs),
    /// Pivot a metrics CSV into plot-ready files.
    PlotData(PlotArgs),
    /// Generate one labeled vehicle sequence.
    Sequence(SequenceArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Flat TOML file with sweep keys; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    densities: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    penetrations: Option<Vec<f64>>,
    /// Combination ids or names, e.g. `7` or `VTG1-CS`.
    #[arg(long, value_delimiter = ',')]
    combos: Option<Vec<String>>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    ring_length: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write trajectories, violations and strategy maps for every cell.
    #[arg(long)]
    keep_traces: bool,
    /// Skip the plot-data pivot after the sweep.
    #[arg(long)]
    no_plot: bool,
}

#[derive(Args)]
struct ProbArgs {
    #[arg(long, default_value_t = 0.01)]
    p_step: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    intensities: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    vehicles: usize,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    #[arg(long, default_value_t = 4)]
    max_platoon_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    /// Controllers to analyse: CTG, VTG1, VTG2, CS.
    #[arg(long, value_delimiter = ',', default_value = "CTG,VTG1,VTG2,CS")]
    strategies: Vec<String>,
    #[arg(long, default_value_t = 20.0)]
    speed: f64,
    #[arg(long, default_value_t = 0.6)]
    headway: f64,
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    metrics: PathBuf,
    #[arg(long, short, default_value = "out/plots")]
    output: PathBuf,
}

#[derive(Args)]
struct SequenceArgs {
    #[arg(long, default_value_t = 100)]
    vehicles: usize,
    #[arg(long)]
    penetration: f64,
    #[arg(long, default_value_t = 0.0)]
    intensity: f64,
    #[arg(long, default_value_t = 4)]
    max_platoon_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Sweep(a) => sweep(a, exec),
        Command::VerifyProb(a) => verify_prob(a, exec),
        Command::VerifyStability(a) => stability(a),
        Command::Curves(a) => curves(a),
        Command::PlotData(a) => plot_data(&a.metrics, &a.output),
        Command::Sequence(a) => sequence(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn build_spec(a: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = SweepSpec::full_grid();
    if let Some(path) = &a.config {
        spec.apply_file(path)
            .with_context(|| format!("reading {}", path.display()))?;
    }
    if let Some(v) = &a.densities {
        spec.densities = v.clone();
    }
    if let Some(v) = &a.penetrations {
        spec.penetrations = v.clone();
    }
    if let Some(v) = &a.combos {
        spec.combos = v.iter().map(|c| c.parse::<StrategyCombo>()).collect::<Result<_, _>>()?;
    }
    let b = &mut spec.base;
    macro_rules! set {
        ($($src:ident => $dst:expr),*) => { $(if let Some(v) = a.$src { $dst = v; })* };
    }
    set!(duration => b.duration, warmup => b.warmup, dt => b.dt, ring_length => b.ring_length,
         seed => b.seed, threads => spec.threads, replications => spec.replications);
    if let Some(o) = &a.output {
        spec.output_dir = o.clone();
    }
    Ok(spec)
}

fn sweep(a: SweepArgs, exec: Execution) -> Result<()> {
    let spec = build_spec(&a)?;
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir).with_context(|| format!("creating {}", spec.output_dir.display()))?;
    eprintln!("running {} cells", spec.cell_count());
    let rows = run_sweep(&spec, exec)?;
    let metrics = spec.output_dir.join("metrics.csv");
    write_metrics_csv(&rows, &metrics)?;
    let failed = rows
        .iter()
        .filter(|r| matches!(r.status, CellStatus::Failed(_)))
        .count();
    if failed > 0 {
        eprintln!("warning: {failed} cell(s) failed; see the status column");
    }
    if a.keep_traces {
        let dir = spec.output_dir.join("traces");
        fs::create_dir_all(&dir)?;
        for cell in spec.cells() {
            let stem = format!("d{}_p{}_c{:02}", cell.density, cell.penetration, cell.combo.id());
            let ring = sim::init_state(&cell)?;
            ring.map
                .write_csv(BufWriter::new(File::create(dir.join(format!("{stem}_map.csv")))?))?;
            let log = ring.run()?;
            log.write_csv(BufWriter::new(File::create(dir.join(format!("{stem}_traj.csv")))?))?;
            log.write_violations_csv(BufWriter::new(File::create(
                dir.join(format!("{stem}_violations.csv")),
            )?))?;
        }
    }
    println!("{}", metrics.display());
    if !a.no_plot {
        plot_data(&metrics, &spec.output_dir.join("plots"))?;
    }
    Ok(())
}

fn verify_prob(a: ProbArgs, exec: Execution) -> Result<()> {
    let grid = p_grid(a.p_step);
    let report = verify_probability_model(
        &grid,
        &a.intensities,
        a.vehicles,
        a.runs,
        a.max_platoon_size,
        a.seed,
        exec,
    )?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    fs::create_dir_all(&a.output)?;
    report.table().write_path(&a.output.join("probability_fit.csv"))?;
    report.curves.write_path(&a.output.join("probability_curves.csv"))?;
    for r in &report.rows {
        println!(
            "O={} {:<4} r2={:.4} rmse={:.4}",
            r.intensity, r.class, r.r_squared, r.rmse
        );
    }
    Ok(())
}

fn stability(a: StabilityArgs) -> Result<()> {
    let controllers = a
        .strategies
        .iter()
        .map(|s| match s.trim().to_ascii_uppercase().as_str() {
            "CTG" => Ok(Controller::Ctg { headway: a.headway }),
            "VTG1" => Ok(Controller::Vtg1),
            "VTG2" => Ok(Controller::Vtg2),
            "CS" => Ok(Controller::Cs),
            other => anyhow::bail!("no linear stability analysis for {other:?}"),
        })
        .collect::<Result<Vec<_>>>()?;
    let params = StrategyParams::default();
    let report = verify_stability(&controllers, &params, a.speed, &default_curve_grid())?;
    fs::create_dir_all(&a.output)?;
    report.table().write_path(&a.output.join("stability.csv"))?;
    for row in &report.rows {
        let name = format!("stability_region_{}.csv", row.controller.label().to_ascii_lowercase());
        report.region_table(row).write_path(&a.output.join(name))?;
        println!(
            "{:<5} margin={:.4} stable={}{}",
            row.controller.label(),
            row.margin,
            row.stable,
            if row.caveat { " (leader terms held fixed)" } else { "" }
        );
    }
    Ok(())
}

fn curves(a: CurvesArgs) -> Result<()> {
    fs::create_dir_all(&a.output)?;
    let path = a.output.join("equilibrium_curves.csv");
    curves_table(&default_curve_grid())?.write_path(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn plot_data(metrics: &Path, dir: &Path) -> Result<()> {
    let rows = read_metrics_csv(metrics).with_context(|| format!("reading {}", metrics.display()))?;
    let out = emit_plot_data(&rows, dir)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("wrote {} plot file(s) to {}", out.files.len(), dir.display());
    Ok(())
}

fn sequence(a: SequenceArgs) -> Result<()> {
    let spec = FleetSpec::new(a.vehicles, a.penetration, a.intensity, a.max_platoon_size).with_seed(a.seed);
    let labels = generate_sequence(&spec)?;
    match a.output {
        Some(path) => write_sequence_csv(&labels, BufWriter::new(File::create(path)?))?,
        None => write_sequence_csv(&labels, std::io::stdout().lock())?,
    }
    Ok(())
}
