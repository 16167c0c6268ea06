mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gcimb::config::TargetSpec;
use gcimb::fusion::enumerate_fusion_maps;
use gcimb::metrics::{mb_density_terms, powered_sum_error};
use gcimb::rfs::{BernoulliTrack, DiagonalGaussian, GaussianMixture, MbPosterior};
use gcimb::simnet::{monte_carlo, table1};
use gcimb::{ScenarioConfig, SingleState, WorkMode};

#[derive(Parser)]
#[command(name = "gcimb", version, about = "Distributed multi-Bernoulli track-before-detect with GCI fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of one scenario; writes per-scan and summary CSVs.
    Run {
        #[command(flatten)]
        opts: Overrides,
        /// Skip the SVG plot.
        #[arg(long)]
        no_plot: bool,
    },
    /// Set-density terms and powered-sum error of the three-track example.
    Fig1,
    /// Mean OSPA for 1, 2 and 3 chained sensors in both work modes.
    Table1 {
        #[command(flatten)]
        opts: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Scenario TOML file. Defaults to the built-in scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    mode: Option<WorkMode>,
    /// Sensor SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Separation of the two parallel targets in metres.
    #[arg(long)]
    de: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

impl Overrides {
    fn resolve(&self, builtin: impl FnOnce() -> ScenarioConfig) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ScenarioConfig::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => builtin(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(snr) = self.snr {
            cfg.sensor.snr_db = Some(snr);
        }
        if let Some(de) = self.de {
            match &mut cfg.targets {
                TargetSpec::Parallel { separation, .. } => *separation = de,
                _ => bail!("--de needs a config with `targets.kind = \"parallel\"`"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(&self.out_dir)
    }
}

fn cmd_run(opts: &Overrides, plot: bool) -> Result<()> {
    let cfg = opts.resolve(|| ScenarioConfig::scenario1(8.0))?;
    let summary = monte_carlo(&cfg, cfg.runs, cfg.seed)?;
    let dir = opts.out_dir()?;
    output::write_ospa_by_step(dir, &cfg, &summary)?;
    output::write_summary(dir, &cfg, &summary)?;
    if plot {
        output::write_ospa_plot(dir, &cfg, &summary)?;
    }
    println!("{} | mode {} | {} runs | seed {}", cfg.name, cfg.mode, cfg.runs, cfg.seed);
    println!("{:>5} {:>10} {:>10} {:>9} {:>12}", "node", "local", "fused", "eff", "approx_err");
    for n in &summary.by_node {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>9.3} {:>12.3e}",
            n.node + 1,
            n.local_ospa,
            n.fused_ospa,
            n.fused_efficiency,
            n.approximation_error
        );
    }
    println!("{:>5} {:>10.4} {:>10.4}", "all", summary.network_local_ospa, summary.network_fused_ospa);
    Ok(())
}

fn cmd_table1(opts: &Overrides) -> Result<()> {
    let mut cfg = opts.resolve(|| ScenarioConfig::scenario2(1))?;
    if opts.runs.is_none() && opts.config.is_none() {
        cfg.runs = 50;
    }
    if cfg.runs < 10 {
        bail!("table1 needs at least 10 runs, got {}", cfg.runs);
    }
    let rows = table1(&cfg, cfg.runs, cfg.seed)?;
    output::write_table1(opts.out_dir()?, &cfg, cfg.seed, &rows)?;
    println!("{} | {} runs | seed {}", cfg.name, cfg.runs, cfg.seed);
    println!("{:>8} {:>5} {:>10} {:>12}", "sensors", "mode", "ospa", "network_ospa");
    for r in &rows {
        println!("{:>8} {:>5} {:>10.4} {:>12.4}", r.sensors, r.mode, r.ospa, r.network_ospa);
    }
    Ok(())
}

/// Three 1-D Gaussian tracks. The unused state components get variance
/// 1/(2π) so their density at zero is exactly one and the printed terms
/// are the 1-D values.
fn fig1_posterior() -> MbPosterior<GaussianMixture> {
    let flat = 1.0 / (2.0 * std::f64::consts::PI);
    let tracks = [(0.8, 3.0), (0.9, 4.0), (0.9, 7.0)]
        .into_iter()
        .map(|(r, m)| {
            let g = DiagonalGaussian {
                weight: 1.0,
                mean: SingleState::scalar(m),
                variances: [0.2, flat, flat, flat],
            };
            BernoulliTrack::new(r, GaussianMixture::new(vec![g]).expect("valid component")).expect("valid r")
        })
        .collect();
    MbPosterior::new(tracks)
}

fn cmd_fig1() {
    let mb = fig1_posterior();
    let omega = 0.5;
    println!("tracks: r = 0.8, 0.9, 0.9; N(3, 0.2), N(4, 0.2), N(7, 0.2); omega = {omega}");
    for xs in [vec![], vec![4.0], vec![7.0], vec![4.0, 7.0]] {
        let pts: Vec<SingleState> = xs.iter().map(|&x| SingleState::scalar(x)).collect();
        let terms = mb_density_terms(&mb, &pts);
        let rep = powered_sum_error(&terms, omega);
        let idx: Vec<usize> = (0..pts.len()).collect();
        println!("\nX = {xs:?}");
        for (k, map) in enumerate_fusion_maps(&idx, mb.len()).iter().enumerate() {
            let assign: Vec<String> = map.pairs().iter().map(|&(i, l)| format!("{}->{}", xs[i], l + 1)).collect();
            let mark = if k == rep.dominant { " *" } else { "" };
            println!("  [{}] {:.6e}{mark}", assign.join(", "), terms[k].exp());
        }
        println!("  density {:.6e}", rep.ln_density.exp());
        println!("  dominant ratio {:.9}", rep.dominant_ratio);
        println!("  approximation error {:.6e} (relative {:.6e})", rep.error, rep.relative_error);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { opts, no_plot } => cmd_run(opts, !no_plot),
        Command::Fig1 => {
            cmd_fig1();
            Ok(())
        }
        Command::Table1 { opts } => cmd_table1(opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
