use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use framemap::experiment::{RunConfig, RunMode};
use framemap::geometry::Pose;

#[derive(Debug, Parser)]
#[command(
    name = "framemap",
    version,
    about = "Semantic frame search on a seeded household simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded scenario and write its trace and metrics.
    Run(RunArgs),
    /// Run every group of an experiment suite and report success rates.
    Suite(SuiteArgs),
    /// Draw the belief snapshots stored in a trace as PNG images.
    Render(RenderArgs),
    /// Parse-check frame libraries (.lib), scenarios (.scn) and suites (.toml).
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Fixed,
    Tour,
    Task,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fixed => RunMode::Fixed,
            ModeArg::Tour => RunMode::Tour,
            ModeArg::Task => RunMode::Task,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with any RunConfig fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario file; the bundled apartment when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Frame library; the bundled library when omitted.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Robot pose as `x,y,heading`.
    #[arg(long, value_parser = parse_pose)]
    pub pose: Option<Pose>,
    /// Object class the robot starts out holding.
    #[arg(long)]
    pub holding: Option<String>,
    #[arg(long)]
    pub tour_turns: Option<usize>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long, env = "FRAMEMAP_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Write a PNG per snapshot next to the trace.
    #[arg(long)]
    pub render: bool,
    #[arg(long)]
    pub sigma_m: Option<f64>,
    #[arg(long)]
    pub sigma_c: Option<f64>,
    #[arg(long)]
    pub sigma_p: Option<f64>,
    #[arg(long)]
    pub reinvigoration_fraction: Option<f64>,
    #[arg(long)]
    pub ess_threshold: Option<f64>,
}

impl RunArgs {
    /// The config file (or defaults) with every given flag applied on top.
    pub fn to_config(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("invalid run config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(
            scenario,
            library,
            task,
            seed,
            particles,
            iterations,
            budget,
            tour_turns,
            snapshot_every
        );
        if let Some(m) = self.mode {
            c.mode = m.into();
        }
        if self.pose.is_some() {
            c.pose = self.pose;
        }
        if self.holding.is_some() {
            c.holding = self.holding.clone();
        }
        if self.out_dir.is_some() {
            c.out_dir = self.out_dir.clone();
        }
        c.render |= self.render;
        let p = &mut c.params;
        for (flag, field) in [
            (self.sigma_m, &mut p.sigma_m),
            (self.sigma_c, &mut p.sigma_c),
            (self.sigma_p, &mut p.sigma_p_movable),
            (self.reinvigoration_fraction, &mut p.reinvigoration_fraction),
            (self.ess_threshold, &mut p.ess_threshold),
        ] {
            if let Some(v) = flag {
                *field = v;
            }
        }
        if c.task.trim().is_empty() {
            bail!("no task given (use --task or a config file)");
        }
        Ok(c)
    }
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, heading] if parts.iter().all(|v| v.is_finite()) => Ok(Pose::new(x, y, heading)),
        _ => Err("expected x,y,heading".into()),
    }
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// Suite file; the bundled suite when omitted.
    pub suite: Option<PathBuf>,
    #[arg(long, env = "FRAMEMAP_WORKERS")]
    pub workers: Option<usize>,
    /// Directory for report.json.
    #[arg(long, env = "FRAMEMAP_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Print the JSON report instead of the summary table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub trace: PathBuf,
    #[arg(long, env = "FRAMEMAP_OUT_DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}
