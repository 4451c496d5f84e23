//! Experiment runner for the rank-one flow toolkit.
//!
//! Subcommands bind the library modules to files: CSV for grid and sample
//! data, JSON for summaries. Every output starts with (or embeds) a metadata
//! block sufficient to re-run it, and (config, seed) ↦ output is a pure
//! function, independent of the worker count: grids are evaluated by
//! [`par::parallel_map_with`], whose result layout is fixed by index, and
//! all sampling is seeded.

mod par;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use riesz_flow::clt::{clt_experiment, CltError};
use riesz_flow::config::{Config, ConfigError, DEFAULT_PRECISION_DIGITS};
use riesz_flow::criteria::{deviation_dm, singularity_scan, CriteriaError};
use riesz_flow::flowspec::{check_typei_conditions, FlowspecError, RankOneSpec};
use riesz_flow::kernel::{FejerKernel, KernelError};
use riesz_flow::prec::Ctx;
use riesz_flow::riesz::{PartialProduct, RieszError, DEFAULT_EXPANSION_LIMIT};
use riesz_flow::staircase::{StaircaseError, StaircaseParams};
use riesz_flow::tower::{FtOracle, TowerError, DEFAULT_OCCURRENCE_LIMIT};
use riesz_flow::words::{
    bound_window, count_in_window, enumerate_words, exclusion_report, min_gap, WordsError,
};

const TOOL: &str = concat!("riesz-flow ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spec(#[from] FlowspecError),
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Riesz(#[from] RieszError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Clt(#[from] CltError),
    #[error(transparent)]
    Words(#[from] WordsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Parser)]
#[command(
    name = "riesz-flow",
    version,
    about = "Spectral experiments on rank-one flows: density grids, exact Fourier \
             transforms, tower cross-checks, singularity and CLT statistics"
)]
struct Cli {
    /// JSON configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Staircase preset (overrides the config): mini, desk, desk-deep,
    /// paper-main, remark
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Working precision in decimal digits [default: config value or 60]
    #[arg(long, global = true, value_name = "N")]
    precision_digits: Option<u32>,

    /// RNG seed for sampled subcommands [default: 0]
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Write output to a file instead of stdout
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Worker threads for grid evaluation [default: RIESZ_FLOW_THREADS or 1]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the flow specification and report admissibility conditions (JSON)
    Validate,

    /// Riesz-product density |P|²·K_s on a θ grid (CSV)
    RieszDensity {
        /// Leading stages in the product [default: all]
        #[arg(long)]
        stages: Option<usize>,
        /// Grid points over [0, theta-max]
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// Grid upper end [default: 4π/s]
        #[arg(long)]
        theta_max: Option<f64>,
    },

    /// Exact Fourier transform of the product measure on a t grid (CSV)
    RieszFt {
        /// Leading stages [default: largest prefix within the expansion limit]
        #[arg(long)]
        stages: Option<usize>,
        /// Grid points over [0, t-max]
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Grid upper end [default: h_n/2]
        #[arg(long)]
        t_max: Option<f64>,
        /// Cap on the expansion size ∏ p
        #[arg(long, default_value_t = DEFAULT_EXPANSION_LIMIT)]
        expansion_limit: usize,
    },

    /// Tower autocorrelation against the exact FT on a t grid (CSV)
    TowerCheck {
        /// Tower stage count [default: largest within the occurrence limit]
        #[arg(long)]
        stages: Option<usize>,
        /// Grid points over [0, h_n/2]
        #[arg(long, default_value_t = 32)]
        grid: usize,
    },

    /// Bourgain β over stage prefixes 1..=max-stages (CSV)
    Bourgain {
        /// Longest prefix to scan [default: all stages]
        #[arg(long)]
        max_stages: Option<usize>,
        /// Monte Carlo sample budget
        #[arg(long, default_value_t = 20_000)]
        budget: u64,
    },

    /// Deviation functional D_m = ∫ ||P_m|² − 1| dμ_s per stage (CSV)
    Deviation {
        /// Monte Carlo sample budget
        #[arg(long, default_value_t = 20_000)]
        budget: u64,
    },

    /// Trigonometric-sum CLT experiment summary (JSON)
    Clt {
        /// Stage index n of S_n [default: last]
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        /// Sampling restriction A = [interval-lo, interval-hi]
        #[arg(long, default_value_t = 1.0)]
        interval_lo: f64,
        #[arg(long, default_value_t = 2.0)]
        interval_hi: f64,
    },

    /// Histogram of the normalized sum S_n (CSV)
    CltHist {
        /// Stage index n of S_n [default: last]
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// Histogram lower edge
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        lo: f64,
        /// Histogram upper edge
        #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
        hi: f64,
        /// Sampling restriction A = [interval-lo, interval-hi]
        #[arg(long, default_value_t = 1.0)]
        interval_lo: f64,
        #[arg(long, default_value_t = 2.0)]
        interval_hi: f64,
    },

    /// Word distinctness and window-count report for one stage (JSON)
    Words {
        #[arg(long, default_value_t = 0)]
        stage: usize,
        /// Maximum word length [default: p_n, the full enumeration]
        #[arg(long)]
        max_length: Option<u32>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(name) = &cli.preset {
        config.staircase.preset = Some(name.clone());
    }
    let digits = cli
        .precision_digits
        .or(config.precision_digits)
        .unwrap_or(DEFAULT_PRECISION_DIGITS);
    let threads = cli
        .threads
        .or_else(|| std::env::var("RIESZ_FLOW_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1);
    let run = Run {
        ctx: Ctx::new(digits),
        config,
        digits,
        seed: cli.seed.unwrap_or(0),
        threads,
        out: cli.out,
    };
    match cli.command {
        Command::Validate => cmd_validate(&run),
        Command::RieszDensity { stages, grid, theta_max } => {
            cmd_riesz_density(&run, stages, grid, theta_max)
        }
        Command::RieszFt { stages, grid, t_max, expansion_limit } => {
            cmd_riesz_ft(&run, stages, grid, t_max, expansion_limit)
        }
        Command::TowerCheck { stages, grid } => cmd_tower_check(&run, stages, grid),
        Command::Bourgain { max_stages, budget } => cmd_bourgain(&run, max_stages, budget),
        Command::Deviation { budget } => cmd_deviation(&run, budget),
        Command::Clt { stage, samples, interval_lo, interval_hi } => {
            cmd_clt(&run, stage, samples, (interval_lo, interval_hi))
        }
        Command::CltHist { stage, samples, bins, lo, hi, interval_lo, interval_hi } => {
            cmd_clt_hist(&run, stage, samples, bins, (lo, hi), (interval_lo, interval_hi))
        }
        Command::Words { stage, max_length } => cmd_words(&run, stage, max_length),
    }
}

struct Run {
    config: Config,
    ctx: Ctx,
    digits: u32,
    seed: u64,
    threads: usize,
    out: Option<PathBuf>,
}

impl Run {
    fn preset_label(&self) -> String {
        if let Some(p) = &self.config.staircase.preset {
            p.clone()
        } else if self.config.cuts.is_some() {
            "custom".into()
        } else if self.config.staircase.m.is_some() {
            "custom-staircase".into()
        } else {
            "none".into()
        }
    }

    fn variant_label(&self) -> String {
        match self.config.staircase_params(&self.ctx) {
            Ok(Some(p)) => p.variant().name().to_string(),
            _ => "n/a".to_string(),
        }
    }

    /// `# key: value` header lines shared by every CSV output.
    fn meta_block(&self, subcommand: &str, extra: &[(&str, String)]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool: {TOOL}");
        let _ = writeln!(s, "# subcommand: {subcommand}");
        let _ = writeln!(s, "# preset: {}", self.preset_label());
        let _ = writeln!(s, "# variant: {}", self.variant_label());
        let _ = writeln!(s, "# seed: {}", self.seed);
        let _ = writeln!(s, "# precision_digits: {}", self.digits);
        for (k, v) in extra {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s
    }

    fn metadata_json(&self, subcommand: &str) -> serde_json::Value {
        json!({
            "tool": TOOL,
            "subcommand": subcommand,
            "preset": self.preset_label(),
            "variant": self.variant_label(),
            "seed": self.seed,
            "precision_digits": self.digits,
        })
    }

    fn spec(&self) -> Result<RankOneSpec, CliError> {
        self.config.spec(&self.ctx)?.ok_or_else(|| {
            CliError::Usage(
                "no flow specification: give --preset, a staircase section, or \
                 cuts/spacers in the config"
                    .into(),
            )
        })
    }

    fn params(&self) -> Result<StaircaseParams, CliError> {
        self.config.staircase_params(&self.ctx)?.ok_or_else(|| {
            CliError::Usage(
                "this subcommand needs staircase parameters: give --preset or a \
                 staircase section in the config"
                    .into(),
            )
        })
    }

    fn kernel(&self) -> Result<FejerKernel, CliError> {
        Ok(FejerKernel::new(self.config.kernel_s()?.unwrap_or(1.0))?)
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn require_grid(grid: usize) -> Result<(), CliError> {
    if grid < 2 {
        return Err(CliError::Usage(format!("grid needs at least 2 points, got {grid}")));
    }
    Ok(())
}

/// Longest stage prefix whose cut product stays within `limit`.
fn feasible_prefix(spec: &RankOneSpec, limit: usize) -> usize {
    let mut size = 1u128;
    let mut n = 0;
    while n < spec.stages() {
        size = size.saturating_mul(u128::from(spec.cuts()[n]));
        if size > limit as u128 {
            break;
        }
        n += 1;
    }
    n
}

fn opt_num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cmd_validate(run: &Run) -> Result<(), CliError> {
    let spec = run.spec()?;
    let finiteness = spec.check_finiteness(&run.ctx, spec.stages())?;
    let params = run.config.staircase_params(&run.ctx)?;
    let (shape, typei) = match &params {
        Some(p) => {
            let heights = spec.derive_heights(&run.ctx, p.stages())?;
            (Some(p.validate()), Some(check_typei_conditions(p, &heights, &run.ctx, p.stages())))
        }
        None => (None, None),
    };
    let payload = json!({
        "metadata": run.metadata_json("validate"),
        "stages": spec.stages(),
        "exact": spec.is_exact(),
        "finiteness": finiteness,
        "finiteness_all_pass": finiteness.all_pass(),
        "staircase_shape": shape,
        "typei_conditions": typei,
    });
    run.emit(&(serde_json::to_string_pretty(&payload)? + "\n"))
}

fn cmd_riesz_density(
    run: &Run,
    stages: Option<usize>,
    grid: usize,
    theta_max: Option<f64>,
) -> Result<(), CliError> {
    require_grid(grid)?;
    let spec = run.spec()?;
    let kernel = run.kernel()?;
    let count = stages.unwrap_or(spec.stages());
    let list: Vec<usize> = (0..count).collect();
    let probe = PartialProduct::new(&spec, &run.ctx, &list, kernel)?;
    let theta_max = theta_max.unwrap_or(4.0 * std::f64::consts::PI / kernel.s());
    let digits = run.digits;
    let rows = par::parallel_map_with(
        grid,
        run.threads,
        || {
            // per-worker context: Ctx caches are not shareable across threads
            let ctx = Ctx::new(digits);
            PartialProduct::new(&spec, &ctx, &list, kernel).expect("inputs validated above")
        },
        |pp, i| {
            let theta = theta_max * i as f64 / (grid - 1) as f64;
            (theta, pp.density_eval(theta))
        },
    );
    let mut text = run.meta_block(
        "riesz-density",
        &[
            ("stages", count.to_string()),
            ("grid", grid.to_string()),
            ("theta_max", theta_max.to_string()),
            ("kernel_s", kernel.s().to_string()),
            ("strict_separation", probe.has_strict_separation().to_string()),
            ("separation_margins", format!("{:?}", probe.separation_margins())),
        ],
    );
    text.push_str("theta,density\n");
    for (theta, d) in rows {
        let _ = writeln!(text, "{theta},{d}");
    }
    run.emit(&text)
}

fn cmd_riesz_ft(
    run: &Run,
    stages: Option<usize>,
    grid: usize,
    t_max: Option<f64>,
    expansion_limit: usize,
) -> Result<(), CliError> {
    require_grid(grid)?;
    let spec = run.spec()?;
    let kernel = run.kernel()?;
    let count = stages.unwrap_or_else(|| feasible_prefix(&spec, expansion_limit));
    let list: Vec<usize> = (0..count).collect();
    let probe = PartialProduct::new(&spec, &run.ctx, &list, kernel)?
        .with_expansion_limit(expansion_limit);
    let h = spec.derive_heights(&run.ctx, count)?.last().unwrap().to_f64(&run.ctx);
    let t_max = t_max.unwrap_or(h / 2.0);
    let digits = run.digits;
    let rows: Vec<(f64, f64)> = par::parallel_map_with(
        grid,
        run.threads,
        || {
            let ctx = Ctx::new(digits);
            PartialProduct::new(&spec, &ctx, &list, kernel)
                .expect("inputs validated above")
                .with_expansion_limit(expansion_limit)
        },
        |pp, i| {
            let t = t_max * i as f64 / (grid - 1) as f64;
            pp.ft_exact(t).map(|v| (t, v))
        },
    )
    .into_iter()
    .collect::<Result<_, _>>()?;
    let mut text = run.meta_block(
        "riesz-ft",
        &[
            ("stages", count.to_string()),
            ("grid", grid.to_string()),
            ("t_max", t_max.to_string()),
            ("h_n", h.to_string()),
            ("kernel_s", kernel.s().to_string()),
            ("expansion_limit", expansion_limit.to_string()),
            ("strict_separation", probe.has_strict_separation().to_string()),
        ],
    );
    text.push_str("t,ft\n");
    for (t, v) in rows {
        let _ = writeln!(text, "{t},{v}");
    }
    run.emit(&text)
}

fn cmd_tower_check(run: &Run, stages: Option<usize>, grid: usize) -> Result<(), CliError> {
    require_grid(grid)?;
    let spec = run.spec()?;
    let s = run.config.kernel_s()?.unwrap_or(1.0);
    let n = stages.unwrap_or_else(|| feasible_prefix(&spec, DEFAULT_OCCURRENCE_LIMIT));
    let probe = FtOracle::new(&spec, &run.ctx, n, s)?;
    let h = probe.stage().height_f64();
    let occurrences = probe.stage().len();
    let digits = run.digits;
    let rows: Vec<_> = par::parallel_map_with(
        grid,
        run.threads,
        || {
            let ctx = Ctx::new(digits);
            FtOracle::new(&spec, &ctx, n, s).expect("inputs validated above")
        },
        |oracle, i| {
            let t = 0.5 * h * i as f64 / (grid - 1) as f64;
            oracle.compare(t)
        },
    )
    .into_iter()
    .collect::<Result<_, _>>()?;
    let all_pass = rows.iter().all(|c| c.pass);
    let mut text = run.meta_block(
        "tower-check",
        &[
            ("stages", n.to_string()),
            ("grid", grid.to_string()),
            ("kernel_s", s.to_string()),
            ("h_n", h.to_string()),
            ("occurrences", occurrences.to_string()),
            ("all_pass", all_pass.to_string()),
        ],
    );
    text.push_str("t,autocorrelation,normalized,ft,residual,bound,pass\n");
    for c in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            c.t, c.autocorrelation, c.normalized, c.ft, c.residual, c.bound, c.pass
        );
    }
    run.emit(&text)
}

fn cmd_bourgain(run: &Run, max_stages: Option<usize>, budget: u64) -> Result<(), CliError> {
    let spec = run.spec()?;
    let kernel = run.kernel()?;
    let top = max_stages.unwrap_or(spec.stages());
    if top == 0 || top > spec.stages() {
        return Err(CliError::Usage(format!(
            "max-stages must be in 1..={}, got {top}",
            spec.stages()
        )));
    }
    let sets: Vec<Vec<usize>> = (1..=top).map(|l| (0..l).collect()).collect();
    let table = singularity_scan(&spec, &run.ctx, kernel, &sets, budget, run.seed)?;
    let mut text = run.meta_block(
        "bourgain",
        &[
            ("budget", budget.to_string()),
            ("kernel_s", kernel.s().to_string()),
            ("nonincreasing_within_noise", table.nonincreasing_within_noise.to_string()),
        ],
    );
    text.push_str("prefix,beta,stderr,quadrature,paths_disagree\n");
    for row in &table.rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            row.stages.len(),
            row.beta,
            row.stderr,
            opt_num(row.quadrature),
            row.paths_disagree
        );
    }
    run.emit(&text)
}

fn cmd_deviation(run: &Run, budget: u64) -> Result<(), CliError> {
    let spec = run.spec()?;
    let kernel = run.kernel()?;
    let mut text = run.meta_block(
        "deviation",
        &[
            ("budget", budget.to_string()),
            ("kernel_s", kernel.s().to_string()),
            // sharp single-stage limit of D_m as p → ∞
            ("gaussian_limit_reference", (2.0 / std::f64::consts::E).to_string()),
        ],
    );
    text.push_str("m,p,d_m,stderr,samples\n");
    for m in 0..spec.stages() {
        let est = deviation_dm(&spec, &run.ctx, m, kernel, None, budget, run.seed)?;
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            m,
            spec.cuts()[m],
            est.mean,
            est.stderr,
            est.samples
        );
    }
    run.emit(&text)
}

fn cmd_clt(
    run: &Run,
    stage: Option<usize>,
    samples: usize,
    interval: (f64, f64),
) -> Result<(), CliError> {
    let params = run.params()?;
    let n = stage.unwrap_or(params.stages() - 1);
    let kernel = run.kernel()?;
    let exp = clt_experiment(&params, &run.ctx, n, &kernel, interval, samples, run.seed)?;
    let payload = json!({
        "metadata": run.metadata_json("clt"),
        "stage": n,
        "p": params.p(n),
        "interval": [exp.interval.0, exp.interval.1],
        "samples": exp.statistics.len(),
        "ks": exp.ks,
        "second_moment": exp.second_moment,
        "mean": exp.distribution.mean(),
    });
    run.emit(&(serde_json::to_string_pretty(&payload)? + "\n"))
}

fn cmd_clt_hist(
    run: &Run,
    stage: Option<usize>,
    samples: usize,
    bins: usize,
    range: (f64, f64),
    interval: (f64, f64),
) -> Result<(), CliError> {
    if bins == 0 {
        return Err(CliError::Usage("bins must be positive".into()));
    }
    if !(range.1 > range.0) {
        return Err(CliError::Usage(format!("empty histogram range [{}, {}]", range.0, range.1)));
    }
    let params = run.params()?;
    let n = stage.unwrap_or(params.stages() - 1);
    let kernel = run.kernel()?;
    let exp = clt_experiment(&params, &run.ctx, n, &kernel, interval, samples, run.seed)?;
    let counts = exp.distribution.histogram(range.0, range.1, bins);
    let width = (range.1 - range.0) / bins as f64;
    let total = exp.statistics.len() as f64;
    let mut text = run.meta_block(
        "clt-hist",
        &[
            ("stage", n.to_string()),
            ("samples", exp.statistics.len().to_string()),
            ("interval", format!("[{}, {}]", exp.interval.0, exp.interval.1)),
            ("bins", bins.to_string()),
            ("range", format!("[{}, {}]", range.0, range.1)),
            ("ks", exp.ks.to_string()),
            ("second_moment", exp.second_moment.to_string()),
        ],
    );
    text.push_str("bin_lo,bin_hi,count,density\n");
    for (i, &c) in counts.iter().enumerate() {
        let lo = range.0 + width * i as f64;
        let hi = lo + width;
        let density = c as f64 / (total * width);
        let _ = writeln!(text, "{lo},{hi},{c},{density}");
    }
    run.emit(&text)
}

fn cmd_words(run: &Run, stage: usize, max_length: Option<u32>) -> Result<(), CliError> {
    let params = run.params()?;
    if stage >= params.stages() {
        return Err(CliError::Usage(format!(
            "stage must be in 0..{}, got {stage}",
            params.stages()
        )));
    }
    let p = params.p(stage);
    let max_length = max_length.unwrap_or(p);
    let words = enumerate_words(&params, &run.ctx, stage, max_length)?;
    let gap = min_gap(&params, &run.ctx, stage, &words)?;
    let exclusions = exclusion_report(&words);
    let h_n = run.ctx.to_f64(params.heights(&run.ctx, stage)?.last().unwrap());

    let mut counts_by_length = std::collections::BTreeMap::new();
    for w in &words {
        *counts_by_length.entry(w.length()).or_insert(0usize) += 1;
    }

    let mut windows = Vec::new();
    for r in [4u32, 8] {
        if r > max_length || r > p {
            continue;
        }
        let class: Vec<_> = words.iter().filter(|w| w.length() == r as usize).cloned().collect();
        for multiplier in [1.0, 10.0] {
            let omega = multiplier * h_n;
            let count = count_in_window(&class, omega)?;
            let bound = bound_window(&params, stage, r, omega)?;
            windows.push(json!({
                "r": r,
                "omega": omega,
                "count": count,
                "bound": bound,
                "compliant": (count as f64) <= bound,
            }));
        }
    }

    let payload = json!({
        "metadata": run.metadata_json("words"),
        "stage": stage,
        "p": p,
        "max_length": max_length,
        "total_words": words.len(),
        "counts_by_length": counts_by_length,
        "min_gap": gap,
        "exclusions": exclusions,
        "h_n": h_n,
        "windows": windows,
    });
    run.emit(&(serde_json::to_string_pretty(&payload)? + "\n"))
}
