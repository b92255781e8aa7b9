use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qvlab::algorithms::quickval;
use qvlab::cadlag::{modulus, skorokhod_dist, sup_dist, StepFunction};
use qvlab::coupling::fixed_tree_residual;
use qvlab::limit::{beta_cov_matrix, sample_family, sample_g_inf, sigma_inf, sigma_via_j};
use qvlab::metrics::{d2_holder_threshold, holder_check, increments, Metric, MetricReport};
use qvlab::rng;
use qvlab::stats::{binomial_pmf, chi2_discrete, cov_with_se, ks_test, normal_cdf, TestReport};
use qvlab::tree::IntervalTree;
use qvlab_cli::config::{CostSpec, ExperimentConfig};
use qvlab_cli::par::{init_pool, replicates};
use qvlab_cli::suites::{self, Budget, SE_BAND};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Simulation and validation runs for QuickVal cost processes.
#[derive(Parser)]
#[command(name = "qvlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by all subcommands; each overrides the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample size(s), comma separated.
    #[arg(long)]
    n: Option<String>,
    /// Truncation level.
    #[arg(long = "K", short = 'K')]
    depth: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Alpha grid, comma separated.
    #[arg(long)]
    grid: Option<String>,
    /// unit, bit or bit:<eps>.
    #[arg(long)]
    cost: Option<String>,
    /// hoare, lomuto or none.
    #[arg(long)]
    scheme: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suite names for `validate`, comma separated, or `all`.
    #[arg(long)]
    suite: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HolderMetric {
    D2,
    Dg,
}

#[derive(Subcommand)]
enum Command {
    /// QuickVal cost profiles: one CSV row per (replicate, alpha, level).
    Run(Common),
    /// Finite-n residual covariance on a fixed random tree against sigma_inf.
    Simulate(Common),
    /// Limit covariance on the grid: both representations for unit cost, the
    /// Monte Carlo beta covariance otherwise.
    Covariance(Common),
    /// Sampled limit paths and, optionally, a Hölder violation test.
    Limit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        holder: Option<HolderMetric>,
    },
    /// Pairwise d2 / dG table and an empirical exponent fit.
    Holder(Common),
    /// Distances between two step functions stored as CSV.
    Skorokhod {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        /// Window for the modulus w'(delta).
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Runs acceptance suites and writes reports and a summary.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Fraction of the stated replicate counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Calibration runs of the statistical tests.
    Selftest(Common),
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("n", common.n.clone()),
        ("K", common.depth.map(|v| v.to_string())),
        ("reps", common.reps.map(|v| v.to_string())),
        ("grid", common.grid.clone()),
        ("cost", common.cost.clone()),
        ("scheme", common.scheme.clone()),
        ("out", common.out.as_ref().map(|p| p.display().to_string())),
        ("suite", common.suite.clone()),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output files: every CSV starts with a `# config_hash=` line, every JSON
/// document carries the hash and the config.
struct Outputs {
    dir: PathBuf,
    hash: String,
    cfg: ExperimentConfig,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    result: T,
}

impl Outputs {
    fn new(cfg: &ExperimentConfig, sub: &str) -> Result<Self> {
        let dir = cfg.out.join(sub);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("config.txt"), cfg.to_text())?;
        Ok(Outputs { dir, hash: cfg.hash(), cfg: cfg.clone() })
    }

    fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let body = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {}", e.error()))?;
        let mut text = format!("# config_hash={}\n", self.hash).into_bytes();
        text.extend(body);
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    fn json<T: Serialize>(&self, name: &str, result: T) -> Result<PathBuf> {
        let doc = Document { config_hash: &self.hash, config: &self.cfg, result };
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(path)
    }
}

fn s<T: ToString>(x: T) -> String {
    x.to_string()
}

fn cmd_run(cfg: &ExperimentConfig) -> Result<bool> {
    let out = Outputs::new(cfg, "run")?;
    let cost = cfg.cost.model();
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let per_rep = replicates(cfg.reps, cfg.seed, n as u64, |g, r| -> Result<Vec<Vec<String>>> {
            let keys = rng::uniform_keys(g, n);
            let mut rows = Vec::new();
            for &a in &cfg.grid {
                let prof = quickval(&keys, a, &cost, cfg.scheme)?;
                for (k, l) in prof.per_level.iter().enumerate() {
                    rows.push(vec![s(n), s(r), s(a), s(k), s(l.comparisons), s(l.swaps), s(l.beta_cost)]);
                }
            }
            Ok(rows)
        });
        for r in per_rep {
            rows.extend(r?);
        }
    }
    let p = out.csv("profiles.csv", &["n", "replicate", "alpha", "level", "comparisons", "swaps", "beta_cost"], rows)?;
    println!("wrote {}", p.display());
    Ok(true)
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<bool> {
    let out = Outputs::new(cfg, "simulate")?;
    let tree = IntervalTree::random(cfg.depth, &mut rng::stream(cfg.seed, u64::MAX));
    fs::write(out.dir.join("tree.json"), tree.to_json()?)?;
    let mut rows = Vec::new();
    let mut all_ok = true;
    for &n in &cfg.n {
        let values = replicates(cfg.reps, cfg.seed, n as u64, |g, _| -> Result<Vec<f64>> {
            let res = fixed_tree_residual(&tree, cfg.depth, n, g)?;
            cfg.grid.iter().map(|&a| Ok(res.at(&tree, a)?)).collect()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for i in 0..cfg.grid.len() {
            for j in 0..cfg.grid.len() {
                let x: Vec<f64> = values.iter().map(|v| v[i]).collect();
                let y: Vec<f64> = values.iter().map(|v| v[j]).collect();
                let (c, se) = cov_with_se(&x, &y)?;
                let target = sigma_inf(&tree, cfg.grid[i], cfg.grid[j], cfg.depth)?;
                let r = TestReport::from_se("cov", c, target, se, x.len(), SE_BAND);
                all_ok &= r.passed;
                let dist = r.se_distance.unwrap_or(f64::NAN);
                rows.push(vec![s(n), s(cfg.grid[i]), s(cfg.grid[j]), s(c), s(se), s(target), s(dist)]);
            }
        }
    }
    let p = out.csv("covariance.csv", &["n", "alpha", "beta", "cov", "se", "sigma_inf", "se_distance"], rows)?;
    println!("wrote {} (all entries within {SE_BAND} SE: {all_ok})", p.display());
    Ok(true)
}

fn cmd_covariance(cfg: &ExperimentConfig) -> Result<bool> {
    let out = Outputs::new(cfg, "covariance")?;
    let tree = IntervalTree::random(cfg.depth, &mut rng::stream(cfg.seed, u64::MAX));
    fs::write(out.dir.join("tree.json"), tree.to_json()?)?;
    let grid = &cfg.grid;
    let mut rows = Vec::new();
    match cfg.cost {
        CostSpec::Unit => {
            let pairs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (0..grid.len()).map(move |j| (i, j))).collect();
            let est = replicates(pairs.len(), cfg.seed, 1, |g, k| {
                let (i, j) = pairs[k];
                sigma_via_j(&tree, grid[i], grid[j], cfg.depth, cfg.reps.max(30), g)
            });
            for ((i, j), e) in pairs.iter().zip(est) {
                let e = e?;
                let exact = sigma_inf(&tree, grid[*i], grid[*j], cfg.depth)?;
                rows.push(vec![s(grid[*i]), s(grid[*j]), s(exact), s(e.value), s(e.se)]);
            }
            let p = out.csv("covariance.csv", &["alpha", "beta", "sigma_inf", "sigma_via_j", "se"], rows)?;
            println!("wrote {}", p.display());
        }
        CostSpec::Bit { .. } => {
            let cov = beta_cov_matrix(&tree, grid, cfg.depth, &cfg.cost.model(), cfg.reps.max(30), cfg.seed)?;
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    rows.push(vec![s(grid[i]), s(grid[j]), s(cov.matrix[(i, j)]), s(cov.se[(i, j)])]);
                }
            }
            let p = out.csv("beta_covariance.csv", &["alpha", "beta", "cov", "se"], rows)?;
            out.json(
                "beta_covariance.json",
                serde_json::json!({ "samples": cov.samples, "clip_threshold": cov.clip_threshold, "clipped": cov.clipped }),
            )?;
            println!("wrote {} ({} eigenvalues clipped)", p.display(), cov.clipped);
        }
    }
    Ok(true)
}

fn cmd_limit(cfg: &ExperimentConfig, holder: Option<HolderMetric>) -> Result<bool> {
    let out = Outputs::new(cfg, "limit")?;
    let pairs = 100_000;
    let results = replicates(cfg.reps, cfg.seed, 1, |g, r| -> Result<(Vec<Vec<String>>, Option<_>)> {
        let tree = IntervalTree::random(cfg.depth, g);
        let path = sample_g_inf(&sample_family(&tree, g));
        let rows = if r < 10 {
            let starts = std::iter::once(0.0).chain(path.jumps().iter().copied());
            starts.zip(path.values()).map(|(t, v)| vec![s(r), s(t), s(v)]).collect()
        } else {
            Vec::new()
        };
        let check = match holder {
            None => None,
            Some(m) => {
                let (metric, gamma) = match m {
                    HolderMetric::D2 => (Metric::D2, 0.9 * d2_holder_threshold()),
                    HolderMetric::Dg => (Metric::Dg, 0.9),
                };
                let draw = |g: &mut rng::StreamRng, count: usize| -> Vec<(f64, f64)> {
                    (0..count).map(|_| (g.random(), g.random())).collect()
                };
                let cal = increments(&path, metric, &tree, &draw(g, pairs / 10))?;
                let test = increments(&path, metric, &tree, &draw(g, pairs))?;
                Some(holder_check(&cal, &test, gamma, 5, 2.0))
            }
        };
        Ok((rows, check))
    });
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for res in results {
        let (r, c) = res?;
        rows.extend(r);
        checks.extend(c);
    }
    out.csv("paths.csv", &["path", "location", "value"], rows)?;
    if holder.is_none() {
        println!("wrote {}", out.dir.display());
        return Ok(true);
    }
    let violations: usize = checks.iter().map(|c| c.violations).sum();
    let tested: usize = checks.iter().map(|c| c.tested).sum();
    let exponent = checks.first().map_or(f64::NAN, |c| c.exponent);
    let report = TestReport::exact(format!("Hölder violations at exponent {exponent:.4}"), violations, tested);
    let p = out.json("holder.json", serde_json::json!({ "report": report, "per_path": checks }))?;
    println!("{violations} violations over {tested} pairs at exponent {exponent:.4}; wrote {}", p.display());
    Ok(report.passed)
}

fn cmd_holder(cfg: &ExperimentConfig) -> Result<bool> {
    let out = Outputs::new(cfg, "holder")?;
    let mut g = rng::stream(cfg.seed, 0);
    let tree = IntervalTree::random(cfg.depth, &mut g);
    let path = sample_g_inf(&sample_family(&tree, &mut g));
    let rep = MetricReport::build(&tree, Some(&path), cfg.reps, &mut g)?;
    let mut csv_text = format!("# config_hash={}\n", out.hash);
    csv_text.push_str(&rep.to_csv()?);
    fs::write(out.dir.join("metrics.csv"), csv_text)?;
    out.json("holder_fit.json", &rep.holder)?;
    match &rep.holder {
        Some(f) => println!("dG exponent fit {:.3} (bootstrap band {:.3}..{:.3}, {} pairs)", f.slope, f.band.0, f.band.1, f.pairs_used),
        None => println!("path is degenerate; no exponent fitted"),
    }
    Ok(true)
}

fn read_step(path: &Path) -> Result<StepFunction> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    Ok(StepFunction::from_csv(&body)?)
}

fn cmd_skorokhod(cfg: &ExperimentConfig, f: &Path, g: &Path, delta: f64) -> Result<bool> {
    let out = Outputs::new(cfg, "skorokhod")?;
    let (f, g) = (read_step(f)?, read_step(g)?);
    let result = serde_json::json!({
        "skorokhod": skorokhod_dist(&f, &g, 1e-9)?,
        "sup": sup_dist(&f, &g),
        "delta": delta,
        "modulus_f": modulus(&f, delta)?,
        "modulus_g": modulus(&g, delta)?,
    });
    println!("{result}");
    out.json("skorokhod.json", result)?;
    Ok(true)
}

fn cmd_validate(cfg: &ExperimentConfig, scale: f64) -> Result<bool> {
    if !(scale > 0.0 && scale <= 1.0) {
        bail!("--scale must lie in (0,1], got {scale}");
    }
    let ids = suites::select(&cfg.suites)?;
    let out = Outputs::new(cfg, "validate")?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for id in ids {
        let o = suites::run(id, cfg.seed, Budget { scale })?;
        println!("{}", o.line());
        out.json(&format!("{:02}-{}.json", o.id, o.name), &o)?;
        outcomes.push(o);
    }
    let total_tests: usize = outcomes.iter().map(|o| o.reports.len()).sum();
    for o in &outcomes {
        let failed = o.reports.iter().filter(|r| !r.passed).count();
        rows.push(vec![s(o.id), s(o.name), s(o.passed), s(o.reports.len()), s(failed), s(total_tests)]);
    }
    out.csv("summary.csv", &["criterion", "suite", "passed", "tests", "failed_tests", "bonferroni_factor"], rows)?;
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    Ok(passed == outcomes.len())
}

fn cmd_selftest(cfg: &ExperimentConfig) -> Result<bool> {
    let out = Outputs::new(cfg, "selftest")?;
    let mut g = rng::stream(cfg.seed, 0);
    let normals: Vec<f64> = (0..10_000).map(|_| g.sample(StandardNormal)).collect();
    let coins: Vec<u64> = (0..10_000).map(|_| (0..20).filter(|_| g.random::<bool>()).count() as u64).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = (0..10_000).map(|_| (g.random::<f64>(), g.random::<f64>())).unzip();
    let (c, se) = cov_with_se(&x, &y)?;
    let reports = vec![
        ks_test(&normals, normal_cdf, "normal draws vs N(0,1)", 1e-3)?,
        chi2_discrete(&coins, |k| binomial_pmf(20, 0.5, k), 0, 20, "fair coins vs Bin(20,1/2)", 1e-3)?,
        TestReport::from_se("cov of independent uniforms", c, 0.0, se, x.len(), SE_BAND),
    ];
    for r in &reports {
        println!("{:<32} {}", r.name, if r.passed { "PASS" } else { "FAIL" });
    }
    out.json("selftest.json", &reports)?;
    Ok(reports.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    init_pool();
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        match &cli.command {
            Command::Run(c) => cmd_run(&config(c)?),
            Command::Simulate(c) => cmd_simulate(&config(c)?),
            Command::Covariance(c) => cmd_covariance(&config(c)?),
            Command::Limit { common, holder } => cmd_limit(&config(common)?, *holder),
            Command::Holder(c) => cmd_holder(&config(c)?),
            Command::Skorokhod { common, f, g, delta } => cmd_skorokhod(&config(common)?, f, g, *delta),
            Command::Validate { common, scale } => cmd_validate(&config(common)?, *scale),
            Command::Selftest(c) => cmd_selftest(&config(c)?),
        }
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
