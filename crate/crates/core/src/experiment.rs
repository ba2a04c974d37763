//! Experiment configuration, orchestration and plot-ready outputs.
//!
//! Every command writes into an output directory and finishes with a
//! `manifest.json` holding the seed, the resolved configuration and its
//! SHA-256. Outputs depend only on (configuration, seed): re-running a
//! command reproduces every file byte for byte.
//!
//! Seeds: run `i` of an experiment with base seed `s` uses discovery seed
//! `s + i` and, for generated grid worlds, layout seed `grid.rng_seed + s + i`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apprenticeship::{cg_min_norm, CgConfig, CgSummary};
use crate::composition::{gpi_value, PolicySet};
use crate::discovery::{discover, DiscoveryConfig, DiscoveryLog, Method};
use crate::error::{Error, Result};
use crate::gridworld::{generate, GridSpec, GridWorld};
use crate::mdp::{dot, star_mdp, FeatureMdp, RewardVector};
use crate::successor::sf_matrix_csv;
use crate::worst_case::{solve_worst_case, solve_worst_case_qp, SolverConfig, WorstCaseSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MdpSource {
    Gridworld(GridSpec),
    Star {
        dim: usize,
        #[serde(default = "default_discount")]
        discount: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_discount() -> f64 {
    0.9
}

impl Default for MdpSource {
    fn default() -> Self {
        MdpSource::Gridworld(GridSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub num_test_rewards: usize,
    pub num_seeds: usize,
    /// Also evaluate GPI on every test reward (one exact policy evaluation each).
    pub gpi_test_rewards: bool,
    pub trajectory_steps: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            num_test_rewards: 500,
            num_seeds: 10,
            gpi_test_rewards: true,
            trajectory_steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Not part of the hash or manifest: where outputs go does not change them.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub mdp: MdpSource,
    pub discovery: DiscoveryConfig,
    pub evaluation: EvaluationConfig,
    pub apprenticeship: CgConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            mdp: MdpSource::default(),
            discovery: DiscoveryConfig::default(),
            evaluation: EvaluationConfig::default(),
            apprenticeship: CgConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the file extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.evaluation.num_test_rewards == 0 {
            return Err(Error::invalid("num_test_rewards must be at least 1"));
        }
        if self.evaluation.num_seeds == 0 {
            return Err(Error::invalid("num_seeds must be at least 1"));
        }
        match &self.mdp {
            MdpSource::Gridworld(spec) => spec.validate()?,
            MdpSource::Star { dim, discount } => {
                if *dim == 0 || !(0.0..1.0).contains(discount) {
                    return Err(Error::invalid("star MDP needs dim >= 1 and discount in [0, 1)"));
                }
            }
            MdpSource::File { path } => {
                if !path.exists() {
                    return Err(Error::invalid(format!(
                        "MDP file {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        self.discovery.validate()
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}

/// An instantiated MDP and, for generated grids, the grid it came from.
pub struct Environment {
    pub mdp: FeatureMdp,
    pub grid: Option<GridWorld>,
}

impl Environment {
    pub fn feature_labels(&self) -> Vec<String> {
        match &self.grid {
            Some(g) => g.feature_labels(),
            None => (0..self.mdp.dim()).map(|k| format!("f{k}")).collect(),
        }
    }
}

pub fn build_environment(source: &MdpSource, seed_offset: u64) -> Result<Environment> {
    match source {
        MdpSource::Gridworld(spec) => {
            let spec = GridSpec {
                rng_seed: spec.rng_seed.wrapping_add(seed_offset),
                ..spec.clone()
            };
            let grid = generate(&spec)?;
            Ok(Environment {
                mdp: grid.mdp().clone(),
                grid: Some(grid),
            })
        }
        MdpSource::Star { dim, discount } => Ok(Environment {
            mdp: star_mdp(*dim, *discount)?,
            grid: None,
        }),
        MdpSource::File { path } => Ok(Environment {
            mdp: FeatureMdp::load(path)?,
            grid: None,
        }),
    }
}

/// Uniform sample from the unit ball: a normalized Gaussian direction scaled
/// by `U^{1/d}`.
pub fn sample_unit_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> RewardVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            let radius = rng.random::<f64>().powf(1.0 / dim as f64);
            return RewardVector::new(v.iter().map(|x| x * radius / norm).collect())
                .expect("finite sample");
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, command: &str, config: &ExperimentConfig) -> Result<Vec<String>> {
        self.files.sort();
        let manifest = Manifest {
            command,
            seed: config.seed,
            config_hash: config.hash(),
            config,
            files: self.files.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
        self.write("manifest.json", &(text + "\n"))?;
        Ok(self.files)
    }
}

pub struct DiscoverOutcome {
    pub set: PolicySet,
    pub log: DiscoveryLog,
    pub files: Vec<String>,
}

/// Runs one discovery and writes the policy set, the log (JSON lines and
/// CSV), the SF matrix and, for grid worlds, the ASCII grid and greedy
/// trajectories.
pub fn cmd_discover(config: &ExperimentConfig) -> Result<DiscoverOutcome> {
    config.validate()?;
    let env = build_environment(&config.mdp, config.seed)?;
    let cfg = DiscoveryConfig {
        rng_seed: config.seed,
        ..config.discovery.clone()
    };
    let cfg = if cfg.method == Method::Orthogonal {
        DiscoveryConfig {
            max_policies: cfg.max_policies.min(env.mdp.dim()),
            ..cfg
        }
    } else {
        cfg
    };
    let (set, log) = discover(&env.mdp, &cfg)?;

    let mut out = OutputDir::create(&config.out_dir)?;
    out.write(
        "policy_set.json",
        &(serde_json::to_string_pretty(&set.to_file()).expect("policy set serialization") + "\n"),
    )?;
    out.write("discovery_log.jsonl", &log.to_jsonl())?;
    out.write("discovery_log.csv", &log.to_csv())?;
    let aggregates = set.aggregates();
    let rows: Vec<&[f64]> = aggregates.iter().map(Vec::as_slice).collect();
    out.write("sfs.csv", &sf_matrix_csv(&rows, &env.feature_labels()))?;
    if let Some(grid) = &env.grid {
        out.write("grid.txt", &grid.render_ascii())?;
        let start = grid.canonical_start();
        let mut csv = String::from("policy,step,x,y\n");
        for (i, pi) in set.policies().iter().enumerate() {
            for (t, (x, y)) in grid
                .trajectory(pi, start, config.evaluation.trajectory_steps)
                .into_iter()
                .enumerate()
            {
                let _ = writeln!(csv, "{i},{t},{x},{y}");
            }
        }
        out.write("trajectories.csv", &csv)?;
    }
    let files = out.finish("discover", config)?;
    Ok(DiscoverOutcome { set, log, files })
}

/// Everything one seed contributes to a comparison.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub method: Method,
    pub log: DiscoveryLog,
    /// Mean SMP value over the test rewards, per set size (index 0 = size 1).
    pub smp_test_mean: Vec<f64>,
    pub gpi_test_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<SeedRun>,
    pub max_size: usize,
    pub files: Vec<String>,
}

/// Column statistics across seeds: mean and Gaussian 95% half-width.
fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Value at `size`, carrying a run's final value past its last iteration.
fn at_size(values: &[f64], size: usize) -> f64 {
    values[(size - 1).min(values.len() - 1)]
}

fn run_seed(
    config: &ExperimentConfig,
    method: Method,
    offset: u64,
) -> Result<SeedRun> {
    let seed = config.seed.wrapping_add(offset);
    let env = build_environment(&config.mdp, seed)?;
    let mdp = &env.mdp;
    let max_policies = match method {
        Method::Orthogonal => config.discovery.max_policies.min(mdp.dim()),
        _ => config.discovery.max_policies,
    };
    let cfg = DiscoveryConfig {
        rng_seed: seed,
        method,
        max_policies,
        prune_inactive: false,
        ..config.discovery.clone()
    };
    let (set, log) = discover(mdp, &cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tests: Vec<RewardVector> = (0..config.evaluation.num_test_rewards)
        .map(|_| sample_unit_ball(&mut rng, mdp.dim()))
        .collect();
    let aggregates = set.aggregates();
    let n = log.records.len();
    let mut smp_test_mean = Vec::with_capacity(n);
    let mut gpi_test_mean = Vec::with_capacity(n);
    for size in 1..=n {
        let prefix = &aggregates[..size];
        let smp: f64 = tests
            .iter()
            .map(|w| {
                prefix
                    .iter()
                    .map(|sf| w.dot(sf))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / tests.len() as f64;
        smp_test_mean.push(smp);
        if config.evaluation.gpi_test_rewards {
            let subset = set.subset(&(0..size).collect::<Vec<_>>());
            let mut total = 0.0;
            for w in &tests {
                total += gpi_value(mdp, &subset, w)?;
            }
            gpi_test_mean.push(total / tests.len() as f64);
        }
    }
    Ok(SeedRun {
        seed,
        method,
        log,
        smp_test_mean,
        gpi_test_mean: config.evaluation.gpi_test_rewards.then_some(gpi_test_mean),
    })
}

pub const CURVES_HEADER: &str = "method,seed,set_size,v_bar,smp_bracket,gpi_bracket,active_count";
pub const WORST_CASE_SUMMARY_HEADER: &str = "method,set_size,v_bar_mean,v_bar_ci95,num_seeds";
pub const TEST_REWARDS_HEADER: &str = "method,seed,set_size,smp_mean,gpi_mean";
pub const TEST_SUMMARY_HEADER: &str =
    "method,set_size,smp_mean,smp_ci95,gpi_mean,gpi_ci95,num_seeds";
pub const POLICIES_NEEDED_HEADER: &str = "target_size,target_value,method,policies_needed";
pub const MARGINS_HEADER: &str =
    "set_size,worst_case,orthogonal,random,margin_vs_orthogonal,margin_vs_random";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs every method on every seed and writes the comparison tables.
pub fn cmd_compare(config: &ExperimentConfig) -> Result<Comparison> {
    config.validate()?;
    let jobs: Vec<(Method, u64)> = Method::ALL
        .iter()
        .flat_map(|&m| (0..config.evaluation.num_seeds as u64).map(move |i| (m, i)))
        .collect();
    let runs: Vec<SeedRun> = jobs
        .par_iter()
        .map(|&(m, i)| run_seed(config, m, i))
        .collect::<Result<_>>()?;
    let max_size = config.discovery.max_policies;
    let by_method = |m: Method| runs.iter().filter(move |r| r.method == m);

    let mut out = OutputDir::create(&config.out_dir)?;

    let mut curves = format!("{CURVES_HEADER}\n");
    for run in &runs {
        for r in &run.log.records {
            let _ = writeln!(
                curves,
                "{},{},{},{},{},{},{}",
                run.method, run.seed, r.set_size, r.v_bar, r.v_bar, r.gpi_value, r.active_count
            );
        }
    }
    out.write("curves.csv", &curves)?;

    let v_bar_mean = |m: Method, size: usize| -> (f64, f64, usize) {
        let vals: Vec<f64> = by_method(m).map(|r| at_size(&r.log.v_bars(), size)).collect();
        let (mean, ci) = mean_ci(&vals);
        (mean, ci, vals.len())
    };
    let mut summary = format!("{WORST_CASE_SUMMARY_HEADER}\n");
    for m in Method::ALL {
        for size in 1..=max_size {
            let (mean, ci, n) = v_bar_mean(m, size);
            let _ = writeln!(summary, "{m},{size},{mean},{ci},{n}");
        }
    }
    out.write("worst_case_summary.csv", &summary)?;

    let mut margins = format!("{MARGINS_HEADER}\n");
    for size in 1..=max_size {
        let wc = v_bar_mean(Method::WorstCase, size).0;
        let orth = v_bar_mean(Method::Orthogonal, size).0;
        let rand = v_bar_mean(Method::Random, size).0;
        let _ = writeln!(
            margins,
            "{size},{wc},{orth},{rand},{},{}",
            wc - orth,
            wc - rand
        );
    }
    out.write("margins.csv", &margins)?;

    let mut per_seed = format!("{TEST_REWARDS_HEADER}\n");
    for run in &runs {
        for (i, smp) in run.smp_test_mean.iter().enumerate() {
            let gpi = run.gpi_test_mean.as_ref().map(|g| g[i]);
            let _ = writeln!(per_seed, "{},{},{},{smp},{}", run.method, run.seed, i + 1, fmt_opt(gpi));
        }
    }
    out.write("test_rewards.csv", &per_seed)?;

    let test_mean = |m: Method, size: usize| -> (f64, f64, Option<(f64, f64)>, usize) {
        let smp: Vec<f64> = by_method(m).map(|r| at_size(&r.smp_test_mean, size)).collect();
        let gpi: Option<Vec<f64>> = by_method(m)
            .map(|r| r.gpi_test_mean.as_ref().map(|g| at_size(g, size)))
            .collect();
        let (sm, sc) = mean_ci(&smp);
        (sm, sc, gpi.map(|g| mean_ci(&g)), smp.len())
    };
    let mut test_summary = format!("{TEST_SUMMARY_HEADER}\n");
    for m in Method::ALL {
        for size in 1..=max_size {
            let (sm, sc, gpi, n) = test_mean(m, size);
            let _ = writeln!(
                test_summary,
                "{m},{size},{sm},{sc},{},{},{n}",
                fmt_opt(gpi.map(|g| g.0)),
                fmt_opt(gpi.map(|g| g.1))
            );
        }
    }
    out.write("test_reward_summary.csv", &test_summary)?;

    let mut needed = format!("{POLICIES_NEEDED_HEADER}\n");
    for target_size in 1..=max_size {
        let target = test_mean(Method::WorstCase, target_size).0;
        for m in Method::ALL {
            let reached = (1..=max_size).find(|&s| test_mean(m, s).0 >= target - 1e-12);
            let _ = writeln!(
                needed,
                "{target_size},{target},{m},{}",
                reached.map(|s| s.to_string()).unwrap_or_default()
            );
        }
    }
    out.write("policies_needed.csv", &needed)?;

    let files = out.finish("compare", config)?;
    Ok(Comparison {
        runs,
        max_size,
        files,
    })
}

/// Reads SF vectors from CSV (optional header; a leading `policy` column is
/// dropped) or JSON (an array of arrays, or an object with an `sfs` field).
pub fn read_sf_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trimmed = text.trim_start();
    let sfs = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum SfJson {
            Rows(Vec<Vec<f64>>),
            Set { sfs: Vec<Vec<f64>> },
        }
        match serde_json::from_str::<SfJson>(trimmed).map_err(|e| Error::parse(path, e))? {
            SfJson::Rows(rows) | SfJson::Set { sfs: rows } => rows,
        }
    } else {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let mut drop_first = false;
        if let Some(first) = lines.peek() {
            let head = first.split(',').next().unwrap_or("").trim();
            if head.parse::<f64>().is_err() {
                drop_first = head == "policy";
                lines.next();
            }
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .skip(usize::from(drop_first))
                    .map(|x| {
                        x.trim().parse::<f64>().map_err(|e| {
                            Error::parse(path, format!("row {}: {x:?}: {e}", i + 1))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?
    };
    if sfs.is_empty() {
        return Err(Error::parse(path, "no SF rows"));
    }
    Ok(sfs)
}

/// Solves the worst-case reward for the SFs in `path`; writes
/// `solution.json` into `out_dir` when given.
pub fn cmd_solve_w(
    path: &Path,
    solver: &SolverConfig,
    use_qp: bool,
    out_dir: Option<&Path>,
) -> Result<WorstCaseSolution> {
    let sfs = read_sf_file(path)?;
    let solution = if use_qp {
        solve_worst_case_qp(&sfs, solver)?
    } else {
        solve_worst_case(&sfs, solver)?
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file = dir.join("solution.json");
        fs::write(&file, solution.to_json() + "\n").map_err(|e| Error::io(&file, e))?;
    }
    Ok(solution)
}

/// Generates a grid world and writes `mdp.json`, `grid.txt` and the resolved
/// `grid_spec.json`.
pub fn cmd_gridworld_gen(spec: &GridSpec, out_dir: &Path) -> Result<GridWorld> {
    let grid = generate(spec)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write("mdp.json", &grid.mdp().to_json())?;
    out.write("grid.txt", &grid.render_ascii())?;
    out.write(
        "grid_spec.json",
        &(serde_json::to_string_pretty(spec).expect("spec serialization") + "\n"),
    )?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlReport {
    pub cg: CgSummary,
    /// Final `v̄` of worst-case discovery on the same MDP.
    pub discovery_v_bar: f64,
    pub discovery_set_size: usize,
}

/// Runs the CG apprenticeship baseline next to worst-case discovery and
/// writes `al_baseline.json`.
pub fn cmd_al_baseline(config: &ExperimentConfig) -> Result<AlReport> {
    config.validate()?;
    let env = build_environment(&config.mdp, config.seed)?;
    let cg = cg_min_norm(&env.mdp, &config.apprenticeship)?;
    let cfg = DiscoveryConfig {
        rng_seed: config.seed,
        method: Method::WorstCase,
        ..config.discovery.clone()
    };
    let (set, log) = discover(&env.mdp, &cfg)?;
    let report = AlReport {
        cg: cg.summary(),
        discovery_v_bar: log.final_v_bar(),
        discovery_set_size: set.len(),
    };
    let mut out = OutputDir::create(&config.out_dir)?;
    out.write(
        "al_baseline.json",
        &(serde_json::to_string_pretty(&report).expect("report serialization") + "\n"),
    )?;
    out.finish("al-baseline", config)?;
    Ok(report)
}
