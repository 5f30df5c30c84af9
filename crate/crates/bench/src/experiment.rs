use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gnn_es::driver::{run, DriverConfig};
use gnn_es::es::{LatentOptimizer, Pges, Xnes};
use gnn_es::objectives::{ObjectiveKind, ObjectiveSpec};
use gnn_es::record::{parse_jsonl, GenerationRecord, RunRecord};
use gnn_es::LatentParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::summary::{self, SummaryRow};
use crate::{io_err, BenchError, Result};

/// Stream of the per-seed instance generator (translation, rotation, initial mean).
const INSTANCE_STREAM: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "xnes")]
    Xnes,
    #[serde(rename = "pges")]
    Pges,
    #[serde(rename = "gnn-xnes")]
    GnnXnes,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Xnes => "xnes",
            Self::Pges => "pges",
            Self::GnnXnes => "gnn-xnes",
        }
    }

    fn trains_flow(self) -> bool {
        self == Self::GnnXnes
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "xnes" => Ok(Self::Xnes),
            "pges" => Ok(Self::Pges),
            "gnn-xnes" => Ok(Self::GnnXnes),
            _ => Err(BenchError::Usage(format!("unknown algorithm `{s}` (expected xnes, pges or gnn-xnes)"))),
        }
    }
}

/// One experiment: an algorithm on one objective family, over several seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub budget: u64,
    pub population: Option<usize>,
    pub kl_radius: Option<f64>,
    pub inner_steps: Option<usize>,
    pub pges_learning_rate: f64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(BenchError::Usage("seed list must not be empty".into()));
        }
        if self.dim < 2 {
            return Err(BenchError::Usage("dimension must be at least 2".into()));
        }
        self.driver_config().validate()?;
        Ok(())
    }

    pub fn driver_config(&self) -> DriverConfig {
        let mut cfg = DriverConfig::for_dimension(self.dim);
        if let Some(n) = self.population {
            cfg.population_size = n;
            cfg.kl_sample_size = 10 * n;
        }
        if let Some(eps) = self.kl_radius {
            cfg.kl_radius = eps;
        }
        if let Some(steps) = self.inner_steps {
            cfg.inner_steps = steps;
        }
        cfg.max_evaluations = Some(self.budget);
        cfg.train_flow = self.algorithm.trains_flow();
        cfg
    }

    pub fn run_file(&self, seed: u64) -> PathBuf {
        self.out.join(format!("{}.jsonl", run_stem(self.objective, self.dim, self.algorithm, seed)))
    }

    pub fn checkpoint_file(&self, seed: u64) -> PathBuf {
        self.out.join(format!("{}.ckpt.json", run_stem(self.objective, self.dim, self.algorithm, seed)))
    }
}

/// `<objective>__d<dim>__<algorithm>__seed<seed>`
pub fn run_stem(objective: ObjectiveKind, dim: usize, algorithm: Algorithm, seed: u64) -> String {
    format!("{objective}__d{dim}__{algorithm}__seed{seed}")
}

/// Inverse of [`run_stem`].
pub fn parse_run_stem(stem: &str) -> Option<(ObjectiveKind, usize, Algorithm, u64)> {
    let parts: Vec<&str> = stem.split("__").collect();
    if parts.len() != 4 {
        return None;
    }
    let objective = parts[0].parse().ok()?;
    let dim = parts[1].strip_prefix('d')?.parse().ok()?;
    let algorithm = parts[2].parse().ok()?;
    let seed = parts[3].strip_prefix("seed")?.parse().ok()?;
    Some((objective, dim, algorithm, seed))
}

/// Trajectory logs in `dir` whose names follow [`run_stem`], sorted by path.
pub fn scan_run_logs(dir: &Path) -> Result<Vec<(PathBuf, (ObjectiveKind, usize, Algorithm, u64))>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(stem) = name.strip_suffix(".jsonl") else { continue };
        if let Some(key) = parse_run_stem(stem) {
            found.push((path, key));
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

pub fn read_run_log(path: &Path) -> Result<Vec<GenerationRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_jsonl(&text).map_err(|e| match e {
        gnn_es::Error::Checkpoint(source) => BenchError::Parse { path: path.to_path_buf(), source },
        other => other.into(),
    })
}

/// Objective instance and initial latent Gaussian of one seed. Both depend on
/// the seed only, never on the algorithm.
pub fn seeded_instance(objective: ObjectiveKind, dim: usize, seed: u64) -> Result<(ObjectiveSpec, LatentParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INSTANCE_STREAM);
    let spec = ObjectiveSpec::random_instance(objective, dim, &mut rng)?;
    let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    Ok((spec, LatentParams::isotropic(&mean, 1.0)?))
}

/// Runs a single seed of `cfg` without writing anything.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let (spec, initial) = seeded_instance(cfg.objective, cfg.dim, seed)?;
    let mut optimizer: Box<dyn LatentOptimizer> = match cfg.algorithm {
        Algorithm::Xnes | Algorithm::GnnXnes => Box::new(Xnes::new(cfg.dim)),
        Algorithm::Pges => Box::new(Pges { learning_rate: cfg.pges_learning_rate }),
    };
    Ok(run(&spec, &cfg.driver_config(), optimizer.as_mut(), initial, seed)?)
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub records: Vec<(u64, RunRecord)>,
    pub summary: SummaryRow,
}

/// Runs every seed (in parallel), writes one trajectory log and one checkpoint
/// per seed, and merges the aggregate row into `<out>/summary.tsv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let records: Vec<(u64, RunRecord)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed).map(|r| (seed, r)))
        .collect::<Result<_>>()?;

    for (seed, record) in &records {
        write(&cfg.run_file(*seed), &record.to_jsonl()?)?;
        write(&cfg.checkpoint_file(*seed), &record.final_state.to_json()?)?;
    }
    let summary = SummaryRow::from_runs(
        cfg.objective,
        cfg.dim,
        cfg.algorithm,
        records.iter().map(|(_, r)| (r.best_f, r.evaluations)),
    );
    summary::merge_into_file(&cfg.out.join(summary::SUMMARY_FILE), std::slice::from_ref(&summary))?;
    Ok(ExperimentOutput { records, summary })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}
