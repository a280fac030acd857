use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accel::design::CycleParams;
use crate::accel::{reference_power_model, PowerModel};
use crate::dataio::{SplitData, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{ModelConfig, MAX_BLOCKS};
use crate::rng;
use crate::search::pareto::{crowding_distance, nondominated_sort, pareto_front, ParetoFront, Point};
use crate::search::space::{ConstraintSet, SearchSpace, TrialConfig};
use crate::search::trial::{evaluate_trial, TrialContext, TrialResult};

/// Epoch at which the accuracy gate is applied, unless training is shorter.
pub const GATE_EPOCH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub n_trials: usize,
    pub population: usize,
    pub seed: u64,
    /// Trials evaluated concurrently; results do not depend on it.
    pub jobs: usize,
    pub epochs_max: usize,
    pub patience: usize,
    pub ping_pong: bool,
    /// Also train a float twin of every trial that passes the accuracy gate.
    pub fp32_baseline: bool,
    pub cycle: CycleParams,
    pub power: PowerModel,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            n_trials: 100,
            population: 20,
            seed: 0,
            jobs: 1,
            epochs_max: 100,
            patience: 10,
            ping_pong: true,
            fp32_baseline: false,
            cycle: CycleParams::default(),
            power: reference_power_model(),
        }
    }
}

impl StudySettings {
    pub fn gate_epoch(&self) -> usize {
        GATE_EPOCH.min(self.epochs_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must be at least 2".into()));
        }
        if self.n_trials < self.population {
            return Err(Error::Config(format!("n_trials {} is smaller than the population {}", self.n_trials, self.population)));
        }
        if self.jobs == 0 || self.epochs_max == 0 {
            return Err(Error::Config("jobs and epochs_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub space: SearchSpace,
    pub constraints: ConstraintSet,
    pub settings: StudySettings,
    /// Ordered by trial index.
    pub trials: Vec<TrialResult>,
}

impl Study {
    pub fn front(&self) -> ParetoFront {
        pareto_front(&self.trials)
    }
}

fn check_data(data: &SplitData) -> Result<()> {
    if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
        return Err(Error::Study(format!(
            "dataset too small: {} train, {} validation, {} test samples",
            data.train.len(),
            data.val.len(),
            data.test.len()
        )));
    }
    let len = data.train[0].len();
    if let Some(s) = data.train.iter().chain(&data.val).chain(&data.test).find(|s| s.len() != len || s.channels() != NUM_CHANNELS) {
        return Err(Error::Study(format!("sample {}x{} differs from {len}x{NUM_CHANNELS}", s.len(), s.channels())));
    }
    Ok(())
}

/// Evaluates `(index, generation, config)` entries with up to `jobs` worker
/// threads; results come back in input order.
pub fn evaluate_batch(entries: &[(usize, usize, TrialConfig)], ctx: TrialContext, force: bool) -> Result<Vec<TrialResult>> {
    let run = || entries.par_iter().map(|&(i, g, c)| evaluate_trial(c, i, g, ctx, force)).collect::<Result<Vec<_>>>();
    if ctx.settings.jobs <= 1 {
        return entries.iter().map(|&(i, g, c)| evaluate_trial(c, i, g, ctx, force)).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.settings.jobs)
        .build()
        .map_err(|e| Error::Study(format!("cannot start worker pool: {e}")))?
        .install(run)
}

/// NSGA-II over the search space: a random first generation, then
/// generations of offspring bred from the survivors of (parents + children)
/// by nondominated rank and crowding distance.
pub fn run_study(space: SearchSpace, constraints: ConstraintSet, data: &SplitData, settings: StudySettings) -> Result<Study> {
    settings.validate()?;
    constraints.validate()?;
    check_data(data)?;
    let len = data.train[0].len();
    if ModelConfig::new(space.arch, MAX_BLOCKS).with_input_len(len).validate().is_err() {
        return Err(Error::Study(format!("samples of length {len} are too short for {MAX_BLOCKS} blocks")));
    }
    let ctx = TrialContext { constraints: &constraints, data, settings: &settings };
    let pop = settings.population;
    let mut trials: Vec<TrialResult> = Vec::with_capacity(settings.n_trials);
    let mut parents: Vec<usize> = Vec::new();
    let mut generation = 0;
    while trials.len() < settings.n_trials {
        let mut rng = rng::stream(settings.seed, &[rng::hash_str("generation"), generation as u64]);
        let count = pop.min(settings.n_trials - trials.len());
        let configs: Vec<TrialConfig> = if generation == 0 {
            (0..count).map(|_| space.sample(&mut rng)).collect()
        } else {
            let (rank, crowd) = standing(&trials, &parents);
            let tournament = |rng: &mut rand_chacha::ChaCha8Rng| {
                let a = rng.random_range(0..parents.len());
                let b = rng.random_range(0..parents.len());
                let better = (rank[a], std::cmp::Reverse(ordered(crowd[a])), parents[a])
                    < (rank[b], std::cmp::Reverse(ordered(crowd[b])), parents[b]);
                if better { parents[a] } else { parents[b] }
            };
            (0..count)
                .map(|_| {
                    let p1 = tournament(&mut rng);
                    let p2 = tournament(&mut rng);
                    space.offspring(&trials[p1].config, &trials[p2].config, &mut rng)
                })
                .collect()
        };
        let start = trials.len();
        let entries: Vec<_> = configs.into_iter().enumerate().map(|(k, c)| (start + k, generation, c)).collect();
        let results = evaluate_batch(&entries, ctx, false)?;
        log::info!(
            "generation {generation}: {} of {} trials complete",
            results.iter().filter(|t| t.is_complete()).count(),
            results.len()
        );
        trials.extend(results);
        let pool: Vec<usize> = parents.iter().copied().chain(start..trials.len()).collect();
        parents = survivors(&trials, &pool, pop);
        generation += 1;
    }
    Ok(Study { space, constraints, settings, trials })
}

/// Total order key for a crowding distance (infinity sorts highest).
fn ordered(d: f64) -> u64 {
    if d.is_infinite() { u64::MAX } else { (d * 1e12) as u64 }
}

/// Rank and crowding distance of each of `members` among themselves.
fn standing(trials: &[TrialResult], members: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let points: Vec<Point> = members.iter().map(|&i| trials[i].objectives()).collect();
    let mut rank = vec![0; members.len()];
    let mut crowd = vec![0.0; members.len()];
    for (r, front) in nondominated_sort(&points).iter().enumerate() {
        for (&k, d) in front.iter().zip(crowding_distance(&points, front)) {
            rank[k] = r;
            crowd[k] = d;
        }
    }
    (rank, crowd)
}

/// The `n` best of `pool` by rank, then crowding distance, then index.
fn survivors(trials: &[TrialResult], pool: &[usize], n: usize) -> Vec<usize> {
    let (rank, crowd) = standing(trials, pool);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by_key(|&k| (rank[k], std::cmp::Reverse(ordered(crowd[k])), pool[k]));
    let mut keep: Vec<usize> = order.into_iter().take(n).map(|k| pool[k]).collect();
    keep.sort_unstable();
    keep
}

/// Re-runs the recorded configurations of `trials` (same indices, hence
/// same training seeds) under `constraints`. With `force`, every stage runs
/// regardless of the gates.
pub fn replay(
    trials: &[TrialResult],
    constraints: &ConstraintSet,
    data: &SplitData,
    settings: &StudySettings,
    force: bool,
) -> Result<Vec<TrialResult>> {
    constraints.validate()?;
    check_data(data)?;
    let entries: Vec<_> = trials.iter().map(|t| (t.index, t.generation, t.config)).collect();
    evaluate_batch(&entries, TrialContext { constraints, data, settings }, force)
}

/// One JSON record per trial.
pub fn write_study_log(trials: &[TrialResult], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trials {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_study_log(text: &str) -> Result<Vec<TrialResult>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, reason: e.to_string() }))
        .collect()
}
