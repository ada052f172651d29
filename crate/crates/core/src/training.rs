//! Adaptation of receptive-field parameters.
//!
//! Two phases: a global phase samples the parameter box at random and keeps
//! the evaporation range of the best-scoring decile; a local phase then runs
//! Differential Evolution per receptive field with evaporation confined to
//! that range.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archetype::{archetype_signal, generate_pool, ArchetypeKind, LabeledWindow};
use crate::de::{de_optimize_with, validate_bounds, DeConfig};
use crate::error::{Error, Result};
use crate::pipeline::{Perceptron, PerceptronInput, Srf};
use crate::rng::{derive_seed, seeded_rng};
use crate::srf::{activate, build_trail_unchecked, similarity_unchecked, SrfParams, TrailConfig};

/// Smallest separation kept between ordered inflection points.
pub const MIN_GAP: f64 = 1e-3;

/// Narrowest evaporation interval handed to the local phase.
pub const MIN_DELTA_WIDTH: f64 = 0.01;

/// Closed search interval per parameter, in `SrfParams` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub ranges: [(f64, f64); 8],
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            ranges: [
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.001, 0.5),
                (0.001, 0.999),
                (0.0, 1.0),
                (0.0, 1.0),
            ],
        }
    }
}

impl ParamBounds {
    pub fn delta(&self) -> (f64, f64) {
        self.ranges[SrfParams::DELTA_INDEX]
    }

    pub fn with_delta(mut self, interval: DeltaInterval) -> Self {
        self.ranges[SrfParams::DELTA_INDEX] = (interval.lo, interval.hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_bounds(&self.ranges)?;
        let (elo, ehi) = self.ranges[SrfParams::EPSILON_INDEX];
        if !(elo > 0.0 && ehi <= 0.5) {
            return Err(Error::Parameter(format!("mark width bounds [{elo}, {ehi}] outside (0, 0.5]")));
        }
        let (dlo, dhi) = self.delta();
        if !(dlo > 0.0 && dhi < 1.0) {
            return Err(Error::Parameter(format!("evaporation bounds [{dlo}, {dhi}] outside (0, 1)")));
        }
        for (name, chain) in [("clumping", &self.ranges[0..4]), ("activation", &self.ranges[6..8])] {
            if chain.iter().any(|&(lo, hi)| lo < 0.0 || hi > 1.0) {
                return Err(Error::Parameter(format!("{name} bounds must lie in [0, 1]")));
            }
            let mut floor = f64::NEG_INFINITY;
            for &(lo, hi) in chain {
                floor = lo.max(floor + MIN_GAP);
                if floor > hi {
                    return Err(Error::Parameter(format!("{name} bounds cannot hold ordered points")));
                }
            }
        }
        Ok(())
    }

    /// Sorts each ordered group and spreads it to the minimum gap, staying
    /// inside the bounds. Requires [`ParamBounds::validate`] to pass.
    pub fn repair(&self, x: &mut [f64]) {
        repair_chain(&mut x[0..4], &self.ranges[0..4]);
        repair_chain(&mut x[6..8], &self.ranges[6..8]);
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 8] {
        let mut x = self.ranges.map(|(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) });
        self.repair(&mut x);
        x
    }
}

fn repair_chain(x: &mut [f64], bounds: &[(f64, f64)]) {
    x.sort_by(f64::total_cmp);
    let n = x.len();
    for i in 0..n {
        let mut lo = bounds[i].0;
        if i > 0 {
            lo = lo.max(x[i - 1] + MIN_GAP);
        }
        x[i] = x[i].max(lo);
    }
    for i in (0..n).rev() {
        let mut hi = bounds[i].1;
        if i + 1 < n {
            hi = hi.min(x[i + 1] - MIN_GAP);
        }
        x[i] = x[i].min(hi);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub window: LabeledWindow,
    /// 1 for the receptive field's own archetype, 0 for a neighbour.
    pub target: f64,
}

/// Training pairs of one receptive field plus the noiseless reference its
/// archetype trail is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfTrainingSet {
    pub level: usize,
    pub class: ArchetypeKind,
    pub reference: Vec<f64>,
    pub pairs: Vec<TrainingPair>,
}

/// Mean squared error between targets and activations; the archetype trail
/// is rebuilt with `params` first.
pub fn fitness_mse(params: &SrfParams, pairs: &[TrainingPair], reference: &[f64], config: &TrailConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Parameter("fitness needs at least one training pair".into()));
    }
    params.validate()?;
    config.validate()?;
    for p in pairs {
        crate::srf::build_trail(&p.window.samples, params, config)?;
    }
    crate::srf::build_trail(reference, params, config)?;
    Ok(fitness_unchecked(params, pairs, reference, config))
}

fn fitness_unchecked(params: &SrfParams, pairs: &[TrainingPair], reference: &[f64], config: &TrailConfig) -> f64 {
    let archetype = build_trail_unchecked(reference, params, config);
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let trail = build_trail_unchecked(&p.window.samples, params, config);
            let a = activate(similarity_unchecked(&trail, &archetype), params.alpha_a, params.beta_a);
            (p.target - a).powi(2)
        })
        .sum();
    sum / pairs.len() as f64
}

/// Training pairs for the receptive field at `level` (1-based) of an ordered
/// collection: half positives from its own pool, half negatives from the
/// adjacent pools, split evenly, or all from the single neighbour at the
/// ends. Windows are taken from the front of each pool.
pub fn build_srf_training_set(level: usize, pools: &[Vec<LabeledWindow>], size: usize) -> Result<Vec<TrainingPair>> {
    let k = pools.len();
    if k < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {k}")));
    }
    if level == 0 || level > k {
        return Err(Error::Parameter(format!("level {level} outside 1..={k}")));
    }
    if size < 2 {
        return Err(Error::Parameter(format!("training set size {size} < 2")));
    }
    let positives = size / 2;
    let negatives = size - positives;
    let i = level - 1;
    let mut quota: Vec<(usize, usize, f64)> = vec![(i, positives, 1.0)];
    match (i.checked_sub(1), (i + 1 < k).then_some(i + 1)) {
        (Some(below), Some(above)) => {
            let upper = negatives / 2;
            quota.push((below, negatives - upper, 0.0));
            quota.push((above, upper, 0.0));
        }
        (Some(only), None) | (None, Some(only)) => quota.push((only, negatives, 0.0)),
        (None, None) => unreachable!(),
    }

    let mut pairs = Vec::with_capacity(size);
    for (pool_index, count, target) in quota {
        let pool = &pools[pool_index];
        if pool.len() < count {
            let class = pool
                .first()
                .map(|w| w.class.to_string())
                .unwrap_or_else(|| format!("level {}", pool_index + 1));
            return Err(Error::InsufficientPool {
                class,
                needed: count,
                available: pool.len(),
            });
        }
        pairs.extend(pool[..count].iter().map(|w| TrainingPair {
            window: w.clone(),
            target,
        }));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaInterval {
    pub lo: f64,
    pub hi: f64,
}

/// `[min, max]` of the given evaporation rates, widened symmetrically to
/// [`MIN_DELTA_WIDTH`] and clipped to `clip`.
pub fn delta_interval(deltas: &[f64], clip: (f64, f64)) -> Result<DeltaInterval> {
    if deltas.is_empty() {
        return Err(Error::Parameter("no evaporation rates to span".into()));
    }
    let mut lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < MIN_DELTA_WIDTH {
        let pad = 0.5 * (MIN_DELTA_WIDTH - (hi - lo));
        lo -= pad;
        hi += pad;
    }
    Ok(DeltaInterval {
        lo: lo.max(clip.0),
        hi: hi.min(clip.1),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPhaseResult {
    pub interval: DeltaInterval,
    /// Parameter vectors of the selected decile, best first.
    pub selected: Vec<[f64; 8]>,
    pub selected_fitness: Vec<f64>,
}

/// Scores `samples` random parameter vectors by their mean fitness over all
/// receptive fields of a perceptron and spans the evaporation rates of the
/// best tenth.
pub fn global_phase(
    sets: &[SrfTrainingSet],
    bounds: &ParamBounds,
    samples: usize,
    seed: u64,
    config: &TrailConfig,
) -> Result<GlobalPhaseResult> {
    if samples < 20 {
        return Err(Error::Parameter(format!("global phase needs >= 20 samples, got {samples}")));
    }
    if sets.is_empty() || sets.iter().any(|s| s.pairs.is_empty()) {
        return Err(Error::Parameter("global phase needs non-empty training sets".into()));
    }
    bounds.validate()?;
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let mut scored: Vec<([f64; 8], f64)> = (0..samples)
        .map(|_| {
            let x = bounds.sample(&mut rng);
            let params = SrfParams::from_array(x);
            let fit = sets
                .iter()
                .map(|s| fitness_unchecked(&params, &s.pairs, &s.reference, config))
                .sum::<f64>()
                / sets.len() as f64;
            (x, fit)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    scored.truncate(samples / 10);
    let deltas: Vec<f64> = scored.iter().map(|(x, _)| x[SrfParams::DELTA_INDEX]).collect();
    Ok(GlobalPhaseResult {
        interval: delta_interval(&deltas, bounds.delta())?,
        selected: scored.iter().map(|(x, _)| *x).collect(),
        selected_fitness: scored.iter().map(|(_, f)| *f).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPhaseResult {
    pub params: SrfParams,
    pub fitness: f64,
    pub generations: usize,
    pub history: Vec<f64>,
}

/// Differential Evolution over one receptive field, with evaporation
/// restricted to `interval`.
pub fn local_phase(
    set: &SrfTrainingSet,
    interval: DeltaInterval,
    bounds: &ParamBounds,
    de: &DeConfig,
    config: &TrailConfig,
) -> Result<LocalPhaseResult> {
    if !(interval.lo > 0.0 && interval.hi < 1.0 && interval.lo <= interval.hi) {
        return Err(Error::Parameter(format!(
            "evaporation interval [{}, {}] must lie within (0, 1)",
            interval.lo, interval.hi
        )));
    }
    if set.pairs.is_empty() {
        return Err(Error::Parameter("local phase needs training pairs".into()));
    }
    let bounds = bounds.with_delta(interval);
    bounds.validate()?;
    config.validate()?;
    let result = de_optimize_with(
        |x: &[f64]| {
            let params = SrfParams::from_array(x.try_into().unwrap());
            fitness_unchecked(&params, &set.pairs, &set.reference, config)
        },
        &bounds.ranges,
        de,
        |x: &mut [f64]| bounds.repair(x),
    )?;
    let params = SrfParams::from_slice(&result.best)?;
    Ok(LocalPhaseResult {
        params,
        fitness: result.best_fitness,
        generations: result.generations,
        history: result.history,
    })
}

/// Settings of the two-phase protocol for one perceptron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Windows drawn per archetype class.
    pub pool_size: usize,
    pub noise_sd: f64,
    /// Pairs per receptive field.
    pub training_set_size: usize,
    pub global_samples: usize,
    pub bounds: ParamBounds,
    pub de: DeConfig,
    pub trail: TrailConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            pool_size: 40,
            noise_sd: 0.03,
            training_set_size: 40,
            global_samples: 200,
            bounds: ParamBounds::default(),
            de: DeConfig::default(),
            trail: TrailConfig::default(),
        }
    }
}

/// Outcome of training one receptive field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrfReport {
    pub perceptron: String,
    pub level: usize,
    pub class: ArchetypeKind,
    pub fitness: f64,
    pub params: SrfParams,
    pub delta_interval: DeltaInterval,
    pub generations: usize,
}

pub const REPORT_HEADER: &str =
    "perceptron,level,class,fitness,alpha1,beta1,alpha2,beta2,epsilon,delta,alpha_a,beta_a,delta_lo,delta_hi,generations";

pub fn write_report<W: Write>(reports: &[SrfReport], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in reports {
        let p = r.params.to_array().map(|v| v.to_string()).join(",");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.perceptron, r.level, r.class, r.fitness, p, r.delta_interval.lo, r.delta_interval.hi, r.generations
        )?;
    }
    Ok(())
}

/// Noisy pools, one per class, drawn from seeds derived from `seed`.
pub fn class_pools(classes: &[ArchetypeKind], count: usize, len: usize, noise_sd: f64, seed: u64) -> Result<Vec<Vec<LabeledWindow>>> {
    classes
        .iter()
        .enumerate()
        .map(|(i, &k)| generate_pool(k, count, len, noise_sd, derive_seed(seed, i as u64)))
        .collect()
}

/// Builds the per-level training sets of an ordered class collection.
pub fn perceptron_training_sets(
    classes: &[ArchetypeKind],
    pools: &[Vec<LabeledWindow>],
    len: usize,
    size: usize,
) -> Result<Vec<SrfTrainingSet>> {
    classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            Ok(SrfTrainingSet {
                level: i + 1,
                class,
                reference: archetype_signal(class, len, 0.0, 0)?,
                pairs: build_srf_training_set(i + 1, pools, size)?,
            })
        })
        .collect()
}

/// Runs the full two-phase protocol for one perceptron on synthetic pools.
pub fn train_perceptron(
    input: PerceptronInput,
    classes: &[ArchetypeKind],
    window_len: usize,
    config: &ProtocolConfig,
    seed: u64,
) -> Result<(Perceptron, Vec<SrfReport>)> {
    let pools = class_pools(classes, config.pool_size, window_len, config.noise_sd, derive_seed(seed, 1))?;
    let sets = perceptron_training_sets(classes, &pools, window_len, config.training_set_size)?;
    let global = global_phase(&sets, &config.bounds, config.global_samples, derive_seed(seed, 2), &config.trail)?;

    let mut srfs = Vec::with_capacity(sets.len());
    let mut reports = Vec::with_capacity(sets.len());
    for set in &sets {
        let de = DeConfig {
            seed: derive_seed(seed, 100 + set.level as u64),
            ..config.de
        };
        let local = local_phase(set, global.interval, &config.bounds, &de, &config.trail)?;
        srfs.push(Srf::new(set.level, set.class, local.params, &set.reference, &config.trail)?);
        reports.push(SrfReport {
            perceptron: input.to_string(),
            level: set.level,
            class: set.class,
            fitness: local.fitness,
            params: local.params,
            delta_interval: global.interval,
            generations: local.generations,
        });
    }
    Ok((Perceptron::new(input, config.trail, srfs)?, reports))
}
