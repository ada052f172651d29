//! Differential Evolution, DE/rand/1/bin.
//!
//! Generational variant: all trial vectors of a generation are built from
//! the previous population before any of them is scored, so the random
//! stream is consumed only by the optimizer loop and scoring order does not
//! matter. Out-of-bounds coordinates are reflected back into the box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population: usize,
    /// Differential weight F.
    pub weight: f64,
    /// Crossover probability CR.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop once the best fitness is at or below this value.
    pub target_fitness: f64,
    /// Stop after this many generations without improvement.
    pub stall_generations: usize,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            population: 20,
            weight: 0.5,
            crossover: 0.9,
            max_generations: 100,
            target_fitness: 1e-4,
            stall_generations: 30,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Parameter(format!("population {} < 4", self.population)));
        }
        if !(self.weight > 0.0 && self.weight <= 2.0) {
            return Err(Error::Parameter(format!("differential weight {} outside (0, 2]", self.weight)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::Parameter(format!("crossover {} outside [0, 1]", self.crossover)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// Best-so-far fitness; entry 0 is the initial population.
    pub history: Vec<f64>,
    pub generations: usize,
    pub population: Vec<Vec<f64>>,
}

/// Folds `x` into `[lo, hi]` by mirroring at the bounds.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        return x;
    }
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    let y = (x - lo).rem_euclid(2.0 * width);
    let y = if y > width { 2.0 * width - y } else { y };
    (lo + y).clamp(lo, hi)
}

pub fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Parameter("no dimensions to optimize".into()));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Parameter(format!("infeasible bounds [{lo}, {hi}] for dimension {i}")));
        }
    }
    Ok(())
}

fn score(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Minimizes `fitness` over the box `bounds`.
pub fn de_optimize<F>(fitness: F, bounds: &[(f64, f64)], config: &DeConfig) -> Result<DeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    de_optimize_with(fitness, bounds, config, |_: &mut [f64]| {})
}

/// As [`de_optimize`], applying `repair` to every candidate after bound
/// handling. `repair` must keep the candidate inside `bounds`.
pub fn de_optimize_with<F, R>(mut fitness: F, bounds: &[(f64, f64)], config: &DeConfig, repair: R) -> Result<DeResult>
where
    F: FnMut(&[f64]) -> f64,
    R: Fn(&mut [f64]),
{
    validate_bounds(bounds)?;
    config.validate()?;
    let dim = bounds.len();
    let np = config.population;
    let mut rng = seeded_rng(config.seed);

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            let mut x: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect();
            repair(&mut x);
            x
        })
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| score(fitness(x))).collect();

    let mut best = argmin(&fit);
    let mut history = vec![fit[best]];
    let mut stalled = 0;
    let mut generations = 0;

    while generations < config.max_generations && fit[best] > config.target_fitness {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let [a, b, c] = distinct_three(&mut rng, np, i);
                let forced = rng.random_range(0..dim);
                let mut trial: Vec<f64> = (0..dim)
                    .map(|j| {
                        if j == forced || rng.random::<f64>() < config.crossover {
                            let v = pop[a][j] + config.weight * (pop[b][j] - pop[c][j]);
                            reflect(v, bounds[j].0, bounds[j].1)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect();
                repair(&mut trial);
                trial
            })
            .collect();

        let previous = fit[best];
        for (i, trial) in trials.into_iter().enumerate() {
            let f = score(fitness(&trial));
            if f <= fit[i] {
                pop[i] = trial;
                fit[i] = f;
            }
        }
        generations += 1;
        best = argmin(&fit);
        history.push(fit[best]);

        if fit[best] < previous {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= config.stall_generations {
                break;
            }
        }
    }

    Ok(DeResult {
        best: pop[best].clone(),
        best_fitness: fit[best],
        history,
        generations,
        population: pop,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn distinct_three<R: Rng>(rng: &mut R, n: usize, exclude: usize) -> [usize; 3] {
    let mut picked = [usize::MAX; 3];
    let mut k = 0;
    while k < 3 {
        let r = rng.random_range(0..n);
        if r != exclude && !picked[..k].contains(&r) {
            picked[k] = r;
            k += 1;
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn reflect_folds_into_box() {
        assert_eq!(reflect(0.5, 0.0, 1.0), 0.5);
        assert!((reflect(1.2, 0.0, 1.0) - 0.8).abs() < 1e-12);
        assert!((reflect(-0.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
        assert!((reflect(3.5, 0.0, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(reflect(7.0, 2.0, 2.0), 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(DeConfig { population: 3, ..Default::default() }.validate().is_err());
        assert!(DeConfig { weight: 0.0, ..Default::default() }.validate().is_err());
        assert!(DeConfig { weight: 2.5, ..Default::default() }.validate().is_err());
        assert!(DeConfig { crossover: 1.1, ..Default::default() }.validate().is_err());
        assert!(DeConfig::default().validate().is_ok());
    }

    #[test]
    fn infeasible_bounds_rejected() {
        let err = de_optimize(sphere, &[(1.0, -1.0)], &DeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
        assert!(de_optimize(sphere, &[(0.0, f64::NAN)], &DeConfig::default()).is_err());
        assert!(de_optimize(sphere, &[], &DeConfig::default()).is_err());
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = DeConfig { seed: 42, target_fitness: 0.0, ..Default::default() };
        let bounds = [(-5.0, 5.0); 4];
        let a = de_optimize(sphere, &bounds, &cfg).unwrap();
        let b = de_optimize(sphere, &bounds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn candidates_stay_in_bounds() {
        // optimum lies outside the box, so mutation keeps overshooting
        let bounds = [(0.0, 1.0); 5];
        let mut outside = 0;
        let cfg = DeConfig { weight: 2.0, target_fitness: f64::NEG_INFINITY, ..Default::default() };
        let res = de_optimize(
            |x: &[f64]| {
                if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    outside += 1;
                }
                x.iter().map(|v| (v - 3.0).powi(2)).sum()
            },
            &bounds,
            &cfg,
        )
        .unwrap();
        assert_eq!(outside, 0);
        assert!(res.population.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert!(res.best.iter().all(|&v| v > 0.9), "{:?}", res.best);
    }

    #[test]
    fn history_is_monotone_and_stops_early() {
        let cfg = DeConfig { target_fitness: 1e-2, ..Default::default() };
        let res = de_optimize(sphere, &[(-1.0, 1.0); 2], &cfg).unwrap();
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.best_fitness <= 1e-2);
        assert!(res.generations < cfg.max_generations);
        assert_eq!(res.history.len(), res.generations + 1);
    }

    #[test]
    fn stall_stops_flat_objective() {
        let cfg = DeConfig { stall_generations: 5, ..Default::default() };
        let res = de_optimize(|_: &[f64]| 1.0, &[(0.0, 1.0); 3], &cfg).unwrap();
        assert_eq!(res.generations, 5);
    }

    #[test]
    fn repair_is_applied_to_every_candidate() {
        let cfg = DeConfig { target_fitness: f64::NEG_INFINITY, max_generations: 20, ..Default::default() };
        let mut unsorted = 0;
        de_optimize_with(
            |x: &[f64]| {
                if x[0] > x[1] {
                    unsorted += 1;
                }
                sphere(x)
            },
            &[(0.0, 1.0); 2],
            &cfg,
            |x: &mut [f64]| x.sort_by(f64::total_cmp),
        )
        .unwrap();
        assert_eq!(unsorted, 0);
    }
}
