//! Settings resolution: command-line flags, then the JSON config file, then
//! built-in defaults.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use srf_pal::archetype::SubjectConfig;
use srf_pal::pipeline::{ModelTrainingConfig, WindowConfig};
use srf_pal::signal::{SensorKind, SensorRange};

/// Keys accepted in a config file. Every key is optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub days: Option<usize>,
    pub train_days: Option<usize>,
    pub window_min: Option<f64>,
    pub period_sec: Option<i64>,
    pub utc_offset_sec: Option<i64>,
    pub windows_per_day: Option<usize>,
    pub noise_sd: Option<f64>,
    pub heart_rate_range: Option<[f64; 2]>,
    pub step_rate_range: Option<[f64; 2]>,
    pub wrist_motion_range: Option<[f64; 2]>,
    pub pool_size: Option<usize>,
    pub training_set_size: Option<usize>,
    pub training_noise_sd: Option<f64>,
    pub daily_noise_sd: Option<f64>,
    pub global_samples: Option<usize>,
    pub de_population: Option<usize>,
    pub de_weight: Option<f64>,
    pub de_crossover: Option<f64>,
    pub de_generations: Option<usize>,
    pub de_stall: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by several subcommands; `None` means not given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub days: Option<usize>,
    pub train_days: Option<usize>,
    pub window_min: Option<f64>,
    pub period_sec: Option<i64>,
    pub windows_per_day: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub seed: u64,
    pub train_days: usize,
    pub window: WindowConfig,
    pub subject: SubjectConfig,
    pub training: ModelTrainingConfig,
}

impl CliConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self> {
        let window_min = flags.window_min.or(file.window_min).unwrap_or(6.0);
        let period = flags.period_sec.or(file.period_sec).unwrap_or(5);
        let mut window = WindowConfig::from_minutes(window_min, period)?;
        window.utc_offset = file.utc_offset_sec.unwrap_or(0);

        let defaults = SubjectConfig::default();
        let subject = SubjectConfig {
            days: flags.days.or(file.days).unwrap_or(defaults.days),
            windows_per_day: flags.windows_per_day.or(file.windows_per_day).unwrap_or(defaults.windows_per_day),
            window_len: window.width,
            noise_sd: file.noise_sd.unwrap_or(defaults.noise_sd),
            ..defaults
        };

        let mut training = ModelTrainingConfig {
            window,
            ..ModelTrainingConfig::default()
        };
        let ranges = [file.heart_rate_range, file.step_rate_range, file.wrist_motion_range];
        for (i, (r, kind)) in ranges.iter().zip(SensorKind::ALL).enumerate() {
            if let Some([lo, hi]) = r {
                training.ranges[i] = SensorRange::new(*lo, *hi).with_context(|| format!("{kind} range"))?;
            }
        }
        for (p, noise) in [
            (&mut training.protocol, file.training_noise_sd),
            (&mut training.daily_protocol, file.daily_noise_sd),
        ] {
            if let Some(sd) = noise {
                p.noise_sd = sd;
            }
            p.pool_size = file.pool_size.unwrap_or(p.pool_size);
            p.training_set_size = file.training_set_size.unwrap_or(p.training_set_size);
            p.global_samples = file.global_samples.unwrap_or(p.global_samples);
            p.de.population = file.de_population.unwrap_or(p.de.population);
            p.de.weight = file.de_weight.unwrap_or(p.de.weight);
            p.de.crossover = file.de_crossover.unwrap_or(p.de.crossover);
            p.de.max_generations = file.de_generations.unwrap_or(p.de.max_generations);
            p.de.stall_generations = file.de_stall.unwrap_or(p.de.stall_generations);
        }
        // daily reference series span one day of windows
        training.daily_reference_len = subject.windows_per_day;

        Ok(CliConfig {
            seed: flags.seed.or(file.seed).unwrap_or(0),
            train_days: flags.train_days.or(file.train_days).unwrap_or(9),
            window,
            subject,
            training,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = serde_json::from_str(r#"{"seed": 3, "days": 10, "de_population": 30}"#).unwrap();
        let flags = Overrides {
            seed: Some(5),
            ..Default::default()
        };
        let c = CliConfig::resolve(&file, &flags).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.subject.days, 10);
        assert_eq!(c.training.protocol.de.population, 30);
        assert_eq!(c.train_days, 9);
        assert_eq!(c.window.width, 72);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"sede": 3}"#).is_err());
    }

    #[test]
    fn window_follows_period() {
        let flags = Overrides {
            window_min: Some(5.0),
            period_sec: Some(10),
            ..Default::default()
        };
        let c = CliConfig::resolve(&FileConfig::default(), &flags).unwrap();
        assert_eq!(c.window.width, 30);
        assert_eq!(c.subject.window_len, 30);
    }
}
