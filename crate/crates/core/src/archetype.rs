//! Archetype reference signals and a seeded synthetic subject.
//!
//! Archetypes are pure-form windows: constant plateaus for the steady
//! classes, alternating bursts for the variable ones. Noisy draws of them
//! form the training pools, and a synthetic subject strings activity
//! templates into days of aligned heart-rate/step/motion windows.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::signal::{RawRecord, SensorKind, SensorRange, SECONDS_PER_DAY};

pub const LOW_LEVEL: f64 = 0.15;
pub const MEDIUM_LEVEL: f64 = 0.50;
pub const HIGH_LEVEL: f64 = 0.85;
/// Samples per burst in the variable archetypes.
pub const BURST_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchetypeKind {
    Low,
    VariableLow,
    Medium,
    VariableHigh,
    High,
}

impl ArchetypeKind {
    /// The ordered micro-level collection (levels 1..=5).
    pub const MICRO: [ArchetypeKind; 5] = [
        ArchetypeKind::Low,
        ArchetypeKind::VariableLow,
        ArchetypeKind::Medium,
        ArchetypeKind::VariableHigh,
        ArchetypeKind::High,
    ];

    /// The ordered daily collection (levels 1..=3).
    pub const DAILY: [ArchetypeKind; 3] = [ArchetypeKind::Low, ArchetypeKind::Medium, ArchetypeKind::High];

    pub fn name(self) -> &'static str {
        match self {
            ArchetypeKind::Low => "Low",
            ArchetypeKind::VariableLow => "VariableLow",
            ArchetypeKind::Medium => "Medium",
            ArchetypeKind::VariableHigh => "VariableHigh",
            ArchetypeKind::High => "High",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::MICRO.into_iter().find(|k| k.name() == name)
    }

    /// Level index within the micro collection, 1-based.
    pub fn micro_level(self) -> usize {
        Self::MICRO.iter().position(|&k| k == self).unwrap() + 1
    }

    /// Mean of the noiseless signal over whole bursts.
    pub fn mean_level(self) -> f64 {
        match self {
            ArchetypeKind::Low => LOW_LEVEL,
            ArchetypeKind::VariableLow => 0.5 * (LOW_LEVEL + MEDIUM_LEVEL),
            ArchetypeKind::Medium => MEDIUM_LEVEL,
            ArchetypeKind::VariableHigh => 0.5 * (MEDIUM_LEVEL + HIGH_LEVEL),
            ArchetypeKind::High => HIGH_LEVEL,
        }
    }

    fn value_at(self, k: usize) -> f64 {
        let first_half = (k / BURST_LEN).is_multiple_of(2);
        match self {
            ArchetypeKind::Low => LOW_LEVEL,
            ArchetypeKind::Medium => MEDIUM_LEVEL,
            ArchetypeKind::High => HIGH_LEVEL,
            ArchetypeKind::VariableLow if first_half => LOW_LEVEL,
            ArchetypeKind::VariableLow => MEDIUM_LEVEL,
            ArchetypeKind::VariableHigh if first_half => MEDIUM_LEVEL,
            ArchetypeKind::VariableHigh => HIGH_LEVEL,
        }
    }
}

impl std::fmt::Display for ArchetypeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Daily activity class: the nearest of 1, 2, 3 to a PAL value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PalClass {
    Low = 1,
    Medium = 2,
    High = 3,
}

impl PalClass {
    pub const ALL: [PalClass; 3] = [PalClass::Low, PalClass::Medium, PalClass::High];

    /// Rounds to the nearest class, halves rounding up.
    pub fn from_pal(pal: f64) -> Self {
        if pal >= 2.5 {
            PalClass::High
        } else if pal >= 1.5 {
            PalClass::Medium
        } else {
            PalClass::Low
        }
    }

    pub fn level(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PalClass::Low => "Low",
            PalClass::Medium => "Medium",
            PalClass::High => "High",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for PalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn draw_signal<R: Rng>(kind: ArchetypeKind, len: usize, noise: Option<&Normal<f64>>, rng: &mut R) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let x = kind.value_at(k);
            match noise {
                Some(n) => (x + n.sample(rng)).clamp(0.0, 1.0),
                None => x,
            }
        })
        .collect()
}

fn noise_dist(noise_sd: f64) -> Result<Option<Normal<f64>>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Parameter(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    if noise_sd == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, noise_sd)
        .map(Some)
        .map_err(|e| Error::Parameter(e.to_string()))
}

/// Pure-form signal of a class, optionally with clamped Gaussian noise.
pub fn archetype_signal(kind: ArchetypeKind, len: usize, noise_sd: f64, seed: u64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::Parameter("archetype length must be positive".into()));
    }
    let noise = noise_dist(noise_sd)?;
    Ok(draw_signal(kind, len, noise.as_ref(), &mut seeded_rng(seed)))
}

/// A window with the class it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub samples: Vec<f64>,
    pub class: ArchetypeKind,
}

/// `count` independent noisy draws of one archetype.
pub fn generate_pool(
    kind: ArchetypeKind,
    count: usize,
    len: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<LabeledWindow>> {
    if count == 0 || len == 0 {
        return Err(Error::Parameter("pool count and window length must be positive".into()));
    }
    let noise = noise_dist(noise_sd)?;
    let mut rng = seeded_rng(seed);
    Ok((0..count)
        .map(|_| LabeledWindow {
            samples: draw_signal(kind, len, noise.as_ref(), &mut rng),
            class: kind,
        })
        .collect())
}

/// A recognisable activity: which archetype each sensor shows while it is
/// performed, and the effort it is expected to represent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityTemplate {
    pub name: String,
    /// Heart rate, step rate, wrist motion.
    pub classes: [ArchetypeKind; 3],
    pub expected_pal: f64,
}

impl ActivityTemplate {
    pub fn new(name: &str, classes: [ArchetypeKind; 3], expected_pal: f64) -> Result<Self> {
        if !(1.0..=3.0).contains(&expected_pal) {
            return Err(Error::Parameter(format!("expected PAL {expected_pal} outside [1, 3]")));
        }
        Ok(ActivityTemplate {
            name: name.to_string(),
            classes,
            expected_pal,
        })
    }
}

/// relax, walk, stairs, bike and drive. Driving shows high wrist motion and
/// a raised heart rate without steps, yet carries a low expected PAL.
pub fn default_templates() -> Vec<ActivityTemplate> {
    use ArchetypeKind::*;
    vec![
        ActivityTemplate::new("relax", [Low, Low, Low], 1.0).unwrap(),
        ActivityTemplate::new("walk", [Medium, High, Medium], 2.0).unwrap(),
        ActivityTemplate::new("stairs", [High, High, High], 3.0).unwrap(),
        ActivityTemplate::new("bike", [VariableHigh, Low, Medium], 2.5).unwrap(),
        ActivityTemplate::new("drive", [Medium, Low, High], 1.0).unwrap(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectConfig {
    pub days: usize,
    pub windows_per_day: usize,
    pub window_len: usize,
    pub noise_sd: f64,
    /// Probability that an activity block repeats the day's dominant
    /// activity rather than a uniformly drawn one.
    pub dominant_share: f64,
    /// Longest run of consecutive windows spent on one activity.
    pub max_block: usize,
}

impl Default for SubjectConfig {
    fn default() -> Self {
        SubjectConfig {
            days: 21,
            windows_per_day: 8,
            window_len: 72,
            noise_sd: 0.03,
            dominant_share: 0.6,
            max_block: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectWindow {
    pub day: usize,
    /// Position of the window within its day.
    pub slot: usize,
    pub activity: usize,
    pub classes: [ArchetypeKind; 3],
    pub expected_pal: f64,
    /// Heart rate, step rate, wrist motion; normalized.
    pub signals: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub windows: Vec<SubjectWindow>,
    pub daily: Vec<PalClass>,
}

impl SyntheticSubject {
    pub fn day_windows(&self, day: usize) -> impl Iterator<Item = &SubjectWindow> {
        self.windows.iter().filter(move |w| w.day == day)
    }
}

/// Mean expected PAL of a day rounded to its class.
pub fn expected_daily_class(pals: &[f64]) -> Option<PalClass> {
    if pals.is_empty() {
        return None;
    }
    Some(PalClass::from_pal(pals.iter().sum::<f64>() / pals.len() as f64))
}

/// Generates a subject whose days are seeded sequences of activity blocks.
/// Each day favours one dominant activity so that daily classes vary.
pub fn generate_subject(
    config: &SubjectConfig,
    templates: &[ActivityTemplate],
    seed: u64,
) -> Result<SyntheticSubject> {
    if config.days == 0 || config.windows_per_day == 0 || config.window_len == 0 {
        return Err(Error::Parameter("days, windows per day and window length must be positive".into()));
    }
    if templates.is_empty() {
        return Err(Error::Parameter("at least one activity template is required".into()));
    }
    if !(0.0..=1.0).contains(&config.dominant_share) || config.max_block == 0 {
        return Err(Error::Parameter("dominant share must be in [0,1] and max block positive".into()));
    }
    let noise = noise_dist(config.noise_sd)?;
    let mut rng = seeded_rng(seed);
    let mut windows = Vec::with_capacity(config.days * config.windows_per_day);
    let mut daily = Vec::with_capacity(config.days);

    for day in 0..config.days {
        let dominant = rng.random_range(0..templates.len());
        let mut slot = 0;
        let mut pals = Vec::with_capacity(config.windows_per_day);
        while slot < config.windows_per_day {
            let activity = if rng.random_bool(config.dominant_share) {
                dominant
            } else {
                rng.random_range(0..templates.len())
            };
            let block = rng.random_range(1..=config.max_block);
            let t = &templates[activity];
            for _ in 0..block.min(config.windows_per_day - slot) {
                let signals = t.classes.map(|k| draw_signal(k, config.window_len, noise.as_ref(), &mut rng));
                pals.push(t.expected_pal);
                windows.push(SubjectWindow {
                    day,
                    slot,
                    activity,
                    classes: t.classes,
                    expected_pal: t.expected_pal,
                    signals,
                });
                slot += 1;
            }
        }
        daily.push(expected_daily_class(&pals).unwrap());
    }
    Ok(SyntheticSubject { windows, daily })
}

/// Placement of a synthetic subject on the clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeline {
    pub first_epoch_day: i64,
    /// Seconds after midnight at which each day's first window starts.
    pub day_start: i64,
    pub period: i64,
    pub ranges: [SensorRange; 3],
}

impl Default for Timeline {
    fn default() -> Self {
        Timeline {
            // 2016-06-01
            first_epoch_day: 16_953,
            day_start: 8 * 3600,
            period: 5,
            ranges: SensorKind::ALL.map(SensorKind::default_range),
        }
    }
}

/// One row of the labels file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub day: i64,
    pub window_index: i64,
    pub expected_pal: f64,
    pub classes: [ArchetypeKind; 3],
}

pub const LABELS_HEADER: &str = "day,window_index,expected_pal,hr_class,step_class,motion_class";

/// Renders the subject as raw smartwatch records plus window labels.
///
/// Samples are laid out one record per period. Each day opens with a record
/// one period before its first window carrying only the step counter, so
/// the first step rate of the day is defined.
pub fn subject_to_records(subject: &SyntheticSubject, timeline: &Timeline) -> Result<(Vec<RawRecord>, Vec<LabelRow>)> {
    let Some(first) = subject.windows.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let len = first.signals[0].len() as i64;
    let window_seconds = len * timeline.period;
    if timeline.day_start % window_seconds != 0 || SECONDS_PER_DAY % window_seconds != 0 {
        return Err(Error::Parameter(format!(
            "day start {} and day length must be multiples of the window length {window_seconds} s",
            timeline.day_start
        )));
    }
    let [hr_range, step_range, motion_range] = timeline.ranges;
    let mut records = Vec::new();
    let mut labels = Vec::with_capacity(subject.windows.len());
    let mut steps = 0.0;
    let mut current_day = None;

    for w in &subject.windows {
        let epoch_day = timeline.first_epoch_day + w.day as i64;
        let day_t0 = epoch_day * SECONDS_PER_DAY + timeline.day_start;
        if current_day != Some(w.day) {
            current_day = Some(w.day);
            records.push(RawRecord {
                timestamp: day_t0 - timeline.period,
                heart_rate: None,
                step_count: Some(steps),
                wrist_motion: None,
            });
        }
        let w_t0 = day_t0 + w.slot as i64 * window_seconds;
        for k in 0..len as usize {
            steps += step_range.denormalize(w.signals[1][k]);
            records.push(RawRecord {
                timestamp: w_t0 + k as i64 * timeline.period,
                heart_rate: Some(hr_range.denormalize(w.signals[0][k])),
                step_count: Some(steps),
                wrist_motion: Some(motion_range.denormalize(w.signals[2][k])),
            });
        }
        labels.push(LabelRow {
            day: epoch_day,
            window_index: (timeline.day_start / window_seconds) + w.slot as i64,
            expected_pal: w.expected_pal,
            classes: w.classes,
        });
    }
    Ok((records, labels))
}

pub fn write_labels<W: Write>(labels: &[LabelRow], mut out: W) -> Result<()> {
    writeln!(out, "{LABELS_HEADER}")?;
    for l in labels {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            l.day, l.window_index, l.expected_pal, l.classes[0], l.classes[1], l.classes[2]
        )?;
    }
    Ok(())
}

pub fn parse_labels<R: Read>(reader: R) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(",");
    if header != LABELS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {LABELS_HEADER:?}, found {header:?}"),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str, v: &str| Error::Parse {
            line,
            message: format!("{what}: cannot parse {v:?}"),
        };
        let int = |i: usize, what: &str| row[i].trim().parse::<i64>().map_err(|_| bad(what, &row[i]));
        let class = |i: usize, what: &str| ArchetypeKind::parse(row[i].trim()).ok_or_else(|| bad(what, &row[i]));
        let expected_pal: f64 = row[2].trim().parse().map_err(|_| bad("expected_pal", &row[2]))?;
        out.push(LabelRow {
            day: int(0, "day")?,
            window_index: int(1, "window_index")?,
            expected_pal,
            classes: [class(3, "hr_class")?, class(4, "step_class")?, class(5, "motion_class")?],
        });
    }
    Ok(out)
}
