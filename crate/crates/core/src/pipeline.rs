//! Stigmergic perceptrons and the multilayer PAL architecture: three sensor
//! perceptrons, least-squares fusion into a per-window PAL, and a daily
//! layer.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::archetype::{ArchetypeKind, LabelRow, PalClass};
use crate::error::{Error, Result};
use crate::fusion::{fit_fusion_weights, FusionSample, FusionWeights};
use crate::rng::derive_seed;
use crate::signal::{
    day_of, normalize, resample_from, window_with_offset, RawRecord, SensorKind, SensorRange, Window,
};
use crate::srf::{build_trail, srf_respond, SrfParams, Trail, TrailConfig};
use crate::training::{train_perceptron, ProtocolConfig, SrfReport};

pub const PAL_MIN: f64 = 1.0;
pub const PAL_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptronInput {
    Sensor(SensorKind),
    DailyPal,
}

impl std::fmt::Display for PerceptronInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PerceptronInput::Sensor(s) => write!(f, "{s}"),
            PerceptronInput::DailyPal => f.write_str("daily_pal"),
        }
    }
}

/// A trained receptive field with its archetype trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Srf {
    pub level: usize,
    pub class: ArchetypeKind,
    pub params: SrfParams,
    pub archetype: Trail,
}

impl Srf {
    pub fn new(level: usize, class: ArchetypeKind, params: SrfParams, reference: &[f64], config: &TrailConfig) -> Result<Self> {
        Ok(Srf {
            level,
            class,
            params,
            archetype: build_trail(reference, &params, config)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronResponse {
    pub level: f64,
    pub activations: Vec<f64>,
    pub similarities: Vec<f64>,
}

impl PerceptronResponse {
    /// 1-based level of the strongest activation; the lowest level wins ties.
    pub fn argmax_level(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.activations.iter().enumerate() {
            if a > self.activations[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// An ordered bank of receptive fields over one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perceptron {
    pub input: PerceptronInput,
    pub trail: TrailConfig,
    pub srfs: Vec<Srf>,
}

impl Perceptron {
    pub fn new(input: PerceptronInput, trail: TrailConfig, srfs: Vec<Srf>) -> Result<Self> {
        let p = Perceptron { input, trail, srfs };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.trail.validate()?;
        if self.srfs.len() < 2 {
            return Err(Error::Structure(format!("perceptron {} needs at least 2 fields", self.input)));
        }
        for (i, srf) in self.srfs.iter().enumerate() {
            if srf.level != i + 1 {
                return Err(Error::Structure(format!(
                    "perceptron {}: field {} has level {}, levels must run 1..={}",
                    self.input,
                    i,
                    srf.level,
                    self.srfs.len()
                )));
            }
            srf.params.validate()?;
            if srf.archetype.grid_cells() != self.trail.grid_cells {
                return Err(Error::Structure(format!(
                    "perceptron {}: archetype trail of level {} has {} cells, expected {}",
                    self.input,
                    srf.level,
                    srf.archetype.grid_cells(),
                    self.trail.grid_cells
                )));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.srfs.len()
    }

    pub fn respond(&self, samples: &[f64]) -> Result<PerceptronResponse> {
        let mut activations = Vec::with_capacity(self.srfs.len());
        let mut similarities = Vec::with_capacity(self.srfs.len());
        for srf in &self.srfs {
            let r = srf_respond(samples, &srf.archetype, &srf.params, &self.trail)?;
            activations.push(r.activation);
            similarities.push(r.similarity);
        }
        Ok(PerceptronResponse {
            level: weighted_level(&activations, &similarities),
            activations,
            similarities,
        })
    }

    pub fn evaluate(&self, samples: &[f64]) -> Result<f64> {
        self.respond(samples).map(|r| r.level)
    }
}

/// Level index averaged with the activations as weights. When no field is
/// active the similarities are used instead, and when those are all zero
/// too the result is the middle level.
pub fn weighted_level(activations: &[f64], similarities: &[f64]) -> f64 {
    let mean = |w: &[f64]| {
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| w.iter().enumerate().map(|(i, a)| (i + 1) as f64 * a).sum::<f64>() / total)
    };
    mean(activations)
        .or_else(|| mean(similarities))
        .unwrap_or((1 + activations.len()) as f64 / 2.0)
}

/// `None` for an invalid window.
pub fn perceptron_evaluate(window: &Window, perceptron: &Perceptron) -> Result<Option<f64>> {
    if !window.valid {
        return Ok(None);
    }
    perceptron.evaluate(&window.samples).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Seconds per resampled sample.
    pub period: i64,
    /// Samples per window.
    pub width: usize,
    /// Samples between window starts.
    pub stride: usize,
    /// Seconds added to UTC before splitting days.
    pub utc_offset: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            period: 5,
            width: 72,
            stride: 72,
            utc_offset: 0,
        }
    }
}

impl WindowConfig {
    /// Window of `minutes` at `period` seconds per sample, non-overlapping.
    pub fn from_minutes(minutes: f64, period: i64) -> Result<Self> {
        if period <= 0 || minutes.is_nan() || minutes <= 0.0 {
            return Err(Error::Parameter(format!("window of {minutes} min at {period} s is empty")));
        }
        let seconds = minutes * 60.0;
        let width = (seconds / period as f64).round() as usize;
        if width == 0 || (width as f64 * period as f64 - seconds).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "{minutes} min is not a whole number of {period} s samples"
            )));
        }
        Ok(WindowConfig {
            period,
            width,
            stride: width,
            utc_offset: 0,
        })
    }

    pub fn window_seconds(&self) -> i64 {
        self.width as i64 * self.period
    }

    pub fn stride_seconds(&self) -> i64 {
        self.stride as i64 * self.period
    }

    pub fn validate(&self) -> Result<()> {
        if self.period <= 0 || self.width == 0 || self.stride == 0 {
            return Err(Error::Parameter("period, width and stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub kind: SensorKind,
    pub range: SensorRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLayer {
    pub perceptron: Perceptron,
    /// Length of the daily reference series the layer was trained on.
    pub reference_len: usize,
}

/// Everything needed to turn raw logs into PAL assessments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub schema_version: u64,
    /// Heart rate, step rate, wrist motion.
    pub sensors: Vec<SensorSpec>,
    /// One per sensor, same order as `sensors`.
    pub perceptrons: Vec<Perceptron>,
    pub fusion_weights: FusionWeights,
    pub daily_layer: DailyLayer,
    pub window_config: WindowConfig,
}

impl FusionModel {
    pub fn validate(&self) -> Result<()> {
        let kinds: Vec<SensorKind> = self.sensors.iter().map(|s| s.kind).collect();
        if kinds != SensorKind::ALL {
            return Err(Error::Structure(format!("sensors must be {:?}, found {kinds:?}", SensorKind::ALL)));
        }
        for s in &self.sensors {
            SensorRange::new(s.range.lo, s.range.hi)?;
        }
        if self.perceptrons.len() != 3 {
            return Err(Error::Structure(format!("expected 3 perceptrons, found {}", self.perceptrons.len())));
        }
        for (p, kind) in self.perceptrons.iter().zip(SensorKind::ALL) {
            if p.input != PerceptronInput::Sensor(kind) {
                return Err(Error::Structure(format!("perceptron for {kind} has input {}", p.input)));
            }
            p.validate()?;
        }
        if self.daily_layer.perceptron.input != PerceptronInput::DailyPal {
            return Err(Error::Structure("daily layer must take the daily PAL series".into()));
        }
        self.daily_layer.perceptron.validate()?;
        if self.fusion_weights.as_array().iter().any(|w| !w.is_finite()) {
            return Err(Error::Structure("fusion weights must be finite".into()));
        }
        self.window_config.validate()
    }

    pub fn perceptron(&self, kind: SensorKind) -> &Perceptron {
        &self.perceptrons[kind as usize]
    }

    pub fn ranges(&self) -> [SensorRange; 3] {
        [self.sensors[0].range, self.sensors[1].range, self.sensors[2].range]
    }
}

/// Perceptron outputs of one aligned window triple.
pub fn perceptron_outputs(signals: [&[f64]; 3], model: &FusionModel) -> Result<FusionSample> {
    Ok(FusionSample {
        heart_rate: model.perceptrons[0].evaluate(signals[0])?,
        pedometer: model.perceptrons[1].evaluate(signals[1])?,
        motion: model.perceptrons[2].evaluate(signals[2])?,
    })
}

pub fn clamp_pal(x: f64) -> f64 {
    x.clamp(PAL_MIN, PAL_MAX)
}

/// Fused PAL of heart-rate, step-rate and wrist-motion samples.
pub fn assess_samples(signals: [&[f64]; 3], model: &FusionModel) -> Result<f64> {
    let s = perceptron_outputs(signals, model)?;
    Ok(clamp_pal(model.fusion_weights.apply(s.pedometer, s.heart_rate, s.motion)))
}

/// `None` unless all three windows are valid.
pub fn assess_window(hr: &Window, step: &Window, motion: &Window, model: &FusionModel) -> Result<Option<f64>> {
    if hr.start != step.start || hr.start != motion.start {
        return Err(Error::Structure(format!(
            "windows are not aligned: {}, {}, {}",
            hr.start, step.start, motion.start
        )));
    }
    if !(hr.valid && step.valid && motion.valid) {
        return Ok(None);
    }
    assess_samples([&hr.samples, &step.samples, &motion.samples], model).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayAssessment {
    pub average: f64,
    pub macro_pal: f64,
    pub class: PalClass,
}

/// Daily PAL from the PALs of the day's assessed windows; `None` when there
/// are none.
pub fn assess_day(pals: &[f64], model: &FusionModel) -> Result<Option<DayAssessment>> {
    if pals.is_empty() {
        return Ok(None);
    }
    let average = pals.iter().sum::<f64>() / pals.len() as f64;
    let series: Vec<f64> = pals.iter().map(|p| ((p - PAL_MIN) / (PAL_MAX - PAL_MIN)).clamp(0.0, 1.0)).collect();
    let macro_pal = clamp_pal(model.daily_layer.perceptron.evaluate(&series)?);
    Ok(Some(DayAssessment {
        average,
        macro_pal,
        class: PalClass::from_pal(average),
    }))
}

pub fn evaluate_msd(predicted: &[f64], expected: &[f64]) -> Result<f64> {
    if predicted.len() != expected.len() {
        return Err(Error::Structure(format!(
            "{} predictions vs {} expectations",
            predicted.len(),
            expected.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Parameter("deviation of empty sequences".into()));
    }
    Ok(predicted.iter().zip(expected).map(|(p, e)| (p - e).powi(2)).sum::<f64>() / predicted.len() as f64)
}

/// Resamples raw records on a grid aligned to whole windows of the local
/// day, normalizes each sensor and cuts windows.
pub fn sensor_windows(records: &[RawRecord], ranges: &[SensorRange; 3], config: &WindowConfig) -> Result<[Vec<Window>; 3]> {
    config.validate()?;
    let Some(first) = records.first() else {
        return Ok([Vec::new(), Vec::new(), Vec::new()]);
    };
    let ws = config.stride_seconds();
    let origin = (first.timestamp + config.utc_offset).div_euclid(ws) * ws - config.utc_offset;
    let series = resample_from(records, config.period, origin)?;
    let mut out: [Vec<Window>; 3] = Default::default();
    for (i, s) in series.iter().enumerate() {
        let normalized = normalize(s, ranges[i]);
        out[i] = window_with_offset(&normalized, config.width, config.stride, config.utc_offset)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPal {
    pub day: i64,
    pub window_index: i64,
    pub pal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayPal {
    pub day: i64,
    pub average: f64,
    pub macro_pal: f64,
    pub class: PalClass,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assessment {
    pub windows: Vec<WindowPal>,
    pub days: Vec<DayPal>,
}

pub const WINDOW_PAL_HEADER: &str = "day,window_index,pal";
pub const DAY_PAL_HEADER: &str = "day,daily_pal_avg,daily_pal_macro,daily_class";

impl Assessment {
    pub fn write_windows<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{WINDOW_PAL_HEADER}")?;
        for w in &self.windows {
            writeln!(out, "{},{},{}", w.day, w.window_index, w.pal)?;
        }
        Ok(())
    }

    pub fn write_days<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{DAY_PAL_HEADER}")?;
        for d in &self.days {
            writeln!(out, "{},{},{},{}", d.day, d.average, d.macro_pal, d.class)?;
        }
        Ok(())
    }
}

/// Full assessment of a raw log: per-window PALs for every window where all
/// three sensors are valid, and a daily PAL for every day with at least one.
pub fn assess_records(records: &[RawRecord], model: &FusionModel) -> Result<Assessment> {
    let cfg = model.window_config;
    let [hr, step, motion] = sensor_windows(records, &model.ranges(), &cfg)?;
    let mut by_day: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut out = Assessment::default();
    for ((h, s), m) in hr.iter().zip(&step).zip(&motion) {
        if let Some(pal) = assess_window(h, s, m, model)? {
            out.windows.push(WindowPal {
                day: h.day,
                window_index: h.slot(cfg.window_seconds(), cfg.utc_offset),
                pal,
            });
            by_day.entry(h.day).or_default().push(pal);
        }
    }
    for (day, pals) in by_day {
        if let Some(d) = assess_day(&pals, model)? {
            out.days.push(DayPal {
                day,
                average: d.average,
                macro_pal: d.macro_pal,
                class: d.class,
            });
        }
    }
    Ok(out)
}

fn csv_rows<R: Read>(reader: R, header: &str) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {header:?}, found {found:?}"),
        });
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            Ok((r.position().map(|p| p.line()).unwrap_or(0), r))
        })
        .collect()
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, line: u64, what: &str) -> Result<T> {
    row[i].trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: cannot parse {:?}", &row[i]),
    })
}

pub fn parse_window_pals<R: Read>(reader: R) -> Result<Vec<WindowPal>> {
    csv_rows(reader, WINDOW_PAL_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(WindowPal {
                day: field(&r, 0, line, "day")?,
                window_index: field(&r, 1, line, "window_index")?,
                pal: field(&r, 2, line, "pal")?,
            })
        })
        .collect()
}

pub fn parse_day_pals<R: Read>(reader: R) -> Result<Vec<DayPal>> {
    csv_rows(reader, DAY_PAL_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let class = PalClass::parse(r[3].trim()).ok_or_else(|| Error::Parse {
                line,
                message: format!("daily_class: unknown class {:?}", &r[3]),
            })?;
            Ok(DayPal {
                day: field(&r, 0, line, "day")?,
                average: field(&r, 1, line, "daily_pal_avg")?,
                macro_pal: field(&r, 2, line, "daily_pal_macro")?,
                class,
            })
        })
        .collect()
}

/// Aligned, valid sensor windows of a labeled window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub day: i64,
    pub window_index: i64,
    /// Heart rate, step rate, wrist motion.
    pub signals: [Vec<f64>; 3],
    pub expected_pal: f64,
}

/// Joins the windows of a raw log with their labels by (day, window index).
/// Labels whose windows are missing or invalid are skipped.
pub fn labeled_examples(
    records: &[RawRecord],
    labels: &[LabelRow],
    ranges: &[SensorRange; 3],
    config: &WindowConfig,
) -> Result<Vec<TrainingExample>> {
    let [hr, step, motion] = sensor_windows(records, ranges, config)?;
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, w) in hr.iter().enumerate() {
        index.insert((w.day, w.slot(config.window_seconds(), config.utc_offset)), i);
    }
    let mut out = Vec::new();
    for l in labels {
        let Some(&i) = index.get(&(l.day, l.window_index)) else {
            continue;
        };
        if hr[i].valid && step[i].valid && motion[i].valid {
            out.push(TrainingExample {
                day: l.day,
                window_index: l.window_index,
                signals: [hr[i].samples.clone(), step[i].samples.clone(), motion[i].samples.clone()],
                expected_pal: l.expected_pal,
            });
        }
    }
    Ok(out)
}

/// Settings for training a complete model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTrainingConfig {
    pub protocol: ProtocolConfig,
    pub daily_protocol: ProtocolConfig,
    /// Length of the synthetic daily series used to train the daily layer.
    pub daily_reference_len: usize,
    pub window: WindowConfig,
    pub ranges: [SensorRange; 3],
}

impl Default for ModelTrainingConfig {
    fn default() -> Self {
        ModelTrainingConfig {
            protocol: ProtocolConfig::default(),
            daily_protocol: ProtocolConfig {
                noise_sd: 0.05,
                ..ProtocolConfig::default()
            },
            daily_reference_len: 8,
            window: WindowConfig::default(),
            ranges: SensorKind::ALL.map(SensorKind::default_range),
        }
    }
}

/// Trains the three sensor perceptrons and the daily layer on synthetic
/// archetype pools, then fits the fusion weights on `examples`.
pub fn train_model(
    examples: &[TrainingExample],
    config: &ModelTrainingConfig,
    seed: u64,
) -> Result<(FusionModel, Vec<SrfReport>)> {
    config.window.validate()?;
    let mut perceptrons = Vec::with_capacity(3);
    let mut reports = Vec::new();
    for (i, kind) in SensorKind::ALL.into_iter().enumerate() {
        let (p, r) = train_perceptron(
            PerceptronInput::Sensor(kind),
            &ArchetypeKind::MICRO,
            config.window.width,
            &config.protocol,
            derive_seed(seed, 10 + i as u64),
        )?;
        perceptrons.push(p);
        reports.extend(r);
    }
    let (daily, r) = train_perceptron(
        PerceptronInput::DailyPal,
        &ArchetypeKind::DAILY,
        config.daily_reference_len,
        &config.daily_protocol,
        derive_seed(seed, 20),
    )?;
    reports.extend(r);

    let mut model = FusionModel {
        schema_version: crate::model::SCHEMA_VERSION,
        sensors: SensorKind::ALL
            .into_iter()
            .zip(config.ranges)
            .map(|(kind, range)| SensorSpec { kind, range })
            .collect(),
        perceptrons,
        fusion_weights: FusionWeights::from_array([0.0; 4]),
        daily_layer: DailyLayer {
            perceptron: daily,
            reference_len: config.daily_reference_len,
        },
        window_config: config.window,
    };
    let samples = examples
        .iter()
        .map(|e| perceptron_outputs([&e.signals[0], &e.signals[1], &e.signals[2]], &model))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = examples.iter().map(|e| e.expected_pal).collect();
    model.fusion_weights = fit_fusion_weights(&samples, &targets)?;
    model.validate()?;
    Ok((model, reports))
}

/// Day of a timestamp under the model's day boundaries.
pub fn model_day(model: &FusionModel, timestamp: i64) -> i64 {
    day_of(timestamp, model.window_config.utc_offset)
}
