//! Smartwatch log ingestion: CSV parsing, uniform resampling, min-max
//! normalization, fixed-width windowing and day partitioning.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["timestamp", "heart_rate_bpm", "step_count", "wrist_accel_g"];

/// Longest stretch without data that buckets may be filled across.
pub const MAX_GAP_SECONDS: f64 = 60.0;

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    HeartRate,
    StepRate,
    WristMotion,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [
        SensorKind::HeartRate,
        SensorKind::StepRate,
        SensorKind::WristMotion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::HeartRate => "heart_rate",
            SensorKind::StepRate => "step_rate",
            SensorKind::WristMotion => "wrist_motion",
        }
    }

    /// Physiological range used for normalization when none is configured.
    /// Step rate is expressed in steps per 5 s period.
    pub fn default_range(self) -> SensorRange {
        match self {
            SensorKind::HeartRate => SensorRange { lo: 40.0, hi: 180.0 },
            SensorKind::StepRate => SensorRange { lo: 0.0, hi: 12.0 },
            SensorKind::WristMotion => SensorRange { lo: 0.0, hi: 4.0 },
        }
    }
}

impl std::fmt::Display for SensorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of a raw smartwatch log. `step_count` is the cumulative
/// pedometer counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub timestamp: i64,
    pub heart_rate: Option<f64>,
    pub step_count: Option<f64>,
    pub wrist_motion: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRange {
    pub lo: f64,
    pub hi: f64,
}

impl SensorRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Parameter(format!("sensor range [{lo}, {hi}] requires lo < hi")));
        }
        Ok(SensorRange { lo, hi })
    }

    pub fn normalize(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, d: f64) -> f64 {
        self.lo + d * (self.hi - self.lo)
    }
}

/// Samples of one sensor on a regular time grid. Before normalization the
/// values are in physical units; afterwards every valid value is in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    pub sensor: SensorKind,
    pub start: i64,
    pub period: i64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl UniformSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_of(&self, index: usize) -> i64 {
        self.start + index as i64 * self.period
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Ordinal of the window within its series.
    pub index: usize,
    /// Epoch seconds of the first sample.
    pub start: i64,
    pub day: i64,
    pub samples: Vec<f64>,
    pub valid: bool,
}

impl Window {
    /// Position of the window within its day, counted in window lengths
    /// from local midnight.
    pub fn slot(&self, window_seconds: i64, utc_offset: i64) -> i64 {
        (self.start + utc_offset).rem_euclid(SECONDS_PER_DAY) / window_seconds
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DayWindows {
    pub windows: Vec<Window>,
    /// False when no window of the day is valid.
    pub has_valid: bool,
}

pub fn day_of(timestamp: i64, utc_offset: i64) -> i64 {
    (timestamp + utc_offset).div_euclid(SECONDS_PER_DAY)
}

fn parse_optional(field: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    let value: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{column}: cannot parse {field:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{column}: non-finite value"),
        });
    }
    Ok(Some(value))
}

/// Parses a raw smartwatch log. Timestamps must be strictly increasing.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), names.join(",")),
        });
    }

    let mut out: Vec<RawRecord> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let ts = row[0].trim();
        let timestamp: i64 = ts.parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp: cannot parse {ts:?} as an integer"),
        })?;
        let heart_rate = parse_optional(&row[1], line, CSV_HEADER[1])?;
        if let Some(hr) = heart_rate {
            if hr <= 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("heart rate must be positive, got {hr}"),
                });
            }
        }
        let record = RawRecord {
            timestamp,
            heart_rate,
            step_count: parse_optional(&row[2], line, CSV_HEADER[2])?,
            wrist_motion: parse_optional(&row[3], line, CSV_HEADER[3])?,
        };
        if let Some(prev) = out.last() {
            if record.timestamp <= prev.timestamp {
                return Err(Error::Structure(format!(
                    "line {line}: timestamp {} does not follow {}",
                    record.timestamp, prev.timestamp
                )));
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn parse_csv_str(text: &str) -> Result<Vec<RawRecord>> {
    parse_csv(text.as_bytes())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[RawRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.timestamp,
            fmt_opt(r.heart_rate),
            fmt_opt(r.step_count),
            fmt_opt(r.wrist_motion)
        )?;
    }
    Ok(())
}

/// Resamples on a grid anchored at the first timestamp floored to `period`.
pub fn resample(records: &[RawRecord], period: i64) -> Result<[UniformSeries; 3]> {
    let origin = records
        .first()
        .map(|r| r.timestamp.div_euclid(period.max(1)) * period)
        .unwrap_or(0);
    resample_from(records, period, origin)
}

/// Resamples on a grid whose first bucket starts at `origin`.
///
/// Each bucket holds the mean of the raw values that fall in it. The
/// cumulative step counter is first differenced into a rate (steps per
/// `period`), attributed to the later of the two records; differences
/// spanning more than [`MAX_GAP_SECONDS`] are dropped. A bucket without raw
/// values takes the nearest raw value, unless it lies inside a gap longer
/// than [`MAX_GAP_SECONDS`] or farther than that from the edge of the data,
/// in which case it is invalid.
pub fn resample_from(records: &[RawRecord], period: i64, origin: i64) -> Result<[UniformSeries; 3]> {
    if period <= 0 {
        return Err(Error::Parameter(format!("period must be positive, got {period}")));
    }
    let empty = |sensor| UniformSeries {
        sensor,
        start: origin,
        period,
        values: Vec::new(),
        valid: Vec::new(),
    };
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Ok(SensorKind::ALL.map(empty));
    };
    if first.timestamp < origin {
        return Err(Error::Parameter(format!(
            "grid origin {origin} is after the first record {}",
            first.timestamp
        )));
    }
    let buckets = ((last.timestamp - origin).div_euclid(period) + 1) as usize;

    let heart: Vec<(i64, f64)> = records
        .iter()
        .filter_map(|r| r.heart_rate.map(|v| (r.timestamp, v)))
        .collect();
    let motion: Vec<(i64, f64)> = records
        .iter()
        .filter_map(|r| r.wrist_motion.map(|v| (r.timestamp, v)))
        .collect();
    let mut steps = Vec::new();
    let mut prev: Option<(i64, f64)> = None;
    for r in records {
        if let Some(count) = r.step_count {
            if let Some((t0, c0)) = prev {
                let dt = (r.timestamp - t0) as f64;
                if dt <= MAX_GAP_SECONDS {
                    // a decreasing counter is a reset, not negative steps
                    let rate = (count - c0).max(0.0) / dt * period as f64;
                    steps.push((r.timestamp, rate));
                }
            }
            prev = Some((r.timestamp, count));
        }
    }

    let build = |sensor, samples: &[(i64, f64)]| {
        let mut sum = vec![0.0; buckets];
        let mut count = vec![0usize; buckets];
        for &(t, v) in samples {
            let b = (t - origin).div_euclid(period) as usize;
            sum[b] += v;
            count[b] += 1;
        }
        let mut values = vec![0.0; buckets];
        let mut valid = vec![false; buckets];
        for b in 0..buckets {
            if count[b] > 0 {
                values[b] = sum[b] / count[b] as f64;
                valid[b] = true;
            } else if let Some(v) = nearest_within(samples, origin, period, b) {
                values[b] = v;
                valid[b] = true;
            }
        }
        UniformSeries {
            sensor,
            start: origin,
            period,
            values,
            valid,
        }
    };

    Ok([
        build(SensorKind::HeartRate, &heart),
        build(SensorKind::StepRate, &steps),
        build(SensorKind::WristMotion, &motion),
    ])
}

fn nearest_within(samples: &[(i64, f64)], origin: i64, period: i64, bucket: usize) -> Option<f64> {
    let center = origin as f64 + (bucket as f64 + 0.5) * period as f64;
    let pos = samples.partition_point(|&(t, _)| (t as f64) < center);
    let before = pos.checked_sub(1).and_then(|i| samples.get(i));
    let after = samples.get(pos);
    match (before, after) {
        (Some(&(tb, vb)), Some(&(ta, va))) => {
            if (ta - tb) as f64 > MAX_GAP_SECONDS {
                None
            } else if center - tb as f64 <= ta as f64 - center {
                Some(vb)
            } else {
                Some(va)
            }
        }
        (Some(&(t, v)), None) | (None, Some(&(t, v))) => {
            ((t as f64 - center).abs() <= MAX_GAP_SECONDS).then_some(v)
        }
        (None, None) => None,
    }
}

/// Min-max normalization against a fixed range; out-of-range values clamp.
pub fn normalize(series: &UniformSeries, range: SensorRange) -> UniformSeries {
    UniformSeries {
        values: series.values.iter().map(|&x| range.normalize(x)).collect(),
        ..series.clone()
    }
}

/// Cuts windows of `width` samples every `stride` samples from the start of
/// the series, assigning days in UTC.
pub fn window(series: &UniformSeries, width: usize, stride: usize) -> Result<Vec<Window>> {
    window_with_offset(series, width, stride, 0)
}

/// As [`window`], with day boundaries shifted by `utc_offset` seconds.
pub fn window_with_offset(
    series: &UniformSeries,
    width: usize,
    stride: usize,
    utc_offset: i64,
) -> Result<Vec<Window>> {
    if width == 0 || stride == 0 {
        return Err(Error::Parameter("window width and stride must be positive".into()));
    }
    if width > series.len() {
        return Ok(Vec::new());
    }
    let windows = (0..=series.len() - width)
        .step_by(stride)
        .enumerate()
        .map(|(index, from)| {
            let start = series.time_of(from);
            Window {
                index,
                start,
                day: day_of(start, utc_offset),
                samples: series.values[from..from + width].to_vec(),
                valid: series.valid[from..from + width].iter().all(|&v| v),
            }
        })
        .collect();
    Ok(windows)
}

/// Groups windows by day, preserving order within each day.
pub fn partition_days(windows: Vec<Window>) -> BTreeMap<i64, DayWindows> {
    let mut days: BTreeMap<i64, DayWindows> = BTreeMap::new();
    for w in windows {
        let entry = days.entry(w.day).or_default();
        entry.has_valid |= w.valid;
        entry.windows.push(w);
    }
    days
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp,heart_rate_bpm,step_count,wrist_accel_g\n";

    #[test]
    fn parses_well_formed_rows() {
        let text = format!("{HEADER}0,70,100,0.5\n5,72,106,0.6\n");
        let recs = parse_csv_str(&text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].heart_rate, Some(72.0));
        assert_eq!(recs[1].step_count, Some(106.0));
    }

    #[test]
    fn empty_cell_is_absent() {
        let recs = parse_csv_str(&format!("{HEADER}0,,100,0.5\n")).unwrap();
        assert_eq!(recs[0].heart_rate, None);
        assert_eq!(recs[0].wrist_motion, Some(0.5));
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_csv_str(&format!("{HEADER}0,70,100,0.5\nabc,70,100,0.5\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_is_parse_error() {
        let err = parse_csv_str(&format!("{HEADER}0,70,100\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn non_monotonic_timestamps_rejected() {
        let err = parse_csv_str(&format!("{HEADER}5,70,,\n5,71,,\n")).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            parse_csv_str("t,hr,steps,acc\n0,1,2,3\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_parse_preserves_records() {
        let recs = vec![
            RawRecord { timestamp: 0, heart_rate: Some(71.25), step_count: None, wrist_motion: Some(0.1) },
            RawRecord { timestamp: 5, heart_rate: None, step_count: Some(3.5), wrist_motion: None },
        ];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), recs);
    }

    fn hr(t: i64, v: f64) -> RawRecord {
        RawRecord { timestamp: t, heart_rate: Some(v), step_count: None, wrist_motion: None }
    }

    #[test]
    fn bucket_mean() {
        let recs = [hr(0, 70.0), hr(2, 72.0), hr(4, 74.0)];
        let [heart, _, _] = resample(&recs, 5).unwrap();
        assert_eq!(heart.values, vec![72.0]);
        assert_eq!(heart.valid, vec![true]);
    }

    #[test]
    fn cumulative_steps_become_rate() {
        let recs = [
            RawRecord { timestamp: 0, heart_rate: None, step_count: Some(100.0), wrist_motion: None },
            RawRecord { timestamp: 5, heart_rate: None, step_count: Some(106.0), wrist_motion: None },
        ];
        let [_, steps, _] = resample(&recs, 5).unwrap();
        assert_eq!(steps.values[1], 6.0);
        assert!(steps.valid[1]);
    }

    #[test]
    fn gap_marks_buckets_invalid() {
        let recs = [hr(0, 70.0), hr(5, 70.0), hr(95, 70.0), hr(100, 70.0)];
        let [heart, _, _] = resample(&recs, 5).unwrap();
        assert_eq!(heart.len(), 21);
        let invalid: Vec<usize> = (0..heart.len()).filter(|&i| !heart.valid[i]).collect();
        assert_eq!(invalid, (2..19).collect::<Vec<_>>());
    }

    #[test]
    fn short_gap_is_filled_from_nearest() {
        let recs = [hr(0, 70.0), hr(30, 80.0)];
        let [heart, _, _] = resample(&recs, 5).unwrap();
        assert!(heart.valid.iter().all(|&v| v));
        assert_eq!(heart.values[1], 70.0);
        assert_eq!(heart.values[5], 80.0);
    }

    #[test]
    fn empty_records_give_empty_series() {
        let series = resample(&[], 5).unwrap();
        assert!(series.iter().all(UniformSeries::is_empty));
    }

    #[test]
    fn non_positive_period_rejected() {
        assert!(resample(&[hr(0, 70.0)], 0).is_err());
    }

    fn series(values: Vec<f64>) -> UniformSeries {
        let n = values.len();
        UniformSeries { sensor: SensorKind::HeartRate, start: 0, period: 5, values, valid: vec![true; n] }
    }

    #[test]
    fn normalize_examples() {
        let s = normalize(&series(vec![40.0, 200.0, 110.0]), SensorRange::new(40.0, 180.0).unwrap());
        assert_eq!(s.values, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn range_requires_lo_below_hi() {
        assert!(SensorRange::new(1.0, 1.0).is_err());
    }

    #[test]
    fn six_minutes_is_one_window() {
        let ws = window(&series(vec![0.5; 360 / 5]), 72, 72).unwrap();
        assert_eq!(ws.len(), 1);
    }

    #[test]
    fn two_windows_from_144_samples() {
        let ws = window(&series(vec![0.5; 144]), 72, 72).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1].start, 360);
        assert!(ws.iter().all(|w| w.valid));
    }

    #[test]
    fn invalid_sample_poisons_window() {
        let mut s = series(vec![0.5; 144]);
        s.valid[100] = false;
        let ws = window(&s, 72, 72).unwrap();
        assert!(ws[0].valid);
        assert!(!ws[1].valid);
    }

    #[test]
    fn wide_window_yields_nothing() {
        assert!(window(&series(vec![0.5; 10]), 72, 72).unwrap().is_empty());
    }

    #[test]
    fn slot_counts_from_midnight() {
        let w = Window { index: 0, start: 8 * 3600, day: 0, samples: vec![], valid: true };
        assert_eq!(w.slot(360, 0), 80);
        assert_eq!(w.slot(360, 3600), 90);
    }

    fn windows_on(days: &[i64]) -> Vec<Window> {
        days.iter()
            .enumerate()
            .map(|(i, &d)| Window { index: i, start: d * SECONDS_PER_DAY, day: d, samples: vec![], valid: true })
            .collect()
    }

    #[test]
    fn partition_examples() {
        let days: Vec<i64> = (0..21).flat_map(|d| std::iter::repeat_n(d, 10)).collect();
        let parts = partition_days(windows_on(&days));
        assert_eq!(parts.len(), 21);
        assert!(parts.values().all(|d| d.windows.len() == 10 && d.has_valid));

        assert_eq!(partition_days(windows_on(&[3, 3, 3])).len(), 1);
        assert!(partition_days(Vec::new()).is_empty());
    }

    #[test]
    fn day_without_valid_windows_flagged() {
        let mut ws = windows_on(&[0, 1]);
        ws[1].valid = false;
        let parts = partition_days(ws);
        assert!(parts[&0].has_valid);
        assert!(!parts[&1].has_valid);
    }
}
