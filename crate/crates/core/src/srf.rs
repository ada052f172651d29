//! The stigmergic receptive field.
//!
//! Normalized samples are clumped toward regions of interest, each clumped
//! sample deposits a trapezoidal mark on a one-dimensional grid over [0,1],
//! and the accumulated trail evaporates at every time step. Two trails are
//! compared with a fuzzy Jaccard ratio, and the ratio is passed through a
//! two-point activation ramp.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cubic ramp between two inflection points: 0 below `lo`, 1 above `hi`.
pub fn smoothstep(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::Parameter(format!("smoothstep needs lo < hi, got [{lo}, {hi}]")));
    }
    Ok(ramp(x, lo, hi))
}

#[inline]
fn ramp(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo {
        0.0
    } else if x >= hi {
        1.0
    } else {
        let t = (x - lo) / (hi - lo);
        t * t * (3.0 - 2.0 * t)
    }
}

/// The eight adapted scalars of one receptive field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrfParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    /// Half-base width of a mark (top width `epsilon`, base `2 * epsilon`).
    pub epsilon: f64,
    /// Fraction of trail intensity lost per time step.
    pub delta: f64,
    pub alpha_a: f64,
    pub beta_a: f64,
}

impl SrfParams {
    pub const DIM: usize = 8;
    pub const DELTA_INDEX: usize = 5;
    pub const EPSILON_INDEX: usize = 4;

    pub fn new(values: [f64; 8]) -> Result<Self> {
        let p = Self::from_array(values);
        p.validate()?;
        Ok(p)
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        SrfParams {
            alpha1: v[0],
            beta1: v[1],
            alpha2: v[2],
            beta2: v[3],
            epsilon: v[4],
            delta: v[5],
            alpha_a: v[6],
            beta_a: v[7],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; 8] = v
            .try_into()
            .map_err(|_| Error::Parameter(format!("expected 8 parameters, got {}", v.len())))?;
        Self::new(arr)
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.alpha1,
            self.beta1,
            self.alpha2,
            self.beta2,
            self.epsilon,
            self.delta,
            self.alpha_a,
            self.beta_a,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter(format!("non-finite parameter in {v:?}")));
        }
        let clumping_ok = 0.0 <= self.alpha1
            && self.alpha1 < self.beta1
            && self.beta1 <= self.alpha2
            && self.alpha2 < self.beta2
            && self.beta2 <= 1.0;
        if !clumping_ok {
            return Err(Error::Parameter(format!(
                "clumping points must satisfy 0 <= a1 < b1 <= a2 < b2 <= 1, got {:?}",
                &v[..4]
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(Error::Parameter(format!("mark width {} outside (0, 0.5]", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("evaporation {} outside (0, 1)", self.delta)));
        }
        if !(0.0 <= self.alpha_a && self.alpha_a < self.beta_a && self.beta_a <= 1.0) {
            return Err(Error::Parameter(format!(
                "activation points must satisfy 0 <= aA < bA <= 1, got [{}, {}]",
                self.alpha_a, self.beta_a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrailConfig {
    pub grid_cells: usize,
    /// Intensities that evaporate below this value are dropped to zero.
    pub floor: f64,
}

impl Default for TrailConfig {
    fn default() -> Self {
        TrailConfig {
            grid_cells: 1000,
            floor: 1e-3,
        }
    }
}

impl TrailConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_cells < 16 {
            return Err(Error::Parameter(format!("grid needs >= 16 cells, got {}", self.grid_cells)));
        }
        if !(0.0..1.0).contains(&self.floor) {
            return Err(Error::Parameter(format!("floor {} outside [0, 1)", self.floor)));
        }
        Ok(())
    }
}

/// Intensity field over normalized value space; cell `g` is centred at
/// `(g + 0.5) / G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trail {
    pub cells: Vec<f64>,
}

impl Trail {
    pub fn zeros(grid_cells: usize) -> Self {
        Trail {
            cells: vec![0.0; grid_cells],
        }
    }

    pub fn grid_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn center(&self, g: usize) -> f64 {
        cell_center(g, self.cells.len())
    }

    pub fn peak(&self) -> f64 {
        self.cells.iter().copied().fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Writes `cell_center,intensity` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cell_center,intensity")?;
        for (g, v) in self.cells.iter().enumerate() {
            writeln!(out, "{},{}", self.center(g), v)?;
        }
        Ok(())
    }
}

#[inline]
fn cell_center(g: usize, grid: usize) -> f64 {
    (g as f64 + 0.5) / grid as f64
}

/// Soft discretization of a normalized sample onto the plateaus 0, 0.5, 1.
pub fn clump(x: f64, params: &SrfParams) -> f64 {
    0.5 * (ramp(x, params.alpha1, params.beta1) + ramp(x, params.alpha2, params.beta2))
}

/// Intensity a mark at `position` contributes at value `y`.
#[inline]
pub fn mark_intensity(y: f64, position: f64, epsilon: f64) -> f64 {
    let dist = (y - position).abs();
    if dist <= 0.5 * epsilon {
        1.0
    } else if dist <= epsilon {
        2.0 - 2.0 * dist / epsilon
    } else {
        0.0
    }
}

/// Range of cells a mark can touch, clipped to the grid.
#[inline]
fn mark_support(position: f64, epsilon: f64, grid: usize) -> std::ops::Range<usize> {
    let g = grid as f64;
    let lo = ((position - epsilon) * g - 0.5).floor().max(0.0) as usize;
    let hi = (((position + epsilon) * g - 0.5).ceil().max(-1.0) + 1.0) as usize;
    lo.min(grid)..hi.min(grid)
}

/// Adds one mark to the trail. The part of the trapezoid outside [0,1] is
/// lost.
pub fn deposit(trail: &mut Trail, position: f64, epsilon: f64) {
    let grid = trail.cells.len();
    for g in mark_support(position, epsilon, grid) {
        trail.cells[g] += mark_intensity(cell_center(g, grid), position, epsilon);
    }
}

/// The profile a single mark leaves on an empty grid.
pub fn mark_profile(position: f64, epsilon: f64, grid_cells: usize) -> Trail {
    let mut t = Trail::zeros(grid_cells);
    deposit(&mut t, position, epsilon);
    t
}

/// One evaporation step: every cell loses the fraction `delta`, and cells
/// that drop below `floor` vanish.
pub fn evaporate(trail: &mut Trail, delta: f64, floor: f64) {
    let keep = 1.0 - delta;
    for c in &mut trail.cells {
        let v = *c * keep;
        *c = if v < floor { 0.0 } else { v };
    }
}

fn check_window(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidWindow("empty window".into()));
    }
    if let Some(bad) = samples.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidWindow(format!("sample {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Builds the trail of a window: for each sample, evaporate then deposit a
/// mark at the clumped position.
///
/// Evaporation is applied lazily: a cell is only brought up to date when a
/// mark touches it, and once more at the end. A cell left alone for `n`
/// steps is `v * (1 - delta)^n`, or zero if that fell below the floor, which
/// is what `n` eager steps produce since decay is monotone.
pub fn build_trail(samples: &[f64], params: &SrfParams, config: &TrailConfig) -> Result<Trail> {
    check_window(samples)?;
    params.validate()?;
    config.validate()?;
    Ok(build_trail_unchecked(samples, params, config))
}

pub(crate) fn build_trail_unchecked(samples: &[f64], params: &SrfParams, config: &TrailConfig) -> Trail {
    let grid = config.grid_cells;
    let floor = config.floor;
    let steps = samples.len();

    let mut decay = Vec::with_capacity(steps + 1);
    let mut f = 1.0;
    for _ in 0..=steps {
        decay.push(f);
        f *= 1.0 - params.delta;
    }

    let mut cells = vec![0.0; grid];
    let mut stamp = vec![0usize; grid];
    for (k, &x) in samples.iter().enumerate() {
        let step = k + 1;
        let position = clump(x, params);
        for g in mark_support(position, params.epsilon, grid) {
            let add = mark_intensity(cell_center(g, grid), position, params.epsilon);
            if add == 0.0 {
                continue;
            }
            let mut v = cells[g];
            if v != 0.0 {
                v *= decay[step - stamp[g]];
                if v < floor {
                    v = 0.0;
                }
            }
            cells[g] = v + add;
            stamp[g] = step;
        }
    }
    for g in 0..grid {
        let v = cells[g];
        if v != 0.0 && stamp[g] < steps {
            let v = v * decay[steps - stamp[g]];
            cells[g] = if v < floor { 0.0 } else { v };
        }
    }
    Trail { cells }
}

/// Fuzzy Jaccard ratio `sum(min) / sum(max)`; two empty trails are
/// identical and score 1.
pub fn similarity(a: &Trail, b: &Trail) -> Result<f64> {
    if a.cells.len() != b.cells.len() {
        return Err(Error::Structure(format!(
            "trail grids differ: {} vs {} cells",
            a.cells.len(),
            b.cells.len()
        )));
    }
    Ok(similarity_unchecked(a, b))
}

pub(crate) fn similarity_unchecked(a: &Trail, b: &Trail) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for (&x, &y) in a.cells.iter().zip(&b.cells) {
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0.0 {
        1.0
    } else {
        inter / union
    }
}

pub fn activate(s: f64, alpha_a: f64, beta_a: f64) -> f64 {
    ramp(s, alpha_a, beta_a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrfResponse {
    pub similarity: f64,
    pub activation: f64,
}

/// Runs a window through a receptive field against a reference trail built
/// with the same parameters and grid.
pub fn srf_respond(
    samples: &[f64],
    archetype: &Trail,
    params: &SrfParams,
    config: &TrailConfig,
) -> Result<SrfResponse> {
    if archetype.grid_cells() != config.grid_cells {
        return Err(Error::Structure(format!(
            "archetype trail has {} cells, configuration expects {}",
            archetype.grid_cells(),
            config.grid_cells
        )));
    }
    let trail = build_trail(samples, params, config)?;
    let s = similarity_unchecked(&trail, archetype);
    Ok(SrfResponse {
        similarity: s,
        activation: activate(s, params.alpha_a, params.beta_a),
    })
}

pub fn srf_evaluate(samples: &[f64], archetype: &Trail, params: &SrfParams, config: &TrailConfig) -> Result<f64> {
    srf_respond(samples, archetype, params, config).map(|r| r.activation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SrfParams {
        SrfParams::new([0.1, 0.3, 0.6, 0.8, 0.2, 0.25, 0.4, 0.8]).unwrap()
    }

    #[test]
    fn smoothstep_boundaries_and_midpoint() {
        assert_eq!(smoothstep(0.2, 0.2, 0.6).unwrap(), 0.0);
        assert!((smoothstep(0.4, 0.2, 0.6).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(smoothstep(0.6, 0.2, 0.6).unwrap(), 1.0);
        assert!(smoothstep(0.5, 0.6, 0.6).is_err());
        assert!(smoothstep(0.5, 0.7, 0.6).is_err());
    }

    #[test]
    fn clump_examples() {
        let p = params();
        assert_eq!(clump(0.0, &p), 0.0);
        assert!((clump(0.2, &p) - 0.25).abs() < 1e-15);
        assert_eq!(clump(1.0, &p), 1.0);
        assert_eq!(clump(0.45, &p), 0.5);
    }

    #[test]
    fn mark_examples() {
        assert_eq!(mark_intensity(0.5, 0.5, 0.2), 1.0);
        assert!((mark_intensity(0.65, 0.5, 0.2) - 0.5).abs() < 1e-12);
        assert_eq!(mark_intensity(0.75, 0.5, 0.2), 0.0);
    }

    #[test]
    fn mark_profile_has_unit_peak_and_truncates_at_edges() {
        let t = mark_profile(0.5, 0.2, 1000);
        assert_eq!(t.peak(), 1.0);
        // plateau of width 0.2 and two ramps of area 0.05 each
        assert!((t.mass() / 1000.0 - 0.3).abs() < 1e-3);
        let edge = mark_profile(0.0, 0.2, 1000);
        assert!((edge.mass() / 1000.0 - 0.15).abs() < 1e-3);
    }

    #[test]
    fn evaporate_examples() {
        let mut t = Trail { cells: vec![1.0; 16] };
        evaporate(&mut t, 0.25, 1e-3);
        assert_eq!(t.cells[0], 0.75);
        evaporate(&mut t, 0.25, 1e-3);
        assert_eq!(t.cells[0], 0.5625);

        let mut t = Trail { cells: vec![0.0009 / 0.75; 16] };
        evaporate(&mut t, 0.25, 1e-3);
        assert_eq!(t.cells[0], 0.0);
    }

    #[test]
    fn single_sample_trail_is_the_mark() {
        let p = params();
        let cfg = TrailConfig::default();
        let t = build_trail(&[0.45], &p, &cfg).unwrap();
        assert_eq!(t, mark_profile(clump(0.45, &p), p.epsilon, cfg.grid_cells));
    }

    #[test]
    fn constant_window_respects_geometric_bound() {
        let p = params();
        let t = build_trail(&[0.9; 200], &p, &TrailConfig::default()).unwrap();
        assert!(t.peak() <= 1.0 / p.delta);
        assert!(t.peak() > 0.99 * (1.0 / p.delta) * (1.0 - (1.0 - p.delta).powi(200)));
    }

    #[test]
    fn trail_build_is_deterministic() {
        let w: Vec<f64> = (0..72).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let cfg = TrailConfig::default();
        assert_eq!(build_trail(&w, &params(), &cfg).unwrap(), build_trail(&w, &params(), &cfg).unwrap());
    }

    #[test]
    fn invalid_window_rejected() {
        let cfg = TrailConfig::default();
        assert!(build_trail(&[], &params(), &cfg).is_err());
        assert!(build_trail(&[0.5, 1.5], &params(), &cfg).is_err());
        assert!(build_trail(&[f64::NAN], &params(), &cfg).is_err());
    }

    #[test]
    fn similarity_examples() {
        let a = mark_profile(0.3, 0.1, 100);
        assert_eq!(similarity(&a, &a).unwrap(), 1.0);
        let far = mark_profile(0.8, 0.1, 100);
        assert_eq!(similarity(&a, &far).unwrap(), 0.0);
        let double = Trail { cells: a.cells.iter().map(|c| 2.0 * c).collect() };
        assert_eq!(similarity(&a, &double).unwrap(), 0.5);
        assert_eq!(similarity(&Trail::zeros(20), &Trail::zeros(20)).unwrap(), 1.0);
        assert!(similarity(&Trail::zeros(20), &Trail::zeros(21)).is_err());
    }

    #[test]
    fn activation_examples() {
        assert_eq!(activate(0.2, 0.3, 0.7), 0.0);
        assert!((activate(0.5, 0.3, 0.7) - 0.5).abs() < 1e-15);
        assert_eq!(activate(0.9, 0.3, 0.7), 1.0);
    }

    #[test]
    fn srf_on_own_reference_fires() {
        let p = params();
        let cfg = TrailConfig::default();
        let w = vec![0.85; 72];
        let reference = build_trail(&w, &p, &cfg).unwrap();
        assert_eq!(srf_evaluate(&w, &reference, &p, &cfg).unwrap(), 1.0);
        let other = build_trail(&[0.05; 72], &p, &cfg).unwrap();
        assert_eq!(srf_evaluate(&w, &other, &p, &cfg).unwrap(), 0.0);
        assert!(srf_evaluate(&w, &Trail::zeros(500), &p, &cfg).is_err());
    }

    #[test]
    fn params_ordering_enforced() {
        assert!(SrfParams::new([0.3, 0.1, 0.6, 0.8, 0.2, 0.25, 0.4, 0.8]).is_err());
        assert!(SrfParams::new([0.1, 0.3, 0.6, 0.8, 0.0, 0.25, 0.4, 0.8]).is_err());
        assert!(SrfParams::new([0.1, 0.3, 0.6, 0.8, 0.2, 1.0, 0.4, 0.8]).is_err());
        assert!(SrfParams::new([0.1, 0.3, 0.6, 0.8, 0.2, 0.5, 0.8, 0.8]).is_err());
        // touching inner points are allowed
        assert!(SrfParams::new([0.1, 0.4, 0.4, 0.8, 0.2, 0.5, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn trail_csv_has_one_row_per_cell() {
        let mut buf = Vec::new();
        mark_profile(0.5, 0.2, 16).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("cell_center,intensity\n0.03125,"));
    }
}
