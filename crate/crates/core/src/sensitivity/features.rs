//! Shape features of a discharge curve: high plateau, dip and low plateau.
//!
//! The voltage is resampled onto a uniform specific-capacity grid and
//! smoothed with a centred running median. The dip is the global minimum of
//! the smoothed curve between its first local maximum (the start of the
//! curve counts) and its last interior local maximum; without an interior
//! maximum there is no dip. The high plateau is everything before the dip,
//! the low plateau everything after it that stays above the cutoff margin.

use thiserror::Error;

use crate::dae::SimulationTrace;

/// Running-median window, in grid points.
pub const MEDIAN_WINDOW: usize = 21;
/// Number of points of the uniform capacity grid.
pub const GRID_POINTS: usize = 1000;
/// Low-plateau samples must stay this far above the cutoff, V.
pub const CUTOFF_MARGIN: f64 = 0.05;
/// Minimum number of trace samples for feature extraction.
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FeatureError {
    #[error("trace has {0} samples, at least {MIN_SAMPLES} are needed")]
    TooShort(usize),
    #[error("trace delivers no charge")]
    NoCharge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    /// Smoothed voltage at the dip, V.
    pub voltage: f64,
    /// Specific capacity at the dip, mAh/g.
    pub capacity: f64,
    /// Time of the dip, s.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFeatures {
    /// Capacity-weighted mean voltage before the dip (the whole curve when
    /// there is no dip), V.
    pub high_plateau_mean: f64,
    /// Capacity-weighted mean voltage after the dip, V.
    pub low_plateau_mean: Option<f64>,
    pub dip: Option<Dip>,
    /// mAh/g.
    pub specific_capacity: f64,
    /// s.
    pub duration: f64,
}

/// Running median with a window of `window` points, shrunk symmetrically at
/// the ends so the first and last values are kept.
pub fn median_filter(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|k| {
            let w = half.min(k).min(n - 1 - k);
            buf.clear();
            buf.extend_from_slice(&values[k - w..=k + w]);
            buf.sort_by(f64::total_cmp);
            buf[w]
        })
        .collect()
}

/// Linear interpolation of `(xs, ys)` at `x`; `xs` ascending, clamped at the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return ys[k];
    }
    ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0)
}

/// Voltage resampled on a uniform capacity grid.
#[derive(Debug, Clone)]
pub struct UniformCurve {
    pub capacity: Vec<f64>,
    pub voltage: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl UniformCurve {
    pub fn new(capacity: &[f64], voltage: &[f64]) -> Self {
        let (c0, c1) = (capacity[0], capacity[capacity.len() - 1]);
        let step = (c1 - c0) / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|k| c0 + step * k as f64).collect();
        let v: Vec<f64> = grid.iter().map(|&x| interpolate(capacity, voltage, x)).collect();
        let smoothed = median_filter(&v, MEDIAN_WINDOW);
        UniformCurve { capacity: grid, voltage: v, smoothed }
    }

    /// Grid index of the dip, if the smoothed curve has one.
    pub fn dip_index(&self) -> Option<usize> {
        let s = &self.smoothed;
        let n = s.len();
        let is_max = |k: usize| s[k] > s[k + 1] && (k == 0 || s[k] >= s[k - 1]);
        let first = (0..n - 1).find(|&k| is_max(k))?;
        let last = (1..n - 1).rev().find(|&k| is_max(k))?;
        if last <= first + 1 {
            return None;
        }
        (first + 1..last).min_by(|&a, &b| s[a].total_cmp(&s[b]))
    }
}

/// Extracts plateau and dip features from a trace with cutoff `v_cutoff`.
pub fn extract_features(trace: &SimulationTrace, v_cutoff: f64) -> Result<CurveFeatures, FeatureError> {
    let n = trace.samples.len();
    if n < MIN_SAMPLES {
        return Err(FeatureError::TooShort(n));
    }
    let capacity = trace.capacities();
    if !(capacity[n - 1] > capacity[0]) {
        return Err(FeatureError::NoCharge);
    }
    let curve = UniformCurve::new(&capacity, &trace.voltages());
    let mean = |range: &[f64]| range.iter().sum::<f64>() / range.len() as f64;
    let (high, low, dip) = match curve.dip_index() {
        Some(k) => {
            let low: Vec<f64> =
                curve.voltage[k + 1..].iter().copied().filter(|&v| v > v_cutoff + CUTOFF_MARGIN).collect();
            let dip = Dip {
                voltage: curve.smoothed[k],
                capacity: curve.capacity[k],
                time: trace.samples[0].state.t + curve.capacity[k] * 3.6 * trace.s8_mass / trace.current,
            };
            (mean(&curve.voltage[..k]), (!low.is_empty()).then(|| mean(&low)), Some(dip))
        }
        None => (mean(&curve.voltage), None, None),
    };
    Ok(CurveFeatures {
        high_plateau_mean: high,
        low_plateau_mean: low,
        dip,
        specific_capacity: trace.specific_capacity,
        duration: trace.duration(),
    })
}

/// Steepness of the end of the high plateau relative to its middle.
///
/// Ratio of the largest `|dV/dt|` between half the dip capacity and the dip
/// to the secant slope across 40-60 % of the dip capacity. `None` without a
/// dip.
pub fn plateau_end_steepness(trace: &SimulationTrace, features: &CurveFeatures) -> Option<f64> {
    let dip = features.dip?;
    let t = trace.times();
    let v = trace.voltages();
    let cap = trace.capacities();
    let mid = (interpolate(&cap, &v, 0.4 * dip.capacity) - interpolate(&cap, &v, 0.6 * dip.capacity)).abs()
        / (interpolate(&cap, &t, 0.6 * dip.capacity) - interpolate(&cap, &t, 0.4 * dip.capacity));
    let terminal = (1..cap.len())
        .filter(|&k| cap[k - 1] >= 0.5 * dip.capacity && cap[k] <= dip.capacity)
        .map(|k| ((v[k] - v[k - 1]) / (t[k] - t[k - 1])).abs())
        .fold(0.0, f64::max);
    Some(terminal / mid)
}
