//! Sweep engine: evaluate the transmission probability along a detuning or
//! wavenumber axis for a selection of methods, optionally refining the grid
//! near narrow structures, and emit the table as CSV plus peak / comparison
//! reports.
//!
//! Rows are evaluated concurrently and assembled in axis order, so repeated
//! runs of the same configuration produce byte-identical output.

use rayon::prelude::*;
use std::io::Write;

use crate::approx::{
    direct_first_order, p12_direct, p12_semiclassical, p12_ultracold, resonance_estimates,
};
use crate::barrier::barrier_pair;
use crate::double_barrier::{amplitude_distance, double_barrier_solve};
use crate::error::Error;
use crate::kinematics::PhysicalParams;
use crate::slicing::{integrate_sliced, SliceGrid};

/// Hard cap on adaptive refinement depth; each interval of the original grid
/// is halved at most this many times.
pub const MAX_REFINE_DEPTH: u32 = 12;

/// Safety valve for adaptive refinement on pathological data.
const MAX_TOTAL_POINTS: usize = 200_000;

/// Slices per region used for per-row verification against the slicing
/// integrator.
const VERIFY_SLICES: usize = 4;

/// A computation method for the excited-state transmission probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Full two-channel solve of the double-barrier problem.
    Exact,
    /// Semiclassical fringe formula.
    Semiclassical,
    /// Two direct scattering paths.
    Direct,
    /// Coherent sum of the two resonating families.
    Ultracold,
    /// First-order multiple-scattering truncation (direct paths plus single
    /// double-reflections).
    Series,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Exact,
        Method::Semiclassical,
        Method::Direct,
        Method::Ultracold,
        Method::Series,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Semiclassical => "scl",
            Method::Direct => "direct",
            Method::Ultracold => "ultracold",
            Method::Series => "series",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// Which parameter the sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Delta,
    K,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::K => "k",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "delta" => Ok(SweepAxis::Delta),
            "k" => Ok(SweepAxis::K),
            other => Err(Error::InvalidConfig(format!("unknown axis '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// Base parameters; the swept field is replaced per row.
    pub params: PhysicalParams,
    pub axis: SweepAxis,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    pub methods: Vec<Method>,
    /// Insert midpoints where adjacent probabilities jump by more than a
    /// tenth of the table maximum, up to `refine_depth` halvings.
    pub adaptive: bool,
    pub refine_depth: u32,
    /// Re-derive every row with the slicing integrator and record the
    /// distance.
    pub verify: bool,
}

impl SweepConfig {
    /// A plain exact-method sweep with no refinement.
    pub fn new(params: PhysicalParams, axis: SweepAxis, min: f64, max: f64, n_points: usize) -> Self {
        Self {
            params,
            axis,
            min,
            max,
            n_points,
            methods: vec![Method::Exact],
            adaptive: false,
            refine_depth: MAX_REFINE_DEPTH,
            verify: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.min.is_finite() || !self.max.is_finite() || self.min >= self.max {
            return Err(Error::InvalidConfig(format!(
                "need min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidConfig("need at least 2 points".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("need at least one method".into()));
        }
        if self.axis == SweepAxis::K && self.min <= 0.0 {
            return Err(Error::InvalidConfig("k sweeps need min > 0".into()));
        }
        self.params_at(self.min).validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn params_at(&self, x: f64) -> PhysicalParams {
        match self.axis {
            SweepAxis::Delta => self.params.with_delta(x),
            SweepAxis::K => self.params.with_k(x),
        }
    }

    fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// One evaluated grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    /// Refinement generation: 0 for the original grid.
    pub depth: u32,
    pub p12_exact: Option<f64>,
    pub p12_scl: Option<f64>,
    pub p12_direct: Option<f64>,
    pub p12_ultracold: Option<f64>,
    pub p12_series: Option<f64>,
    pub flux_residual: Option<f64>,
    pub oracle_residual: Option<f64>,
    /// At least one requested quantity failed to evaluate.
    pub failed: bool,
}

impl SweepRow {
    fn empty(axis_value: f64, depth: u32) -> Self {
        Self {
            axis_value,
            depth,
            p12_exact: None,
            p12_scl: None,
            p12_direct: None,
            p12_ultracold: None,
            p12_series: None,
            flux_residual: None,
            oracle_residual: None,
            failed: false,
        }
    }

    pub fn p12(&self, method: Method) -> Option<f64> {
        match method {
            Method::Exact => self.p12_exact,
            Method::Semiclassical => self.p12_scl,
            Method::Direct => self.p12_direct,
            Method::Ultracold => self.p12_ultracold,
            Method::Series => self.p12_series,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed).count()
    }

    pub fn failure_rate(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.failures() as f64 / self.rows.len() as f64
        }
    }
}

fn evaluate_row(config: &SweepConfig, x: f64, depth: u32) -> SweepRow {
    let mut row = SweepRow::empty(x, depth);
    let params = config.params_at(x);
    if params.validate().is_err() {
        row.failed = true;
        return row;
    }
    let kin = params.kinematics();

    if config.has(Method::Exact) || config.verify {
        match double_barrier_solve(&params) {
            Ok(amps) => {
                row.flux_residual = Some(amps.flux_residual(&kin));
                if config.has(Method::Exact) {
                    let p12 = if kin.excited_open() {
                        kin.q.re / kin.k * amps.t12.norm_sqr()
                    } else {
                        0.0
                    };
                    row.p12_exact = Some(p12);
                }
                if config.verify {
                    let sliced = SliceGrid::uniform(&params, VERIFY_SLICES)
                        .and_then(|grid| integrate_sliced(&params, &grid));
                    match sliced {
                        Ok(oracle) => {
                            row.oracle_residual = Some(amplitude_distance(&oracle, &amps))
                        }
                        Err(_) => row.failed = true,
                    }
                }
            }
            Err(_) => row.failed = true,
        }
    }

    if config.has(Method::Semiclassical) {
        row.p12_scl = Some(p12_semiclassical(&params));
    }
    if config.has(Method::Direct) {
        match p12_direct(&params) {
            Ok(v) => row.p12_direct = Some(v),
            Err(_) => row.failed = true,
        }
    }
    if config.has(Method::Ultracold) {
        match p12_ultracold(&params) {
            Ok(v) => row.p12_ultracold = Some(v),
            Err(_) => row.failed = true,
        }
    }
    if config.has(Method::Series) {
        if kin.excited_open() {
            match barrier_pair(&params) {
                Ok((first, second)) => {
                    let t12 = direct_first_order(&first, &second);
                    row.p12_series = Some(kin.q.re / kin.k * t12.norm_sqr());
                }
                Err(_) => row.failed = true,
            }
        } else {
            row.p12_series = Some(0.0);
        }
    }
    row
}

/// Run the sweep described by `config`.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, Error> {
    config.validate()?;
    let n = config.n_points;
    let span = config.max - config.min;
    let xs: Vec<(f64, u32)> = (0..n)
        .map(|i| {
            let x = if i + 1 == n {
                config.max
            } else {
                config.min + span * i as f64 / (n - 1) as f64
            };
            (x, 0)
        })
        .collect();

    let mut rows: Vec<SweepRow> = xs
        .par_iter()
        .map(|&(x, d)| evaluate_row(config, x, d))
        .collect();

    if config.adaptive {
        let depth_cap = config.refine_depth.min(MAX_REFINE_DEPTH);
        loop {
            let table_max = rows
                .iter()
                .flat_map(|r| config.methods.iter().filter_map(|&m| r.p12(m)))
                .fold(0.0_f64, f64::max);
            if table_max <= 0.0 {
                break;
            }
            let threshold = 0.1 * table_max;
            let mut new_points: Vec<(f64, u32)> = Vec::new();
            for pair in rows.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                let depth = a.depth.max(b.depth);
                if depth >= depth_cap {
                    continue;
                }
                let jump = config
                    .methods
                    .iter()
                    .filter_map(|&m| Some((a.p12(m)? - b.p12(m)?).abs()))
                    .fold(0.0_f64, f64::max);
                if jump > threshold {
                    let mid = 0.5 * (a.axis_value + b.axis_value);
                    if mid > a.axis_value && mid < b.axis_value {
                        new_points.push((mid, depth + 1));
                    }
                }
            }
            if new_points.is_empty() || rows.len() + new_points.len() > MAX_TOTAL_POINTS {
                break;
            }
            let mut extra: Vec<SweepRow> = new_points
                .par_iter()
                .map(|&(x, d)| evaluate_row(config, x, d))
                .collect();
            rows.append(&mut extra);
            rows.sort_by(|a, b| a.axis_value.total_cmp(&b.axis_value));
        }
    }

    Ok(SweepResult { config: config.clone(), rows })
}

// --- CSV ---------------------------------------------------------------

fn fmt_opt(v: Option<f64>) -> String {
    // `{}` prints the shortest decimal string that round-trips, which keeps
    // the CSV both byte-stable and lossless.
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Column layout: the series column appears only when that method was swept,
/// keeping the standard schema stable for the common method set.
fn csv_header(with_series: bool) -> String {
    if with_series {
        "axis,p12_exact,p12_scl,p12_direct,p12_ultracold,p12_series,flux_residual,oracle_residual"
            .to_string()
    } else {
        "axis,p12_exact,p12_scl,p12_direct,p12_ultracold,flux_residual,oracle_residual".to_string()
    }
}

/// Serialize the sweep table as UTF-8 CSV with a header row and LF line
/// endings.  Absent methods leave their fields empty.
pub fn to_csv(result: &SweepResult) -> String {
    let with_series = result.config.methods.contains(&Method::Series);
    let mut out = csv_header(with_series);
    out.push('\n');
    for row in &result.rows {
        out.push_str(&fmt_opt(Some(row.axis_value)));
        for field in [row.p12_exact, row.p12_scl, row.p12_direct, row.p12_ultracold] {
            out.push(',');
            out.push_str(&fmt_opt(field));
        }
        if with_series {
            out.push(',');
            out.push_str(&fmt_opt(row.p12_series));
        }
        out.push(',');
        out.push_str(&fmt_opt(row.flux_residual));
        out.push(',');
        out.push_str(&fmt_opt(row.oracle_residual));
        out.push('\n');
    }
    out
}

pub fn write_csv<W: Write>(result: &SweepResult, writer: &mut W) -> std::io::Result<()> {
    writer.write_all(to_csv(result).as_bytes())
}

/// Parse CSV emitted by [`to_csv`] back into rows.  Depth and failure flags
/// are run metadata and are not persisted; parsed rows carry defaults.
pub fn read_csv(text: &str) -> Result<Vec<SweepRow>, Error> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidConfig("empty CSV".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"axis") {
        return Err(Error::InvalidConfig("first CSV column must be 'axis'".into()));
    }

    let parse_cell = |cell: &str| -> Result<Option<f64>, Error> {
        if cell.is_empty() {
            Ok(None)
        } else {
            cell.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::InvalidConfig(format!("bad CSV number '{cell}': {e}")))
        }
    };

    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::InvalidConfig(format!(
                "CSV row has {} cells, header has {}",
                cells.len(),
                columns.len()
            )));
        }
        let mut row = SweepRow::empty(0.0, 0);
        for (name, cell) in columns.iter().zip(&cells) {
            let value = parse_cell(cell)?;
            match *name {
                "axis" => {
                    row.axis_value = value
                        .ok_or_else(|| Error::InvalidConfig("missing axis value".into()))?
                }
                "p12_exact" => row.p12_exact = value,
                "p12_scl" => row.p12_scl = value,
                "p12_direct" => row.p12_direct = value,
                "p12_ultracold" => row.p12_ultracold = value,
                "p12_series" => row.p12_series = value,
                "flux_residual" => row.flux_residual = value,
                "oracle_residual" => row.oracle_residual = value,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown CSV column '{other}'")))
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

// --- Peak detection -----------------------------------------------------

/// Closest resonance estimate to a detected peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonanceMatch {
    pub n: u32,
    pub estimate: f64,
    /// `|position - estimate|` over the local spacing between estimates.
    pub relative_offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub position: f64,
    pub height: f64,
    /// Full width at half maximum from linear interpolation of the
    /// half-height crossings (clamped to the data range on a shoulder).
    pub fwhm: f64,
    pub nearest: Option<ResonanceMatch>,
}

#[derive(Clone, Debug)]
pub struct PeakReport {
    pub method: Method,
    pub peaks: Vec<Peak>,
}

/// Detect local maxima of one method's column with three-point tests,
/// refine position and height with a parabola through the triple, measure
/// the width at half height, and annotate each peak with the nearest
/// resonance estimate.
pub fn find_peaks(result: &SweepResult, method: Method) -> Result<PeakReport, Error> {
    let data: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter_map(|r| r.p12(method).map(|y| (r.axis_value, y)))
        .collect();
    if data.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 rows with method '{}'",
            method.label()
        )));
    }

    let estimates = peak_estimates(result);
    let mut peaks = Vec::new();
    for i in 1..data.len() - 1 {
        let (xl, yl) = data[i - 1];
        let (xc, yc) = data[i];
        let (xr, yr) = data[i + 1];
        if !(yc > yl && yc > yr) {
            continue;
        }
        let (position, height) = parabola_vertex((xl, yl), (xc, yc), (xr, yr));
        let half = height / 2.0;

        let left = half_crossing(&data[..=i], half, true);
        let right = half_crossing(&data[i..], half, false);
        let fwhm = (right - left).max(f64::MIN_POSITIVE);

        let nearest = estimates.as_ref().and_then(|est| nearest_estimate(est, position));
        peaks.push(Peak { position, height, fwhm, nearest });
    }
    Ok(PeakReport { method, peaks })
}

/// Resonance positions along the swept axis.  For detuning sweeps these are
/// the `delta_n`; for wavenumber sweeps the same resonance condition
/// `q L = n pi` is solved for `k` at fixed detuning.
fn peak_estimates(result: &SweepResult) -> Option<Vec<(u32, f64)>> {
    let config = &result.config;
    let gap = config.params.gap;
    if gap <= 0.0 {
        return None;
    }
    match config.axis {
        SweepAxis::Delta => {
            let k = config.params.k;
            let kn_max = (k * k + 2.0 * config.max.max(0.0)).sqrt();
            let n_max = (gap * kn_max / std::f64::consts::PI).ceil() as u32 + 1;
            Some(
                resonance_estimates(k, gap, n_max.max(1))
                    .into_iter()
                    .map(|e| (e.n, e.delta_n))
                    .collect(),
            )
        }
        SweepAxis::K => {
            let delta = config.params.delta;
            let n_max = (gap * (config.max * config.max + 2.0 * delta).max(0.0).sqrt()
                / std::f64::consts::PI)
                .ceil() as u32
                + 1;
            let mut out = Vec::new();
            for n in 1..=n_max.max(1) {
                let kn_sq = (n as f64 * std::f64::consts::PI / gap).powi(2) - 2.0 * delta;
                if kn_sq > 0.0 {
                    out.push((n, kn_sq.sqrt()));
                }
            }
            Some(out)
        }
    }
}

fn nearest_estimate(estimates: &[(u32, f64)], position: f64) -> Option<ResonanceMatch> {
    if estimates.is_empty() {
        return None;
    }
    let (idx, &(n, estimate)) = estimates
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .1 - position).abs().total_cmp(&(b.1 .1 - position).abs()))?;
    let spacing = if idx + 1 < estimates.len() {
        (estimates[idx + 1].1 - estimate).abs()
    } else if idx > 0 {
        (estimate - estimates[idx - 1].1).abs()
    } else {
        estimate.abs().max(f64::MIN_POSITIVE)
    };
    Some(ResonanceMatch { n, estimate, relative_offset: (position - estimate).abs() / spacing })
}

/// Vertex of the parabola through three points; falls back to the middle
/// point when the triple is degenerate or the vertex escapes the triple.
fn parabola_vertex(l: (f64, f64), c: (f64, f64), r: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = l;
    let (x1, y1) = c;
    let (x2, y2) = r;
    let d01 = x0 - x1;
    let d02 = x0 - x2;
    let d12 = x1 - x2;
    let a = y0 / (d01 * d02) - y1 / (d01 * d12) + y2 / (d02 * d12);
    if !(a < 0.0) {
        return (x1, y1);
    }
    let b = -y0 * (x1 + x2) / (d01 * d02) + y1 * (x0 + x2) / (d01 * d12)
        - y2 * (x0 + x1) / (d02 * d12);
    let xv = -b / (2.0 * a);
    let c_coef = y0 * x1 * x2 / (d01 * d02) - y1 * x0 * x2 / (d01 * d12)
        + y2 * x0 * x1 / (d02 * d12);
    let yv = (a * xv + b) * xv + c_coef;
    if xv.is_finite() && xv > x0 && xv < x2 {
        (xv, yv.max(y1))
    } else {
        (x1, y1)
    }
}

/// Linearly interpolated crossing of `half` when walking away from the peak;
/// `leftward` walks toward smaller axis values over `data` ending at the
/// peak, otherwise `data` starts at the peak.
fn half_crossing(data: &[(f64, f64)], half: f64, leftward: bool) -> f64 {
    let interp = |inside: (f64, f64), outside: (f64, f64)| -> f64 {
        let (xi, yi) = inside;
        let (xo, yo) = outside;
        if yi == yo {
            return xo;
        }
        xo + (xi - xo) * (half - yo) / (yi - yo)
    };
    if leftward {
        for i in (0..data.len() - 1).rev() {
            if data[i].1 < half {
                return interp(data[i + 1], data[i]);
            }
        }
        data[0].0
    } else {
        for i in 1..data.len() {
            if data[i].1 < half {
                return interp(data[i - 1], data[i]);
            }
        }
        data[data.len() - 1].0
    }
}

// --- Cross-method statistics ---------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct CompareStats {
    /// Number of rows where both methods evaluated.
    pub n: usize,
    pub rms: f64,
    pub max_abs: f64,
    /// Pearson correlation; NaN when either column is constant.
    pub correlation: f64,
}

pub fn compare_methods(result: &SweepResult, a: Method, b: Method) -> Result<CompareStats, Error> {
    let pairs: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter_map(|r| Some((r.p12(a)?, r.p12(b)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no rows carry both '{}' and '{}'",
            a.label(),
            b.label()
        )));
    }
    let n = pairs.len();
    let nf = n as f64;
    let rms = (pairs.iter().map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / nf).sqrt();
    let max_abs = pairs.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in &pairs {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a) * (x - mean_a);
        var_b += (y - mean_b) * (y - mean_b);
    }
    let correlation = cov / (var_a.sqrt() * var_b.sqrt());
    Ok(CompareStats { n, rms, max_abs, correlation })
}

// --- Plain-text reports ---------------------------------------------------

pub fn format_peak_report(report: &PeakReport) -> String {
    let mut out = format!("peaks ({} method)\n", report.method.label());
    out.push_str(&format!(
        "{:>16} {:>14} {:>14} {:>14} {:>4} {:>12}\n",
        "position", "height", "fwhm", "nearest_est", "n", "rel_offset"
    ));
    if report.peaks.is_empty() {
        out.push_str("  (none)\n");
        return out;
    }
    for p in &report.peaks {
        match p.nearest {
            Some(nm) => out.push_str(&format!(
                "{:>16.9} {:>14.6e} {:>14.6e} {:>14.9} {:>4} {:>12.4}\n",
                p.position, p.height, p.fwhm, nm.estimate, nm.n, nm.relative_offset
            )),
            None => out.push_str(&format!(
                "{:>16.9} {:>14.6e} {:>14.6e} {:>14} {:>4} {:>12}\n",
                p.position, p.height, p.fwhm, "-", "-", "-"
            )),
        }
    }
    out
}

pub fn format_compare(stats: &CompareStats, a: Method, b: Method) -> String {
    format!(
        "compare {} vs {}\n{:>12} {:>14} {:>14} {:>14}\n{:>12} {:>14.6e} {:>14.6e} {:>14.6}\n",
        a.label(),
        b.label(),
        "rows",
        "rms",
        "max_abs",
        "correlation",
        stats.n,
        stats.rms,
        stats.max_abs,
        stats.correlation
    )
}
