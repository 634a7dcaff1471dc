//! Certificate checker for scalar nonlinearities: classifies the positivity
//! set, fits the smallest sandwich constants, and reports the horizon lower
//! bound beta^{-2} these conditions certify.
//!
//! Constant fitting follows a fit-then-verify discipline: the growth exponent
//! comes from least squares in log space over the probe grid, the remaining
//! constants are the smallest making the applicable sandwich true pointwise,
//! and the fitted sandwich is then re-verified node by node. Ties break
//! toward the smallest beta, which is the strongest certificate.

use crate::nonlinearity::Nonlinearity;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("positivity set is disconnected: components near [{a0}, {a1}] and [{b0}, {b1}]")]
    Disconnected { a0: f64, a1: f64, b0: f64, b1: f64 },
    #[error("checker requires m = 1 (got {0})")]
    NotScalar(usize),
    #[error("probe grid must contain at least 8 increasing nodes")]
    BadGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IntervalClass {
    /// sigma == 0 on the whole grid: J == 0 trivially.
    Empty,
    Bounded { lo: f64, hi: f64 },
    HalfLineUp { edge: f64 },
    HalfLineDown { edge: f64 },
    WholeLine,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisReport {
    pub class: IntervalClass,
    pub beta: f64,
    pub k_const: f64,
    pub gamma: f64,
    /// beta^{-2} when a certificate exists (infinite for degenerate or
    /// sub-linear growth), 0 when no finite constants fit.
    pub certified_horizon: f64,
    pub certificate: bool,
}

/// Classify the positivity interval of sigma on the probe grid and fit the
/// applicable sandwich constants.
pub fn hypothesis_check(
    sigma: &Nonlinearity,
    probe_grid: &[f64],
) -> Result<HypothesisReport, HypothesisError> {
    if sigma.dim() != 1 {
        return Err(HypothesisError::NotScalar(sigma.dim()));
    }
    if probe_grid.len() < 8 || !probe_grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(HypothesisError::BadGrid);
    }
    let vals: Vec<f64> = probe_grid.iter().map(|&b| sigma.eval_scalar(b)).collect();
    let scale = vals.iter().fold(0.0f64, |a, &v| a.max(v));
    let pos_tol = 1e-12 * (1.0 + scale);
    let positive: Vec<bool> = vals.iter().map(|&v| v > pos_tol).collect();

    // locate runs of positivity
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &p) in positive.iter().enumerate() {
        match (p, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, positive.len() - 1));
    }

    if runs.is_empty() {
        return Ok(HypothesisReport {
            class: IntervalClass::Empty,
            beta: 0.0,
            k_const: 1.0,
            gamma: 0.0,
            certified_horizon: f64::INFINITY,
            certificate: true,
        });
    }
    if runs.len() > 1 {
        let (a, b) = (runs[0], runs[1]);
        return Err(HypothesisError::Disconnected {
            a0: probe_grid[a.0],
            a1: probe_grid[a.1],
            b0: probe_grid[b.0],
            b1: probe_grid[b.1],
        });
    }
    let (lo_i, hi_i) = runs[0];
    let touches_left = lo_i == 0;
    let touches_right = hi_i == probe_grid.len() - 1;

    let report = match (touches_left, touches_right) {
        (true, true) => fit_whole_line(probe_grid, &vals),
        (false, false) => {
            let lo = edge_estimate(probe_grid, &vals, lo_i, true);
            let hi = edge_estimate(probe_grid, &vals, hi_i, false);
            fit_bounded(probe_grid, &vals, lo_i, hi_i, lo, hi)
        }
        (false, true) => {
            let edge = edge_estimate(probe_grid, &vals, lo_i, true);
            fit_half_line(probe_grid, &vals, lo_i, hi_i, edge, true)
        }
        (true, false) => {
            let edge = edge_estimate(probe_grid, &vals, hi_i, false);
            fit_half_line(probe_grid, &vals, lo_i, hi_i, edge, false)
        }
    };
    Ok(report)
}

/// Zero crossing of sigma adjacent to the positive run, extrapolated from
/// the first two positive nodes and clamped between the bracketing zero node
/// and the run.
fn edge_estimate(grid: &[f64], vals: &[f64], run_end: usize, left_edge: bool) -> f64 {
    let (zero_i, first, second) = if left_edge {
        (run_end - 1, run_end, run_end + 1)
    } else {
        (run_end + 1, run_end, run_end - 1)
    };
    let fallback = 0.5 * (grid[zero_i] + grid[first]);
    if second >= grid.len() {
        return fallback;
    }
    let (x1, y1) = (grid[first], vals[first]);
    let (x2, y2) = (grid[second], vals[second]);
    let slope = (y2 - y1) / (x2 - x1);
    if slope.abs() < 1e-12 {
        return fallback;
    }
    let x_star = x1 - y1 / slope;
    let (lo, hi) = if grid[zero_i] < x1 {
        (grid[zero_i], x1)
    } else {
        (x1, grid[zero_i])
    };
    x_star.clamp(lo, hi)
}

fn fit_bounded(
    grid: &[f64],
    vals: &[f64],
    lo_i: usize,
    hi_i: usize,
    lo: f64,
    hi: f64,
) -> HypothesisReport {
    // K^{-1} dist(x, I^c) <= sigma(x) <= beta dist(x, I^c)
    let mut beta: f64 = 0.0;
    let mut k: f64 = 1.0;
    for i in lo_i..=hi_i {
        let d = (grid[i] - lo).min(hi - grid[i]);
        if d <= 0.0 {
            continue;
        }
        beta = beta.max(vals[i] / d);
        k = k.max(d / vals[i]);
    }
    let ok = verify_bounded(grid, vals, lo_i, hi_i, lo, hi, beta, k);
    HypothesisReport {
        class: IntervalClass::Bounded { lo, hi },
        beta,
        k_const: k,
        gamma: 2.0,
        certified_horizon: if ok && beta > 0.0 {
            1.0 / (beta * beta)
        } else {
            0.0
        },
        certificate: ok && beta > 0.0,
    }
}

fn verify_bounded(
    grid: &[f64],
    vals: &[f64],
    lo_i: usize,
    hi_i: usize,
    lo: f64,
    hi: f64,
    beta: f64,
    k: f64,
) -> bool {
    let slack = 1.0 + 1e-9;
    (lo_i..=hi_i).all(|i| {
        let d = ((grid[i] - lo).min(hi - grid[i])).max(0.0);
        vals[i] <= beta * d * slack && d <= k * vals[i] * slack
    })
}

fn fit_whole_line(grid: &[f64], vals: &[f64]) -> HypothesisReport {
    // gamma from least squares of log sigma against log <x> over the grid
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    let mut n = 0.0;
    for (&x, &v) in grid.iter().zip(vals) {
        if v <= 0.0 {
            return no_certificate(IntervalClass::WholeLine);
        }
        let lx = 0.5 * (1.0 + x * x).ln();
        let ly = v.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        n += 1.0;
    }
    let denom = sxx - sx * sx / n;
    let slope = if denom.abs() < 1e-12 {
        0.0
    } else {
        (sxy - sx * sy / n) / denom
    };
    let gamma = (2.0 * slope).clamp(0.0, 2.0);

    // smallest beta capturing the quadratic tail: worst chord slope of
    // sigma^2 against x^2 over the outer half of the grid
    let x_half = 0.5 * grid.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let mut beta_sq: f64 = 0.0;
    let outer: Vec<(f64, f64)> = grid
        .iter()
        .zip(vals)
        .filter(|(&x, _)| x.abs() >= x_half)
        .map(|(&x, &v)| (x * x, v * v))
        .collect();
    for w in outer.windows(2) {
        let dx = w[1].0 - w[0].0;
        if dx.abs() > 1e-12 {
            beta_sq = beta_sq.max((w[1].1 - w[0].1) / dx);
        }
    }
    let beta = beta_sq.max(0.0).sqrt();

    // K: smallest constant making all three pointwise bounds true
    let mut k: f64 = 1.0;
    for (&x, &v) in grid.iter().zip(vals) {
        let jb = (1.0 + x * x).powf(gamma / 4.0); // <x>^{gamma/2}
        k = k.max(jb / v); // lower bound
        k = k.max(v / jb); // upper power bound
        k = k.max(v * v - beta * beta * x * x); // upper quadratic bound
    }
    let slack = 1.0 + 1e-9;
    let ok = grid.iter().zip(vals).all(|(&x, &v)| {
        let jb = (1.0 + x * x).powf(gamma / 4.0);
        v * k * slack >= jb
            && v <= (beta * beta * x * x + k).sqrt() * slack
            && v <= k * jb * slack
    });
    HypothesisReport {
        class: IntervalClass::WholeLine,
        beta,
        k_const: k,
        gamma,
        certified_horizon: if !ok {
            0.0
        } else if beta > 1e-9 {
            1.0 / (beta * beta)
        } else {
            f64::INFINITY
        },
        certificate: ok,
    }
}

fn fit_half_line(
    grid: &[f64],
    vals: &[f64],
    lo_i: usize,
    hi_i: usize,
    edge: f64,
    upward: bool,
) -> HypothesisReport {
    let class = if upward {
        IntervalClass::HalfLineUp { edge }
    } else {
        IntervalClass::HalfLineDown { edge }
    };
    // gamma from the far tail, beta from the near-edge slope
    let mut beta: f64 = 0.0;
    let (mut sxx, mut sxy, mut sx, mut sy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let far = grid[if upward { hi_i } else { lo_i }].abs().max(1.0) * 0.5;
    for i in lo_i..=hi_i {
        let d = (grid[i] - edge).abs();
        if d <= 0.0 || vals[i] <= 0.0 {
            continue;
        }
        beta = beta.max(vals[i] / d);
        if d >= far {
            let lx = d.ln();
            let ly = vals[i].ln();
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            n += 1.0;
        }
    }
    let gamma = if n >= 2.0 {
        let denom = sxx - sx * sx / n;
        if denom.abs() < 1e-12 {
            2.0
        } else {
            (2.0 * (sxy - sx * sy / n) / denom).clamp(0.0, 2.0)
        }
    } else {
        2.0
    };
    let mut k: f64 = 1.0;
    for i in lo_i..=hi_i {
        let d = (grid[i] - edge).abs();
        if d <= 0.0 || vals[i] <= 0.0 {
            continue;
        }
        let pow = d.powf(gamma / 2.0);
        k = k.max(d.min(pow) / vals[i]); // lower bound
        k = k.max(vals[i] / pow); // upper power bound
    }
    let slack = 1.0 + 1e-9;
    let ok = (lo_i..=hi_i).all(|i| {
        let d = (grid[i] - edge).abs();
        if d <= 0.0 {
            return true;
        }
        let pow = d.powf(gamma / 2.0);
        vals[i] * k * slack >= d.min(pow)
            && vals[i] <= (beta * d).min(k * pow) * slack
    });
    HypothesisReport {
        class,
        beta,
        k_const: k,
        gamma,
        certified_horizon: if ok && beta > 0.0 {
            1.0 / (beta * beta)
        } else {
            0.0
        },
        certificate: ok && beta > 0.0,
    }
}

fn no_certificate(class: IntervalClass) -> HypothesisReport {
    HypothesisReport {
        class,
        beta: f64::NAN,
        k_const: f64::NAN,
        gamma: f64::NAN,
        certified_horizon: 0.0,
        certificate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn relu_gets_the_corollary_certificate() {
        let sigma = Nonlinearity::relu(0.5);
        let rep = hypothesis_check(&sigma, &grid(-4.0, 4.0, 129)).unwrap();
        assert!(matches!(rep.class, IntervalClass::HalfLineUp { .. }));
        assert!(rep.certificate);
        assert_relative_eq!(rep.beta, 0.5, max_relative = 1e-6);
        assert!(rep.certified_horizon >= 4.0 * (1.0 - 1e-6));
    }

    #[test]
    fn add_mult_whole_line_case() {
        let sigma = Nonlinearity::add_mult(1.0, 0.8);
        let rep = hypothesis_check(&sigma, &grid(-8.0, 8.0, 257)).unwrap();
        assert_eq!(rep.class, IntervalClass::WholeLine);
        assert!(rep.certificate);
        assert_relative_eq!(rep.gamma, 2.0, epsilon = 0.05);
        assert_relative_eq!(rep.beta, 0.8, max_relative = 1e-3);
        assert_relative_eq!(rep.certified_horizon, 1.5625, max_relative = 2e-3);
    }

    #[test]
    fn degenerate_sigma_reports_empty() {
        let sigma = Nonlinearity::constant_scalar(0.0);
        let rep = hypothesis_check(&sigma, &grid(-2.0, 2.0, 65)).unwrap();
        assert_eq!(rep.class, IntervalClass::Empty);
        assert!(rep.certificate);
        assert!(rep.certified_horizon.is_infinite());
    }

    #[test]
    fn bounded_interval_case() {
        // tent supported on (0, 1), slope 1 at the edges
        let sigma = Nonlinearity::scalar_fn(
            |b| if b > 0.0 && b < 1.0 { b.min(1.0 - b) } else { 0.0 },
            1.0,
            (0.25, 1.0),
            "tent",
        );
        let rep = hypothesis_check(&sigma, &grid(-2.0, 3.0, 501)).unwrap();
        match rep.class {
            IntervalClass::Bounded { lo, hi } => {
                assert!((lo - 0.0).abs() < 0.02 && (hi - 1.0).abs() < 0.02);
            }
            other => panic!("wrong class {other:?}"),
        }
        assert!(rep.certificate);
        assert!((rep.beta - 1.0).abs() < 0.02);
    }

    #[test]
    fn disconnected_positivity_is_rejected_with_components() {
        let sigma = Nonlinearity::scalar_fn(
            |b| {
                let d1 = (b + 1.0).abs();
                let d2 = (b - 1.0).abs();
                (0.2 - d1.min(d2)).max(0.0)
            },
            1.0,
            (0.04, 1.0),
            "two bumps",
        );
        match hypothesis_check(&sigma, &grid(-3.0, 3.0, 301)) {
            Err(HypothesisError::Disconnected { a1, b0, .. }) => {
                assert!(a1 < 0.0 && b0 > 0.0);
            }
            other => panic!("expected disconnection, got {other:?}"),
        }
    }
}
