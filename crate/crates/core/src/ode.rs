//! Dormand–Prince 5(4) for scalar autonomous equations with purely relative
//! error control, which suits positive solutions decaying over many decades.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("right-hand side is not finite at t = {t}, y = {y:e}")]
    NonFinite { t: f64, y: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("output times must be nondecreasing and start at or after t0")]
    BadGrid,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    /// Values below this magnitude are treated as this magnitude in the error norm.
    pub floor: f64,
}

/// Integrates `y' = f(y)` from `(t0, y0)` and samples at each time in `grid`.
pub fn solve<F: FnMut(f64) -> f64>(
    mut f: F,
    t0: f64,
    y0: f64,
    grid: &[f64],
    tol: Tolerance,
) -> Result<Vec<f64>, OdeError> {
    if grid.first().is_some_and(|&t| t < t0) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(OdeError::BadGrid);
    }
    let mut rhs = |t: f64, y: f64| {
        let v = f(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OdeError::NonFinite { t, y })
        }
    };
    let mut out = Vec::with_capacity(grid.len());
    let (mut t, mut y) = (t0, y0);
    let mut k0 = rhs(t, y)?;
    let mut h = {
        let scale = y.abs().max(tol.floor);
        let d = k0.abs().max(1e-300);
        (0.01 * scale / d).min(grid.last().map_or(1.0, |&e| (e - t0).max(1e-12)))
    };
    for &target in grid {
        while t < target {
            let last = target - t <= h;
            let step = if last { target - t } else { h };
            let mut k = [0.0; 7];
            k[0] = k0;
            for s in 1..7 {
                let ys = y + step * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
                k[s] = rhs(t + C[s] * step, ys)?;
            }
            let y5 = y + step * (0..7).map(|j| B5[j] * k[j]).sum::<f64>();
            let y4 = y + step * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
            let scale = tol.rel * y.abs().max(y5.abs()).max(tol.floor);
            let err = (y5 - y4).abs() / scale;
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y5;
                k0 = k[6];
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // Only grow h through accepted full steps; a shortened final step
            // says nothing about the admissible size.
            if err > 1.0 || !last {
                h = step * factor;
            }
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(OdeError::StepUnderflow { t });
            }
        }
        out.push(y);
    }
    Ok(out)
}
