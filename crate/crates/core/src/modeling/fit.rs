//! Constrained least-squares fit of `a·exp(−b·m) + c`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decay::ExpDecay;
use crate::error::{Error, Result};

const MAX_ITERATIONS: u32 = 200;
const STEP_TOLERANCE: f64 = 1e-9;
const GRID_POINTS: usize = 25;
const GRID_STARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Root mean squared residual (ms).
    pub rmse: f64,
    pub n_samples: usize,
    /// Mean residual (prediction − observation) per size (ms).
    pub residuals: BTreeMap<u32, f64>,
    pub converged: bool,
    pub iterations: u32,
    /// All observations were equal; the curve is flat.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub params: ExpDecay,
    pub diagnostics: FitDiagnostics,
}

/// Scaled problem: x = m / m_max, y = latency / y_max, p = (a, β, c) with β = b·m_max.
struct Problem {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Run {
    p: [f64; 3],
    sse: f64,
    converged: bool,
    iterations: u32,
}

impl Problem {
    fn sse(&self, p: [f64; 3]) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(&x, &y)| {
                let r = p[0] * (-p[1] * x).exp() + p[2] - y;
                r * r
            })
            .sum()
    }

    /// Best non-negative (a, c) for a fixed β.
    fn profile(&self, beta: f64) -> [f64; 3] {
        let n = self.x.len() as f64;
        let phi: Vec<f64> = self.x.iter().map(|&x| (-beta * x).exp()).collect();
        let sp: f64 = phi.iter().sum();
        let spp: f64 = phi.iter().map(|p| p * p).sum();
        let sy: f64 = self.y.iter().sum();
        let spy: f64 = phi.iter().zip(&self.y).map(|(p, y)| p * y).sum();
        let det = n * spp - sp * sp;
        let (mut a, mut c) = if det.abs() > 1e-300 {
            ((n * spy - sp * sy) / det, (spp * sy - sp * spy) / det)
        } else {
            (0.0, sy / n)
        };
        if a < 0.0 {
            a = 0.0;
            c = sy / n;
        }
        if c < 0.0 {
            c = 0.0;
            a = if spp > 0.0 { (spy / spp).max(0.0) } else { 0.0 };
        }
        [a, beta, c]
    }

    fn gauss_newton(&self, start: [f64; 3]) -> Run {
        let mut p = start.map(|v| v.max(0.0));
        let mut sse = self.sse(p);
        for it in 1..=MAX_ITERATIONS {
            let mut jtj = [[0.0; 3]; 3];
            let mut jtr = [0.0; 3];
            for (&x, &y) in self.x.iter().zip(&self.y) {
                let e = (-p[1] * x).exp();
                let j = [e, -p[0] * x * e, 1.0];
                let r = p[0] * e + p[2] - y;
                for u in 0..3 {
                    jtr[u] += j[u] * r;
                    for v in 0..3 {
                        jtj[u][v] += j[u] * j[v];
                    }
                }
            }
            let Some(delta) = solve3(jtj, jtr.map(|v| -v)) else {
                return Run {
                    p,
                    sse,
                    converged: false,
                    iterations: it,
                };
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = [0, 1, 2].map(|k| (p[k] + t * delta[k]).max(0.0));
                let s = self.sse(cand);
                if s <= sse {
                    accepted = Some((cand, s));
                    break;
                }
                t *= 0.5;
            }
            let Some((next, s)) = accepted else {
                // No descent direction left: a (projected) stationary point.
                return Run {
                    p,
                    sse,
                    converged: true,
                    iterations: it,
                };
            };
            let step = (0..3)
                .map(|k| (next[k] - p[k]).abs() / p[k].abs().max(1e-12))
                .fold(0.0, f64::max);
            p = next;
            sse = s;
            if step < STEP_TOLERANCE || sse == 0.0 {
                return Run {
                    p,
                    sse,
                    converged: true,
                    iterations: it,
                };
            }
        }
        Run {
            p,
            sse,
            converged: false,
            iterations: MAX_ITERATIONS,
        }
    }
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        if m[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * out[k]).sum();
        out[row] = (v[row] - tail) / m[row][row];
    }
    Some(out)
}

/// Fits the decay curve to `(size, latency)` observations.
pub fn fit_exponential_decay(points: &[(u32, f64)]) -> Result<Fit> {
    let mut sizes: Vec<u32> = points.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientSizes(sizes.len()));
    }
    if points.iter().any(|p| !p.1.is_finite() || p.1 < 0.0) {
        return Err(Error::Invalid(
            "latencies must be finite and non-negative".into(),
        ));
    }
    let n = points.len();
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n as f64;

    if max - min <= 1e-12 * max.abs() {
        let params = ExpDecay::new(0.0, 0.0, mean);
        return Ok(Fit {
            diagnostics: diagnostics(points, params, true, 0, true),
            params,
        });
    }

    let m_max = *sizes.last().expect("three sizes") as f64;
    let y_max = max;
    let problem = Problem {
        x: points.iter().map(|p| p.0 as f64 / m_max).collect(),
        y: points.iter().map(|p| p.1 / y_max).collect(),
    };

    // Log-linear initial guess on the points above 0.9·min.
    let c0 = 0.9 * min;
    let (mut sx, mut sl, mut sxx, mut sxl, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let d = p.1 - c0;
        if d > 0.0 {
            let x = p.0 as f64 / m_max;
            let l = d.ln();
            sx += x;
            sl += l;
            sxx += x * x;
            sxl += x * l;
            k += 1.0;
        }
    }
    let denom = k * sxx - sx * sx;
    let beta0 = if k >= 2.0 && denom.abs() > 1e-300 {
        (-(k * sxl - sx * sl) / denom).max(0.0)
    } else {
        0.0
    };
    let initial = [(max - min) / y_max, beta0, c0 / y_max];

    let mut best = problem.gauss_newton(initial);

    let mut grid: Vec<(f64, [f64; 3])> = (0..GRID_POINTS)
        .map(|i| {
            let b = 1e-4 * 1e3f64.powf(i as f64 / (GRID_POINTS - 1) as f64);
            let p = problem.profile(b * m_max);
            (problem.sse(p), p)
        })
        .collect();
    grid.sort_by(|l, r| l.0.total_cmp(&r.0));
    for (_, start) in grid.into_iter().take(GRID_STARTS) {
        let run = problem.gauss_newton(start);
        if run.sse < best.sse || (!best.converged && run.converged && run.sse <= best.sse) {
            best = run;
        }
    }

    let params = ExpDecay::new(best.p[0] * y_max, best.p[1] / m_max, best.p[2] * y_max);
    Ok(Fit {
        diagnostics: diagnostics(points, params, best.converged, best.iterations, false),
        params,
    })
}

fn diagnostics(
    points: &[(u32, f64)],
    params: ExpDecay,
    converged: bool,
    iterations: u32,
    constant: bool,
) -> FitDiagnostics {
    let mut per_size: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    let mut sse = 0.0;
    for &(m, y) in points {
        let r = params.eval(m as f64) - y;
        sse += r * r;
        let e = per_size.entry(m).or_default();
        e.0 += r;
        e.1 += 1;
    }
    FitDiagnostics {
        rmse: (sse / points.len() as f64).sqrt(),
        n_samples: points.len(),
        residuals: per_size
            .into_iter()
            .map(|(m, (s, k))| (m, s / k as f64))
            .collect(),
        converged,
        iterations,
        constant,
    }
}
