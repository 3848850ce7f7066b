//! Adaptive Dormand–Prince 5(4) integrator.

use crate::error::{Error, Result};

/// Relative and absolute error tolerances. The absolute tolerance is
/// multiplied by a per-component scale supplied with each problem.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
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

/// Integrator counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates `dy/dt = f(t, y)` from `t0` and records the state at each of
/// the strictly increasing `samples` (all `>= t0`).
///
/// After every accepted step `post_step` may modify the state in place (for
/// chart changes); it returns `true` if it did.
pub fn integrate<F, P>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    samples: &[f64],
    tol: Tolerances,
    scale: &[f64],
    mut post_step: P,
) -> Result<(Vec<Vec<f64>>, Stats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    P: FnMut(f64, &mut [f64]) -> Result<bool>,
{
    let n = y0.len();
    assert_eq!(scale.len(), n);
    let mut out = Vec::with_capacity(samples.len());
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t, &y, &mut k[0])?;
    stats.evaluations += 1;
    let mut h = initial_step(
        &y,
        &k[0],
        tol,
        scale,
        samples.last().map_or(0.0, |&e| e - t0),
    );
    for &target in samples {
        while t < target {
            let last = target - t <= h * (1.0 + 1e-12);
            let step = if last { target - t } else { h };
            if step <= 1e-14 * t.abs().max(1e-300) || !step.is_finite() {
                return Err(Error::StepUnderflow { t, h: step });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    tmp[i] = acc;
                }
                f(t + C[s] * step, &tmp, &mut k[s])?;
                stats.evaluations += 1;
            }
            let mut err: f64 = 0.0;
            for i in 0..n {
                let mut s5 = 0.0;
                let mut s4 = 0.0;
                for s in 0..7 {
                    s5 += B5[s] * k[s][i];
                    s4 += B4[s] * k[s][i];
                }
                y5[i] = y[i] + step * s5;
                let sc = tol.atol * scale[i] + tol.rtol * y[i].abs().max(y5[i].abs());
                let e = step * (s5 - s4) / sc;
                err += e * e;
            }
            let err = (err / n as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y.copy_from_slice(&y5);
                stats.accepted += 1;
                // FSAL: stage 7 is f at the new point
                let k6 = k[6].clone();
                k[0].copy_from_slice(&k6);
                if post_step(t, &mut y)? {
                    f(t, &y, &mut k[0])?;
                    stats.evaluations += 1;
                }
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                stats.rejected += 1;
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h = step * fac;
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn initial_step(y: &[f64], dy: &[f64], tol: Tolerances, scale: &[f64], span: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..y.len() {
        let sc = tol.atol * scale[i] + tol.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (dy[i] / sc).powi(2);
    }
    let n = y.len() as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h = h.min(0.1 * tol.rtol.powf(0.2) * d0.max(1.0) / d1.max(1e-300));
    if span > 0.0 {
        h.min(span).max(span * 1e-12)
    } else {
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let w = 3.0;
        let samples: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let (ys, stats) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -w * w * y[0];
                Ok(())
            },
            0.0,
            &[1.0, 0.0],
            &samples,
            Tolerances {
                rtol: 1e-10,
                atol: 1e-12,
            },
            &[1.0, w],
            |_, _| Ok(false),
        )
        .unwrap();
        for (t, y) in samples.iter().zip(ys.iter()) {
            assert!((y[0] - (w * t).cos()).abs() < 1e-8, "{t}: {}", y[0]);
        }
        assert!(stats.accepted > 10);
    }

    #[test]
    fn exponential_decay_sample_at_start() {
        let (ys, _) = integrate(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &[0.0, 1.0],
            Tolerances::default(),
            &[1.0],
            |_, _| Ok(false),
        )
        .unwrap();
        assert_eq!(ys[0][0], 1.0);
        assert!((ys[1][0] - (-1.0f64).exp()).abs() < 1e-9);
    }
}
