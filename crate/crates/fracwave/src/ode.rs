//! Adaptive Dormand-Prince 5(4) integration for the small linear systems that
//! appear in the shooting method and the Pruefer phase equation.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
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
// 4th-order embedded weights
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integration tolerances. The defaults keep the shooting endpoint values at
/// roughly 1e-12 relative accuracy.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// Integrate y' = f(x, y) from `x0` to `x1`, returning y(x1).
pub fn integrate<const N: usize, F>(f: &F, x0: f64, x1: f64, y0: [f64; N], opts: &OdeOptions) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut out = integrate_path(f, x0, y0, &[x1], opts)?;
    Ok(out.pop().unwrap())
}

/// Integrate y' = f(x, y) from `x0`, producing the state at each point of the
/// ascending list `outputs` (all must be >= x0).
pub fn integrate_path<const N: usize, F>(
    f: &F,
    x0: f64,
    y0: [f64; N],
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<[f64; N]>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut results = Vec::with_capacity(outputs.len());
    let mut x = x0;
    let mut y = y0;
    let mut k0 = f(x, &y);
    let x_end = *outputs.last().unwrap_or(&x0);
    let mut h = initial_step(&y, &k0, opts).min((x_end - x0).abs().max(1e-12));
    let mut out_iter = outputs.iter().peekable();
    let mut steps = 0usize;

    while let Some(&&target) = out_iter.peek() {
        if target < x0 - 1e-15 {
            return Err(Error::Usage("output points must lie at or after x0".into()));
        }
        if (target - x) <= 1e-15 * (1.0 + target.abs()) {
            results.push(y);
            out_iter.next();
            continue;
        }
        // advance one accepted step toward target
        loop {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Numerical(format!(
                    "ODE integrator exceeded {} steps at x = {x:.6e}",
                    opts.max_steps
                )));
            }
            let h_try = h.min(target - x);
            let mut k = [[0.0; N]; 6];
            k[0] = k0;
            for s in 1..6 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += h_try * a * kj[i];
                        }
                    }
                }
                k[s] = f(x + C[s] * h_try, &ys);
            }
            // 5th-order solution is stage row A[6]; FSAL: the last stage is
            // evaluated at the solution point itself
            let mut y5 = y;
            for (j, kj) in k.iter().enumerate().take(6) {
                let a = A[6][j];
                if a != 0.0 {
                    for i in 0..N {
                        y5[i] += h_try * a * kj[i];
                    }
                }
            }
            let k_last = f(x + h_try, &y5);
            let mut err: f64 = 0.0;
            for i in 0..N {
                let mut y4 = y[i];
                for (j, kj) in k.iter().enumerate().take(6) {
                    y4 += h_try * B4[j] * kj[i];
                }
                y4 += h_try * B4[6] * k_last[i];
                let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
                let e = (y5[i] - y4) / sc;
                err += e * e;
            }
            let err = (err / N as f64).sqrt();
            if err <= 1.0 {
                x += h_try;
                y = y5;
                k0 = k_last;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
                h = (h_try * grow).max(1e-14);
                break;
            }
            h = (h_try * (0.9 * err.powf(-0.2)).max(0.1)).max(1e-14);
            if h < 1e-13 * (1.0 + x.abs()) {
                return Err(Error::Numerical(format!(
                    "ODE step size underflow at x = {x:.6e}"
                )));
            }
        }
        if (target - x) <= 1e-15 * (1.0 + target.abs()) {
            results.push(y);
            out_iter.next();
        }
    }
    Ok(results)
}

fn initial_step<const N: usize>(y: &[f64; N], dy: &[f64; N], _opts: &OdeOptions) -> f64 {
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nd = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nd > 1e-10 {
        (0.01 * (ny + 1.0) / nd).min(0.1).max(1e-8)
    } else {
        1e-3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_exponential() {
        let f = |_x: f64, y: &[f64; 1]| [-2.0 * y[0]];
        let y = integrate(&f, 0.0, 3.0, [1.0], &OdeOptions::default()).unwrap();
        assert!((y[0] - (-6.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn integrates_oscillator_with_outputs() {
        // y'' = -w^2 y, y(0)=1, y'(0)=0 -> y = cos(w x)
        let w = 20.0;
        let f = move |_x: f64, y: &[f64; 2]| [y[1], -w * w * y[0]];
        let outs = [0.25, 0.5, 0.75, 1.0];
        let ys = integrate_path(&f, 0.0, [1.0, 0.0], &outs, &OdeOptions::default()).unwrap();
        for (x, y) in outs.iter().zip(&ys) {
            assert!((y[0] - (w * x).cos()).abs() < 1e-10, "x={x}");
            assert!((y[1] + w * (w * x).sin()).abs() < 1e-8 * w, "x={x}");
        }
    }

    #[test]
    fn rejects_backward_outputs() {
        let f = |_x: f64, y: &[f64; 1]| [y[0]];
        assert!(integrate_path(&f, 0.0, [1.0], &[-1.0], &OdeOptions::default()).is_err());
    }
}
