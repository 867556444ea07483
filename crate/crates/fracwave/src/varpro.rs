//! Variable-projection machinery for the trace model
//!
//!   m(t) = sum_n p_n E_{a,1}(-lambda_n t^a) [+ sum_n p0_n t E_{a,2}(-lambda_n t^a)]
//!
//! (second sum when the trial order exceeds one): the amplitudes enter
//! linearly and are eliminated by a least-squares solve inside an outer
//! optimization over (alpha, lambda_1..lambda_N). The outer optimizer is a
//! small damped least-squares (Levenberg-Marquardt, Nielsen damping) with a
//! central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::mittag_leffler::MlKernel;

pub(crate) struct LmOptions {
    pub max_iters: usize,
    pub gtol: f64,
    pub ftol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 60,
            gtol: 1e-12,
            ftol: 1e-14,
        }
    }
}

pub(crate) struct LmFit {
    pub x: Vec<f64>,
    pub cost: f64,
    #[allow(dead_code)]
    pub converged: bool,
}

/// Minimize 0.5 ||r(x)||^2. The residual closure may reject a point by
/// returning None (treated as an uphill step).
pub(crate) fn lm_minimize<F>(residual: &F, x0: &[f64], opts: &LmOptions) -> LmFit
where
    F: Fn(&[f64]) -> Option<DVector<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = match residual(&x) {
        Some(r) => r,
        None => {
            return LmFit {
                x,
                cost: f64::INFINITY,
                converged: false,
            }
        }
    };
    let mut cost = 0.5 * r.norm_squared();
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut converged = false;

    for _iter in 0..opts.max_iters {
        // central-difference Jacobian
        let m = r.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut ok = true;
        for jcol in 0..n {
            let h = 1e-6 * (1.0 + x[jcol].abs());
            let mut xp = x.clone();
            xp[jcol] += h;
            let mut xm = x.clone();
            xm[jcol] -= h;
            match (residual(&xp), residual(&xm)) {
                (Some(rp), Some(rm)) => {
                    for i in 0..m {
                        jac[(i, jcol)] = (rp[i] - rm[i]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let g = jac.transpose() * &r;
        if g.amax() < opts.gtol {
            converged = true;
            break;
        }
        let a = jac.transpose() * &jac;
        if mu < 0.0 {
            mu = 1e-3 * (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max).max(1e-12);
        }

        let mut accepted = false;
        for _inner in 0..25 {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += mu * a[(i, i)].max(1e-12);
            }
            let delta = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                }
            };
            let x_new: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let r_new = match residual(&x_new) {
                Some(r) => r,
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                }
            };
            let cost_new = 0.5 * r_new.norm_squared();
            let predicted = 0.5 * delta.dot(&(mu * delta.component_mul(&DVector::from_fn(n, |i, _| a[(i, i)].max(1e-12)))) ) + 0.5 * delta.dot(&(-&g));
            let denom = predicted.abs().max(1e-300);
            let rho = (cost - cost_new) / denom;
            if cost_new < cost {
                let shrink: f64 = 1.0 - (2.0 * rho - 1.0).powi(3);
                mu *= shrink.max(1.0 / 3.0);
                nu = 2.0;
                let improvement = cost - cost_new;
                x = x_new;
                r = r_new;
                cost = cost_new;
                accepted = true;
                if improvement <= opts.ftol * cost.max(1e-300) {
                    converged = true;
                }
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if mu > 1e14 {
                break;
            }
        }
        if !accepted || converged {
            if !accepted {
                converged = converged || g.amax() < 1e-8;
            }
            break;
        }
    }
    LmFit { x, cost, converged }
}

/// Result of projecting the linear amplitudes out at fixed (alpha, lambdas).
pub(crate) struct Projection {
    pub residual: DVector<f64>,
    pub amplitudes: Vec<f64>,
    pub condition: f64,
}

/// Trace data with the design-matrix builder for a fixed trial order.
pub(crate) struct TraceDesign<'a> {
    pub times: &'a [f64],
    pub alpha: f64,
    e1: MlKernel,
    e2: Option<MlKernel>,
}

impl<'a> TraceDesign<'a> {
    pub fn new(times: &'a [f64], alpha: f64) -> crate::Result<Self> {
        let e1 = MlKernel::new(alpha, 1.0)?;
        let e2 = if alpha > 1.0 {
            Some(MlKernel::new(alpha, 2.0)?)
        } else {
            None
        };
        Ok(TraceDesign {
            times,
            alpha,
            e1,
            e2,
        })
    }

    pub fn columns_per_mode(&self) -> usize {
        if self.e2.is_some() {
            2
        } else {
            1
        }
    }

    /// Design matrix on the time grid for the given eigenvalues.
    pub fn matrix(&self, lambdas: &[f64]) -> DMatrix<f64> {
        let m = self.times.len();
        let cols = lambdas.len() * self.columns_per_mode();
        let mut a = DMatrix::zeros(m, cols);
        for (k, &t) in self.times.iter().enumerate() {
            let ta = t.powf(self.alpha);
            for (n, &lam) in lambdas.iter().enumerate() {
                let x = lam * ta;
                a[(k, n)] = self.e1.eval_neg(x);
                if let Some(e2) = &self.e2 {
                    a[(k, lambdas.len() + n)] = t * e2.eval_neg(x);
                }
            }
        }
        a
    }

    /// Least-squares amplitude elimination; returns the projected residual
    /// data - A c, the amplitudes, and the design condition number.
    pub fn project(&self, lambdas: &[f64], data: &DVector<f64>) -> Option<Projection> {
        if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        let a = self.matrix(lambdas);
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) {
            return None;
        }
        let c = svd.solve(data, smax * 1e-14).ok()?;
        let residual = data - &a * &c;
        Some(Projection {
            residual,
            amplitudes: c.iter().copied().collect(),
            condition: smax / smin.max(1e-300),
        })
    }
}

/// Inner optimization over the eigenvalues at fixed alpha: LM on log(lambda)
/// with the amplitudes projected out. Returns (lambdas, cost, projection).
pub(crate) fn optimize_lambdas(
    design: &TraceDesign,
    data: &DVector<f64>,
    seeds: &[f64],
    max_iters: usize,
) -> Option<(Vec<f64>, f64, Projection)> {
    let x0: Vec<f64> = seeds.iter().map(|l| l.ln()).collect();
    let residual = |x: &[f64]| -> Option<DVector<f64>> {
        let lambdas: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        if lambdas.iter().any(|l| !l.is_finite() || *l > 1e9) {
            return None;
        }
        design.project(&lambdas, data).map(|p| p.residual)
    };
    let fit = lm_minimize(
        &residual,
        &x0,
        &LmOptions {
            max_iters,
            ..Default::default()
        },
    );
    let mut lambdas: Vec<f64> = fit.x.iter().map(|v| v.exp()).collect();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let proj = design.project(&lambdas, data)?;
    let cost = 0.5 * proj.residual.norm_squared();
    Some((lambdas, cost, proj))
}
