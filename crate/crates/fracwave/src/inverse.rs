//! Inverse pipeline: recover the order and the spectral data from a boundary
//! trace by variable projection, recover the operator (p, h, H) by spectral
//! matching against the fitted eigenvalues and endpoint amplitude ratios,
//! rebuild the initial data, deconvolve source measurements down to
//! initial-value measurements, and quantify the distinguishability of two
//! parameter tuples.
//!
//! The trace at x = 0 with phi_n(0) = 1 normalization carries the structural
//! model sum_n p_n E_{a,1}(-lambda_n t^a) [+ p0_n t E_{a,2}]; the right trace
//! supplies phi_n(1) through the ratio of the right to left amplitudes of
//! the same mode. Order recovery scans a multi-start alpha grid (the
//! landscape is multimodal in the order) and refines the winner by a golden
//! section; the fit window must include late times, where the heavy
//! t^{-alpha} tail separates the order from the eigenvalue scale.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{boundary_trace, BoundaryTrace, ModelParams};
use crate::grid::{CubicSpline, GridFn, UniformGrid};
use crate::quad::gl8;
use crate::sturm::{
    eigen_endpoints, eigensystem, InitialData, ModeCoefficients, Potential, RobinPair, Spectrum,
};
use crate::varpro::{lm_minimize, optimize_lambdas, LmOptions, TraceDesign};

/// One fitted mode of the trace model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedMode {
    pub lambda: f64,
    pub p: f64,
    pub p0: Option<f64>,
}

/// Fitted order and spectral data of a boundary trace.
#[derive(Debug, Clone)]
pub struct SpectralFingerprint {
    pub alpha: f64,
    pub modes: Vec<FittedMode>,
    /// Root-mean-square trace misfit.
    pub residual: f64,
    /// Misfit relative to the data norm.
    pub relative_residual: f64,
    /// Near-degenerate eigenvalues produce an ill-conditioned design.
    pub condition_warning: bool,
    /// Set when the data cannot be fitted (vanishing trace or residual above
    /// the failure threshold): the non-vanishing eigenmode hypothesis failed.
    pub failed: bool,
}

impl SpectralFingerprint {
    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.p).collect()
    }
}

/// Tuning knobs for [`fit_order_and_modes`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Multi-start grid step over the admissible orders.
    pub multistart_step: f64,
    /// Relative residual beyond which the fit is flagged as failed.
    pub fail_threshold: f64,
    /// Iteration budget of the per-branch eigenvalue optimization.
    pub branch_iters: usize,
    /// Iteration budget of the final polish.
    pub polish_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            multistart_step: 0.05,
            fail_threshold: 0.05,
            branch_iters: 14,
            polish_iters: 60,
        }
    }
}

const N_FIT_CAP: usize = 8;

/// Recover (alpha, lambda_n, p_n [, p0_n]) from the left boundary trace by
/// variable projection with an alpha multi-start.
pub fn fit_order_and_modes(
    trace: &BoundaryTrace,
    n: usize,
    alpha_bounds: (f64, f64),
) -> Result<SpectralFingerprint> {
    fit_order_and_modes_with(trace, n, alpha_bounds, &FitOptions::default())
}

pub fn fit_order_and_modes_with(
    trace: &BoundaryTrace,
    n: usize,
    alpha_bounds: (f64, f64),
    opts: &FitOptions,
) -> Result<SpectralFingerprint> {
    if n == 0 || n > N_FIT_CAP {
        return Err(Error::Usage(format!(
            "mode count must lie in 1..={N_FIT_CAP}, got {n}"
        )));
    }
    let (lo, hi) = (alpha_bounds.0.max(0.02), alpha_bounds.1.min(1.98));
    if !(lo < hi) {
        return Err(Error::Usage("empty alpha bounds".into()));
    }
    let data = DVector::from_vec(trace.left.clone());
    let data_norm = data.norm();
    if data_norm < 1e-13 {
        // vanishing trace: every eigenmode of the data is silent
        return Ok(SpectralFingerprint {
            alpha: 0.5 * (lo + hi),
            modes: (0..n)
                .map(|k| FittedMode {
                    lambda: ((k + 1) as f64).powi(2),
                    p: 0.0,
                    p0: None,
                })
                .collect(),
            residual: 0.0,
            relative_residual: 0.0,
            condition_warning: false,
            failed: true,
        });
    }

    // data-driven scale for the slowest eigenvalue
    let lambda1_guess = {
        let m0 = trace.left[0].abs().max(1e-300);
        let t_half = trace
            .times
            .iter()
            .zip(&trace.left)
            .find(|(_, v)| v.abs() <= 0.5 * m0)
            .map(|(t, _)| *t)
            .unwrap_or(*trace.times.last().unwrap());
        1.0_f64 / t_half.max(1e-12)
    };

    // stage 1: multi-start over the alpha grid with a seed ladder
    let mut grid_alphas = Vec::new();
    let mut a = lo;
    while a <= hi + 1e-12 {
        grid_alphas.push(a.min(hi));
        a += opts.multistart_step;
    }
    let branch = |alpha: f64| -> Option<(f64, f64, Vec<f64>)> {
        let design = TraceDesign::new(&trace.times, alpha).ok()?;
        let l1 = lambda1_guess.powf(alpha).max(1e-4);
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (kappa, sigma) in [
            (1.0, 1.0),
            (1.0, 0.85),
            (1.0, 1.2),
            (0.5, 1.0),
            (2.0, 1.0),
            (1.0, 1.5),
        ] {
            let seeds: Vec<f64> = (0..n)
                .map(|k| kappa * l1 + sigma * pi2 * (k * k) as f64 + 2.0 * k as f64)
                .collect();
            if let Some((lams, cost, _)) =
                optimize_lambdas(&design, &data, &seeds, opts.branch_iters)
            {
                if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                    best = Some((cost, lams));
                }
            }
        }
        best.map(|(cost, lams)| (alpha, cost, lams))
    };
    let branches: Vec<(f64, f64, Vec<f64>)> =
        grid_alphas.par_iter().filter_map(|&a| branch(a)).collect();
    let (mut alpha_best, _, mut lams_best) = branches
        .iter()
        .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
        .cloned()
        .ok_or_else(|| Error::Fit("no multistart branch converged".into()))?;

    // stage 2: golden refinement of the order around the winning branch
    let cost_at = |alpha: f64, warm: &[f64]| -> Option<(f64, Vec<f64>)> {
        let design = TraceDesign::new(&trace.times, alpha).ok()?;
        optimize_lambdas(&design, &data, warm, 25).map(|(l, c, _)| (c, l))
    };
    let phi = 0.5 * (3.0_f64.sqrt() - 1.0) + 0.5 - 0.5; // placeholder, replaced below
    let _ = phi;
    let gr = 0.618_033_988_749_894_9_f64;
    let mut a_lo = (alpha_best - opts.multistart_step).max(lo);
    let mut a_hi = (alpha_best + opts.multistart_step).min(hi);
    let mut x1 = a_hi - gr * (a_hi - a_lo);
    let mut x2 = a_lo + gr * (a_hi - a_lo);
    let mut f1 = cost_at(x1, &lams_best);
    let mut f2 = cost_at(x2, &lams_best);
    for _ in 0..36 {
        let (c1, c2) = match (&f1, &f2) {
            (Some((c1, _)), Some((c2, _))) => (*c1, *c2),
            _ => break,
        };
        if c1 < c2 {
            a_hi = x2;
            x2 = x1;
            f2 = f1.clone();
            x1 = a_hi - gr * (a_hi - a_lo);
            f1 = cost_at(x1, &lams_best);
        } else {
            a_lo = x1;
            x1 = x2;
            f1 = f2.clone();
            x2 = a_lo + gr * (a_hi - a_lo);
            f2 = cost_at(x2, &lams_best);
        }
        if a_hi - a_lo < 1e-7 {
            break;
        }
    }
    if let Some((c, l)) = [&f1, &f2].iter().filter_map(|f| f.as_ref()).min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()) {
        let _ = c;
        alpha_best = if f1.as_ref().map(|v| v.0) <= f2.as_ref().map(|v| v.0) {
            x1
        } else {
            x2
        };
        lams_best = l.clone();
    }

    // the fractional grid point alpha = 1 is a closed-form branch; prefer it
    // when it is at least as good as the refined fractional fit
    if (lo..=hi).contains(&1.0) {
        if let Some((c_one, l_one)) = cost_at(1.0, &lams_best) {
            let c_ref = cost_at(alpha_best, &lams_best).map(|v| v.0).unwrap_or(f64::INFINITY);
            if c_one <= c_ref {
                alpha_best = 1.0;
                lams_best = l_one;
            }
        }
    }

    // final polish at the refined order
    let design = TraceDesign::new(&trace.times, alpha_best)?;
    let (lambdas, cost, proj) = optimize_lambdas(&design, &data, &lams_best, opts.polish_iters)
        .ok_or_else(|| Error::Fit("final projection failed".into()))?;
    let with_second = design.columns_per_mode() == 2;
    let modes: Vec<FittedMode> = (0..n)
        .map(|k| FittedMode {
            lambda: lambdas[k],
            p: proj.amplitudes[k],
            p0: with_second.then(|| proj.amplitudes[n + k]),
        })
        .collect();
    let residual = (2.0 * cost / trace.len() as f64).sqrt();
    let relative = (2.0 * cost).sqrt() / data_norm;
    Ok(SpectralFingerprint {
        alpha: alpha_best,
        modes,
        residual,
        relative_residual: relative,
        condition_warning: proj.condition > 1e8,
        failed: relative > opts.fail_threshold,
    })
}

/// Numerical Laplace data in the substituted variable xi = z^alpha, where the
/// trace model becomes the rational sum
///   G(xi) = z^{1-alpha} (L m)(z)|_{z = xi^{1/alpha}} = sum_n p_n/(xi + lambda_n).
#[derive(Debug, Clone)]
pub struct LaplaceSamples {
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when the trace has not decayed by the end of the window, so the
    /// truncated tail biases the transform.
    pub tail_bias_warning: bool,
}

pub fn laplace_trace(trace: &BoundaryTrace, alpha: f64, xi_grid: &[f64]) -> Result<LaplaceSamples> {
    if xi_grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Usage("xi grid must be positive".into()));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    let m_sup = trace.left.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tail_bias_warning = trace.left.last().unwrap().abs() > 0.5 * m_sup;

    let spline = CubicSpline::new(&trace.times, &trace.left)?;
    // head model on [0, t_0]: m(t) ~ c0 + c1 t^alpha fitted to the first samples
    let k_head = trace.len().min(6);
    let (c0, c1) = {
        let mut s_uu = 0.0;
        let mut s_u = 0.0;
        let mut s_1 = 0.0;
        let mut s_yu = 0.0;
        let mut s_y = 0.0;
        for i in 0..k_head {
            let u = trace.times[i].powf(alpha);
            let y = trace.left[i];
            s_uu += u * u;
            s_u += u;
            s_1 += 1.0;
            s_yu += y * u;
            s_y += y;
        }
        let det = s_1 * s_uu - s_u * s_u;
        if det.abs() < 1e-300 {
            (trace.left[0], 0.0)
        } else {
            ((s_y * s_uu - s_yu * s_u) / det, (s_1 * s_yu - s_u * s_y) / det)
        }
    };
    let t0 = trace.times[0];
    let t_end = *trace.times.last().unwrap();

    let values = xi_grid
        .iter()
        .map(|&xi| {
            let z = xi.powf(1.0 / alpha);
            // head: exact enough by Gauss panels on the smooth model
            let mut acc = 0.0;
            for cell in crate::quad::graded_edges(0.0, t0, 6, 2.0).windows(2) {
                acc += gl8(
                    |t: f64| (-z * t).exp() * (c0 + c1 * t.powf(alpha)),
                    cell[0],
                    cell[1],
                );
            }
            // body: spline of the sampled trace, panel per sample interval
            for w in trace.times.windows(2) {
                if z * w[0] > 700.0 {
                    break;
                }
                acc += gl8(|t: f64| (-z * t).exp() * spline.eval(t), w[0], w[1]);
            }
            let _ = t_end;
            z.powf(1.0 - alpha) * acc
        })
        .collect();
    Ok(LaplaceSamples {
        xi: xi_grid.to_vec(),
        values,
        tail_bias_warning,
    })
}

/// Recovered operator parameters from spectral matching.
#[derive(Debug, Clone)]
pub struct OperatorFit {
    pub coeffs: Vec<f64>,
    pub potential: Potential,
    pub robin: RobinPair,
    /// Final spectral misfit (rms over the residual entries).
    pub misfit: f64,
    /// The optimizer stalled above the expected noiseless floor.
    pub stagnated: bool,
    /// phi_n(1) targets extracted from the right/left amplitude ratios.
    pub phi_end_targets: Vec<f64>,
}

/// Options for [`recover_operator`].
#[derive(Debug, Clone)]
pub struct RecoverOptions {
    /// Spatial grid cells of the candidate potential.
    pub grid_cells: usize,
    /// Robin seeds tried before keeping the best optimum.
    pub robin_seeds: Vec<(f64, f64)>,
    /// Optional full warm start (h, H, basis coefficients).
    pub warm_start: Option<(f64, f64, Vec<f64>)>,
    pub max_iters: usize,
    /// Misfit above which the result is flagged as stagnated.
    pub stagnation_threshold: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions {
            grid_cells: 64,
            robin_seeds: vec![(1.0, 1.0), (0.5, 2.0), (2.0, 0.8)],
            warm_start: None,
            max_iters: 50,
            stagnation_threshold: 1e-4,
        }
    }
}

/// Recover (p, h, H) from the fitted eigenvalues of the left trace plus the
/// endpoint values phi_n(1) carried by the right trace; p is parametrized by
/// `basis_dim` cosine coefficients. Requires at least basis_dim + 2 fitted
/// modes (two data streams per mode against basis_dim + 2 unknowns).
pub fn recover_operator(
    fp: &SpectralFingerprint,
    trace_right: &BoundaryTrace,
    basis_dim: usize,
    opts: &RecoverOptions,
) -> Result<OperatorFit> {
    let n = fp.modes.len();
    if basis_dim == 0 {
        return Err(Error::Usage("basis_dim must be positive".into()));
    }
    if n < basis_dim + 2 {
        return Err(Error::Usage(format!(
            "under-determined recovery: {n} fitted modes for {} unknowns",
            basis_dim + 2
        )));
    }
    if fp.failed {
        return Err(Error::Fit(
            "cannot recover an operator from a failed fingerprint".into(),
        ));
    }

    // right-trace amplitudes at the fitted (alpha, lambda)
    let design = TraceDesign::new(&trace_right.times, fp.alpha)?;
    let lambdas = fp.lambdas();
    let data_r = DVector::from_vec(trace_right.right.clone());
    let proj = design
        .project(&lambdas, &data_r)
        .ok_or_else(|| Error::Fit("right-trace projection failed".into()))?;
    // phi_n(1) = (right amplitudes) / (left amplitudes), combining both
    // kernels in least squares when the order exceeds one
    let phi_end_targets: Vec<f64> = (0..n)
        .map(|k| {
            let p = fp.modes[k].p;
            let r = proj.amplitudes[k];
            match fp.modes[k].p0 {
                Some(p0) => {
                    let r0 = proj.amplitudes[n + k];
                    (r * p + r0 * p0) / (p * p + p0 * p0).max(1e-300)
                }
                None => r / p,
            }
        })
        .collect();

    // spectral-matching misfit over (c, ln h, ln H)
    let cells = opts.grid_cells;
    let lam_targets = lambdas.clone();
    let residual = |x: &[f64]| -> Option<DVector<f64>> {
        let (coeffs, lh, lbh) = split_params(x, basis_dim);
        let h = lh.exp();
        let bh = lbh.exp();
        if !(1e-4..=1e4).contains(&h) || !(1e-4..=1e4).contains(&bh) {
            return None;
        }
        let grid = UniformGrid::new(cells).ok()?;
        let raw: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&xx| cos_series(coeffs, xx))
            .collect();
        let neg = raw.iter().fold(0.0_f64, |m, v| m.max(-v));
        let clamped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
        let p = Potential::new(grid, clamped).ok()?;
        let robin = RobinPair::new(h, bh).ok()?;
        let ends = eigen_endpoints(&p, &robin, n).ok()?;
        let mut res = Vec::with_capacity(2 * n + 1);
        for k in 0..n {
            res.push((ends[k].0 - lam_targets[k]) / lam_targets[k].max(1.0));
        }
        for k in 0..n {
            res.push(ends[k].1 - phi_end_targets[k]);
        }
        res.push(10.0 * neg);
        Some(DVector::from_vec(res))
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some((h0, bh0, c0)) = &opts.warm_start {
        let mut s = c0.clone();
        s.resize(basis_dim, 0.0);
        s.push(h0.ln());
        s.push(bh0.ln());
        starts.push(s);
    }
    // asymptotic hint: omega/pi from the top fitted eigenvalues
    let omega_hint = {
        let m = (n - 1) as f64;
        let s = lambdas[n - 1].sqrt();
        (m * (s - m * std::f64::consts::PI)).max(0.1) * std::f64::consts::PI
    };
    for &(h0, bh0) in &opts.robin_seeds {
        let mut s = vec![0.0; basis_dim];
        s[0] = (2.0 * (omega_hint - h0 - bh0)).clamp(0.05, 5.0);
        s.push(h0.ln());
        s.push(bh0.ln());
        starts.push(s);
    }

    let fits: Vec<_> = starts
        .par_iter()
        .map(|s| {
            lm_minimize(
                &residual,
                s,
                &LmOptions {
                    max_iters: opts.max_iters,
                    ..Default::default()
                },
            )
        })
        .collect();
    let best = fits
        .into_iter()
        .min_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap())
        .ok_or_else(|| Error::Fit("operator recovery produced no candidate".into()))?;

    let (coeffs, lh, lbh) = split_params(&best.x, basis_dim);
    let grid = UniformGrid::new(cells)?;
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&xx| cos_series(coeffs, xx).max(0.0))
        .collect();
    let potential = Potential::new(grid, values)?;
    let robin = RobinPair::new(lh.exp(), lbh.exp())?;
    let misfit = (2.0 * best.cost / (2 * n + 1) as f64).sqrt();
    Ok(OperatorFit {
        coeffs: coeffs.to_vec(),
        potential,
        robin,
        misfit,
        stagnated: misfit > opts.stagnation_threshold,
        phi_end_targets,
    })
}

fn split_params(x: &[f64], basis_dim: usize) -> (&[f64], f64, f64) {
    (&x[..basis_dim], x[basis_dim], x[basis_dim + 1])
}

fn cos_series(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * (i as f64 * std::f64::consts::PI * x).cos())
        .sum()
}

/// Rebuild the initial data from the fitted amplitudes in the recovered
/// eigenbasis: a = sum_n p_n phi_n (and a0 from p0_n when present).
pub fn recover_initial(fp: &SpectralFingerprint, spec: &Spectrum) -> Result<InitialData> {
    if fp.modes.len() > spec.len() {
        return Err(Error::Usage(
            "spectrum carries fewer modes than the fingerprint".into(),
        ));
    }
    let grid = spec.grid();
    let synth = |amp: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                (0..fp.modes.len())
                    .map(|k| amp(k) * spec.phi(k)[i])
                    .sum::<f64>()
            })
            .collect()
    };
    let a_vals = synth(&|k| fp.modes[k].p);
    let a = GridFn::new(grid, a_vals)?;
    let a0 = if fp.modes.iter().any(|m| m.p0.is_some()) {
        let vals = synth(&|k| fp.modes[k].p0.unwrap_or(0.0));
        Some(GridFn::new(grid, vals)?)
    } else {
        None
    };
    // recovered series data satisfies the Robin conditions only as well as
    // the truncated eigenfunction sum does
    InitialData::with_tolerance(a, a0, &spec.robin(), 0.05)
}

/// Deconvolved initial-value trace recovered from source measurements.
#[derive(Debug, Clone)]
pub struct Deconvolved {
    pub trace: BoundaryTrace,
    pub regularization: f64,
    /// theta(0) ~ 0 makes the first-kind equation severely ill-posed.
    pub severe_ill_posedness: bool,
}

/// Solve the first-kind Volterra equation int_0^t theta(t-s) u(s) ds = d(t)
/// for the initial-value trace u, where d is the fractional integral
/// I^{1-alpha} (alpha < 1), identity (alpha = 1) or I^{2-alpha} (alpha > 1)
/// of the measured source trace — the computational form of the Duhamel
/// reduction of the source problem to the initial-value problem.
/// Product integration on the trace grid with second-difference Tikhonov
/// regularization; the parameter follows the discrepancy principle at the
/// supplied noise level (floor value when noiseless).
pub fn deconvolve_source<F: Fn(f64) -> f64>(
    trace_src: &BoundaryTrace,
    theta: F,
    alpha: f64,
    noise_level: f64,
) -> Result<Deconvolved> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    let theta_sup = trace_src
        .times
        .iter()
        .map(|&t| theta(t).abs())
        .fold(0.0_f64, f64::max);
    if theta_sup == 0.0 {
        return Err(Error::Usage("theta must not vanish identically".into()));
    }
    let severe = theta(0.0).abs() < 1e-8 * theta_sup;

    // nodes: t = 0 (u unknown there too) plus the trace times
    let k = trace_src.len();
    let mut nodes = Vec::with_capacity(k + 1);
    nodes.push(0.0);
    nodes.extend_from_slice(&trace_src.times);

    // Volterra matrix by product integration with piecewise-linear u
    let mut a = DMatrix::zeros(k, k + 1);
    for (row, &t) in trace_src.times.iter().enumerate() {
        for cell in 0..=row {
            let (s0, s1) = (nodes[cell], nodes[cell + 1]);
            let d = s1 - s0;
            // int theta(t-s) (s1-s)/d ds and int theta(t-s) (s-s0)/d ds
            let mut w0 = 0.0;
            let mut w1 = 0.0;
            let val = gl8(
                |s: f64| {
                    let th = theta(t - s);
                    th * (s1 - s) / d
                },
                s0,
                s1,
            );
            w0 += val;
            let val = gl8(
                |s: f64| {
                    let th = theta(t - s);
                    th * (s - s0) / d
                },
                s0,
                s1,
            );
            w1 += val;
            a[(row, cell)] += w0;
            a[(row, cell + 1)] += w1;
        }
    }

    // fractional integral of the measured trace by exact moments of the
    // piecewise-linear interpolant (value 0 at t = 0)
    let frac_integral = |values: &[f64]| -> Vec<f64> {
        if (alpha - 1.0).abs() < 1e-13 {
            return values.to_vec();
        }
        let nu = if alpha < 1.0 { 1.0 - alpha } else { 2.0 - alpha };
        let gamma_nu = crate::gamma::gamma(nu);
        let mut ext = vec![0.0; k + 1];
        ext[1..].copy_from_slice(values);
        trace_src
            .times
            .iter()
            .map(|&t| {
                let mut acc = 0.0;
                for cell in 0..k {
                    let (s0, s1) = (nodes[cell], nodes[cell + 1]);
                    if s0 >= t {
                        break;
                    }
                    let s1c = s1.min(t);
                    let aa = t - s0;
                    let bb = t - s1c;
                    // moments of (t-s)^{nu-1} against the linear interpolant
                    let m0 = (aa.powf(nu) - bb.powf(nu)) / nu;
                    let m1 = (aa * (aa.powf(nu) - bb.powf(nu)) / nu
                        - (aa.powf(nu + 1.0) - bb.powf(nu + 1.0)) / (nu + 1.0))
                        / (s1 - s0);
                    let v0 = ext[cell];
                    let v1 = ext[cell + 1];
                    acc += v0 * m0 + (v1 - v0) * m1;
                }
                acc / gamma_nu
            })
            .collect()
    };

    // second-difference penalty on the nonuniform node set
    let mut l = DMatrix::zeros(k.saturating_sub(1), k + 1);
    for i in 1..k {
        let h0 = nodes[i] - nodes[i - 1];
        let h1 = nodes[i + 1] - nodes[i];
        let scale = 0.5 * (h0 + h1);
        l[(i - 1, i - 1)] = 2.0 / (h0 * (h0 + h1)) * scale;
        l[(i - 1, i)] = -2.0 / (h0 * h1) * scale;
        l[(i - 1, i + 1)] = 2.0 / (h1 * (h0 + h1)) * scale;
    }

    let ata = a.transpose() * &a;
    let ltl = l.transpose() * &l;
    let scale_ratio = ata.trace() / ltl.trace().max(1e-300);

    let solve_side = |values: &[f64]| -> Result<(Vec<f64>, f64)> {
        let d = DVector::from_vec(frac_integral(values));
        let atd = a.transpose() * &d;
        let solve_mu = |mu: f64| -> Option<DVector<f64>> {
            let m = &ata + &ltl * mu;
            m.cholesky().map(|ch| ch.solve(&atd))
        };
        if noise_level <= 0.0 {
            let mu = 1e-10 * scale_ratio;
            let u = solve_mu(mu)
                .ok_or_else(|| Error::Numerical("regularized system not SPD".into()))?;
            return Ok((u.iter().copied().collect(), mu));
        }
        // discrepancy principle with safety factor 1.2: smallest mu on a
        // log ladder whose residual reaches the noise floor
        let d_noise = 1.2 * noise_level * d.norm();
        let mut chosen = (1e-12 * scale_ratio, None);
        for j in 0..40 {
            let mu = 1e-12 * scale_ratio * 10f64.powf(j as f64 * 0.35);
            if let Some(u) = solve_mu(mu) {
                let r = (&a * &u - &d).norm();
                chosen = (mu, Some(u.clone()));
                if r >= d_noise {
                    break;
                }
            }
        }
        match chosen.1 {
            Some(u) => Ok((u.iter().copied().collect(), chosen.0)),
            None => Err(Error::Numerical("regularization failed".into())),
        }
    };

    let (u_left, mu_l) = solve_side(&trace_src.left)?;
    let (u_right, _) = solve_side(&trace_src.right)?;
    let trace = BoundaryTrace::new(
        trace_src.times.clone(),
        u_left[1..].to_vec(),
        u_right[1..].to_vec(),
    )?;
    Ok(Deconvolved {
        trace,
        regularization: mu_l,
        severe_ill_posedness: severe,
    })
}

/// Discrete sup-norm gap between the boundary traces of two parameter tuples
/// over both endpoints; positive whenever the tuples are distinguishable.
pub fn distinguishability(
    params_a: &ModelParams,
    data_a: &InitialData,
    params_b: &ModelParams,
    data_b: &InitialData,
    t_max: f64,
    t_count: usize,
    n_modes: usize,
) -> Result<f64> {
    let ts = crate::forward::log_times(1e-4 * t_max, t_max, t_count);
    let spec_a = eigensystem(params_a.potential(), params_a.robin(), n_modes)?;
    let coeff_a = crate::sturm::mode_coefficients(data_a, &spec_a)?;
    let (tr_a, _) = boundary_trace(params_a, data_a, &spec_a, &coeff_a, &ts)?;
    let spec_b = eigensystem(params_b.potential(), params_b.robin(), n_modes)?;
    let coeff_b = crate::sturm::mode_coefficients(data_b, &spec_b)?;
    let (tr_b, _) = boundary_trace(params_b, data_b, &spec_b, &coeff_b, &ts)?;
    let mut gap: f64 = 0.0;
    for i in 0..ts.len() {
        gap = gap.max((tr_a.left[i] - tr_b.left[i]).abs());
        gap = gap.max((tr_a.right[i] - tr_b.right[i]).abs());
    }
    Ok(gap)
}

/// True when every mode n <= n_max is excited above `tol` by at least one of
/// the coefficient sets — the multi-input union form of the non-vanishing
/// eigenmode hypothesis.
pub fn assumption_union_check(sets: &[&ModeCoefficients], n_max: usize, tol: f64) -> bool {
    if sets.is_empty() {
        return false;
    }
    (0..n_max).all(|k| sets.iter().any(|c| k < c.len() && c.excitation(k) >= tol))
}

/// Full closed-loop recovery output.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub fingerprint: SpectralFingerprint,
    pub params: ModelParams,
    pub coeffs: Vec<f64>,
    pub initial: InitialData,
    pub spectrum: Spectrum,
    pub operator_misfit: f64,
    pub stagnated: bool,
    /// Sup-norm mismatch of the traces resynthesized from the recovery.
    pub resynthesis_residual: f64,
}

/// Options for [`recover_all`].
#[derive(Debug, Clone)]
pub struct RecoveryOptions {
    pub n_fit: usize,
    pub alpha_bounds: (f64, f64),
    pub basis_dim: usize,
    pub fit: FitOptions,
    pub operator: RecoverOptions,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            n_fit: 5,
            alpha_bounds: (0.05, 1.95),
            basis_dim: 3,
            fit: FitOptions::default(),
            operator: RecoverOptions::default(),
        }
    }
}

/// The full pipeline: fit order and modes from the left trace, recover the
/// operator from the eigenvalues plus right-trace amplitude ratios, rebuild
/// the initial data, and resynthesize the traces as a self-check.
pub fn recover_all(trace: &BoundaryTrace, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    let fp = fit_order_and_modes_with(trace, opts.n_fit, opts.alpha_bounds, &opts.fit)?;
    if fp.failed {
        return Err(Error::Fit(format!(
            "trace fit failed (relative residual {:.3e}); the eigenmode hypothesis may be violated",
            fp.relative_residual
        )));
    }
    let op = recover_operator(&fp, trace, opts.basis_dim, &opts.operator)?;
    let spec = eigensystem(&op.potential, &op.robin, fp.modes.len())?;
    let initial = recover_initial(&fp, &spec)?;
    let params = ModelParams::new(fp.alpha, op.potential.clone(), op.robin)?;
    let coeffs = crate::sturm::mode_coefficients(&initial, &spec)?;
    let (resynth, _) = boundary_trace(&params, &initial, &spec, &coeffs, &trace.times)?;
    let mut res: f64 = 0.0;
    for i in 0..trace.len() {
        res = res.max((resynth.left[i] - trace.left[i]).abs());
        res = res.max((resynth.right[i] - trace.right[i]).abs());
    }
    Ok(RecoveryResult {
        fingerprint: fp,
        params,
        coeffs: op.coeffs,
        initial,
        spectrum: spec,
        operator_misfit: op.misfit,
        stagnated: op.stagnated,
        resynthesis_residual: res,
    })
}
