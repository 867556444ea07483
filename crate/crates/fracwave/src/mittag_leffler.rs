//! Two-parameter Mittag-Leffler function E_{alpha,beta}(z) on the real line
//! and the time kernels of the fractional series solution.
//!
//! E_{alpha,beta}(z) = sum_k z^k / Gamma(alpha k + beta).
//!
//! Evaluation regimes for z < 0 (the solver only needs the negative axis;
//! small positive z is allowed for testing):
//!
//! * |z| <= r0(alpha): Kahan-compensated power series. r0 is calibrated so
//!   the alternating series loses at most ~5 digits to cancellation.
//! * r0 < |z| < r1(alpha): exact branch-cut representation from the inverse
//!   Laplace transform of s^{alpha-beta}/(s^alpha + x),
//!
//!   E(-x) = [residue pair, alpha > 1] +
//!           (1/pi) int_0^inf e^{-r} r^{alpha-beta}
//!                  (x sin(pi(beta-alpha)) + r^alpha sin(pi beta)) /
//!                  ((r^alpha + x cos(pi alpha))^2 + (x sin(pi alpha))^2) dr,
//!
//!   integrated adaptively after a power substitution that removes the
//!   endpoint singularity. Requires beta < 1 + alpha, arranged by the exact
//!   recursion E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z.
//! * |z| >= r1(alpha): algebraic asymptotic series
//!   -sum_k z^{-k}/Gamma(beta - alpha k), plus the residue pair for
//!   alpha > 1 (exponentially damped oscillation).
//! * alpha == 1: e^z, expm1-based for beta = 2, otherwise the Kummer
//!   transform E_{1,b}(-x) = e^{-x} M(b-1, b, x) / Gamma(b) whose series has
//!   no cancellation.
//!
//! The radii r0(alpha) = min(5, 6.5^alpha) and r1(alpha) = max(50, 35^alpha)
//! were calibrated against a multiprecision oracle; adjacent regimes agree to
//! better than 1e-9 relative at the seams (tested below).

use std::f64::consts::PI;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::gamma::{cos_pi, rgamma, sin_pi};
use crate::quad::adaptive_gk_panels;

/// Largest admissible positive argument.
pub const Z_MAX: f64 = 5.0;

/// Order pair for [`ml`]. `alpha` in (0, 2], `beta` > 0.
///
/// The diffusion-wave model itself restricts alpha to (0, 2); alpha = 2 is
/// admitted here because the classical reduction E_{2,1}(-z^2) = cos z is
/// used as a test oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha > 2.0 {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 2], got {alpha}"
            )));
        }
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        Ok(MlParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// E_{alpha,beta}(z) for real z <= Z_MAX, relative accuracy ~1e-10 or better
/// down to z = -1e6 and beyond.
pub fn ml(params: MlParams, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain("argument must be finite".into()));
    }
    if z > Z_MAX {
        return Err(Error::Domain(format!(
            "argument {z} exceeds the positive cap {Z_MAX}"
        )));
    }
    ml_value(params.alpha, params.beta, z)
}

fn series_radius(alpha: f64) -> f64 {
    6.5_f64.powf(alpha).min(5.0)
}

fn asym_radius(alpha: f64) -> f64 {
    35.0_f64.powf(alpha).max(50.0)
}

fn ml_value(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    if (alpha - 1.0).abs() < 1e-13 {
        return ml_alpha_one(beta, z);
    }
    if z > 0.0 || -z <= series_radius(alpha) {
        return ml_series(alpha, beta, z);
    }
    let x = -z;
    if x < asym_radius(alpha) {
        ml_band(alpha, beta, x)
    } else {
        Ok(ml_asym_neg(alpha, beta, x))
    }
}

/// Power series with compensated accumulation.
fn ml_series(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    let mut sum = rgamma(beta);
    let mut comp = 0.0;
    let mut zp = 1.0;
    let mut prev = f64::INFINITY;
    let mut small_streak = 0;
    // small alpha converges slowly near the radius (gamma grows like
    // (alpha k)^alpha); the cap is sized for alpha down to 0.02
    for k in 1..=20_000 {
        zp *= z;
        if !zp.is_finite() {
            break;
        }
        let t = zp * rgamma(alpha * k as f64 + beta);
        let y = t - comp;
        let s_new = sum + y;
        comp = (s_new - sum) - y;
        sum = s_new;
        let ta = t.abs();
        if ta < 1e-17 * sum.abs().max(1e-290) && ta <= prev {
            small_streak += 1;
            if small_streak >= 3 {
                return Ok(sum);
            }
        } else {
            small_streak = 0;
        }
        if ta > 0.0 {
            prev = ta;
        }
    }
    Err(Error::Numerical(format!(
        "Mittag-Leffler series did not converge for alpha={alpha}, beta={beta}, z={z}"
    )))
}

/// alpha == 1 exactly.
fn ml_alpha_one(beta: f64, z: f64) -> Result<f64> {
    if (beta - 1.0).abs() < 1e-14 {
        return Ok(z.exp());
    }
    if (beta - 2.0).abs() < 1e-14 {
        return Ok(if z.abs() < 1e-300 { 1.0 } else { z.exp_m1() / z });
    }
    if z > 0.0 {
        return ml_series(1.0, beta, z);
    }
    let x = -z;
    if x <= 300.0 {
        // Kummer transform: positive-term confluent series
        let a = beta - 1.0;
        let mut term = 1.0;
        let mut m = 1.0;
        for k in 0..2000 {
            let kf = k as f64;
            term *= (a + kf) * x / ((beta + kf) * (kf + 1.0));
            m += term;
            if term.abs() < 1e-17 * m.abs() {
                break;
            }
        }
        Ok((-x).exp() * m * rgamma(beta))
    } else {
        // algebraic expansion; the missing e^z part is below 1e-130 here
        let mut s = 0.0;
        let mut prev_nonzero = f64::INFINITY;
        for k in 1..=60 {
            let t = -z.powi(-k) * rgamma(beta - k as f64);
            if !t.is_finite() {
                break;
            }
            let ta = t.abs();
            if ta > prev_nonzero {
                break;
            }
            s += t;
            if ta > 0.0 {
                if ta < 1e-17 * s.abs().max(1e-290) {
                    break;
                }
                prev_nonzero = ta;
            }
        }
        Ok(s)
    }
}

/// Residue pair of s^{alpha-beta}/(s^alpha + x) at s = x^{1/alpha} e^{+-i pi/alpha},
/// present on the principal sheet only for alpha > 1.
fn residue_pair(alpha: f64, beta: f64, x: f64) -> f64 {
    let u = x.powf(1.0 / alpha);
    let angle = PI / alpha;
    let re = u * angle.cos();
    if re < -700.0 {
        return 0.0;
    }
    let amp = (2.0 / alpha) * x.powf((1.0 - beta) / alpha) * re.exp();
    amp * (u * angle.sin() + PI * (1.0 - beta) / alpha).cos()
}

/// Branch-cut representation for the crossover band. Exact for beta < 1+alpha;
/// larger beta is reduced by the exact backward recursion first.
fn ml_band(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    if beta >= 1.0 + alpha - 0.125 {
        // E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z with z = -x
        let inner = ml_band(alpha, beta - alpha, x)?;
        return Ok((inner - rgamma(beta - alpha)) / (-x));
    }
    let spb = sin_pi(beta);
    let spba = sin_pi(beta - alpha);
    let cpa = cos_pi(alpha);
    let spa = sin_pi(alpha);
    let xs = x * spa;

    let a0 = alpha - beta; // > -1 by the reduction above
    let m = if a0 >= 2.0 {
        1
    } else {
        ((3.0 / (1.0 + a0)).ceil() as i32).max(1)
    };
    let mf = m as f64;
    // after r = u^m the integrand is m e^{-u^m} u^{m(alpha-beta)+m-1} N/D
    let pow_u = mf * a0 + mf - 1.0;

    let r_cut: f64 = 90.0;
    // split points in r: geometric ladder plus the resolvent peak when
    // cos(pi alpha) < 0
    let mut splits_r: Vec<f64> = (0..=16).map(|j| r_cut * 0.5_f64.powi(j)).collect();
    if cpa < 0.0 {
        let rstar = (x * (-cpa)).powf(1.0 / alpha);
        let width = (xs.abs() / (alpha * rstar.powf(alpha - 1.0))).max(rstar * 1e-14);
        for f in [
            -1000.0, -300.0, -100.0, -30.0, -10.0, -3.0, -1.0, -0.3, 0.3, 1.0, 3.0, 10.0, 30.0,
            100.0, 300.0, 1000.0,
        ] {
            let r = rstar + f * width;
            if r > 0.0 && r < r_cut {
                splits_r.push(r);
            }
        }
        if rstar < r_cut {
            splits_r.push(rstar);
        }
    }
    let mut edges: Vec<f64> = splits_r.iter().map(|r| r.powf(1.0 / mf)).collect();
    edges.push(0.0);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-300);

    let mut integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let r = u.powi(m);
        let ra = r.powf(alpha);
        let d1 = ra + x * cpa;
        let den = d1 * d1 + xs * xs;
        let num = x * spba + ra * spb;
        mf * (-r).exp() * u.powf(pow_u) * num / den
    };

    // coarse scale estimate, then refine to 1e-13 of it
    let coarse: f64 = edges
        .windows(2)
        .map(|c| crate::quad::gl8(&mut integrand, c[0], c[1]).abs())
        .sum();
    let scale = coarse.max(1.0 / (1.0 + x));
    let integral = adaptive_gk_panels(&mut integrand, &edges, scale * 1e-12, 80);

    let mut value = integral / PI;
    if alpha > 1.0 {
        value += residue_pair(alpha, beta, x);
    }
    Ok(value)
}

/// Algebraic asymptotic expansion for large negative arguments, plus the
/// residue pair for alpha > 1.
fn ml_asym_neg(alpha: f64, beta: f64, x: f64) -> f64 {
    let z = -x;
    let mut s = 0.0;
    let mut prev_nonzero = f64::INFINITY;
    for k in 1..=80 {
        let t = -z.powi(-k) * rgamma(beta - alpha * k as f64);
        if !t.is_finite() {
            break;
        }
        let ta = t.abs();
        if ta > prev_nonzero {
            break; // divergent tail reached
        }
        s += t;
        if ta > 0.0 {
            if ta < 1e-17 * s.abs().max(1e-290) {
                break;
            }
            prev_nonzero = ta;
        }
    }
    if alpha > 1.0 {
        s += residue_pair(alpha, beta, x);
    }
    s
}

/// The three time kernels of the series solution at (alpha, lambda, t):
/// `e1 = E_{a,1}(-lambda t^a)`, `e2t = t E_{a,2}(-lambda t^a)`,
/// `e_conv = t^{a-1} E_{a,a}(-lambda t^a)` (the Duhamel convolution kernel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeKernelTriple {
    pub e1: f64,
    pub e2t: f64,
    /// t^{alpha-1} E_{alpha,alpha}(-lambda t^alpha). At t = 0 this is the
    /// boundary value of the integrable singularity: +inf for alpha < 1
    /// (callers quadrature over t > 0), 1 at alpha = 1, 0 for alpha > 1.
    pub e_conv: f64,
}

/// Evaluate the time-kernel triple. `alpha` in (0,2), `lambda >= 0`, `t >= 0`.
pub fn time_kernels(alpha: f64, lambda: f64, t: f64) -> Result<TimeKernelTriple> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )));
    }
    if !(lambda >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(
            "lambda and t must be non-negative".into(),
        ));
    }
    if t == 0.0 {
        let e_conv = if alpha < 1.0 {
            f64::INFINITY
        } else if alpha == 1.0 {
            1.0
        } else {
            0.0
        };
        return Ok(TimeKernelTriple {
            e1: 1.0,
            e2t: 0.0,
            e_conv,
        });
    }
    let arg = -lambda * t.powf(alpha);
    let e1 = ml_value(alpha, 1.0, arg)?;
    let e2t = t * ml_value(alpha, 2.0, arg)?;
    let e_conv = t.powf(alpha - 1.0) * ml_value(alpha, alpha, arg)?;
    Ok(TimeKernelTriple { e1, e2t, e_conv })
}

/// Chebyshev interpolant on [a, b].
#[derive(Debug, Clone)]
struct Cheb {
    a: f64,
    b: f64,
    coef: Vec<f64>,
}

impl Cheb {
    /// Fit on Chebyshev extrema, doubling the node count until the trailing
    /// coefficients fall below `tol` times the largest; extrema nest, so
    /// previously computed values are reused on refinement.
    fn fit<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Cheb> {
        let mut cache: HashMap<u64, f64> = HashMap::new();
        for &n in &[64usize, 128, 256, 512, 1024, 2048] {
            let vals: Vec<f64> = (0..=n)
                .map(|k| {
                    let xk = (PI * k as f64 / n as f64).cos();
                    let x = 0.5 * (a + b) + 0.5 * (b - a) * xk;
                    *cache.entry(x.to_bits()).or_insert_with(|| f(x))
                })
                .collect();
            let mut coef = vec![0.0; n + 1];
            for (j, cj) in coef.iter_mut().enumerate() {
                let mut s = 0.5 * (vals[0] + if j % 2 == 0 { vals[n] } else { -vals[n] });
                for (k, vk) in vals.iter().enumerate().take(n).skip(1) {
                    s += vk * (PI * (j * k) as f64 / n as f64).cos();
                }
                *cj = 2.0 * s / n as f64;
            }
            coef[0] *= 0.5;
            coef[n] *= 0.5;
            let scale = coef.iter().fold(0.0_f64, |m, c| m.max(c.abs())).max(1e-300);
            let tail = coef[n - 7..=n].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            if tail < tol * scale {
                // trim negligible high orders
                let mut keep = coef.len();
                while keep > 8 && coef[keep - 1].abs() < 0.1 * tol * scale {
                    keep -= 1;
                }
                coef.truncate(keep);
                return Ok(Cheb { a, b, coef });
            }
        }
        Err(Error::Numerical(
            "Chebyshev fit of the Mittag-Leffler band did not converge".into(),
        ))
    }

    fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coef[0]
    }
}

/// Reusable evaluator of x -> E_{alpha,beta}(-x) for fixed orders.
///
/// Hot paths (trace synthesis, variable-projection fitting) evaluate the same
/// (alpha, beta) at thousands of arguments; the crossover-band integral is
/// replaced by a Chebyshev interpolant of (1+x) E(-x) in log x, built once
/// per (alpha, beta) and shared process-wide, accurate to ~1e-11. Outside the
/// band the direct series / asymptotic paths are cheap and used as-is.
#[derive(Debug)]
pub struct MlKernel {
    alpha: f64,
    beta: f64,
    band_lo: f64,
    band_hi: f64,
    cheb: Option<Arc<Cheb>>,
}

/// Band interpolants are deterministic per (alpha, beta); share them across
/// kernels and threads.
fn band_interpolant(alpha: f64, beta: f64, lo: f64, hi: f64) -> Result<Arc<Cheb>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<Cheb>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (alpha.to_bits(), beta.to_bits());
    if let Some(c) = cache.lock().unwrap().get(&key) {
        return Ok(c.clone());
    }
    let cheb = Arc::new(Cheb::fit(
        |s: f64| {
            let xx = s.exp();
            (1.0 + xx) * ml_band(alpha, beta, xx).expect("band evaluation")
        },
        lo.ln(),
        hi.ln(),
        5e-12,
    )?);
    cache.lock().unwrap().insert(key, cheb.clone());
    Ok(cheb)
}

impl MlKernel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = MlParams::new(alpha, beta)?;
        // orders this close to one are evaluated on the closed exponential
        // path: the model is indistinguishable at fitting accuracy and the
        // branch-cut resolvent peak becomes needle-thin
        let alpha = if (p.alpha - 1.0).abs() < 1e-6 { 1.0 } else { p.alpha };
        let band_lo = series_radius(alpha);
        let band_hi = asym_radius(alpha);
        let cheb = if alpha == 1.0 {
            None
        } else {
            Some(band_interpolant(alpha, p.beta, band_lo, band_hi)?)
        };
        Ok(MlKernel {
            alpha,
            beta: p.beta,
            band_lo,
            band_hi,
            cheb,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// E_{alpha,beta}(-x) for x >= 0.
    pub fn eval_neg(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0, "eval_neg expects a non-negative magnitude");
        if self.alpha == 1.0 {
            return ml_alpha_one(self.beta, -x).expect("alpha=1 evaluation cannot fail");
        }
        if x <= self.band_lo {
            return ml_series(self.alpha, self.beta, -x).expect("series in calibrated radius");
        }
        if x >= self.band_hi {
            return ml_asym_neg(self.alpha, self.beta, x);
        }
        self.cheb.as_ref().expect("band interpolant present").eval(x.ln()) / (1.0 + x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    // multiprecision oracle (series with inflated working precision for
    // moderate arguments, optimally truncated asymptotics plus the residue
    // pair beyond), frozen before the implementation was written
    const ORACLE: [(f64, f64, f64, f64); 30] = [
        (0.7, 0.7, -50.0, 9.663_624_446_244_299_4e-5),
        (1.5, 1.0, -2.828_427_124_746_190_3, -0.149_363_895_024_063_72),
        (1.5, 2.0, -2.828_427_124_746_190_3, 0.414_969_846_012_299_15),
        (0.3, 1.0, -3.0, 0.211_802_633_196_435_78),
        (0.3, 2.0, -3.0, 0.271_957_297_803_449_3),
        (0.3, 0.3, -3.0, 0.017_243_316_421_744_134),
        (0.7, 1.0, -20.0, 0.017_395_698_291_603_98),
        (0.7, 2.0, -20.0, 0.054_022_893_620_845_817),
        (0.7, 0.7, -20.0, 6.329_972_460_096_978e-4),
        (1.3, 1.0, -60.0, -3.973_990_071_872_105_7e-3),
        (1.3, 2.0, -60.0, 0.012_915_555_803_066_332),
        (1.3, 1.3, -60.0, -8.877_878_466_838_874_5e-5),
        (1.8, 1.0, -200.0, 0.039_793_602_440_140_165),
        (1.8, 2.0, -200.0, 3.762_081_823_583_452_4e-4),
        (1.8, 1.8, -200.0, 6.657_787_380_640_022_5e-5),
        (0.98, 1.0, -20.0, 1.127_117_038_783_316_9e-3),
        (1.02, 1.0, -20.0, -1.110_056_541_012_460_8e-3),
        (0.5, 1.0, -1.0e4, 5.641_895_807_268_084_1e-5),
        (0.5, 0.6, -7.0, 0.020_082_777_943_409_686),
        (1.9, 1.0, -1.0e5, -9.459_354_967_897_543_1e-7),
        (0.3, 1.0, -1.0e6, 7.703_827_330_424_719_3e-7),
        (0.7, 1.0, -1.0e6, 3.342_730_211_662_825_2e-7),
        (1.3, 1.0, -1.0e6, -2.311_153_879_517_223e-7),
        (1.8, 1.0, -1.0e6, -1.742_587_821_256_338_3e-7),
        (1.8, 1.8, -900.0, -1.768_904_825_194_598_6e-5),
        (0.9, 2.0, -35.0, 0.029_848_901_757_260_508),
        (1.1, 2.0, -45.0, 0.020_883_455_809_897_731),
        (0.4, 1.0, -2.5, 0.228_723_530_363_323_94),
        (1.0, 3.0, -50.0, 0.019_6),
        (1.0, 0.7, -8.0, -0.035_828_360_666_933_226),
    ];

    #[test]
    fn matches_multiprecision_oracle() {
        for &(a, b, z, want) in &ORACLE {
            let got = ml(MlParams::new(a, b).unwrap(), z).unwrap();
            assert!(
                rel(got, want) < 1e-10,
                "E_({a},{b})({z}) = {got:e}, want {want:e}, rel {:e}",
                rel(got, want)
            );
        }
    }

    #[test]
    fn exponential_reduction() {
        // E_{1,1}(z) = e^z on [-30, 1]
        let p = MlParams::new(1.0, 1.0).unwrap();
        for i in 0..=200 {
            let z = -30.0 + 31.0 * i as f64 / 200.0;
            let got = ml(p, z).unwrap();
            assert!(rel(got, z.exp()) < 1e-10, "z = {z}");
        }
        assert!(rel(ml(p, -1.0).unwrap(), (-1.0_f64).exp()) < 1e-13);
    }

    #[test]
    fn cosine_reduction() {
        // E_{2,1}(-z^2) = cos z on [0, 20]
        let p = MlParams::new(2.0, 1.0).unwrap();
        for i in 0..=200 {
            let z = 20.0 * i as f64 / 200.0;
            let got = ml(p, -z * z).unwrap();
            assert!((got - z.cos()).abs() < 1e-10, "z = {z}: {got} vs {}", z.cos());
        }
    }

    #[test]
    fn value_at_zero_is_reciprocal_gamma() {
        assert_eq!(ml(MlParams::new(0.5, 1.0).unwrap(), 0.0).unwrap(), 1.0);
        let got = ml(MlParams::new(0.7, 0.7).unwrap(), 0.0).unwrap();
        assert!(rel(got, rgamma(0.7)) < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(MlParams::new(0.0, 1.0).is_err());
        assert!(MlParams::new(2.1, 1.0).is_err());
        assert!(MlParams::new(1.0, 0.0).is_err());
        assert!(MlParams::new(1.0, -2.0).is_err());
        let p = MlParams::new(0.5, 1.0).unwrap();
        assert!(ml(p, 6.0).is_err());
        assert!(ml(p, f64::NAN).is_err());
    }

    #[test]
    fn regimes_agree_at_the_seams() {
        // series vs branch-cut integral near r0, integral vs asymptotics near r1
        for &alpha in &[0.3, 0.7, 1.3, 1.8] {
            for &beta in &[1.0, 2.0, alpha] {
                let r0 = series_radius(alpha);
                for &x in &[r0 * 0.9, r0 * 0.99] {
                    let s = ml_series(alpha, beta, -x).unwrap();
                    let b = ml_band(alpha, beta, x).unwrap();
                    assert!(
                        rel(s, b) < 1e-9,
                        "series/band a={alpha} b={beta} x={x}: {s:e} vs {b:e}"
                    );
                }
                let r1 = asym_radius(alpha);
                for &x in &[r1 * 1.01, r1 * 1.1] {
                    let b = ml_band(alpha, beta, x).unwrap();
                    let a = ml_asym_neg(alpha, beta, x);
                    assert!(
                        rel(a, b) < 1e-9,
                        "band/asym a={alpha} b={beta} x={x}: {b:e} vs {a:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn lemma1_decay_bound_calibrated_on_coarse_holds_on_fine() {
        // |E_{a,b}(z)| <= C/(1+|z|) on z in [-1e6, -1]; C calibrated on a
        // coarse log grid with a phase-sampling safety factor, checked on a
        // 10x finer grid.
        for &alpha in &[0.3, 0.7, 1.3, 1.8] {
            for &beta in &[1.0, 2.0, alpha] {
                let kern = MlKernel::new(alpha, beta).unwrap();
                let coarse = 60;
                let mut c_fit: f64 = 0.0;
                for i in 0..=coarse {
                    let x = 10f64.powf(6.0 * i as f64 / coarse as f64);
                    c_fit = c_fit.max(kern.eval_neg(x).abs() * (1.0 + x));
                }
                c_fit *= 1.15;
                for i in 0..=(coarse * 10) {
                    let x = 10f64.powf(6.0 * i as f64 / (coarse * 10) as f64);
                    let v = kern.eval_neg(x).abs() * (1.0 + x);
                    assert!(
                        v <= c_fit,
                        "decay bound violated: a={alpha} b={beta} x={x}: {v} > {c_fit}"
                    );
                }
            }
        }
    }

    #[test]
    fn monotone_relaxation_for_alpha_below_one() {
        for &alpha in &[0.3, 0.7, 1.0] {
            for &lambda in &[1.0, 10.0] {
                let mut prev = f64::INFINITY;
                for i in 0..=400 {
                    let t = 8.0 * i as f64 / 400.0;
                    let k = time_kernels(alpha, lambda, t).unwrap();
                    assert!(
                        k.e1 <= prev + 1e-12,
                        "E_(a,1)(-l t^a) not monotone at a={alpha}, l={lambda}, t={t}"
                    );
                    prev = k.e1;
                }
            }
        }
    }

    #[test]
    fn time_kernel_values() {
        // t = 0 boundary triple
        let k = time_kernels(0.9, 3.0, 0.0).unwrap();
        assert_eq!((k.e1, k.e2t), (1.0, 0.0));
        assert!(k.e_conv.is_infinite());
        let k = time_kernels(1.5, 3.0, 0.0).unwrap();
        assert_eq!(k.e_conv, 0.0);
        // classical case
        let k = time_kernels(1.0, 2.0, 1.0).unwrap();
        assert!(rel(k.e1, (-2.0_f64).exp()) < 1e-12);
        // frozen oracle at alpha = 1.5, lambda = 1, t = 2 (arg = -2^1.5)
        let k = time_kernels(1.5, 1.0, 2.0).unwrap();
        assert!(rel(k.e1, -0.149_363_895_024_063_72) < 1e-10);
        assert!(rel(k.e2t, 2.0 * 0.414_969_846_012_299_15) < 1e-10);
        // rejects alpha = 2 in the model range
        assert!(time_kernels(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn duhamel_kernel_matches_derivative_of_e1() {
        // d/dt E_{a,1}(-l t^a) = -l t^{a-1} E_{a,a}(-l t^a)
        for &alpha in &[0.5, 0.8, 1.3, 1.7] {
            let lambda = 3.0;
            for &t in &[0.3, 1.0, 2.5] {
                let dt = 1e-5;
                let kp = time_kernels(alpha, lambda, t + dt).unwrap();
                let km = time_kernels(alpha, lambda, t - dt).unwrap();
                let fd = (kp.e1 - km.e1) / (2.0 * dt);
                let k = time_kernels(alpha, lambda, t).unwrap();
                let want = -lambda * k.e_conv;
                assert!(
                    (fd - want).abs() < 1e-6 * want.abs().max(1e-3),
                    "alpha={alpha} t={t}: fd {fd} vs {want}"
                );
            }
        }
    }

    #[test]
    fn kernel_cache_matches_direct_evaluation() {
        for &(alpha, beta) in &[(0.7, 1.0), (1.4, 2.0), (0.3, 0.3), (1.8, 1.0)] {
            let kern = MlKernel::new(alpha, beta).unwrap();
            let p = MlParams::new(alpha, beta).unwrap();
            for i in 0..=60 {
                let x = 10f64.powf(-2.0 + 7.0 * i as f64 / 60.0);
                let got = kern.eval_neg(x);
                let want = ml(p, -x).unwrap();
                assert!(
                    rel(got, want) < 5e-10,
                    "cache mismatch a={alpha} b={beta} x={x}: {got:e} vs {want:e}"
                );
            }
        }
    }
}
