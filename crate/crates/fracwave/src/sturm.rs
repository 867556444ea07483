//! Eigensystem of the Sturm-Liouville operator A u = -u'' + p(x) u on (0,1)
//! with Robin conditions u'(0) - h u(0) = 0, u'(1) + H u(1) = 0, normalized
//! by phi_n(0) = 1, together with mode expansions of initial data.
//!
//! Eigenvalues are located by a scaled Pruefer phase (which counts
//! oscillations exactly, so no root can be missed) and then polished by a
//! Brent iteration on the shooting characteristic W(lambda) =
//! phi'(1) + H phi(1).

use crate::error::{Error, Result};
use crate::grid::{GridFn, UniformGrid};
use crate::ode::{integrate, integrate_path, OdeOptions};
use crate::quad::composite_gl8_nodes;

/// Spatially varying potential p >= 0 sampled on a uniform grid with cubic
/// interpolation.
#[derive(Debug, Clone)]
pub struct Potential {
    f: GridFn,
}

impl Potential {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v < -1e-12) {
            return Err(Error::Domain(
                "potential must be non-negative on [0, 1]".into(),
            ));
        }
        Ok(Potential {
            f: GridFn::new(grid, values)?,
        })
    }

    pub fn zero(cells: usize) -> Result<Self> {
        let grid = UniformGrid::new(cells)?;
        Self::new(grid, vec![0.0; grid.len()])
    }

    pub fn constant(cells: usize, c: f64) -> Result<Self> {
        let grid = UniformGrid::new(cells)?;
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn from_fn<F: Fn(f64) -> f64>(cells: usize, f: F) -> Result<Self> {
        let grid = UniformGrid::new(cells)?;
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    /// p(x) = c0 + sum_{i>=1} c_i cos(i pi x).
    pub fn from_cos_basis(cells: usize, coeffs: &[f64]) -> Result<Self> {
        Self::from_fn(cells, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * (i as f64 * std::f64::consts::PI * x).cos())
                .sum()
        })
    }

    pub fn grid(&self) -> UniformGrid {
        self.f.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.f.values()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    /// Integral of p over [0, 1] (exact for the interpolant).
    pub fn total_integral(&self) -> f64 {
        self.f.integral_to(1.0)
    }

    /// Integral of the interpolant from 0 to x.
    pub fn integral_to(&self, x: f64) -> f64 {
        self.f.integral_to(x)
    }
}

/// Robin coefficients h (left) and H (right), both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinPair {
    pub h: f64,
    pub big_h: f64,
}

impl RobinPair {
    pub fn new(h: f64, big_h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("h must be positive, got {h}")));
        }
        if !(big_h > 0.0) || !big_h.is_finite() {
            return Err(Error::Domain(format!("H must be positive, got {big_h}")));
        }
        Ok(RobinPair { h, big_h })
    }
}

/// First `n` eigenpairs of A_{p,h,H}: eigenvalues, eigenfunction samples on
/// the potential grid (phi_n(0) = 1), squared norms rho_n, and the asymptotic
/// constant omega = h + H + (1/2) int p.
#[derive(Debug, Clone)]
pub struct Spectrum {
    robin: RobinPair,
    lambdas: Vec<f64>,
    phis: Vec<Vec<f64>>,
    dphi_end: Vec<f64>,
    rhos: Vec<f64>,
    omega: f64,
    grid: UniformGrid,
    quad_x: Vec<f64>,
    quad_w: Vec<f64>,
    phis_quad: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.lambdas[n]
    }

    /// Samples of phi_n on the grid nodes.
    pub fn phi(&self, n: usize) -> &[f64] {
        &self.phis[n]
    }

    pub fn phi_at_one(&self, n: usize) -> f64 {
        *self.phis[n].last().unwrap()
    }

    pub fn dphi_at_one(&self, n: usize) -> f64 {
        self.dphi_end[n]
    }

    pub fn rho(&self, n: usize) -> f64 {
        self.rhos[n]
    }

    pub fn rhos(&self) -> &[f64] {
        &self.rhos
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn robin(&self) -> RobinPair {
        self.robin
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub(crate) fn quad_nodes(&self) -> (&[f64], &[f64]) {
        (&self.quad_x, &self.quad_w)
    }

    pub(crate) fn phi_quad(&self, n: usize) -> &[f64] {
        &self.phis_quad[n]
    }

    /// L2 inner product (f, phi_n) by the composite Gauss rule.
    pub fn project<F: Fn(f64) -> f64>(&self, n: usize, f: F) -> f64 {
        self.quad_x
            .iter()
            .zip(&self.quad_w)
            .zip(&self.phis_quad[n])
            .map(|((&x, &w), &p)| w * f(x) * p)
            .sum()
    }
}

/// Initial data a (and a0 when the order exceeds one) on the spatial grid.
/// Membership in the operator domain is enforced by checking the Robin
/// conditions at both endpoints to grid tolerance.
#[derive(Debug, Clone)]
pub struct InitialData {
    a: GridFn,
    a0: Option<GridFn>,
}

pub const BC_TOLERANCE: f64 = 1e-3;

impl InitialData {
    pub fn new(a: GridFn, a0: Option<GridFn>, robin: &RobinPair) -> Result<Self> {
        Self::with_tolerance(a, a0, robin, BC_TOLERANCE)
    }

    pub fn with_tolerance(
        a: GridFn,
        a0: Option<GridFn>,
        robin: &RobinPair,
        tol: f64,
    ) -> Result<Self> {
        check_robin(&a, robin, tol, "a")?;
        if let Some(ref a0f) = a0 {
            if a0f.grid() != a.grid() {
                return Err(Error::Usage("a and a0 must share the grid".into()));
            }
            check_robin(a0f, robin, tol, "a0")?;
        }
        Ok(InitialData { a, a0 })
    }

    pub fn a(&self) -> &GridFn {
        &self.a
    }

    pub fn a0(&self) -> Option<&GridFn> {
        self.a0.as_ref()
    }

    pub fn grid(&self) -> UniformGrid {
        self.a.grid()
    }

    pub fn has_velocity(&self) -> bool {
        self.a0.is_some()
    }
}

fn check_robin(f: &GridFn, robin: &RobinPair, tol: f64, name: &str) -> Result<()> {
    let scale = f
        .values()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let left = f.deriv(0.0) - robin.h * f.eval(0.0);
    let right = f.deriv(1.0) + robin.big_h * f.eval(1.0);
    if left.abs() > tol * scale || right.abs() > tol * scale {
        return Err(Error::Usage(format!(
            "{name} violates the Robin conditions: residuals ({left:.3e}, {right:.3e}) at tolerance {tol:.1e}"
        )));
    }
    Ok(())
}

/// Expansion coefficients p_n = (a, phi_n)/rho_n (and p0_n when present).
#[derive(Debug, Clone)]
pub struct ModeCoefficients {
    pub pn: Vec<f64>,
    pub pn0: Option<Vec<f64>>,
}

impl ModeCoefficients {
    pub fn len(&self) -> usize {
        self.pn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pn.is_empty()
    }

    /// |p_n| + |p0_n| for mode n (0-based index).
    pub fn excitation(&self, n: usize) -> f64 {
        self.pn[n].abs() + self.pn0.as_ref().map_or(0.0, |v| v[n].abs())
    }
}

/// Integrate -phi'' + p phi = lambda phi from x = 0 with phi(0) = 1,
/// phi'(0) = h; returns (phi(1), phi'(1)).
pub fn shoot(p: &Potential, h: f64, lambda: f64) -> Result<(f64, f64)> {
    let rhs = |x: f64, y: &[f64; 2]| [y[1], (p.eval(x) - lambda) * y[0]];
    let y = integrate(&rhs, 0.0, 1.0, [1.0, h], &OdeOptions::default())
        .map_err(|e| Error::Numerical(format!("shooting failed at lambda = {lambda}: {e}")))?;
    Ok((y[0], y[1]))
}

/// Values (phi, phi') of the shooting solution at the requested ascending
/// points of [0, 1].
pub fn eigenfunction_values(
    p: &Potential,
    h: f64,
    lambda: f64,
    xs: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let rhs = |x: f64, y: &[f64; 2]| [y[1], (p.eval(x) - lambda) * y[0]];
    let states = integrate_path(&rhs, 0.0, [1.0, h], xs, &OdeOptions::default())
        .map_err(|e| Error::Numerical(format!("eigenfunction sampling failed: {e}")))?;
    Ok(states.iter().map(|y| (y[0], y[1])).collect())
}

/// Characteristic function W(lambda) = phi'(1) + H phi(1); its roots are the
/// eigenvalues.
pub fn characteristic(p: &Potential, robin: &RobinPair, lambda: f64) -> Result<f64> {
    let (phi1, dphi1) = shoot(p, robin.h, lambda)?;
    Ok(dphi1 + robin.big_h * phi1)
}

/// Scaled Pruefer phase at x = 1. With y = r sin(theta), y' = s r cos(theta)
/// and s = max(1, sqrt(lambda)):
///   theta' = s cos^2(theta) + ((lambda - p)/s) sin^2(theta),
///   theta(0) = atan2(s, h).
/// The n-th eigenvalue is the unique root of
///   theta(1; lambda) = n pi - atan(s/H).
fn pruefer_phase(p: &Potential, h: f64, lambda: f64) -> Result<f64> {
    let s = lambda.sqrt().max(1.0);
    let rhs = move |x: f64, y: &[f64; 1]| {
        let (sin, cos) = y[0].sin_cos();
        [s * cos * cos + (lambda - p.eval(x)) / s * sin * sin]
    };
    let opts = OdeOptions {
        rtol: 1e-11,
        atol: 1e-12,
        max_steps: 2_000_000,
    };
    let y = integrate(&rhs, 0.0, 1.0, [f64::atan2(s, h)], &opts)
        .map_err(|e| Error::Numerical(format!("Pruefer phase failed at lambda = {lambda}: {e}")))?;
    Ok(y[0])
}

/// Sign-carrying phase defect for the n-th eigenvalue (1-based): negative
/// below lambda_n, positive above.
fn phase_defect(p: &Potential, robin: &RobinPair, n: usize, lambda: f64) -> Result<f64> {
    let s = lambda.sqrt().max(1.0);
    let theta1 = pruefer_phase(p, robin.h, lambda)?;
    let target = n as f64 * std::f64::consts::PI - (s / robin.big_h).atan();
    Ok(theta1 - target)
}

/// First `n` eigenpairs. Brackets are seeded by the eigenvalue asymptotics
/// sqrt(lambda_{m+1}) ~ m pi + omega/(pi m) and certified by the Pruefer
/// phase count, so no eigenvalue can be skipped; within each bracket W has a
/// single simple root, refined by Brent to machine accuracy.
pub fn eigensystem(p: &Potential, robin: &RobinPair, n: usize) -> Result<Spectrum> {
    if n < 1 {
        return Err(Error::Usage("eigensystem needs n >= 1".into()));
    }
    let lambdas = locate_eigenvalues(p, robin, n)?;
    build_spectrum(p, robin, lambdas)
}

/// Eigenvalues plus endpoint data (lambda_n, phi_n(1), phi_n'(1)), without
/// the grid/quadrature sampling; the cheap evaluation used inside the
/// operator-recovery optimization loop.
pub fn eigen_endpoints(p: &Potential, robin: &RobinPair, n: usize) -> Result<Vec<(f64, f64, f64)>> {
    let lambdas = locate_eigenvalues(p, robin, n)?;
    lambdas
        .into_iter()
        .map(|lam| {
            let (phi1, dphi1) = shoot(p, robin.h, lam)?;
            Ok((lam, phi1, dphi1))
        })
        .collect()
}

fn locate_eigenvalues(p: &Potential, robin: &RobinPair, n: usize) -> Result<Vec<f64>> {
    let pi = std::f64::consts::PI;
    let omega = robin.h + robin.big_h + 0.5 * p.total_integral();
    let omega_pi = omega / pi;

    let mut lambdas = Vec::with_capacity(n);
    for idx in 1..=n {
        let m = (idx - 1) as f64; // asymptotic index: sqrt(lambda) ~ m pi
        let s_guess = m * pi + omega_pi / m.max(1.0);
        let mut lo = if idx == 1 {
            1e-10
        } else {
            ((m - 0.5) * pi).powi(2)
        };
        let mut hi = (((m + 0.5) * pi + omega_pi + 1.0).powi(2)).max(s_guess * s_guess + 5.0);
        // certify the bracket with the phase count
        let mut glo = phase_defect(p, robin, idx, lo)?;
        let mut expand = 0;
        while glo >= 0.0 {
            lo *= 0.25;
            glo = phase_defect(p, robin, idx, lo)?;
            expand += 1;
            if expand > 60 {
                return Err(Error::Numerical(format!(
                    "no lower bracket for eigenvalue {idx}; finer bracketing required"
                )));
            }
        }
        let mut ghi = phase_defect(p, robin, idx, hi)?;
        expand = 0;
        while ghi <= 0.0 {
            hi = hi * 1.6 + 1.0;
            ghi = phase_defect(p, robin, idx, hi)?;
            expand += 1;
            if expand > 60 {
                return Err(Error::Numerical(format!(
                    "no upper bracket for eigenvalue {idx}; finer bracketing required"
                )));
            }
        }
        // coarse phase bisection isolates the root
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            let gm = phase_defect(p, robin, idx, mid)?;
            if gm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) < 1e-6 * (1.0 + hi) {
                break;
            }
        }
        // polish on the characteristic; widen slightly until W changes sign
        let mut wl = characteristic(p, robin, lo)?;
        let mut wh = characteristic(p, robin, hi)?;
        let mut tries = 0;
        while wl * wh > 0.0 {
            let width = (hi - lo).max(1e-9 * (1.0 + hi));
            lo = (lo - width).max(1e-12);
            hi += width;
            wl = characteristic(p, robin, lo)?;
            wh = characteristic(p, robin, hi)?;
            tries += 1;
            if tries > 30 {
                return Err(Error::Numerical(format!(
                    "characteristic does not change sign around eigenvalue {idx}"
                )));
            }
        }
        let lam = brent(|x| characteristic(p, robin, x), lo, hi, wl, wh, 1e-14)?;
        lambdas.push(lam);
    }
    for w in lambdas.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Numerical(
                "eigenvalues are not strictly increasing; finer bracketing required".into(),
            ));
        }
    }
    Ok(lambdas)
}

fn build_spectrum(p: &Potential, robin: &RobinPair, lambdas: Vec<f64>) -> Result<Spectrum> {
    let omega = robin.h + robin.big_h + 0.5 * p.total_integral();
    // eigenfunctions on grid and quadrature nodes, norms by composite Gauss
    let grid = p.grid();
    let edges = grid.nodes();
    let (quad_x, quad_w) = composite_gl8_nodes(&edges);
    let mut outputs: Vec<f64> = edges.iter().chain(quad_x.iter()).copied().collect();
    outputs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut phis = Vec::with_capacity(lambdas.len());
    let mut phis_quad = Vec::with_capacity(lambdas.len());
    let mut dphi_end = Vec::with_capacity(lambdas.len());
    let mut rhos = Vec::with_capacity(lambdas.len());
    for &lam in &lambdas {
        let states = eigenfunction_values(p, robin.h, lam, &outputs)?;
        // split the merged output list back into grid / quadrature values
        let mut phi_grid = Vec::with_capacity(edges.len());
        let mut phi_quad = Vec::with_capacity(quad_x.len());
        let mut gi = 0;
        let mut qi = 0;
        for (&x, st) in outputs.iter().zip(&states) {
            if gi < edges.len() && x == edges[gi] {
                phi_grid.push(st.0);
                gi += 1;
            } else {
                debug_assert!(qi < quad_x.len() && x == quad_x[qi]);
                phi_quad.push(st.0);
                qi += 1;
            }
        }
        let rho: f64 = phi_quad.iter().zip(&quad_w).map(|(&v, &w)| w * v * v).sum();
        rhos.push(rho);
        dphi_end.push(states.last().unwrap().1);
        phis.push(phi_grid);
        phis_quad.push(phi_quad);
    }

    Ok(Spectrum {
        robin: *robin,
        lambdas,
        phis,
        dphi_end,
        rhos,
        omega,
        grid,
        quad_x,
        quad_w,
        phis_quad,
    })
}

/// Brent root refinement given a sign-changing bracket.
pub(crate) fn brent<F: Fn(f64) -> Result<f64>>(
    f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    rel_tol: f64,
) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::Numerical("brent: bracket does not change sign".into()));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < rel_tol * (1.0 + b.abs()) {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let out_of_range = !((s > lo.min(b) && s < lo.max(b))
            && !(mflag && (s - b).abs() >= 0.5 * (b - c).abs())
            && !(!mflag && (s - b).abs() >= 0.5 * d.abs()));
        if out_of_range {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s)?;
        d = c - b;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

/// Expansion coefficients of the initial data in the computed eigenbasis.
pub fn mode_coefficients(data: &InitialData, spec: &Spectrum) -> Result<ModeCoefficients> {
    if data.grid() != spec.grid() {
        return Err(Error::Usage(
            "initial data and spectrum must share the spatial grid".into(),
        ));
    }
    let (qx, qw) = spec.quad_nodes();
    let a_quad: Vec<f64> = qx.iter().map(|&x| data.a().eval(x)).collect();
    let pn: Vec<f64> = (0..spec.len())
        .map(|n| {
            let ip: f64 = a_quad
                .iter()
                .zip(qw)
                .zip(spec.phi_quad(n))
                .map(|((&av, &w), &pv)| w * av * pv)
                .sum();
            ip / spec.rho(n)
        })
        .collect();
    let pn0 = data.a0().map(|a0| {
        let a0_quad: Vec<f64> = qx.iter().map(|&x| a0.eval(x)).collect();
        (0..spec.len())
            .map(|n| {
                let ip: f64 = a0_quad
                    .iter()
                    .zip(qw)
                    .zip(spec.phi_quad(n))
                    .map(|((&av, &w), &pv)| w * av * pv)
                    .sum();
                ip / spec.rho(n)
            })
            .collect()
    });
    Ok(ModeCoefficients { pn, pn0 })
}

/// Project an arbitrary function onto the eigenbasis (used for source terms,
/// which need not satisfy the Robin conditions).
pub fn project_function<F: Fn(f64) -> f64>(spec: &Spectrum, f: F) -> ModeCoefficients {
    let pn = (0..spec.len())
        .map(|nn| spec.project(nn, &f) / spec.rho(nn))
        .collect();
    ModeCoefficients { pn, pn0: None }
}

/// Modes n <= n_max (1-based) whose excitation |p_n| + |p0_n| falls below
/// `tol` — inputs for which the non-vanishing eigenmode hypothesis fails.
pub fn assumption_check(coeffs: &ModeCoefficients, n_max: usize, tol: f64) -> Vec<usize> {
    (0..n_max.min(coeffs.len()))
        .filter(|&i| coeffs.excitation(i) < tol)
        .map(|i| i + 1)
        .collect()
}

/// Gaussian bump plus the linear corrector that makes both Robin conditions
/// hold exactly; a convenient member of the operator domain.
pub fn robin_bump(grid: UniformGrid, robin: &RobinPair, center: f64, width: f64) -> GridFn {
    let b = move |x: f64| (-((x - center) / width).powi(2)).exp();
    let db = move |x: f64| -2.0 * (x - center) / (width * width) * b(x);
    // a = b + u + v x with a'(0) - h a(0) = 0 and a'(1) + H a(1) = 0:
    //   -h u + v = h b(0) - b'(0)
    //    H u + (1+H) v = -b'(1) - H b(1)
    let h = robin.h;
    let bh = robin.big_h;
    let r0 = h * b(0.0) - db(0.0);
    let r1 = -db(1.0) - bh * b(1.0);
    let det = -h * (1.0 + bh) - bh;
    let u = (r0 * (1.0 + bh) - r1) / det;
    let v = (h * r1 + bh * r0) / -det;
    GridFn::from_fn(grid, move |x| b(x) + u + v * x).unwrap()
}
