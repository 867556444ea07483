//! Goursat problem for the transformation kernel K(x, y) connecting two
//! Sturm-Liouville systems (p, h) and (q, j) on the triangle 0 <= y <= x <= 1:
//!
//!   K_xx - K_yy = (q(x) - p(y)) K,
//!   K_y(x, 0)   = h K(x, 0),
//!   K(x, x)     = (j - h) + (1/2) int_0^x (q - p),
//!
//! (the diagonal orientation is the one under which the transformation
//! below maps p-system solutions to q-system solutions; differentiating the
//! transform twice forces d/dx K(x,x) = (q - p)/2),
//!
//! and the transformation psi(x) = phi(x) + int_0^x K(x,y) phi(y) dy carrying
//! solutions of the p-system IVP into the q-system.
//!
//! In characteristic variables xi = x + y, eta = x - y the operator becomes
//! 4 K_{xi eta}, the diagonal is the row eta = 0, and the y = 0 condition
//! lives on the corner line xi = eta. The solver marches eta-rows with an
//! implicit-midpoint box update; the corner advances by a trapezoidal
//! predictor-corrector using a second-order one-sided stencil for K_xi.
//! One Richardson level (h and h/2) removes the leading O(h^2) error.

use crate::error::{Error, Result};
use crate::grid::CubicSpline;
use crate::quad::gl8;
use crate::sturm::{eigenfunction_values, Potential, Spectrum};

/// Transformation kernel sampled on the characteristic lattice; Cartesian
/// values K(a/m, b/m) are exposed through [`Kernel::at_cart`].
#[derive(Debug, Clone)]
pub struct Kernel {
    m: usize,
    dz: f64,
    /// rows[j][k] = K(xi = (j+k) dz, eta = j dz), row j has 2(m-j)+1 entries
    rows: Vec<Vec<f64>>,
    p: Potential,
    q: Potential,
    h_left: f64,
    j_left: f64,
}

impl Kernel {
    pub fn mesh(&self) -> usize {
        self.m
    }

    /// Left-system potential p and Robin coefficient h.
    pub fn left_system(&self) -> (&Potential, f64) {
        (&self.p, self.h_left)
    }

    /// Right-system potential q and Robin coefficient j.
    pub fn right_system(&self) -> (&Potential, f64) {
        (&self.q, self.j_left)
    }

    /// K at the Cartesian node (a/m, b/m), b <= a.
    pub fn at_cart(&self, a: usize, b: usize) -> f64 {
        assert!(b <= a && a <= self.m, "node outside the triangle");
        self.rows[a - b][2 * b]
    }

    /// Diagonal K(x, x) at x = i/(2m), i = 0..=2m (the Goursat data row).
    pub fn diagonal(&self) -> &[f64] {
        &self.rows[0]
    }

    pub fn k00(&self) -> f64 {
        self.rows[0][0]
    }

    pub fn k11(&self) -> f64 {
        *self.rows[0].last().unwrap()
    }

    /// K(1, y) at y = b/m, b = 0..=m.
    pub fn row_at_x1(&self) -> Vec<f64> {
        (0..=self.m).map(|b| self.at_cart(self.m, b)).collect()
    }

    /// K(x_a, y) at y = b/m for b = 0..=a.
    pub fn row_at(&self, a: usize) -> Vec<f64> {
        (0..=a).map(|b| self.at_cart(a, b)).collect()
    }

    /// Largest absolute value over the triangle.
    pub fn sup_norm(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Goursat data d(x) = (j - h) + (1/2) int_0^x (q - p) at x.
fn diagonal_data(p: &Potential, h: f64, q: &Potential, j: f64, x: f64) -> f64 {
    (j - h) + 0.5 * (p_integral(q, x) - p_integral(p, x))
}

fn p_integral(p: &Potential, x: f64) -> f64 {
    // integral of the interpolant from 0 to x
    p.integral_to(x)
}

/// One marching sweep on the characteristic lattice with step 1/m.
fn march(p: &Potential, h: f64, q: &Potential, j: f64, m: usize) -> Result<Vec<Vec<f64>>> {
    let dz = 1.0 / m as f64;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    rows.push(
        (0..=2 * m)
            .map(|i| diagonal_data(p, h, q, j, 0.5 * i as f64 * dz))
            .collect(),
    );

    // midpoint coupling coefficient of the box with lower-left corner (i, jr)
    let cell_c = |i: usize, jr: usize| -> f64 {
        let xm = 0.5 * ((i + jr + 1) as f64) * dz;
        let ym = 0.5 * ((i - jr) as f64) * dz;
        q.eval(xm) - p.eval(ym)
    };
    // one-sided second-order K_xi at the left end of a row
    let k_xi = |row: &[f64]| -> f64 {
        if row.len() >= 3 {
            (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dz)
        } else if row.len() == 2 {
            (row[1] - row[0]) / dz
        } else {
            0.0
        }
    };

    let mut older_slope: Option<f64> = None;
    for jr in 0..m {
        let prev = &rows[jr];
        let len_new = 2 * (m - jr - 1) + 1;
        let corner_prev = prev[0];
        let slope_prev = 2.0 * k_xi(prev) - h * corner_prev;

        // predictor corner, then box fill, then trapezoid correction; rows
        // too short for the one-sided stencil (the triangle tip) extrapolate
        // the slope linearly in the row index instead
        let mut corner = corner_prev + dz * slope_prev;
        let mut row_new = vec![0.0; len_new];
        for _pass in 0..2 {
            row_new[0] = corner;
            for k in 0..len_new - 1 {
                // unknown at (i+1, jr+1) with i = jr + 1 + k
                let i = jr + 1 + k;
                let a = prev[k + 1]; // (i, jr)
                let b = prev[k + 2]; // (i+1, jr)
                let c_known = row_new[k]; // (i, jr+1)
                let w = dz * dz * cell_c(i, jr) / 16.0;
                let denom = 1.0 - w;
                if denom.abs() < 1e-8 {
                    return Err(Error::Numerical(
                        "Goursat box update degenerate; refine the mesh".into(),
                    ));
                }
                row_new[k + 1] = (b + c_known - a + w * (a + b + c_known)) / denom;
            }
            let slope_new = if len_new >= 3 {
                2.0 * k_xi(&row_new) - h * corner
            } else {
                match older_slope {
                    Some(s_old) => 2.0 * slope_prev - s_old,
                    None => slope_prev,
                }
            };
            corner = corner_prev + 0.5 * dz * (slope_prev + slope_new);
        }
        row_new[0] = corner;
        // final fill with the corrected corner
        for k in 0..len_new - 1 {
            let i = jr + 1 + k;
            let a = prev[k + 1];
            let b = prev[k + 2];
            let c_known = row_new[k];
            let w = dz * dz * cell_c(i, jr) / 16.0;
            row_new[k + 1] = (b + c_known - a + w * (a + b + c_known)) / (1.0 - w);
        }
        older_slope = Some(slope_prev);
        rows.push(row_new);
    }
    Ok(rows)
}

/// Jacobi (successive-approximation) solve of the same discrete equations;
/// shares the fixed point with the marching sweep and cross-checks its
/// ordering. Used by the unit tests.
#[allow(dead_code)]
fn picard(p: &Potential, h: f64, q: &Potential, j: f64, m: usize, max_sweeps: usize) -> Result<Vec<Vec<f64>>> {
    let dz = 1.0 / m as f64;
    let data_row: Vec<f64> = (0..=2 * m)
        .map(|i| diagonal_data(p, h, q, j, 0.5 * i as f64 * dz))
        .collect();
    let mut rows: Vec<Vec<f64>> = (0..=m)
        .map(|jr| vec![0.0; 2 * (m - jr) + 1])
        .collect();
    rows[0] = data_row.clone();

    let cell_c = |i: usize, jr: usize| -> f64 {
        let xm = 0.5 * ((i + jr + 1) as f64) * dz;
        let ym = 0.5 * ((i - jr) as f64) * dz;
        q.eval(xm) - p.eval(ym)
    };
    let k_xi = |row: &[f64]| -> f64 {
        if row.len() >= 3 {
            (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dz)
        } else if row.len() == 2 {
            (row[1] - row[0]) / dz
        } else {
            0.0
        }
    };

    for sweep in 0..max_sweeps {
        let mut next = rows.clone();
        let mut change: f64 = 0.0;
        for jr in 0..m {
            let prev = &rows[jr];
            let cur = &rows[jr + 1];
            let len_new = cur.len();
            // trapezoid corner from the previous iterate's rows
            let slope_prev = 2.0 * k_xi(prev) - h * prev[0];
            let slope_cur = 2.0 * k_xi(cur) - h * cur[0];
            let corner = prev[0] + 0.5 * dz * (slope_prev + slope_cur);
            next[jr + 1][0] = corner;
            for k in 0..len_new - 1 {
                let i = jr + 1 + k;
                let a = rows[jr][k + 1];
                let b = rows[jr][k + 2];
                let c_known = rows[jr + 1][k];
                let d_old = rows[jr + 1][k + 1];
                let w = dz * dz * cell_c(i, jr) / 16.0;
                next[jr + 1][k + 1] = b + c_known - a + w * (a + b + c_known + d_old);
            }
        }
        for (r_new, r_old) in next.iter().zip(&rows) {
            for (v_new, v_old) in r_new.iter().zip(r_old) {
                change = change.max((v_new - v_old).abs());
            }
        }
        rows = next;
        if change < 1e-13 {
            return Ok(rows);
        }
        if sweep == max_sweeps - 1 {
            return Err(Error::Numerical(format!(
                "Picard iteration did not converge in {max_sweeps} sweeps (last change {change:e})"
            )));
        }
    }
    Ok(rows)
}

/// Discrete residual of the characteristic box stencil over all interior
/// cells, scaled by the cell area (zero to roundoff for a marching solution).
#[allow(dead_code)]
fn box_residual(rows: &[Vec<f64>], p: &Potential, q: &Potential, m: usize) -> f64 {
    let dz = 1.0 / m as f64;
    let mut worst: f64 = 0.0;
    for jr in 0..m {
        let prev = &rows[jr];
        let cur = &rows[jr + 1];
        for k in 0..cur.len() - 1 {
            let i = jr + 1 + k;
            let xm = 0.5 * ((i + jr + 1) as f64) * dz;
            let ym = 0.5 * ((i - jr) as f64) * dz;
            let c = q.eval(xm) - p.eval(ym);
            let (a, b) = (prev[k + 1], prev[k + 2]);
            let (cc, d) = (cur[k], cur[k + 1]);
            let res = (d - b - cc + a) - dz * dz * c / 16.0 * (a + b + cc + d);
            worst = worst.max(res.abs() / (dz * dz));
        }
    }
    worst
}

/// Solve the Goursat problem on a mesh of `mesh` Cartesian cells (>= 16) by
/// characteristic marching with one Richardson level.
pub fn solve_goursat(p: &Potential, h: f64, q: &Potential, j: f64, mesh: usize) -> Result<Kernel> {
    if mesh < 16 {
        return Err(Error::Usage(format!("mesh must be at least 16, got {mesh}")));
    }
    if !h.is_finite() || !j.is_finite() {
        return Err(Error::Domain("Robin coefficients must be finite".into()));
    }
    let coarse = march(p, h, q, j, mesh)?;
    let fine = march(p, h, q, j, 2 * mesh)?;
    let rows: Vec<Vec<f64>> = coarse
        .iter()
        .enumerate()
        .map(|(jr, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &v)| (4.0 * fine[2 * jr][2 * k] - v) / 3.0)
                .collect()
        })
        .collect();
    Ok(Kernel {
        m: mesh,
        dz: 1.0 / mesh as f64,
        rows,
        p: p.clone(),
        q: q.clone(),
        h_left: h,
        j_left: j,
    })
}

/// Apply the Volterra transformation to a solution phi of the p-system IVP:
/// psi(x_a) = phi(x_a) + int_0^{x_a} K(x_a, y) phi(y) dy at every Cartesian
/// node x_a = a/m. The kernel row is spline-interpolated in y; phi is
/// evaluated exactly at the quadrature nodes.
pub fn transform<F: Fn(f64) -> f64>(kernel: &Kernel, phi: F) -> Vec<f64> {
    let m = kernel.m;
    let hc = kernel.dz;
    let mut psi = Vec::with_capacity(m + 1);
    for a in 0..=m {
        let x = a as f64 * hc;
        let mut value = phi(x);
        if a >= 5 {
            let krow = kernel.row_at(a);
            let ys: Vec<f64> = (0..=a).map(|b| b as f64 * hc).collect();
            let spline = CubicSpline::new(&ys, &krow).expect("kernel row spline");
            let mut acc = 0.0;
            for b in 0..a {
                acc += gl8(
                    |y: f64| spline.eval(y) * phi(y),
                    ys[b],
                    ys[b + 1],
                );
            }
            value += acc;
        } else if a >= 1 {
            // few-node head: composite Simpson with quadratic midpoint
            // reconstruction of K (linear only on the single-cell row)
            let krow = kernel.row_at(a);
            let mut acc = 0.0;
            for b in 0..a {
                let y0 = b as f64 * hc;
                let y1 = (b + 1) as f64 * hc;
                let ym = 0.5 * (y0 + y1);
                let km = if a == 1 {
                    0.5 * (krow[0] + krow[1])
                } else if b + 1 < krow.len() - 1 || b == 0 {
                    // quadratic through b, b+1, b+2 (or b-1, b, b+1 at the end)
                    let base = if b + 2 <= a { b } else { b - 1 };
                    let (k0, k1, k2) = (krow[base], krow[base + 1], krow[base + 2]);
                    let u = (ym / hc) - base as f64; // local coordinate in [0, 2]
                    0.5 * (u - 1.0) * (u - 2.0) * k0 - u * (u - 2.0) * k1
                        + 0.5 * u * (u - 1.0) * k2
                } else {
                    let base = b - 1;
                    let (k0, k1, k2) = (krow[base], krow[base + 1], krow[base + 2]);
                    let u = (ym / hc) - base as f64;
                    0.5 * (u - 1.0) * (u - 2.0) * k0 - u * (u - 2.0) * k1
                        + 0.5 * u * (u - 1.0) * k2
                };
                acc += (y1 - y0) / 6.0
                    * (krow[b] * phi(y0) + 4.0 * km * phi(y1.min(ym)) + krow[b + 1] * phi(y1));
            }
            value += acc;
        }
        psi.push(value);
    }
    psi
}

/// The endpoint identities driving the operator-uniqueness step: for each
/// mode of the left system,
///   first[n]  = int_0^1 K(1, y) phi_n(y) dy,
///   second[n] = (J - H + K(1,1)) phi_n(1) + int_0^1 K_x(1, y) phi_n(y) dy.
/// Both vanish when the two systems coincide.
#[derive(Debug, Clone)]
pub struct EndpointReport {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub k11_gap: f64,
}

pub fn endpoint_identities(
    kernel: &Kernel,
    spec_p: &Spectrum,
    big_h: f64,
    big_j: f64,
) -> Result<EndpointReport> {
    let m = kernel.m;
    let hc = kernel.dz;
    let ys: Vec<f64> = (0..=m).map(|b| b as f64 * hc).collect();
    let k_row = kernel.row_at_x1();
    // one-sided second-order x-derivative of K at x = 1 (first order on the
    // last interior node, linear extrapolation at the triangle tip)
    let mut dk_row = vec![0.0; m + 1];
    for b in 0..=m {
        let y_ok = |a: usize| b <= a;
        if y_ok(m - 2) && b <= m - 2 {
            dk_row[b] = (3.0 * kernel.at_cart(m, b) - 4.0 * kernel.at_cart(m - 1, b)
                + kernel.at_cart(m - 2, b))
                / (2.0 * hc);
        } else if b == m - 1 {
            dk_row[b] = (kernel.at_cart(m, b) - kernel.at_cart(m - 1, b)) / hc;
        } else {
            // tip: extend linearly from the two previous values
            dk_row[b] = 2.0 * dk_row[m - 1] - dk_row[m - 2];
        }
    }
    let k_spline = CubicSpline::new(&ys, &k_row)?;
    let dk_spline = CubicSpline::new(&ys, &dk_row)?;
    let gap = big_j - big_h + kernel.k11();

    let (p, h_left) = kernel.left_system();
    let mut first = Vec::with_capacity(spec_p.len());
    let mut second = Vec::with_capacity(spec_p.len());
    for n in 0..spec_p.len() {
        // phi_n on the kernel's quadrature nodes, evaluated exactly
        let lam = spec_p.lambda(n);
        let mut nodes: Vec<f64> = Vec::with_capacity(8 * m);
        let (qx, _) = crate::quad::composite_gl8_nodes(&ys);
        nodes.extend_from_slice(&qx);
        let states = eigenfunction_values(p, h_left, lam, &nodes)?;
        let (_, qw) = crate::quad::composite_gl8_nodes(&ys);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for ((&y, &w), st) in qx.iter().zip(&qw).zip(&states) {
            m1 += w * k_spline.eval(y) * st.0;
            m2 += w * dk_spline.eval(y) * st.0;
        }
        let phi_end = spec_p.phi_at_one(n);
        first.push(m1);
        second.push(gap * phi_end + m2);
    }
    Ok(EndpointReport {
        first,
        second,
        k11_gap: gap,
    })
}

/// Constructive extraction of the parameter differences encoded in the
/// kernel: J = H - K(1,1), j = h + K(0,0), and q - p = 2 d/dx K(x,x) by
/// fourth-order differentiation of the diagonal.
#[derive(Debug, Clone)]
pub struct KernelReconstruction {
    pub big_j: f64,
    pub little_j: f64,
    /// q(x) - p(x) at x = i/(2 mesh).
    pub q_minus_p: Vec<f64>,
    pub xs: Vec<f64>,
}

pub fn reconstruct_params_from_kernel(kernel: &Kernel, big_h: f64) -> Result<KernelReconstruction> {
    let diag = kernel.diagonal();
    let n = diag.len();
    if n < 5 {
        return Err(Error::Usage("diagonal too short to differentiate".into()));
    }
    if diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("diagonal contains non-finite values".into()));
    }
    let delta = 0.5 * kernel.dz;
    let d1 = |i: usize| -> f64 {
        if i >= 2 && i + 2 < n {
            (diag[i - 2] - 8.0 * diag[i - 1] + 8.0 * diag[i + 1] - diag[i + 2]) / (12.0 * delta)
        } else if i == 0 {
            (-25.0 * diag[0] + 48.0 * diag[1] - 36.0 * diag[2] + 16.0 * diag[3] - 3.0 * diag[4])
                / (12.0 * delta)
        } else if i == 1 {
            (-3.0 * diag[0] - 10.0 * diag[1] + 18.0 * diag[2] - 6.0 * diag[3] + diag[4])
                / (12.0 * delta)
        } else if i == n - 2 {
            (3.0 * diag[n - 1] + 10.0 * diag[n - 2] - 18.0 * diag[n - 3] + 6.0 * diag[n - 4]
                - diag[n - 5])
                / (12.0 * delta)
        } else {
            (25.0 * diag[n - 1] - 48.0 * diag[n - 2] + 36.0 * diag[n - 3] - 16.0 * diag[n - 4]
                + 3.0 * diag[n - 5])
                / (12.0 * delta)
        }
    };
    let q_minus_p: Vec<f64> = (0..n).map(|i| 2.0 * d1(i)).collect();
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * delta).collect();
    Ok(KernelReconstruction {
        big_j: big_h - kernel.k11(),
        little_j: kernel.h_left + kernel.k00(),
        q_minus_p,
        xs,
    })
}
