//! Uniform spatial grids and cubic-spline interpolation of sampled functions.

use crate::error::{Error, Result};

/// Uniform grid of `m + 1` nodes covering [0, 1] exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformGrid {
    cells: usize,
}

impl UniformGrid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 8 {
            return Err(Error::Domain(format!(
                "grid must have at least 8 cells, got {cells}"
            )));
        }
        Ok(UniformGrid { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }
}

/// Cubic spline through `(xs_i, ys_i)` with strictly increasing knots.
/// End slopes come from one-sided quartic interpolation of the first and last
/// five samples, which keeps fourth-order accuracy up to the boundary and a
/// strictly tridiagonal, diagonally dominant system.
/// Piecewise s(x) = y_i + b_i d + c_i d^2 + e_i d^3, d = x - x_i.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    e: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() || n < 5 {
            return Err(Error::Usage(format!(
                "spline needs >= 5 matching samples, got {} / {}",
                n,
                ys.len()
            )));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Usage("spline knots must be strictly increasing".into()));
            }
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let slope_left = lagrange_deriv(&xs[..5], &ys[..5], xs[0]);
        let slope_right = lagrange_deriv(&xs[n - 5..], &ys[n - 5..], xs[n - 1]);

        // second derivatives sigma_i, clamped ends
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        upper[0] = h[0];
        rhs[0] = 6.0 * ((ys[1] - ys[0]) / h[0] - slope_left);
        for i in 1..n - 1 {
            lower[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        lower[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        rhs[n - 1] = 6.0 * (slope_right - (ys[n - 1] - ys[n - 2]) / h[n - 2]);

        let sigma = thomas(&lower, &diag, &upper, &rhs)?;

        let mut b = vec![0.0; n - 1];
        let mut c = vec![0.0; n - 1];
        let mut e = vec![0.0; n - 1];
        for i in 0..n - 1 {
            b[i] = (ys[i + 1] - ys[i]) / h[i] - h[i] * (2.0 * sigma[i] + sigma[i + 1]) / 6.0;
            c[i] = sigma[i] / 2.0;
            e[i] = (sigma[i + 1] - sigma[i]) / (6.0 * h[i]);
        }
        Ok(CubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            b,
            c,
            e,
        })
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 2] {
            return n - 2;
        }
        // binary search for the cell containing x
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let d = x - self.xs[i];
        self.ys[i] + d * (self.b[i] + d * (self.c[i] + d * self.e[i]))
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let d = x - self.xs[i];
        self.b[i] + d * (2.0 * self.c[i] + 3.0 * d * self.e[i])
    }

    /// Exact integral of the spline from the first knot to `x`.
    pub fn integral_to(&self, x: f64) -> f64 {
        let i_end = self.locate(x);
        let mut acc = 0.0;
        for i in 0..i_end {
            let d = self.xs[i + 1] - self.xs[i];
            acc += cell_integral(self.ys[i], self.b[i], self.c[i], self.e[i], d);
        }
        let d = x - self.xs[i_end];
        acc + cell_integral(self.ys[i_end], self.b[i_end], self.c[i_end], self.e[i_end], d)
    }
}

fn cell_integral(y: f64, b: f64, c: f64, e: f64, d: f64) -> f64 {
    d * (y + d * (b / 2.0 + d * (c / 3.0 + d * e / 4.0)))
}

/// Derivative at `x` of the Lagrange polynomial through (xs_j, ys_j).
fn lagrange_deriv(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut d = 0.0;
    for j in 0..n {
        // derivative of the j-th basis polynomial at x
        let mut lj = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            let mut term = 1.0 / (xs[j] - xs[k]);
            for m in 0..n {
                if m != j && m != k {
                    term *= (x - xs[m]) / (xs[j] - xs[m]);
                }
            }
            lj += term;
        }
        d += ys[j] * lj;
    }
    d
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if diag[0].abs() < 1e-300 {
        return Err(Error::Numerical("singular spline system".into()));
    }
    cp[0] = upper[0] / diag[0];
    dp[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * cp[i - 1];
        if m.abs() < 1e-300 {
            return Err(Error::Numerical("singular spline system".into()));
        }
        cp[i] = upper[i] / m;
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m;
    }
    let mut s = vec![0.0; n];
    s[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        s[i] = dp[i] - cp[i] * s[i + 1];
    }
    Ok(s)
}

/// A sampled function on a [`UniformGrid`] with cubic interpolation.
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: UniformGrid,
    values: Vec<f64>,
    spline: CubicSpline,
}

impl GridFn {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "expected {} samples for grid with {} cells, got {}",
                grid.len(),
                grid.cells(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid samples must be finite".into()));
        }
        let spline = CubicSpline::new(&grid.nodes(), &values)?;
        Ok(GridFn { grid, values, spline })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: UniformGrid, f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spline.eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.spline.deriv(x)
    }

    /// Exact integral of the interpolant from 0 to `x`.
    pub fn integral_to(&self, x: f64) -> f64 {
        self.spline.integral_to(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubics_exactly() {
        let xs: Vec<f64> = (0..=12).map(|i| i as f64 / 12.0).collect();
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let s = CubicSpline::new(&xs, &ys).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((s.eval(x) - f(x)).abs() < 1e-13, "x = {x}");
        }
        // derivative and integral of the cubic are exact too
        assert!((s.deriv(0.3) - (-2.0 + 0.3 + 9.0 * 0.09)).abs() < 1e-12);
        let exact = 1.0 - 1.0 + 0.5 / 3.0 + 3.0 / 4.0;
        assert!((s.integral_to(1.0) - exact).abs() < 1e-13);
    }

    #[test]
    fn spline_converges_fourth_order() {
        let f = |x: f64| (3.0 * x).sin();
        let err = |m: usize| -> f64 {
            let xs: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
            let s = CubicSpline::new(&xs, &ys).unwrap();
            (0..=500)
                .map(|i| {
                    let x = i as f64 / 500.0;
                    (s.eval(x) - f(x)).abs()
                })
                .fold(0.0, f64::max)
        };
        let e16 = err(16);
        let e32 = err(32);
        assert!(e16 / e32 > 12.0, "ratio {}", e16 / e32);
    }

    #[test]
    fn grid_fn_validates() {
        let g = UniformGrid::new(8).unwrap();
        assert!(GridFn::new(g, vec![0.0; 3]).is_err());
        assert!(UniformGrid::new(4).is_err());
        assert!(GridFn::new(g, vec![f64::NAN; 9]).is_err());
    }
}
