//! Shape-preserving (Fritsch–Carlson / PCHIP) cubic interpolation on a
//! uniform grid, with clamped extrapolation.

#[derive(Debug, Clone, PartialEq)]
pub struct UniformPchip {
    x0: f64,
    dx: f64,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

fn edge_slope(h: f64, d0: f64, d1: f64) -> f64 {
    // three-point end formula with the usual sign / overshoot guards
    let s = ((2.0 * h + h) * d0 - h * d1) / (h + h);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

impl UniformPchip {
    /// `y[i]` sampled at `x0 + i·dx`. Needs at least two points.
    pub fn new(x0: f64, dx: f64, y: Vec<f64>) -> Self {
        assert!(y.len() >= 2, "PCHIP needs at least two samples");
        assert!(dx > 0.0);
        let n = y.len();
        let secant: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = secant[0];
            slopes[1] = secant[0];
        } else {
            for i in 1..n - 1 {
                let (a, b) = (secant[i - 1], secant[i]);
                slopes[i] = if a * b <= 0.0 {
                    0.0
                } else {
                    // harmonic mean (uniform spacing)
                    2.0 * a * b / (a + b)
                };
            }
            slopes[0] = edge_slope(dx, secant[0], secant[1]);
            slopes[n - 1] = edge_slope(dx, secant[n - 2], secant[n - 3]);
        }
        Self { x0, dx, y, slopes }
    }

    pub fn lower(&self) -> f64 {
        self.x0
    }

    pub fn upper(&self) -> f64 {
        self.x0 + self.dx * (self.y.len() - 1) as f64
    }

    /// Interpolated value and whether `x` fell outside the grid (in which
    /// case the nearest end value is returned).
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, bool) {
        let n = self.y.len();
        let s = (x - self.x0) / self.dx;
        if !(s >= 0.0) {
            return (self.y[0], true);
        }
        let i = s as usize;
        if i >= n - 1 {
            if s > (n - 1) as f64 {
                return (self.y[n - 1], true);
            }
            return (self.y[n - 1], false);
        }
        let t = s - i as f64;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.dx, self.slopes[i + 1] * self.dx);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        (h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1, false)
    }
}
