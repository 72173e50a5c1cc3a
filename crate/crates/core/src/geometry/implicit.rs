//! Built-in smooth level-set families for the generic geometry path.

use super::{LevelSet, Vector};

/// `(sum |y_i / a_i|^p)^(1/p) - 1`, scaled by the smallest semi-axis.
/// Smooth for `p >= 2`, convex for `p >= 1`.
#[derive(Debug, Clone)]
pub struct Superellipsoid<const N: usize> {
    pub center: Vector<N>,
    pub semi_axes: Vector<N>,
    pub exponent: f64,
}

impl<const N: usize> Superellipsoid<N> {
    fn norm_p(&self, x: &Vector<N>) -> f64 {
        let p = self.exponent;
        (0..N)
            .map(|i| ((x[i] - self.center[i]) / self.semi_axes[i]).abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

impl<const N: usize> LevelSet<N> for Superellipsoid<N> {
    fn value(&self, x: &Vector<N>) -> f64 {
        (self.norm_p(x) - 1.0) * self.semi_axes.min()
    }

    fn gradient(&self, x: &Vector<N>) -> Vector<N> {
        let p = self.exponent;
        let s = self.norm_p(x);
        let mut g = Vector::<N>::zeros();
        if s == 0.0 {
            return g;
        }
        for i in 0..N {
            let t = (x[i] - self.center[i]) / self.semi_axes[i];
            g[i] = s.powf(1.0 - p) * t.abs().powf(p - 1.0) * t.signum() / self.semi_axes[i];
        }
        g * self.semi_axes.min()
    }

    fn bounds(&self) -> (Vector<N>, Vector<N>) {
        (self.center - self.semi_axes, self.center + self.semi_axes)
    }

    fn is_convex(&self) -> bool {
        self.exponent >= 1.0
    }
}

/// Cassini-type peanut `|y|^4 - 2 c^2 (y_1^2 - |y_rest|^2) - (a^4 - c^4)`,
/// normalised by `4 a^3`. Non-convex with a waist for `c < a < c * sqrt(2)`.
#[derive(Debug, Clone)]
pub struct Peanut<const N: usize> {
    pub center: Vector<N>,
    pub a: f64,
    pub c: f64,
}

impl<const N: usize> LevelSet<N> for Peanut<N> {
    fn value(&self, x: &Vector<N>) -> f64 {
        let y = x - self.center;
        let r2 = y.norm_squared();
        let rest = r2 - y[0] * y[0];
        let c2 = self.c * self.c;
        (r2 * r2 - 2.0 * c2 * (y[0] * y[0] - rest) - (self.a.powi(4) - c2 * c2)) / (4.0 * self.a.powi(3))
    }

    fn gradient(&self, x: &Vector<N>) -> Vector<N> {
        let y = x - self.center;
        let r2 = y.norm_squared();
        let c2 = self.c * self.c;
        let mut g = y * (4.0 * r2 + 4.0 * c2);
        g[0] = y[0] * (4.0 * r2 - 4.0 * c2);
        g / (4.0 * self.a.powi(3))
    }

    fn bounds(&self) -> (Vector<N>, Vector<N>) {
        let half = Vector::<N>::repeat((self.a * self.a + self.c * self.c).sqrt() * 1.01);
        (self.center - half, self.center + half)
    }
}
