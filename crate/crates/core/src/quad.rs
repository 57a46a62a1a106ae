//! Quadrature grids shared by the coherent-state and symbol modules.

/// Midpoint product rule on the square [-extent, extent]^2.
///
/// Nodes sit at cell centers so the grid never touches the boundary; the
/// integrands used here decay like exp(-(p^2+q^2)/2), so the midpoint rule
/// converges super-algebraically once `extent` clears the support.
#[derive(Debug, Clone, Copy)]
pub struct PlaneQuad {
    pub extent: f64,
    pub spacing: f64,
    /// Multiplies the measure; 1.0 is the canonical dp dq normalization.
    pub measure_scale: f64,
}

impl PlaneQuad {
    pub fn new(extent: f64, spacing: f64) -> Self {
        Self { extent, spacing, measure_scale: 1.0 }
    }

    pub fn with_measure_scale(mut self, scale: f64) -> Self {
        self.measure_scale = scale;
        self
    }

    pub fn cells_per_axis(&self) -> usize {
        (2.0 * self.extent / self.spacing).round() as usize
    }

    /// Cell-center coordinate along one axis.
    pub fn node(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.spacing
    }

    /// Weight of one cell, including the measure scale.
    pub fn weight(&self) -> f64 {
        self.spacing * self.spacing * self.measure_scale
    }

    /// All (p, q) nodes in row-major order; the iteration order is part of
    /// the determinism contract of every accumulation built on it.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let n = self.cells_per_axis();
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            let p = self.node(i);
            for j in 0..n {
                pts.push((p, self.node(j)));
            }
        }
        pts
    }
}

/// Uniform half-line grid on [0, x_max] with n cells (n+1 nodes) and
/// trapezoid weights.
#[derive(Debug, Clone, Copy)]
pub struct HalfLineGrid {
    pub x_max: f64,
    pub n: usize,
}

impl HalfLineGrid {
    pub fn new(x_max: f64, n: usize) -> Self {
        Self { x_max, n }
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dx()
    }

    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    /// A grid with doubled resolution over the same interval.
    pub fn refined(&self) -> Self {
        Self { x_max: self.x_max, n: self.n * 2 }
    }
}
