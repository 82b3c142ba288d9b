//! Source function layouts: Gaussian grids and piecewise-constant patches.

use crate::error::{Error, Result};

/// Uniform `m x m` grid of Gaussian sources over a square subdomain.
///
/// Centers are ordered lexicographically (`x` fastest), so index arithmetic
/// `i +/- 1` moves along `x` and `i +/- m` along `y`.
#[derive(Debug, Clone)]
pub struct GaussianSourceGrid {
    pub m: usize,
    /// Subdomain `[a, b]^2`.
    pub bounds: (f64, f64),
    pub centers: Vec<[f64; 2]>,
    pub kappa: f64,
    pub omega: f64,
}

/// Width `omega` such that a source decays to `fraction` of its center value
/// at distance `spacing`: solves `exp(-d^2 / omega) = f`.
pub fn gaussian_width_from_neighbor_fraction(spacing: f64, fraction: f64) -> Result<f64> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be positive, got {spacing}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fraction must be in (0,1), got {fraction}"
        )));
    }
    Ok(spacing * spacing / (1.0 / fraction).ln())
}

impl GaussianSourceGrid {
    pub fn new(m: usize, a: f64, b: f64, kappa: f64, omega: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "source grid needs m >= 2, got {m}"
            )));
        }
        if !(a < b) || a < 0.0 || b > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "subdomain [{a}, {b}]^2 must sit inside [0,1]^2"
            )));
        }
        if !(kappa > 0.0) || !(omega > 0.0) {
            return Err(Error::InvalidParameter(
                "kappa and omega must be positive".into(),
            ));
        }
        let d = (b - a) / (m - 1) as f64;
        let mut centers = Vec::with_capacity(m * m);
        for jy in 0..m {
            for ix in 0..m {
                centers.push([a + ix as f64 * d, a + jy as f64 * d]);
            }
        }
        Ok(Self {
            m,
            bounds: (a, b),
            centers,
            kappa,
            omega,
        })
    }

    /// The default layout: an `m x m` grid over `[0.1, 0.9]^2`, height 100,
    /// width from the 5%-at-neighbor rule.
    pub fn standard(m: usize) -> Result<Self> {
        let (a, b) = (0.1, 0.9);
        let spacing = (b - a) / (m - 1) as f64;
        let omega = gaussian_width_from_neighbor_fraction(spacing, 0.05)?;
        Self::new(m, a, b, 100.0, omega)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.bounds.1 - self.bounds.0) / (self.m - 1) as f64
    }

    /// Evaluates source `i` at a point.
    pub fn eval(&self, i: usize, x: [f64; 2]) -> f64 {
        let c = self.centers[i];
        let dx = x[0] - c[0];
        let dy = x[1] - c[1];
        self.kappa * (-(dx * dx + dy * dy) / self.omega).exp()
    }

    /// Evaluates an off-grid Gaussian with the grid's height and width.
    pub fn eval_free(&self, center: [f64; 2], x: [f64; 2]) -> f64 {
        let dx = x[0] - center[0];
        let dy = x[1] - center[1];
        self.kappa * (-(dx * dx + dy * dy) / self.omega).exp()
    }
}

/// Uniform decomposition of `[0,1]^2` into `m x m` square patches carrying
/// indicator-function sources, ordered lexicographically.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub m: usize,
}

impl PatchGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "patch grid needs m >= 2, got {m}"
            )));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn center(&self, i: usize) -> [f64; 2] {
        let ix = i % self.m;
        let jy = i / self.m;
        let w = self.spacing();
        [(ix as f64 + 0.5) * w, (jy as f64 + 0.5) * w]
    }

    /// Patch index containing a point.
    pub fn patch_of(&self, x: [f64; 2]) -> usize {
        let w = self.spacing();
        let ix = ((x[0] / w) as usize).min(self.m - 1);
        let jy = ((x[1] / w) as usize).min(self.m - 1);
        jy * self.m + ix
    }
}

/// Spatial layout of the control components, used for objective-independent
/// geometry queries (perturbation adjacency).
#[derive(Debug, Clone)]
pub enum SourceDescriptor {
    Gaussian(GaussianSourceGrid),
    Patches(PatchGrid),
}

impl SourceDescriptor {
    pub fn len(&self) -> usize {
        match self {
            SourceDescriptor::Gaussian(g) => g.len(),
            SourceDescriptor::Patches(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        match self {
            SourceDescriptor::Gaussian(g) => g.spacing(),
            SourceDescriptor::Patches(p) => p.spacing(),
        }
    }

    pub fn center(&self, i: usize) -> [f64; 2] {
        match self {
            SourceDescriptor::Gaussian(g) => g.centers[i],
            SourceDescriptor::Patches(p) => p.center(i),
        }
    }

    /// Indices of sources adjacent to source `i` under the radius rule
    /// `||c_j - c_i|| <= sqrt(2) * spacing`: all direct grid neighbors,
    /// truncated at the grid boundary.
    pub fn adjacency(&self, i: usize) -> Vec<usize> {
        let r = std::f64::consts::SQRT_2 * self.spacing() * (1.0 + 1e-9);
        let ci = self.center(i);
        (0..self.len())
            .filter(|&j| {
                if j == i {
                    return false;
                }
                let cj = self.center(j);
                let dx = cj[0] - ci[0];
                let dy = cj[1] - ci[1];
                (dx * dx + dy * dy).sqrt() <= r
            })
            .collect()
    }
}
