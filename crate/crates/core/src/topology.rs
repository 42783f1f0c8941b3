//! Component grids, the Gaussian neighborhood kernel and the time-dependent
//! annealing schedules for the kernel radius and the learning rate.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Below this radius `build_kernel` returns exact identity rows.
pub const IDENTITY_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// `1 × K`
    Line,
    /// `√K × √K`
    Square,
}

impl GridKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridKind::Line => "line",
            GridKind::Square => "square",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "line" => Some(GridKind::Line),
            "square" => Some(GridKind::Square),
            _ => None,
        }
    }
}

/// Arrangement of the `K` components on a rectangular grid. Linear index
/// `k` sits at row `k / cols`, column `k % cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridTopology {
    kind: GridKind,
    rows: usize,
    cols: usize,
    periodic: bool,
}

impl GridTopology {
    pub fn new(kind: GridKind, components: usize, periodic: bool) -> Result<Self> {
        if components == 0 {
            return Err(Error::usage("grid needs at least one component"));
        }
        let (rows, cols) = match kind {
            GridKind::Line => (1, components),
            GridKind::Square => {
                let side = (components as f64).sqrt().round() as usize;
                if side * side != components {
                    return Err(Error::usage(format!(
                        "square grid requires a perfect-square component count, got {components}"
                    )));
                }
                (side, side)
            }
        };
        Ok(GridTopology {
            kind,
            rows,
            cols,
            periodic,
        })
    }

    pub fn line(components: usize, periodic: bool) -> Result<Self> {
        GridTopology::new(GridKind::Line, components, periodic)
    }

    pub fn square(components: usize, periodic: bool) -> Result<Self> {
        GridTopology::new(GridKind::Square, components, periodic)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn components(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Grid cell `(row, col)` of linear index `k`.
    pub fn coord(&self, k: usize) -> (usize, usize) {
        (k / self.cols, k % self.cols)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    fn axis_offset(&self, a: usize, b: usize, len: usize) -> f64 {
        let diff = a.abs_diff(b);
        let diff = if self.periodic { diff.min(len - diff) } else { diff };
        diff as f64
    }

    /// Squared grid distance between the cells of `j` and `k`. Periodic
    /// grids take the shortest wrapped offset on each axis.
    pub fn distance_sq(&self, j: usize, k: usize) -> Result<f64> {
        let n = self.components();
        if j >= n || k >= n {
            return Err(Error::usage(format!("grid index out of range for K={n}")));
        }
        Ok(self.distance_sq_unchecked(j, k))
    }

    fn distance_sq_unchecked(&self, j: usize, k: usize) -> f64 {
        let (rj, cj) = self.coord(j);
        let (rk, ck) = self.coord(k);
        let dr = self.axis_offset(rj, rk, self.rows);
        let dc = self.axis_offset(cj, ck, self.cols);
        dr * dr + dc * dc
    }
}

/// Row-stochastic `K × K` smoothing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodKernel {
    g: Array2<f64>,
    sigma: f64,
    identity: bool,
}

impl NeighborhoodKernel {
    pub fn identity(components: usize) -> Self {
        NeighborhoodKernel {
            g: Array2::eye(components),
            sigma: 0.0,
            identity: true,
        }
    }

    /// Wraps an explicit matrix; rows must be non-negative and sum to one.
    pub fn from_matrix(g: Array2<f64>) -> Result<Self> {
        let (r, c) = g.dim();
        if r != c || r == 0 {
            return Err(Error::usage("kernel must be a non-empty square matrix"));
        }
        for row in g.rows() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::usage("kernel entries must be finite and non-negative"));
            }
            if (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::usage("kernel rows must sum to one"));
            }
        }
        let identity = g == Array2::eye(r);
        Ok(NeighborhoodKernel {
            g,
            sigma: f64::NAN,
            identity,
        })
    }

    pub fn components(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }

    /// Radius that produced the kernel (0 for the identity, NaN for explicit matrices).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }
}

/// `g_kj ∝ exp(−|c(j) − c(k)|² / 2σ²)`, each row normalized to unit sum.
pub fn build_kernel(topology: &GridTopology, sigma: f64) -> Result<NeighborhoodKernel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::usage(format!("kernel radius must be positive, got {sigma}")));
    }
    let n = topology.components();
    if sigma < IDENTITY_SIGMA {
        return Ok(NeighborhoodKernel {
            g: Array2::eye(n),
            sigma,
            identity: true,
        });
    }
    let denom = 2.0 * sigma * sigma;
    let mut g = Array2::zeros((n, n));
    for k in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = (-topology.distance_sq_unchecked(j, k) / denom).exp();
            g[[k, j]] = v;
            row_sum += v;
        }
        g.row_mut(k).mapv_inplace(|v| v / row_sum);
    }
    let identity = g == Array2::eye(n);
    Ok(NeighborhoodKernel { g, sigma, identity })
}

/// How the exponential decay constant is derived from the schedule endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauConvention {
    /// `v(t) = v0 exp(−τ (t − t0))`, `τ = ln(v0 / v∞) / (t∞ − t0)`: continuous
    /// at both ends of the decay window.
    #[default]
    Continuous,
    /// `v(t) = v0 exp(−τ t)`, `τ = ln((v0 − v∞) / (t∞ − t0))`, clamped into
    /// `[v∞, v0]`. Kept for compatibility; generally discontinuous.
    Literal,
}

impl TauConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            TauConvention::Continuous => "continuous",
            TauConvention::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "continuous" => Some(TauConvention::Continuous),
            "literal" => Some(TauConvention::Literal),
            _ => None,
        }
    }
}

/// Piecewise schedule: `start` before `t0`, `end` after `t_inf`, exponential
/// decay in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealingSchedule {
    start: f64,
    end: f64,
    t0: u64,
    t_inf: u64,
    convention: TauConvention,
}

impl AnnealingSchedule {
    pub fn new(start: f64, end: f64, t0: u64, t_inf: u64) -> Result<Self> {
        AnnealingSchedule::with_convention(start, end, t0, t_inf, TauConvention::Continuous)
    }

    pub fn with_convention(
        start: f64,
        end: f64,
        t0: u64,
        t_inf: u64,
        convention: TauConvention,
    ) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start > end && end > 0.0) {
            return Err(Error::usage(format!(
                "schedule requires start > end > 0, got start={start}, end={end}"
            )));
        }
        if t_inf <= t0 {
            return Err(Error::usage(format!(
                "schedule requires t_inf > t0, got t0={t0}, t_inf={t_inf}"
            )));
        }
        Ok(AnnealingSchedule {
            start,
            end,
            t0,
            t_inf,
            convention,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn t_inf(&self) -> u64 {
        self.t_inf
    }

    pub fn convention(&self) -> TauConvention {
        self.convention
    }

    /// Decay constant in 1/iterations.
    pub fn tau(&self) -> f64 {
        let span = (self.t_inf - self.t0) as f64;
        match self.convention {
            TauConvention::Continuous => (self.start / self.end).ln() / span,
            TauConvention::Literal => ((self.start - self.end) / span).ln(),
        }
    }

    pub fn value_at(&self, t: u64) -> f64 {
        if t < self.t0 {
            return self.start;
        }
        if t > self.t_inf {
            return self.end;
        }
        let v = match self.convention {
            TauConvention::Continuous => self.start * (-self.tau() * (t - self.t0) as f64).exp(),
            TauConvention::Literal => self.start * (-self.tau() * t as f64).exp(),
        };
        v.clamp(self.end, self.start)
    }
}

/// A constant value or an annealed one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Annealed(AnnealingSchedule),
}

impl Schedule {
    pub fn value_at(&self, t: u64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Annealed(s) => s.value_at(t),
        }
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        if let Schedule::Constant(v) = self {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::usage(format!("{what} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Kernel radius at iteration `t`.
pub fn sigma_at(schedule: &Schedule, t: u64) -> f64 {
    schedule.value_at(t)
}

/// Learning rate at iteration `t`; same functional form as the radius.
pub fn epsilon_at(schedule: &Schedule, t: u64) -> f64 {
    schedule.value_at(t)
}
