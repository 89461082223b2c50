use serde::{Deserialize, Serialize};

/// How kernel similarities are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full n-by-n centered, normalized Gram matrices. O(n^2) memory per
    /// feature; reference quality.
    Exact,
    /// Low-rank factors on a fixed basis grid; O(n*b) per feature.
    Nystrom,
}

/// Dependence measure used for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Normalized HSIC (centered kernel target alignment); scores in [0, 1].
    Nhsic,
    /// Plain HSIC on centered, un-normalized Grams. Exact mode only.
    Hsic,
}

/// Kernel and basis-grid parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Gaussian width (squared) for input features.
    pub sigma2_x: f64,
    /// Gaussian width (squared) for a real-valued output.
    pub sigma2_y: f64,
    /// Number of basis points for the Nystrom grid.
    pub basis_size: usize,
    pub basis_min: f64,
    pub basis_max: f64,
    /// Relative eigenvalue floor for the basis Gram inverse square root,
    /// as a fraction of the largest eigenvalue.
    pub eps_rel: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            sigma2_x: 1.0,
            sigma2_y: 1.0,
            basis_size: 20,
            basis_min: -5.0,
            basis_max: 5.0,
            eps_rel: 1e-10,
        }
    }
}

/// Active-set solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Positivity / denominator guard for step-size candidates.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10 }
    }
}

/// Worker-pool parameters for the scoring engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelConfig {
    /// Worker count; 0 picks the number of available cores, 1 runs the
    /// sequential path.
    pub workers: usize,
    /// Byte budget for cached per-feature representations. When the projected
    /// total exceeds the budget nothing is cached and representations are
    /// recomputed on demand (pivots stay pinned either way).
    pub cache_budget_bytes: u64,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            cache_budget_bytes: 2 * 1024 * 1024 * 1024,
        }
    }
}

/// Top-level configuration shared by the scoring engine, solver and CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub mode: Mode,
    pub measure: Measure,
    pub kernel: KernelConfig,
    pub solver: SolverConfig,
    pub parallel: ParallelConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            mode: Mode::Nystrom,
            measure: Measure::Nhsic,
            kernel: KernelConfig::default(),
            solver: SolverConfig::default(),
            parallel: ParallelConfig::default(),
        }
    }
}

impl Config {
    pub fn exact() -> Self {
        Self {
            mode: Mode::Exact,
            ..Self::default()
        }
    }

    pub fn nystrom() -> Self {
        Self::default()
    }

    /// HSIC on un-normalized Grams requires exact mode.
    pub fn validate(&self) -> crate::Result<()> {
        if self.measure == Measure::Hsic && self.mode != Mode::Exact {
            return Err(crate::Error::invalid(
                "measure=hsic is only available in exact mode",
            ));
        }
        if self.kernel.sigma2_x <= 0.0 || self.kernel.sigma2_y <= 0.0 {
            return Err(crate::Error::invalid("kernel widths must be positive"));
        }
        if self.kernel.basis_size < 2 {
            return Err(crate::Error::invalid("basis grid needs at least 2 points"));
        }
        if self.kernel.basis_min >= self.kernel.basis_max {
            return Err(crate::Error::invalid("basis range must be non-empty"));
        }
        if self.kernel.eps_rel <= 0.0 {
            return Err(crate::Error::invalid("eigenvalue floor must be positive"));
        }
        Ok(())
    }
}
