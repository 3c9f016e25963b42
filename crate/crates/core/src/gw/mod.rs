//! Gromov-Wasserstein family: loss and gradient, conditional gradient,
//! multiple random initializations, entropic and fused variants.

mod entropic;
mod loss;
mod multi_init;
mod solver;

pub use entropic::{solve_entropic_gw, EntropicGwConfig};
pub use loss::{gw_gradient, gw_loss};
pub use multi_init::{solve_gw_multi_init, MultiInitConfig, MultiInitResult, TrialRecord};
pub use solver::{solve_fgw, solve_fgw_from, solve_gw, CgConfig};

pub(crate) use loss::Contraction;

use crate::error::{Error, Result};
use crate::types::{check_shape, Coupling, MmSpace, RectCostMatrix};

/// A GW matching problem between two metric-measure spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct GwProblem {
    source: MmSpace,
    target: MmSpace,
    loss_exponent: u32,
}

impl GwProblem {
    /// Squared-loss problem (`q = 2`).
    pub fn new(source: MmSpace, target: MmSpace) -> Result<Self> {
        Ok(Self {
            source,
            target,
            loss_exponent: 2,
        })
    }

    /// Loss evaluation accepts any `q >= 1`; the solvers only accept 2.
    pub fn with_loss_exponent(mut self, q: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::UnsupportedLossExponent(q));
        }
        self.loss_exponent = q;
        Ok(self)
    }

    pub fn source(&self) -> &MmSpace {
        &self.source
    }

    pub fn target(&self) -> &MmSpace {
        &self.target
    }

    pub fn loss_exponent(&self) -> u32 {
        self.loss_exponent
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.source.len(), self.target.len())
    }

    pub(crate) fn require_squared_loss(&self) -> Result<()> {
        match self.loss_exponent {
            2 => Ok(()),
            q => Err(Error::UnsupportedLossExponent(q)),
        }
    }
}

/// Result of any GW-family solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GwSolution {
    pub coupling: Coupling,
    /// Unregularized objective of `coupling` (blended for fused GW).
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// -1 for the default product initialization, otherwise the trial index.
    pub trial_of_origin: i64,
    /// Objective after every accepted iterate, starting with the initial plan.
    pub history: Vec<f64>,
}

/// Fused GW: a blend of a feature transport cost and the GW structure term.
#[derive(Debug, Clone, PartialEq)]
pub struct FgwProblem {
    gw: GwProblem,
    feature_cost: RectCostMatrix,
    alpha: f64,
}

impl FgwProblem {
    pub fn new(gw: GwProblem, feature_cost: RectCostMatrix, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        if gw.source().features().is_none() || gw.target().features().is_none() {
            return Err(Error::MissingFeatures);
        }
        let (n, m) = feature_cost.dim();
        check_shape("feature cost rows", gw.source().len(), n)?;
        check_shape("feature cost columns", gw.target().len(), m)?;
        Ok(Self {
            gw,
            feature_cost,
            alpha,
        })
    }

    /// Uses the squared Euclidean distance between node features as `M`.
    pub fn from_features(gw: GwProblem, alpha: f64) -> Result<Self> {
        let (Some(a), Some(b)) = (gw.source().features(), gw.target().features()) else {
            return Err(Error::MissingFeatures);
        };
        check_shape("feature dimension", a.ncols(), b.ncols())?;
        let cost = RectCostMatrix::minkowski_power(a.view(), b.view(), 2)?;
        Self::new(gw, cost, alpha)
    }

    pub fn gw(&self) -> &GwProblem {
        &self.gw
    }

    pub fn feature_cost(&self) -> &RectCostMatrix {
        &self.feature_cost
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}
