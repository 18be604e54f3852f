//! Decay functions and association-strength metrics computed from a 2x2
//! contingency table of co-occurrence mass.

use thiserror::Error;

use crate::model::{DecayFn, EngineConfig, Query};
use crate::stores::Stores;

#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("pair support {support} below minimum {min}")]
    InsufficientSupport { support: f64, min: f64 },
    #[error("metric undefined: zero margin")]
    ZeroMargin,
}

/// Multiplicative decay factor for a weight last touched `delta_ms` ago.
/// Always 1 at delta 0.
pub fn decay_factor(delta_ms: i64, cfg: &EngineConfig) -> f64 {
    debug_assert!(delta_ms >= 0);
    if delta_ms <= 0 {
        return 1.0;
    }
    match cfg.decay_fn {
        DecayFn::Exponential => {
            let half_lives = delta_ms as f64 / cfg.halflife_ms as f64;
            2f64.powf(-half_lives)
        }
        DecayFn::Step => {
            if delta_ms < cfg.step_age_ms {
                1.0
            } else {
                cfg.step_floor
            }
        }
        DecayFn::Linear => (1.0 - delta_ms as f64 / cfg.linear_span_ms as f64).max(0.0),
    }
}

/// Soft-count contingency table for the ordered association A -> B.
///
/// Cells: n11 = B follows A, n12 = B follows not-A, n21 = not-B follows A,
/// n22 = neither. Built from decayed weights, so cells are fractional; with
/// decay off and unit weights this reduces to classic counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContingencyTable {
    pub n11: f64,
    pub n12: f64,
    pub n21: f64,
    pub n22: f64,
}

impl ContingencyTable {
    pub fn new(n11: f64, n12: f64, n21: f64, n22: f64) -> Self {
        ContingencyTable { n11, n12, n21, n22 }
    }

    /// Assemble a table from pair weight, per-query margin weights, and the
    /// total weight mass. Margins are floored so no cell goes negative.
    pub fn from_weights(pair: f64, weight_a: f64, weight_b: f64, total_mass: f64) -> Self {
        let n11 = pair;
        let row_a = weight_a.max(n11); // mass of contexts containing A
        let col_b = weight_b.max(n11); // mass of contexts containing B
        let n21 = row_a - n11;
        let n12 = col_b - n11;
        let n22 = (total_mass - row_a - col_b + n11).max(0.0);
        ContingencyTable { n11, n12, n21, n22 }
    }

    pub fn total(&self) -> f64 {
        self.n11 + self.n12 + self.n21 + self.n22
    }

    fn margins(&self) -> (f64, f64, f64, f64) {
        (
            self.n11 + self.n21, // A present
            self.n12 + self.n22, // A absent
            self.n11 + self.n12, // B present
            self.n21 + self.n22, // B absent
        )
    }
}

/// Assemble the contingency table for the ordered association A -> B from
/// the live stores: the pair weight, the two query weights as margins, and
/// the global weight mass as the total.
pub fn build_table(
    a: &Query,
    b: &Query,
    now: i64,
    stores: &Stores,
    cfg: &EngineConfig,
) -> Result<ContingencyTable, AssociationError> {
    let pair = stores.cooc.weight(a, b, now, cfg);
    if pair < cfg.min_pair_support {
        return Err(AssociationError::InsufficientSupport {
            support: pair,
            min: cfg.min_pair_support,
        });
    }
    let weight_a = stores.qstats.weight(a, now, cfg);
    let weight_b = stores.qstats.weight(b, now, cfg);
    let total = stores.qstats.total_mass(now, cfg);
    Ok(ContingencyTable::from_weights(pair, weight_a, weight_b, total))
}

/// Fraction of A-mass that B follows: n11 / (n11 + n21).
pub fn conditional_relative_frequency(tbl: &ContingencyTable) -> f64 {
    let denom = tbl.n11 + tbl.n21;
    if denom <= 0.0 {
        return 0.0;
    }
    tbl.n11 / denom
}

/// Pointwise mutual information in bits.
pub fn pmi(tbl: &ContingencyTable) -> Result<f64, AssociationError> {
    let n = tbl.total();
    let (row_a, _, col_b, _) = tbl.margins();
    if n <= 0.0 || row_a <= 0.0 || col_b <= 0.0 || tbl.n11 <= 0.0 {
        return Err(AssociationError::ZeroMargin);
    }
    Ok(((tbl.n11 * n) / (row_a * col_b)).log2())
}

/// Dunning's log-likelihood ratio, natural log, with 0*ln(0) = 0.
pub fn log_likelihood_ratio(tbl: &ContingencyTable) -> f64 {
    let n = tbl.total();
    if n <= 0.0 {
        return 0.0;
    }
    let (row_a, row_na, col_b, col_nb) = tbl.margins();
    let term = |obs: f64, row: f64, col: f64| {
        if obs <= 0.0 || row <= 0.0 || col <= 0.0 {
            0.0
        } else {
            obs * (obs * n / (row * col)).ln()
        }
    };
    let llr = 2.0
        * (term(tbl.n11, row_a, col_b)
            + term(tbl.n12, row_na, col_b)
            + term(tbl.n21, row_a, col_nb)
            + term(tbl.n22, row_na, col_nb));
    // Floating-point noise can turn an exactly-independent table slightly
    // negative; LLR is non-negative by construction.
    llr.max(0.0)
}

/// Pearson's chi-square statistic for the 2x2 table.
pub fn chi_square(tbl: &ContingencyTable) -> Result<f64, AssociationError> {
    let n = tbl.total();
    let (row_a, row_na, col_b, col_nb) = tbl.margins();
    if row_a <= 0.0 || row_na <= 0.0 || col_b <= 0.0 || col_nb <= 0.0 {
        return Err(AssociationError::ZeroMargin);
    }
    let det = tbl.n11 * tbl.n22 - tbl.n12 * tbl.n21;
    Ok(n * det * det / (row_a * row_na * col_b * col_nb))
}
