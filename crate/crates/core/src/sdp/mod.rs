//! Semidefinite relaxation of the l0 problem, its dual certificate, and the
//! interior point solver behind both.

mod block;
mod relax;

pub use block::{
    BlockSdp, Entry, IpmConfig, IpmSolution, LinearConstraint, SdpIterate, SolveStats, SolveStatus,
};
pub use relax::{
    blend_start, build_sdp, dual_conic_margins, extract_delta_star, lambda_max, rank1_certificate, solve_sdp,
    solve_sdp_from, DualCertificate, Rank1Verdict, SdpPrimal, SdpProblem, SdpSolution, RANK1_TOL,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solver-neutral JSON form of a block problem.
///
/// `cost` and constraint `entries` are `[block, row, col, value]` quadruples;
/// cost lists the upper triangle only, constraints list coefficients exactly as
/// stored (an off-diagonal coefficient `v` means `v * X[row, col]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSdpJson {
    pub block_orders: Vec<usize>,
    pub cost: Vec<(usize, usize, usize, f64)>,
    pub constraints: Vec<ConstraintJson>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub entries: Vec<(usize, usize, usize, f64)>,
    pub rhs: f64,
}

impl<T: Real> BlockSdp<T> {
    pub fn to_json_form(&self) -> BlockSdpJson {
        let mut cost = Vec::new();
        for (k, c) in self.cost.iter().enumerate() {
            for j in 0..c.ncols() {
                for i in 0..=j {
                    if c[(i, j)] != T::zero() {
                        cost.push((k, i, j, c[(i, j)].as_f64()));
                    }
                }
            }
        }
        BlockSdpJson {
            block_orders: self.block_orders.clone(),
            cost,
            constraints: self
                .constraints
                .iter()
                .map(|con| ConstraintJson {
                    entries: con.entries.iter().map(|e| (e.block, e.row, e.col, e.value.as_f64())).collect(),
                    rhs: con.rhs.as_f64(),
                })
                .collect(),
            offset: self.offset.as_f64(),
        }
    }

    pub fn from_json_form(form: &BlockSdpJson) -> Result<Self> {
        let mut cost: Vec<DMatrix<T>> = form.block_orders.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for &(k, i, j, v) in &form.cost {
            let blk = cost.get_mut(k).ok_or_else(|| Error::Parse(format!("cost block {k} out of range")))?;
            if i >= blk.nrows() || j >= blk.ncols() {
                return Err(Error::Parse(format!("cost entry ({i}, {j}) out of range in block {k}")));
            }
            blk[(i, j)] = T::lit(v);
            blk[(j, i)] = T::lit(v);
        }
        let sdp = BlockSdp {
            block_orders: form.block_orders.clone(),
            cost,
            constraints: form
                .constraints
                .iter()
                .map(|c| LinearConstraint {
                    entries: c.entries.iter().map(|&(b, r, col, v)| Entry::new(b, r, col, T::lit(v))).collect(),
                    rhs: T::lit(c.rhs),
                })
                .collect(),
            offset: T::lit(form.offset),
        };
        sdp.validate()?;
        Ok(sdp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_form())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_form(&serde_json::from_str(text)?)
    }
}
