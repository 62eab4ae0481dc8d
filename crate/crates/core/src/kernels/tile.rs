//! Time tiling of the replicated temporal input.
//!
//! Four byte-shifted copies of the whole padded input do not fit a 64 kB
//! L1, so the time axis is split into parts. Each part carries a halo of
//! `K_t - 1` extra input samples so its outputs need nothing from
//! neighbouring parts. Parts are double buffered: the next part is being
//! filled while the current one is consumed, so two replicated parts must
//! fit the budget together.

use std::ops::Range;

use super::conv::padded_len;
use crate::error::EngineError;
use crate::model::ModelShape;

pub const DEFAULT_PARTS: usize = 5;
pub const DEFAULT_L1_BUDGET: usize = 65_536;
pub const REPLICATION: usize = 4;
/// Parts resident at once under double buffering.
pub const BUFFERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePart {
    /// Output time steps produced by this part.
    pub core: Range<usize>,
    /// Span of the padded input row the part reads, halo included.
    pub input: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub parts: Vec<TilePart>,
    pub halo: usize,
    pub replication: usize,
    /// Bytes of one replicated row copy (every part uses the same size).
    pub row_bytes: usize,
    /// Bytes of one replicated part: channels x copies x row bytes.
    pub part_bytes: usize,
    pub l1_budget: usize,
}

impl TilePlan {
    /// Bytes resident in L1 while parts are double buffered.
    pub fn resident_bytes(&self) -> usize {
        BUFFERS.min(self.parts.len()) * self.part_bytes
    }
}

/// The default five-part plan.
pub fn make_tile_plan(shape: &ModelShape, l1_budget: usize) -> Result<TilePlan, EngineError> {
    make_tile_plan_with_parts(shape, l1_budget, DEFAULT_PARTS)
}

/// Splits `[0, T)` into `parts` contiguous ranges whose lengths differ by at
/// most one, and checks that the double-buffered replicas fit `l1_budget`.
pub fn make_tile_plan_with_parts(shape: &ModelShape, l1_budget: usize, parts: usize) -> Result<TilePlan, EngineError> {
    let t = shape.samples;
    let k = shape.temporal_kernel;
    if parts == 0 || parts > t {
        return Err(EngineError::InvalidStrategy(format!("cannot split {t} samples into {parts} parts")));
    }
    let (base, extra) = (t / parts, t % parts);
    let mut start = 0;
    let cores: Vec<Range<usize>> = (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect();
    let longest = base + usize::from(extra > 0);
    let row_bytes = padded_len(longest, k);
    let part_bytes = shape.channels * REPLICATION * row_bytes;
    let plan = TilePlan {
        parts: cores
            .into_iter()
            .map(|core| {
                let input = core.start..core.start + row_bytes;
                TilePart { core, input }
            })
            .collect(),
        halo: k - 1,
        replication: REPLICATION,
        row_bytes,
        part_bytes,
        l1_budget,
    };
    let required = plan.resident_bytes();
    if required > l1_budget {
        return Err(EngineError::TileBudget { parts, required, budget: l1_budget });
    }
    Ok(plan)
}
