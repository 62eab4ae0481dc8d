//! The integer inference engine.
//!
//! The optimization ladder is a set of independent switches on
//! [`StrategyConfig`]. Every valid configuration computes the same integers:
//! the switches change the schedule, the data layout and how much work each
//! operation does, never the arithmetic result.

mod conv;
mod exec;
mod layers;
mod tile;

use std::fmt;

pub use conv::{
    check_replicas, conv_scalar, conv_shuffle, fused_pool_bn_relu, padded_len, replicate, spatial_dw32, xcorr_replicated,
    xcorr_shuffle, ConvKind,
};
pub use exec::{run_units, WorkerCtx, WorkerPartition, MAX_WORKERS};
pub use layers::{fc_layer, run_inference, separable_block, LayerTrace, RunOutput};
pub use tile::{make_tile_plan, make_tile_plan_with_parts, TilePart, TilePlan, DEFAULT_L1_BUDGET, DEFAULT_PARTS};

use crate::error::EngineError;

/// One rung combination of the optimization ladder.
///
/// Dependencies: `replicated` needs `packed` and `interleaved`;
/// `interleaved` needs `transposed`; `xcorr` needs `packed`. Parallel
/// execution is on whenever `workers > 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyConfig {
    /// A: 4-lane packed dot products, four outputs per block.
    pub packed: bool,
    /// B: channel-innermost layouts where the consumer reduces over channels.
    pub transposed: bool,
    /// C: worker count, 1 to 8.
    pub workers: usize,
    /// D: temporal and depthwise kernels stored pre-reversed.
    pub xcorr: bool,
    /// E: temporal and spatial layers interleaved per time block.
    pub interleaved: bool,
    /// F: temporal and spatial batch norm merged into one division.
    pub merged_bn: bool,
    /// G: pooling before batch norm and ReLU, one division per pooled value.
    pub reordered: bool,
    /// H: four shifted input copies instead of shuffles, time tiled.
    pub replicated: bool,
    /// Time tiles used under H.
    pub tile_parts: usize,
    /// L1 capacity the tiles must fit under H.
    pub l1_budget: usize,
    /// Test hook: corrupts the spatial output element at this flat index.
    #[doc(hidden)]
    pub fault: Option<usize>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig::baseline()
    }
}

/// Names of the cumulative ladder configurations.
pub const PRESETS: [&str; 6] = ["baseline", "ab", "c", "d", "efg", "h"];

impl StrategyConfig {
    pub fn baseline() -> Self {
        StrategyConfig {
            packed: false,
            transposed: false,
            workers: 1,
            xcorr: false,
            interleaved: false,
            merged_bn: false,
            reordered: false,
            replicated: false,
            tile_parts: DEFAULT_PARTS,
            l1_budget: DEFAULT_L1_BUDGET,
            fault: None,
        }
    }

    /// A cumulative configuration by name. Presets from `c` upward default
    /// to [`MAX_WORKERS`] workers.
    pub fn preset(name: &str) -> Result<Self, EngineError> {
        let mut c = StrategyConfig::baseline();
        let rank = PRESETS
            .iter()
            .position(|p| p.eq_ignore_ascii_case(name))
            .ok_or_else(|| EngineError::InvalidStrategy(format!("unknown strategy `{name}`; expected one of {}", PRESETS.join(", "))))?;
        if rank >= 1 {
            c.packed = true;
            c.transposed = true;
        }
        if rank >= 2 {
            c.workers = MAX_WORKERS;
        }
        if rank >= 3 {
            c.xcorr = true;
        }
        if rank >= 4 {
            c.interleaved = true;
            c.merged_bn = true;
            c.reordered = true;
        }
        if rank >= 5 {
            c.replicated = true;
        }
        Ok(c)
    }

    pub fn all_presets() -> Vec<StrategyConfig> {
        PRESETS.iter().map(|p| StrategyConfig::preset(p).expect("built-in preset")).collect()
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidStrategy(m.to_string()));
        if !(1..=MAX_WORKERS).contains(&self.workers) {
            return Err(EngineError::InvalidStrategy(format!("worker count {} outside 1..={MAX_WORKERS}", self.workers)));
        }
        if self.replicated && !(self.packed && self.interleaved) {
            return bad("H (replication) requires A (packed lanes) and E (interleaving)");
        }
        if self.interleaved && !self.transposed {
            return bad("E (interleaving) requires B (transposed layouts)");
        }
        if self.xcorr && !self.packed {
            return bad("D (reversed weights) requires A (packed lanes)");
        }
        if self.replicated && self.tile_parts == 0 {
            return bad("H needs at least one tile");
        }
        Ok(())
    }

    pub fn parallel(&self) -> bool {
        self.workers > 1
    }

    /// The rung letters that are on, e.g. `A+B+C+D`.
    pub fn flags(&self) -> String {
        let on = [
            (self.packed, "A"),
            (self.transposed, "B"),
            (self.parallel(), "C"),
            (self.xcorr, "D"),
            (self.interleaved, "E"),
            (self.merged_bn, "F"),
            (self.reordered, "G"),
            (self.replicated, "H"),
        ];
        let s: Vec<&str> = on.iter().filter(|(b, _)| *b).map(|(_, l)| *l).collect();
        if s.is_empty() {
            "none".into()
        } else {
            s.join("+")
        }
    }

    /// The preset this configuration matches, ignoring the worker count
    /// except to tell `ab` from `c`.
    pub fn preset_name(&self) -> Option<&'static str> {
        let mut probe = self.clone();
        probe.fault = None;
        PRESETS.iter().copied().find(|p| {
            let mut want = StrategyConfig::preset(p).unwrap();
            want.workers = probe.workers;
            want.tile_parts = probe.tile_parts;
            want.l1_budget = probe.l1_budget;
            want == probe && (*p != "ab" || !probe.parallel()) && (*p != "c" || probe.parallel())
        })
    }
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(p) => write!(f, "{p}"),
            None => write!(f, "{}", self.flags()),
        }
    }
}
