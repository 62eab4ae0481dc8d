//! Operation counters, a peak-memory tracker and the run report.
//!
//! Counters count abstract operations: every `sdot4` is 4 MACs, every scalar
//! multiply-accumulate is 1, every integer division on the inference path is
//! 1, and every lane realignment (a `shuffle_shift` or a weight lane
//! reversal) is 1.

use std::fmt::Write as _;
use std::ops::AddAssign;

use crate::error::ReportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerId {
    Temporal,
    Spatial,
    Depthwise,
    Pointwise,
    Fc,
}

impl LayerId {
    pub const ALL: [LayerId; 5] = [LayerId::Temporal, LayerId::Spatial, LayerId::Depthwise, LayerId::Pointwise, LayerId::Fc];

    pub fn name(&self) -> &'static str {
        match self {
            LayerId::Temporal => "temporal",
            LayerId::Spatial => "spatial",
            LayerId::Depthwise => "depthwise",
            LayerId::Pointwise => "pointwise",
            LayerId::Fc => "fc",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerCounters {
    pub macs: u64,
    pub divisions: u64,
    pub realignments: u64,
    pub packed_loads: u64,
}

impl AddAssign for LayerCounters {
    fn add_assign(&mut self, o: Self) {
        self.macs += o.macs;
        self.divisions += o.divisions;
        self.realignments += o.realignments;
        self.packed_loads += o.packed_loads;
    }
}

/// Per-layer counters of one worker (or of a whole run after merging).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    layers: [LayerCounters; 5],
}

impl Counters {
    pub fn layer(&self, id: LayerId) -> &LayerCounters {
        &self.layers[id.index()]
    }

    pub fn layer_mut(&mut self, id: LayerId) -> &mut LayerCounters {
        &mut self.layers[id.index()]
    }

    pub fn total(&self) -> LayerCounters {
        let mut t = LayerCounters::default();
        for l in &self.layers {
            t += *l;
        }
        t
    }

    /// Elementwise sum; associative and commutative.
    pub fn merge(&mut self, other: &Counters) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            *a += *b;
        }
    }
}

/// Tracks live model-owned buffers and records the high-water marks.
///
/// Feature maps (including replicas) and scratch buffers are tracked
/// separately; weights are never registered.
#[derive(Debug, Clone, Default)]
pub struct MemTracker {
    live: Vec<(&'static str, usize)>,
    current: usize,
    peak: usize,
    scratch_live: Vec<(&'static str, usize)>,
    scratch_current: usize,
    scratch_peak: usize,
    scratch_allocations: usize,
}

impl MemTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, name: &'static str, bytes: usize) {
        self.live.push((name, bytes));
        self.current += bytes;
        self.peak = self.peak.max(self.current);
    }

    /// Releases the most recent live buffer called `name`.
    pub fn free(&mut self, name: &str) {
        let i = self.live.iter().rposition(|(n, _)| *n == name).unwrap_or_else(|| panic!("buffer `{name}` not live"));
        self.current -= self.live.remove(i).1;
    }

    pub fn alloc_scratch(&mut self, name: &'static str, bytes: usize) {
        self.scratch_live.push((name, bytes));
        self.scratch_current += bytes;
        self.scratch_allocations += 1;
        self.scratch_peak = self.scratch_peak.max(self.scratch_current);
    }

    pub fn free_scratch(&mut self, name: &str) {
        let i = self
            .scratch_live
            .iter()
            .rposition(|(n, _)| *n == name)
            .unwrap_or_else(|| panic!("scratch `{name}` not live"));
        self.scratch_current -= self.scratch_live.remove(i).1;
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn scratch_peak(&self) -> usize {
        self.scratch_peak
    }

    pub fn scratch_allocations(&self) -> usize {
        self.scratch_allocations
    }
}

pub const MEMORY_BASIS: &str =
    "modeled target bytes: live 8-bit feature maps and replicas, rows padded to 4 bytes; weights excluded; scratch reported separately";

/// Everything measured during one inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub shape: String,
    pub strategy: String,
    pub workers: usize,
    pub mac_count: u64,
    pub division_count: u64,
    pub realignment_count: u64,
    pub packed_load_count: u64,
    pub peak_featuremap_bytes: usize,
    pub peak_scratch_bytes: usize,
    pub layers: Counters,
    /// MACs executed by each worker, in worker order.
    pub worker_macs: Vec<u64>,
    pub memory_basis: String,
}

impl RunReport {
    pub fn new(shape: String, strategy: String, workers: usize, layers: Counters, worker_macs: Vec<u64>, mem: &MemTracker) -> Self {
        let t = layers.total();
        RunReport {
            shape,
            strategy,
            workers,
            mac_count: t.macs,
            division_count: t.divisions,
            realignment_count: t.realignments,
            packed_load_count: t.packed_loads,
            peak_featuremap_bytes: mem.peak(),
            peak_scratch_bytes: mem.scratch_peak(),
            layers,
            worker_macs,
            memory_basis: MEMORY_BASIS.to_string(),
        }
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "shape={}", self.shape);
        let _ = writeln!(s, "strategy={}", self.strategy);
        let _ = writeln!(s, "workers={}", self.workers);
        let _ = writeln!(s, "mac_count={}", self.mac_count);
        let _ = writeln!(s, "division_count={}", self.division_count);
        let _ = writeln!(s, "realignment_count={}", self.realignment_count);
        let _ = writeln!(s, "packed_load_count={}", self.packed_load_count);
        let _ = writeln!(s, "peak_featuremap_bytes={}", self.peak_featuremap_bytes);
        let _ = writeln!(s, "peak_scratch_bytes={}", self.peak_scratch_bytes);
        for id in LayerId::ALL {
            let l = self.layers.layer(id);
            let n = id.name();
            let _ = writeln!(s, "layer.{n}.macs={}", l.macs);
            let _ = writeln!(s, "layer.{n}.divisions={}", l.divisions);
            let _ = writeln!(s, "layer.{n}.realignments={}", l.realignments);
            let _ = writeln!(s, "layer.{n}.packed_loads={}", l.packed_loads);
        }
        let wm: Vec<String> = self.worker_macs.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "worker_macs={}", wm.join(","));
        let _ = writeln!(s, "memory_basis={}", self.memory_basis);
        s
    }

    pub fn parse_kv(text: &str) -> Result<RunReport, ReportError> {
        let mut r = RunReport {
            shape: String::new(),
            strategy: String::new(),
            workers: 0,
            mac_count: 0,
            division_count: 0,
            realignment_count: 0,
            packed_load_count: 0,
            peak_featuremap_bytes: 0,
            peak_scratch_bytes: 0,
            layers: Counters::default(),
            worker_macs: Vec::new(),
            memory_basis: String::new(),
        };
        let mut seen_shape = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| ReportError::Parse { line: line_no, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let num = || value.parse::<u64>().map_err(|e| err(format!("`{key}`: {e}")));
            match key {
                "shape" => {
                    r.shape = value.to_string();
                    seen_shape = true;
                }
                "strategy" => r.strategy = value.to_string(),
                "workers" => r.workers = num()? as usize,
                "mac_count" => r.mac_count = num()?,
                "division_count" => r.division_count = num()?,
                "realignment_count" => r.realignment_count = num()?,
                "packed_load_count" => r.packed_load_count = num()?,
                "peak_featuremap_bytes" => r.peak_featuremap_bytes = num()? as usize,
                "peak_scratch_bytes" => r.peak_scratch_bytes = num()? as usize,
                "memory_basis" => r.memory_basis = value.to_string(),
                "worker_macs" => {
                    r.worker_macs = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|v| v.parse::<u64>().map_err(|e| err(format!("worker_macs: {e}"))))
                            .collect::<Result<_, _>>()?
                    }
                }
                _ => {
                    let rest = key.strip_prefix("layer.").ok_or_else(|| err(format!("unknown key `{key}`")))?;
                    let (layer, field) = rest.split_once('.').ok_or_else(|| err(format!("unknown key `{key}`")))?;
                    let id = LayerId::ALL
                        .into_iter()
                        .find(|l| l.name() == layer)
                        .ok_or_else(|| err(format!("unknown layer `{layer}`")))?;
                    let v = num()?;
                    let l = r.layers.layer_mut(id);
                    match field {
                        "macs" => l.macs = v,
                        "divisions" => l.divisions = v,
                        "realignments" => l.realignments = v,
                        "packed_loads" => l.packed_loads = v,
                        _ => return Err(err(format!("unknown counter `{field}`"))),
                    }
                }
            }
        }
        if !seen_shape {
            return Err(ReportError::Parse { line: 0, reason: "missing shape".into() });
        }
        Ok(r)
    }

    /// Column-aligned per-layer table.
    pub fn to_table(&self) -> String {
        let mut rows = vec![vec![
            "layer".to_string(),
            "MACs".to_string(),
            "divisions".to_string(),
            "realignments".to_string(),
            "packed loads".to_string(),
        ]];
        for id in LayerId::ALL {
            let l = self.layers.layer(id);
            rows.push(vec![
                id.name().to_string(),
                l.macs.to_string(),
                l.divisions.to_string(),
                l.realignments.to_string(),
                l.packed_loads.to_string(),
            ]);
        }
        rows.push(vec![
            "total".to_string(),
            self.mac_count.to_string(),
            self.division_count.to_string(),
            self.realignment_count.to_string(),
            self.packed_load_count.to_string(),
        ]);
        let mut s = format!("strategy {} | workers {} | shape {}\n", self.strategy, self.workers, self.shape);
        s.push_str(&render_table(&rows));
        let _ = writeln!(s, "peak feature-map bytes: {}", self.peak_featuremap_bytes);
        let _ = writeln!(s, "peak scratch bytes: {}", self.peak_scratch_bytes);
        let _ = writeln!(s, "memory basis: {}", self.memory_basis);
        s
    }

    fn counter_values(&self) -> [(&'static str, u64); 6] {
        [
            ("MACs", self.mac_count),
            ("divisions", self.division_count),
            ("realignments", self.realignment_count),
            ("packed loads", self.packed_load_count),
            ("feature-map bytes", self.peak_featuremap_bytes as u64),
            ("scratch bytes", self.peak_scratch_bytes as u64),
        ]
    }
}

/// Right-aligns every column except the first.
pub fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        s.push_str(cells.join("  ").trim_end());
        s.push('\n');
    }
    s
}

/// One counter of two reports side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterDelta {
    pub name: &'static str,
    pub a: u64,
    pub b: u64,
}

impl CounterDelta {
    pub fn delta(&self) -> i128 {
        self.b as i128 - self.a as i128
    }

    /// `a / b`; `None` when `b` is zero.
    pub fn ratio(&self) -> Option<f64> {
        (self.b != 0).then(|| self.a as f64 / self.b as f64)
    }

    /// Percentage by which `b` is below `a`; `None` when `a` is zero.
    pub fn reduction_percent(&self) -> Option<f64> {
        (self.a != 0).then(|| 100.0 * (1.0 - self.b as f64 / self.a as f64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportComparison {
    pub a_strategy: String,
    pub b_strategy: String,
    pub counters: Vec<CounterDelta>,
}

impl ReportComparison {
    pub fn get(&self, name: &str) -> Option<&CounterDelta> {
        self.counters.iter().find(|c| c.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut rows = vec![vec![
            "counter".to_string(),
            self.a_strategy.clone(),
            self.b_strategy.clone(),
            "delta".to_string(),
            "ratio".to_string(),
            "reduction".to_string(),
        ]];
        for c in &self.counters {
            rows.push(vec![
                c.name.to_string(),
                c.a.to_string(),
                c.b.to_string(),
                c.delta().to_string(),
                c.ratio().map_or("-".into(), |r| format!("{r:.2}x")),
                c.reduction_percent().map_or("-".into(), |p| format!("{p:.2}%")),
            ]);
        }
        render_table(&rows)
    }
}

/// Per-counter deltas, ratios and reductions from `a` to `b`.
pub fn compare_reports(a: &RunReport, b: &RunReport) -> Result<ReportComparison, ReportError> {
    if a.shape != b.shape {
        return Err(ReportError::ShapeMismatch(a.shape.clone(), b.shape.clone()));
    }
    let counters = a
        .counter_values()
        .iter()
        .zip(b.counter_values())
        .map(|(&(name, va), (_, vb))| CounterDelta { name, a: va, b: vb })
        .collect();
    Ok(ReportComparison { a_strategy: a.strategy.clone(), b_strategy: b.strategy.clone(), counters })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut c = Counters::default();
        c.layer_mut(LayerId::Temporal).macs = 100;
        c.layer_mut(LayerId::Temporal).realignments = 7;
        c.layer_mut(LayerId::Spatial).divisions = 40;
        c.layer_mut(LayerId::Fc).packed_loads = 3;
        let mut m = MemTracker::new();
        m.alloc("a", 10);
        m.alloc_scratch("s", 4);
        RunReport::new("22x1125".into(), "efg".into(), 8, c, vec![60, 40], &m)
    }

    #[test]
    fn merge_is_commutative() {
        let mut a = Counters::default();
        a.layer_mut(LayerId::Spatial).macs = 5;
        let mut b = Counters::default();
        b.layer_mut(LayerId::Spatial).macs = 7;
        b.layer_mut(LayerId::Fc).divisions = 1;
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.total().macs, 12);
    }

    #[test]
    fn tracker_peak() {
        let mut m = MemTracker::new();
        m.alloc("x", 100);
        m.alloc("y", 50);
        m.free("x");
        m.alloc("z", 60);
        assert_eq!(m.current(), 110);
        assert_eq!(m.peak(), 150);
        m.alloc_scratch("s", 8);
        m.free_scratch("s");
        m.alloc_scratch("s", 8);
        assert_eq!(m.scratch_peak(), 8);
        assert_eq!(m.scratch_allocations(), 2);
    }

    #[test]
    fn kv_round_trip() {
        let r = sample();
        assert_eq!(r.mac_count, 100);
        assert_eq!(RunReport::parse_kv(&r.to_kv()).unwrap(), r);
        assert!(r.to_kv().contains("memory_basis=modeled target bytes"));
    }

    #[test]
    fn kv_parse_errors() {
        assert!(matches!(RunReport::parse_kv("shape=1\nbogus"), Err(ReportError::Parse { line: 2, .. })));
        assert!(RunReport::parse_kv("shape=1\nlayer.conv.macs=1").is_err());
        assert!(RunReport::parse_kv("mac_count=1").is_err());
    }

    #[test]
    fn table_is_aligned() {
        let t = sample().to_table();
        let lines: Vec<&str> = t.lines().skip(1).take(7).collect();
        assert!(lines.iter().all(|l| l.len() == lines[0].len()), "{t}");
        assert!(t.contains("memory basis"));
    }

    #[test]
    fn self_comparison_is_zero() {
        let r = sample();
        let c = compare_reports(&r, &r).unwrap();
        for d in &c.counters {
            assert_eq!(d.delta(), 0);
            if d.a != 0 {
                assert_eq!(d.reduction_percent(), Some(0.0));
            }
        }
    }

    #[test]
    fn comparison_ratios() {
        let a = sample();
        let mut b = sample();
        b.division_count = 1;
        let c = compare_reports(&a, &b).unwrap();
        let d = c.get("divisions").unwrap();
        assert_eq!(d.ratio(), Some(40.0));
        assert_eq!(d.reduction_percent(), Some(97.5));
        assert!(c.to_table().contains("97.50%"));
    }

    #[test]
    fn comparison_rejects_shape_mismatch() {
        let a = sample();
        let mut b = sample();
        b.shape = "4x100".into();
        assert!(matches!(compare_reports(&a, &b), Err(ReportError::ShapeMismatch(..))));
    }
}
