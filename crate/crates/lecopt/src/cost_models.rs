//! Deterministic I/O cost formulas for access and join methods, plus
//! naive and linear-time expected-cost evaluators over bucketed
//! distributions.
//!
//! Costs are real-valued page I/Os with no CPU term. Each join formula
//! is a small number of branches keyed to available memory versus the
//! input sizes; the branch breakpoints are what `derive_memory_buckets`
//! exposes.

use serde::{Deserialize, Serialize};

use crate::distributions::{Bucket, BucketedDistribution};
use crate::error::{Error, Result};

/// A binary join algorithm with its cost formula.
///
/// The derived ordering (`SortMerge < GraceHash < PageNestedLoop`) is the
/// tie-breaking order used by the optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JoinMethod {
    SortMerge,
    GraceHash,
    PageNestedLoop,
}

/// All join methods, in tie-break order.
pub const ALL_METHODS: [JoinMethod; 3] = [
    JoinMethod::SortMerge,
    JoinMethod::GraceHash,
    JoinMethod::PageNestedLoop,
];

impl JoinMethod {
    /// Whether the join's output is sorted on the join column.
    pub fn emits_sorted(self) -> bool {
        matches!(self, JoinMethod::SortMerge)
    }

    /// The join's cost in page I/Os. Inputs must be positive; validation
    /// happens in the checked free functions and at catalog load.
    pub fn cost(self, a: f64, b: f64, m: f64) -> f64 {
        match self {
            JoinMethod::SortMerge => sort_merge_raw(a, b, m),
            JoinMethod::GraceHash => grace_hash_raw(a, b, m),
            JoinMethod::PageNestedLoop => nested_loop_raw(a, b, m),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            JoinMethod::SortMerge => "SortMerge",
            JoinMethod::GraceHash => "GraceHash",
            JoinMethod::PageNestedLoop => "PageNestedLoop",
        }
    }
}

/// A plan cost split into per-phase page I/O counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub per_phase: Vec<f64>,
}

impl CostBreakdown {
    pub fn from_phases(per_phase: Vec<f64>) -> Self {
        let total = per_phase.iter().sum();
        Self { total, per_phase }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn sort_merge_raw(a: f64, b: f64, m: f64) -> f64 {
    let l = a.max(b);
    if m > l.sqrt() {
        2.0 * (a + b)
    } else if m > l.cbrt() {
        4.0 * (a + b)
    } else {
        6.0 * (a + b)
    }
}

fn grace_hash_raw(a: f64, b: f64, m: f64) -> f64 {
    let s = a.min(b);
    if m > s.sqrt() {
        2.0 * (a + b)
    } else if m > s.cbrt() {
        4.0 * (a + b)
    } else {
        6.0 * (a + b)
    }
}

fn nested_loop_raw(a: f64, b: f64, m: f64) -> f64 {
    let s = a.min(b);
    if m >= s + 2.0 {
        a + b
    } else {
        a + a * b
    }
}

fn external_sort_raw(r: f64, m: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if m >= r {
        2.0 * r
    } else if m > r.sqrt() {
        4.0 * r
    } else {
        6.0 * r
    }
}

/// Sort-merge join of relations of `a` and `b` pages under `m` pages of
/// memory. Pass count depends on `m` versus the square and cube roots of
/// the larger input.
pub fn cost_sort_merge(a: f64, b: f64, m: f64) -> Result<f64> {
    check_positive("relation size a", a)?;
    check_positive("relation size b", b)?;
    check_positive("memory", m)?;
    Ok(sort_merge_raw(a, b, m))
}

/// Grace hash join; same three-case shape as sort-merge, keyed to the
/// smaller input.
pub fn cost_grace_hash(a: f64, b: f64, m: f64) -> Result<f64> {
    check_positive("relation size a", a)?;
    check_positive("relation size b", b)?;
    check_positive("memory", m)?;
    Ok(grace_hash_raw(a, b, m))
}

/// Page nested-loop join: one pass when the smaller input plus two pages
/// fits in memory, quadratic otherwise.
pub fn cost_nested_loop(a: f64, b: f64, m: f64) -> Result<f64> {
    check_positive("relation size a", a)?;
    check_positive("relation size b", b)?;
    check_positive("memory", m)?;
    Ok(nested_loop_raw(a, b, m))
}

/// External sort of `r` pages under `m` pages of memory.
pub fn cost_external_sort(r: f64, m: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Domain(format!(
            "sort input size must be non-negative, got {r}"
        )));
    }
    check_positive("memory", m)?;
    Ok(external_sort_raw(r, m))
}

/// Raw external-sort formula for callers that have already validated inputs.
pub fn external_sort(r: f64, m: f64) -> f64 {
    external_sort_raw(r, m)
}

/// Naive expected cost: the full triple sum over representative triples.
pub fn expected_cost_generic(
    formula: impl Fn(f64, f64, f64) -> f64,
    d_m: &BucketedDistribution,
    d_a: &BucketedDistribution,
    d_b: &BucketedDistribution,
) -> f64 {
    let mut total = 0.0;
    for (a, pa) in d_a.iter() {
        for (b, pb) in d_b.iter() {
            for (m, pm) in d_m.iter() {
                total += formula(a, b, m) * (pa * pb * pm);
            }
        }
    }
    total
}

/// Cursor over a distribution's buckets that accumulates probability and
/// partial expectation for ascending thresholds. Each bucket is consumed
/// once, so a full scan is one element visit per bucket.
struct Cursor<'a> {
    buckets: &'a [Bucket],
    idx: usize,
    prob: f64,
    partial_e: f64,
}

impl<'a> Cursor<'a> {
    fn new(d: &'a BucketedDistribution) -> Self {
        Self {
            buckets: d.buckets(),
            idx: 0,
            prob: 0.0,
            partial_e: 0.0,
        }
    }

    /// Accumulates buckets with rep <= t; returns (prob, partial expectation).
    fn advance_leq(&mut self, t: f64, visits: &mut u64) -> (f64, f64) {
        while self.idx < self.buckets.len() && self.buckets[self.idx].rep <= t {
            let b = &self.buckets[self.idx];
            self.prob += b.prob;
            self.partial_e += b.rep * b.prob;
            self.idx += 1;
            *visits += 1;
        }
        (self.prob, self.partial_e)
    }

    /// Accumulates buckets with rep < t; returns (prob, partial expectation).
    fn advance_lt(&mut self, t: f64, visits: &mut u64) -> (f64, f64) {
        while self.idx < self.buckets.len() && self.buckets[self.idx].rep < t {
            let b = &self.buckets[self.idx];
            self.prob += b.prob;
            self.partial_e += b.rep * b.prob;
            self.idx += 1;
            *visits += 1;
        }
        (self.prob, self.partial_e)
    }
}

fn totals(d: &BucketedDistribution, visits: &mut u64) -> (f64, f64) {
    let mut p = 0.0;
    let mut e = 0.0;
    for (rep, prob) in d.iter() {
        p += prob;
        e += rep * prob;
        *visits += 1;
    }
    (p, e)
}

/// Linear-time expected sort-merge cost, split into the `|A| <= |B|` and
/// `|A| > |B|` terms (ties go to the first). Returns the expectation and
/// the number of bucket visits performed.
pub fn expected_cost_sort_merge_fast_counted(
    d_m: &BucketedDistribution,
    d_a: &BucketedDistribution,
    d_b: &BucketedDistribution,
) -> (f64, u64) {
    let mut visits = 0u64;
    let (m_total, _) = totals(d_m, &mut visits);
    let mut total = 0.0;

    // Term 1: |A| <= b, so L = b. Conditional size sum over A uses an
    // inclusive prefix; branch probabilities come from two memory cursors.
    {
        let mut a_cur = Cursor::new(d_a);
        let mut m_sqrt = Cursor::new(d_m);
        let mut m_cbrt = Cursor::new(d_m);
        for (b, pb) in d_b.iter() {
            visits += 1;
            let (pa, ea) = a_cur.advance_leq(b, &mut visits);
            let (p_leq_sqrt, _) = m_sqrt.advance_leq(b.sqrt(), &mut visits);
            let (p_leq_cbrt, _) = m_cbrt.advance_leq(b.cbrt(), &mut visits);
            let weight = 2.0 * (m_total - p_leq_sqrt)
                + 4.0 * (p_leq_sqrt - p_leq_cbrt)
                + 6.0 * p_leq_cbrt;
            // E((|A| + b) * 1[|A| <= b]) = partial_E(A) + b * Pr(A <= b)
            total += pb * (ea + b * pa) * weight;
        }
    }

    // Term 2: |B| < a, so L = a.
    {
        let mut b_cur = Cursor::new(d_b);
        let mut m_sqrt = Cursor::new(d_m);
        let mut m_cbrt = Cursor::new(d_m);
        for (a, pa) in d_a.iter() {
            visits += 1;
            let (pb, eb) = b_cur.advance_lt(a, &mut visits);
            let (p_leq_sqrt, _) = m_sqrt.advance_leq(a.sqrt(), &mut visits);
            let (p_leq_cbrt, _) = m_cbrt.advance_leq(a.cbrt(), &mut visits);
            let weight = 2.0 * (m_total - p_leq_sqrt)
                + 4.0 * (p_leq_sqrt - p_leq_cbrt)
                + 6.0 * p_leq_cbrt;
            total += pa * (eb + a * pb) * weight;
        }
    }

    (total, visits)
}

/// Linear-time expected sort-merge cost.
pub fn expected_cost_sort_merge_fast(
    d_m: &BucketedDistribution,
    d_a: &BucketedDistribution,
    d_b: &BucketedDistribution,
) -> f64 {
    expected_cost_sort_merge_fast_counted(d_m, d_a, d_b).0
}

/// Linear-time expected page-nested-loop cost, same term split as the
/// sort-merge evaluator. Returns the expectation and bucket visit count.
pub fn expected_cost_nested_loop_fast_counted(
    d_m: &BucketedDistribution,
    d_a: &BucketedDistribution,
    d_b: &BucketedDistribution,
) -> (f64, u64) {
    let mut visits = 0u64;
    let (m_total, _) = totals(d_m, &mut visits);
    let (b_total_p, b_total_e) = totals(d_b, &mut visits);
    let (a_total_p, a_total_e) = totals(d_a, &mut visits);
    let mut total = 0.0;

    // Term 1: a <= |B|, so S = a. Needs the upper tail of B at a.
    {
        let mut b_cur = Cursor::new(d_b);
        let mut m_cur = Cursor::new(d_m);
        for (a, pa) in d_a.iter() {
            visits += 1;
            let (pb_lt, eb_lt) = b_cur.advance_lt(a, &mut visits);
            let pb_geq = b_total_p - pb_lt;
            let eb_geq = b_total_e - eb_lt;
            let (pm_lt, _) = m_cur.advance_lt(a + 2.0, &mut visits);
            let pm_geq = m_total - pm_lt;
            // one-pass: a + b;  spill: a + a*b = a * (1 + b)
            total += pa
                * ((a * pb_geq + eb_geq) * pm_geq + (a * pb_geq + a * eb_geq) * pm_lt);
        }
    }

    // Term 2: |A| > b, so S = b. Needs the strict upper tail of A at b.
    {
        let mut a_cur = Cursor::new(d_a);
        let mut m_cur = Cursor::new(d_m);
        for (b, pb) in d_b.iter() {
            visits += 1;
            let (pa_leq, ea_leq) = a_cur.advance_leq(b, &mut visits);
            let pa_gt = a_total_p - pa_leq;
            let ea_gt = a_total_e - ea_leq;
            let (pm_lt, _) = m_cur.advance_lt(b + 2.0, &mut visits);
            let pm_geq = m_total - pm_lt;
            total += pb * ((ea_gt + b * pa_gt) * pm_geq + (ea_gt + ea_gt * b) * pm_lt);
        }
    }

    (total, visits)
}

/// Linear-time expected page-nested-loop cost.
pub fn expected_cost_nested_loop_fast(
    d_m: &BucketedDistribution,
    d_a: &BucketedDistribution,
    d_b: &BucketedDistribution,
) -> f64 {
    expected_cost_nested_loop_fast_counted(d_m, d_a, d_b).0
}

/// The sorted set of memory values at which `method`'s cost formula
/// changes branch for some pair of size representatives. Bucketing
/// memory at these breakpoints makes the expected cost invariant to the
/// representative chosen within each bucket.
pub fn derive_memory_buckets(
    method: JoinMethod,
    d_a: &BucketedDistribution,
    d_b: &BucketedDistribution,
) -> Vec<f64> {
    let mut points = Vec::new();
    for (a, _) in d_a.iter() {
        for (b, _) in d_b.iter() {
            match method {
                JoinMethod::SortMerge => {
                    let l = a.max(b);
                    points.push(l.cbrt());
                    points.push(l.sqrt());
                }
                JoinMethod::GraceHash => {
                    let s = a.min(b);
                    points.push(s.cbrt());
                    points.push(s.sqrt());
                }
                JoinMethod::PageNestedLoop => {
                    let s = a.min(b);
                    points.push(s + 2.0);
                }
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Whether a memory value equal to a branch breakpoint belongs to the
/// branch above or below it. Sort-merge, Grace hash, and external sort
/// switch at `m > bp` (the breakpoint stays below); nested loop switches
/// at `m >= bp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchBoundary {
    BreakpointBelow,
    BreakpointAbove,
}

impl JoinMethod {
    pub fn branch_boundary(self) -> BranchBoundary {
        match self {
            JoinMethod::SortMerge | JoinMethod::GraceHash => BranchBoundary::BreakpointBelow,
            JoinMethod::PageNestedLoop => BranchBoundary::BreakpointAbove,
        }
    }
}

/// Expected value of `f` over a memory distribution, optionally grouping
/// representatives that share a formula branch (level-set evaluation:
/// one formula call per branch).
pub fn expected_over_memory(
    f: impl Fn(f64) -> f64,
    d_m: &BucketedDistribution,
    breakpoints: Option<(&[f64], BranchBoundary)>,
) -> f64 {
    match breakpoints {
        None => d_m.iter().map(|(m, p)| f(m) * p).sum(),
        Some((bps, boundary)) => {
            // Branch index = number of breakpoints below m; one pointer
            // sweep since reps are ascending.
            let below = |bp: f64, m: f64| match boundary {
                BranchBoundary::BreakpointBelow => bp < m,
                BranchBoundary::BreakpointAbove => bp <= m,
            };
            let mut total = 0.0;
            let mut idx = 0;
            let mut group_rep = f64::NAN;
            let mut group_prob = 0.0;
            let mut group_idx = usize::MAX;
            for (m, p) in d_m.iter() {
                while idx < bps.len() && below(bps[idx], m) {
                    idx += 1;
                }
                if idx != group_idx {
                    if group_idx != usize::MAX {
                        total += f(group_rep) * group_prob;
                    }
                    group_idx = idx;
                    group_rep = m;
                    group_prob = 0.0;
                }
                group_prob += p;
            }
            if group_idx != usize::MAX {
                total += f(group_rep) * group_prob;
            }
            total
        }
    }
}
