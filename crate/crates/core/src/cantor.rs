//! Finite-depth middle-thirds Cantor sets scaled by one half and the strip
//! set `M_k = {(x, x + y) | x, y in C_k / 2}` built from them.
//!
//! Interval endpoints are kept as integers in units of `3^-k / 2` so that
//! membership and Minkowski sums are exact.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

/// Depth-`k` approximation `C_k / 2`: `2^k` closed intervals of length
/// `3^-k / 2` inside `[0, 1/2]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CantorApprox {
    pub depth: u32,
    /// Left endpoints in units of `unit()`.
    lefts: Vec<u64>,
}

fn pow3(k: u32) -> u64 {
    3u64.pow(k)
}

/// Whether the base-3 digits of `m` (k digits) avoid the digit one.
fn ternary_no_ones(mut m: u64, k: u32) -> bool {
    for _ in 0..k {
        if m % 3 == 1 {
            return false;
        }
        m /= 3;
    }
    m == 0
}

impl CantorApprox {
    pub fn new(depth: u32) -> Self {
        assert!(depth >= 1 && depth <= 19, "Cantor depth must be in 1..=19");
        let mut lefts = vec![0u64];
        for _ in 0..depth {
            lefts = lefts.iter().flat_map(|&m| [3 * m, 3 * m + 2]).collect();
        }
        CantorApprox { depth, lefts }
    }

    /// Length unit `3^-k / 2`; every interval has exactly this length.
    pub fn unit(&self) -> f64 {
        0.5 / pow3(self.depth) as f64
    }

    pub fn interval_len(&self) -> f64 {
        self.unit()
    }

    /// Intervals `[a, b]` in increasing order.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let u = self.unit();
        self.lefts.iter().map(move |&m| (m as f64 * u, (m + 1) as f64 * u))
    }

    pub fn lefts_in_units(&self) -> &[u64] {
        &self.lefts
    }

    /// Membership of `x` in `C_k / 2`.
    pub fn contains(&self, x: f64) -> bool {
        if !(0.0..=0.5).contains(&x) {
            return false;
        }
        let scaled = x / self.unit();
        let n = pow3(self.depth);
        let r = scaled.round();
        if (scaled - r).abs() <= 1e-9 * scaled.max(1.0) {
            // on an endpoint: member if either adjacent interval is kept
            let ri = r as u64;
            return (ri < n && ternary_no_ones(ri, self.depth))
                || (ri >= 1 && ternary_no_ones(ri - 1, self.depth));
        }
        let mi = scaled.floor() as u64;
        mi < n && ternary_no_ones(mi, self.depth)
    }

    /// Distance from `x` to `C_k / 2`.
    pub fn distance(&self, x: f64) -> f64 {
        let u = self.unit();
        let k = self.lefts.partition_point(|&m| (m as f64) * u <= x);
        let mut best = f64::INFINITY;
        for i in [k.wrapping_sub(1), k] {
            if let Some(&m) = self.lefts.get(i) {
                let (a, b) = (m as f64 * u, (m + 1) as f64 * u);
                let d = if x < a { a - x } else if x > b { x - b } else { 0.0 };
                best = best.min(d);
            }
        }
        best
    }
}

/// Largest uncovered sub-interval of `[0, 1]` by `C_k/2 + C_k/2`, computed
/// by an exact integer sweep over all `4^k` interval sums.
pub fn minkowski_cover_gap(depth: u32) -> f64 {
    let c = CantorApprox::new(depth);
    let lefts = c.lefts_in_units();
    let mut sums: Vec<u64> = Vec::with_capacity(lefts.len() * lefts.len());
    for &a in lefts {
        for &b in lefts {
            sums.push(a + b);
        }
    }
    sums.sort_unstable();
    // each sum interval is [s, s + 2] in units; [0,1] is [0, 2 * 3^k]
    let end = 2 * pow3(depth);
    let mut covered = 0u64;
    let mut max_gap = 0u64;
    for s in sums {
        if s >= end {
            break;
        }
        if s > covered {
            max_gap = max_gap.max(s - covered);
        }
        covered = covered.max(s + 2);
    }
    if covered < end {
        max_gap = max_gap.max(end - covered);
    }
    max_gap as f64 * c.unit()
}

/// Strip set `M_k`, stored as its `4^k` parallelogram components together
/// with the coarser levels used to prune distance queries.
#[derive(Debug, Clone, PartialEq)]
pub struct CantorStripSet {
    pub depth: u32,
    cantor: CantorApprox,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    level: u32,
    /// Left endpoints of the x and y intervals in units of `3^-level / 2`.
    mx: u64,
    my: u64,
    bound: f64,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.bound == o.bound
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound)
    }
}

fn seg_dist(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 { (((px - ax) * dx + (py - ay) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (px - ax - t * dx).hypot(py - ay - t * dy)
}

/// Distance from `(px, pw)` to the parallelogram `{(x, x + y) | x in [a,b], y in [c,d]}`.
pub fn parallelogram_distance(px: f64, pw: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let y = pw - px;
    if px >= a && px <= b && y >= c && y <= d {
        return 0.0;
    }
    let corners = [(a, a + c), (b, b + c), (b, b + d), (a, a + d)];
    (0..4)
        .map(|i| {
            let (p, q) = (corners[i], corners[(i + 1) % 4]);
            seg_dist(px, pw, p.0, p.1, q.0, q.1)
        })
        .fold(f64::INFINITY, f64::min)
}

impl CantorStripSet {
    pub fn new(depth: u32) -> Self {
        CantorStripSet { depth, cantor: CantorApprox::new(depth) }
    }

    pub fn cantor(&self) -> &CantorApprox {
        &self.cantor
    }

    /// Exact membership `(x, w) in M_k`.
    pub fn contains(&self, x: f64, w: f64) -> bool {
        self.cantor.contains(x) && self.cantor.contains(w - x)
    }

    /// Euclidean distance to `M_k` by best-first search over the nested
    /// parallelograms of levels `0..=k`.
    pub fn distance(&self, x: f64, w: f64) -> f64 {
        let node_bounds = |level: u32, mx: u64, my: u64| {
            let u = 0.5 / pow3(level) as f64;
            parallelogram_distance(x, w, mx as f64 * u, (mx + 1) as f64 * u, my as f64 * u, (my + 1) as f64 * u)
        };
        let mut heap = BinaryHeap::new();
        heap.push(Node { level: 0, mx: 0, my: 0, bound: node_bounds(0, 0, 0) });
        while let Some(n) = heap.pop() {
            if n.level == self.depth {
                return n.bound;
            }
            for cx in [3 * n.mx, 3 * n.mx + 2] {
                for cy in [3 * n.my, 3 * n.my + 2] {
                    let b = node_bounds(n.level + 1, cx, cy);
                    heap.push(Node { level: n.level + 1, mx: cx, my: cy, bound: b });
                }
            }
        }
        f64::INFINITY
    }

    /// Parallelogram components `(a, b, c, d)` of `M_k`.
    pub fn components(&self) -> Vec<(f64, f64, f64, f64)> {
        let ivs: Vec<(f64, f64)> = self.cantor.intervals().collect();
        let mut out = Vec::with_capacity(ivs.len() * ivs.len());
        for &(a, b) in &ivs {
            for &(c, d) in &ivs {
                out.push((a, b, c, d));
            }
        }
        out
    }
}

/// Grid connected components of a sampled zero set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridComponentStats {
    pub cell: f64,
    pub components: usize,
    pub max_diameter: f64,
}

/// Samples `M_k` on a grid of cell `3^-(k+1)` in the sheared coordinates
/// `(x, w - x)` over `[0, 1/2]^2`, where every component is an axis-aligned
/// square, and reports 4-connected components with diameters measured in
/// `(x, w)` between sampled centres.
pub fn strip_grid_components(set: &CantorStripSet) -> GridComponentStats {
    let cell = 1.0 / pow3(set.depth + 1) as f64;
    let n = (0.5 / cell).ceil() as usize + 1;
    let c = set.cantor();
    let inside: Vec<bool> = (0..n).map(|i| c.contains((i as f64 + 0.5) * cell)).collect();
    let marked = |i: usize, j: usize| inside[i] && inside[j];
    let mut seen = vec![false; n * n];
    let mut components = 0;
    let mut max_diameter: f64 = 0.0;
    let mut queue = VecDeque::new();
    let mut members: Vec<(usize, usize)> = Vec::new();
    for j0 in 0..n {
        for i0 in 0..n {
            if !marked(i0, j0) || seen[j0 * n + i0] {
                continue;
            }
            components += 1;
            members.clear();
            seen[j0 * n + i0] = true;
            queue.push_back((i0, j0));
            while let Some((i, j)) = queue.pop_front() {
                members.push((i, j));
                let nb = [
                    (i.wrapping_sub(1), j),
                    (i + 1, j),
                    (i, j.wrapping_sub(1)),
                    (i, j + 1),
                ];
                for (ii, jj) in nb {
                    if ii < n && jj < n && marked(ii, jj) && !seen[jj * n + ii] {
                        seen[jj * n + ii] = true;
                        queue.push_back((ii, jj));
                    }
                }
            }
            for (s, &(pi, pj)) in members.iter().enumerate() {
                for &(qi, qj) in &members[s + 1..] {
                    let dx = pi as f64 - qi as f64;
                    let dw = dx + (pj as f64 - qj as f64);
                    max_diameter = max_diameter.max(dx.hypot(dw) * cell);
                }
            }
        }
    }
    GridComponentStats { cell, components, max_diameter }
}
