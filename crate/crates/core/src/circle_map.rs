//! Orientation-preserving circle homeomorphisms: rigid rotations and
//! finite-depth Denjoy blow-ups of a rotation.
//!
//! A circle map is handled through its lift `F: R -> R` with
//! `F(x + 1) = F(x) + 1`. The Denjoy map inserts the wandering intervals
//! `I_n`, `|n| <= depth`, of length `c / (n^2 + 1)` at the points `n * rho`
//! of the rotation orbit of zero and maps `I_n` affinely onto `I_{n+1}`.
//! Off the gaps the lift is piecewise linear with slope one, so the map is
//! semi-conjugate to the rotation through [`DenjoyMap::collapse`] up to a
//! defect of size `ell_depth / 10` on the two complementary arcs where the
//! truncated orbit of gaps begins and ends.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

/// Default truncation depth of the inserted gap orbit.
pub const DEFAULT_DEPTH: usize = 200;

/// The golden-mean rotation number `(sqrt(5) - 1) / 2`.
pub fn golden_rotation() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// An inserted wandering interval `[left, left + len]` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// Orbit index `n` of the collapsed point `n * rho mod 1`.
    pub index: i64,
    /// Collapsed point on the rotation circle.
    pub theta: f64,
    pub left: f64,
    pub len: f64,
}

impl Gap {
    pub fn right(&self) -> f64 {
        self.left + self.len
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.left && x <= self.right()
    }
}

/// Finite-depth Denjoy blow-up of the rotation by `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenjoyMap {
    pub rho: f64,
    pub gap_constant: f64,
    pub depth: usize,
    /// Total inserted length.
    pub total_gap: f64,
    /// Gaps sorted by their left endpoint.
    gaps: Vec<Gap>,
    /// Position of gap `n` in `gaps`, indexed by `n + depth`.
    by_index: Vec<usize>,
    /// Piecewise-linear lift: knots `x_i` in `[0,1)` with lifted images `y_i`.
    knots_x: Vec<f64>,
    knots_y: Vec<f64>,
}

/// Circle map representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CircleMap {
    RigidRotation(f64),
    Denjoy(Box<DenjoyMap>),
}

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Piecewise-linear periodic lift evaluation through knots `(xs, ys)`.
fn pl_lift(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = x.floor();
    let xf = x - n;
    let m = xs.len();
    // segment i covers [xs[i], xs[i+1]); wrap segment covers [xs[m-1], xs[0]+1)
    let i = xs.partition_point(|&k| k <= xf);
    let (x0, y0, x1, y1) = if i == 0 {
        (xs[m - 1] - 1.0, ys[m - 1] - 1.0, xs[0], ys[0])
    } else if i == m {
        (xs[m - 1], ys[m - 1], xs[0] + 1.0, ys[0] + 1.0)
    } else {
        (xs[i - 1], ys[i - 1], xs[i], ys[i])
    };
    let s = if x1 > x0 { (xf - x0) / (x1 - x0) } else { 0.0 };
    y0 + s * (y1 - y0) + n
}

impl DenjoyMap {
    /// Builds the depth-`depth` blow-up of the rotation by `rho` with gap
    /// lengths `c / (n^2 + 1)`.
    pub fn new(rho: f64, c: f64, depth: usize) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(FlowError::InvalidParameter(format!(
                "rotation number {rho} outside (0,1)"
            )));
        }
        if c <= 0.0 || depth == 0 {
            return Err(FlowError::InvalidParameter(
                "Denjoy map needs c > 0 and depth >= 1".into(),
            ));
        }
        let d = depth as i64;
        let len_of = |n: i64| c / ((n * n) as f64 + 1.0);
        let total: f64 = (-d..=d).map(len_of).sum();
        if total >= 1.0 {
            return Err(FlowError::InvalidParameter(format!(
                "inserted length {total} >= 1"
            )));
        }
        let theta_of = |n: i64| frac(n as f64 * rho);

        let mut order: Vec<i64> = (-d..=d).collect();
        order.sort_by(|a, b| theta_of(*a).total_cmp(&theta_of(*b)));
        let mut gaps = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        for &n in &order {
            let theta = theta_of(n);
            let left = (1.0 - total) * theta + acc;
            let len = len_of(n);
            gaps.push(Gap { index: n, theta, left, len });
            acc += len;
        }
        let mut by_index = vec![0usize; order.len()];
        for (pos, g) in gaps.iter().enumerate() {
            by_index[(g.index + d) as usize] = pos;
        }

        let mut map = DenjoyMap {
            rho,
            gap_constant: c,
            depth,
            total_gap: total,
            gaps,
            by_index,
            knots_x: Vec::new(),
            knots_y: Vec::new(),
        };
        map.build_knots()?;
        Ok(map)
    }

    fn build_knots(&mut self) -> Result<()> {
        let d = self.depth as i64;
        let delta = self.gap(d).len / 10.0;
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(2 * self.gaps.len() + 2);
        for n in -d..d {
            let src = *self.gap(n);
            let dst = *self.gap(n + 1);
            let lift = (src.theta + self.rho).floor();
            knots.push((src.left, dst.left + lift));
            knots.push((src.right(), dst.right() + lift));
        }
        // last gap collapses onto a window of width delta around the image point
        let last = *self.gap(d);
        let centre = self.lifted_position(last.theta + self.rho);
        knots.push((last.left, centre - delta / 2.0));
        knots.push((last.right(), centre + delta / 2.0));
        // a window around the collapsed preimage of the first gap opens onto it
        let first = *self.gap(-d);
        let pre = frac(first.theta - self.rho);
        let x_pre = self.position(pre);
        let lift = (pre + self.rho).floor();
        knots.push((x_pre - delta / 2.0, first.left + lift));
        knots.push((x_pre + delta / 2.0, first.right() + lift));

        // bring knot abscissae into [0,1) keeping images consistent
        for k in knots.iter_mut() {
            let s = k.0.floor();
            k.0 -= s;
            k.1 -= s;
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(FlowError::InvalidParameter(
                    "Denjoy lift is not strictly increasing; reduce depth or c".into(),
                ));
            }
        }
        let (f, l) = (knots[0], knots[knots.len() - 1]);
        if !(l.1 < f.1 + 1.0 && l.0 < f.0 + 1.0) {
            return Err(FlowError::InvalidParameter(
                "Denjoy lift fails the degree-one condition".into(),
            ));
        }
        self.knots_x = knots.iter().map(|k| k.0).collect();
        self.knots_y = knots.iter().map(|k| k.1).collect();
        Ok(())
    }

    /// Gap with orbit index `n`, `|n| <= depth`.
    pub fn gap(&self, n: i64) -> &Gap {
        &self.gaps[self.by_index[(n + self.depth as i64) as usize]]
    }

    /// Gaps sorted by position.
    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    /// Position `P(theta)` of a rotation-circle point on the blown-up circle
    /// (left endpoint of the gap if `theta` is a collapsed point).
    pub fn position(&self, theta: f64) -> f64 {
        let theta = frac(theta);
        let k = self.gaps.partition_point(|g| g.theta < theta);
        let before: f64 = if k == 0 {
            0.0
        } else {
            let g = &self.gaps[k - 1];
            g.left + g.len - (1.0 - self.total_gap) * g.theta
        };
        (1.0 - self.total_gap) * theta + before
    }

    fn lifted_position(&self, s: f64) -> f64 {
        self.position(frac(s)) + s.floor()
    }

    /// Collapse map `h` onto the rotation circle: gaps go to their orbit
    /// point, the complement is rescaled linearly.
    pub fn collapse(&self, x: f64) -> f64 {
        let xf = frac(x);
        let k = self.gaps.partition_point(|g| g.left <= xf);
        if k > 0 {
            let g = &self.gaps[k - 1];
            if xf <= g.right() {
                return g.theta;
            }
            let shift = g.right() - (1.0 - self.total_gap) * g.theta;
            return ((xf - shift) / (1.0 - self.total_gap)).clamp(0.0, 1.0);
        }
        xf / (1.0 - self.total_gap)
    }

    /// Lifted collapse map, `h~(x + 1) = h~(x) + 1`.
    pub fn lifted_collapse(&self, x: f64) -> f64 {
        self.collapse(x) + x.floor()
    }

    pub fn lift(&self, x: f64) -> f64 {
        pl_lift(&self.knots_x, &self.knots_y, x)
    }

    pub fn lift_inverse(&self, y: f64) -> f64 {
        // inverse lift knots: (y_i mod 1, x_i) sorted
        let n = y.floor();
        let yf = y - n;
        // bring y into the range covered by the knot images
        let y0 = self.knots_y[0];
        let shift = (yf - y0).floor();
        let target = yf - shift;
        let i = self.knots_y.partition_point(|&k| k <= target);
        let m = self.knots_y.len();
        let (a0, b0, a1, b1) = if i == 0 {
            (self.knots_y[m - 1] - 1.0, self.knots_x[m - 1] - 1.0, self.knots_y[0], self.knots_x[0])
        } else if i == m {
            (self.knots_y[m - 1], self.knots_x[m - 1], self.knots_y[0] + 1.0, self.knots_x[0] + 1.0)
        } else {
            (self.knots_y[i - 1], self.knots_x[i - 1], self.knots_y[i], self.knots_x[i])
        };
        let s = if a1 > a0 { (target - a0) / (a1 - a0) } else { 0.0 };
        b0 + s * (b1 - b0) + shift + n
    }

    /// Closed arcs of the circle outside every gap (the finite-depth
    /// approximation of the minimal Cantor set), as `(start, end)` with
    /// `start <= end`; the arc straddling zero is split at zero.
    pub fn cantor_arcs(&self) -> Vec<(f64, f64)> {
        let mut arcs = Vec::with_capacity(self.gaps.len() + 1);
        let mut cursor = 0.0;
        for g in &self.gaps {
            if g.left > cursor {
                arcs.push((cursor, g.left));
            }
            cursor = cursor.max(g.right());
        }
        if cursor < 1.0 {
            arcs.push((cursor, 1.0));
        }
        arcs
    }

    /// Distance on the circle from `x` to the finite-depth Cantor set.
    pub fn distance_to_cantor(&self, x: f64) -> f64 {
        let xf = frac(x);
        let k = self.gaps.partition_point(|g| g.left <= xf);
        if k == 0 {
            return 0.0;
        }
        let g = &self.gaps[k - 1];
        if xf >= g.right() || xf <= g.left {
            0.0
        } else {
            (xf - g.left).min(g.right() - xf)
        }
    }
}

impl CircleMap {
    /// Denjoy map for rotation number `rho`; `c = 0` gives the rigid rotation.
    pub fn denjoy(rho: f64, c: f64, depth: usize) -> Result<Self> {
        if c == 0.0 {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(FlowError::InvalidParameter(format!(
                    "rotation number {rho} outside (0,1)"
                )));
            }
            return Ok(CircleMap::RigidRotation(rho));
        }
        Ok(CircleMap::Denjoy(Box::new(DenjoyMap::new(rho, c, depth)?)))
    }

    pub fn lift(&self, x: f64) -> f64 {
        match self {
            CircleMap::RigidRotation(r) => x + r,
            CircleMap::Denjoy(d) => d.lift(x),
        }
    }

    pub fn lift_inverse(&self, y: f64) -> f64 {
        match self {
            CircleMap::RigidRotation(r) => y - r,
            CircleMap::Denjoy(d) => d.lift_inverse(y),
        }
    }

    /// Map on the circle `[0,1)`.
    pub fn apply(&self, x: f64) -> f64 {
        frac(self.lift(x))
    }

    pub fn apply_inverse(&self, x: f64) -> f64 {
        frac(self.lift_inverse(x))
    }

    /// Target rotation number the map was built for.
    pub fn target_rotation(&self) -> f64 {
        match self {
            CircleMap::RigidRotation(r) => *r,
            CircleMap::Denjoy(d) => d.rho,
        }
    }

    /// Plain lift estimate `(F^n(x) - x) / n`; its error is below `1 / n`.
    pub fn rotation_number_plain(&self, x: f64, iterates: usize) -> f64 {
        let mut y = x;
        for _ in 0..iterates {
            y = self.lift(y);
        }
        (y - x) / iterates as f64
    }

    /// Rotation number read off the lifted orbit through the lifted collapse
    /// map; bounded-distance coordinate changes leave the limit unchanged and
    /// remove the `O(1/n)` term for the Denjoy family.
    pub fn rotation_number(&self, x: f64, iterates: usize) -> f64 {
        match self {
            CircleMap::RigidRotation(_) => self.rotation_number_plain(x, iterates),
            CircleMap::Denjoy(d) => {
                let mut y = x;
                for _ in 0..iterates {
                    y = d.lift(y);
                }
                (d.lifted_collapse(y) - d.lifted_collapse(x)) / iterates as f64
            }
        }
    }

    pub fn as_denjoy(&self) -> Option<&DenjoyMap> {
        match self {
            CircleMap::Denjoy(d) => Some(d),
            CircleMap::RigidRotation(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gap_constant_is_rotation() {
        let m = CircleMap::denjoy(0.3, 0.0, 200).unwrap();
        assert_eq!(m, CircleMap::RigidRotation(0.3));
    }

    #[test]
    fn oversized_gaps_rejected() {
        assert!(matches!(
            DenjoyMap::new(golden_rotation(), 0.5, 200),
            Err(FlowError::InvalidParameter(_))
        ));
    }

    #[test]
    fn gap_count_and_lengths() {
        let d = DenjoyMap::new(golden_rotation(), 0.1, 200).unwrap();
        assert_eq!(d.gaps().len(), 401);
        assert!((d.gap(0).len - 0.1).abs() < 1e-15);
        assert!((d.gap(3).len - 0.01).abs() < 1e-15);
        assert_eq!(d.gap(0).left, 0.0);
    }

    #[test]
    fn gaps_map_onto_successors() {
        let d = DenjoyMap::new(golden_rotation(), 0.1, 50).unwrap();
        for n in -50..50 {
            let g = d.gap(n);
            let h = d.gap(n + 1);
            let l = frac(d.lift(g.left));
            let r = frac(d.lift(g.right()));
            assert!((l - h.left).abs() < 1e-12, "n={n}");
            assert!((r - frac(h.right())).abs() < 1e-12 || (r - h.right()).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_is_degree_one_and_increasing() {
        let d = CircleMap::denjoy(golden_rotation(), 0.1, 100).unwrap();
        let mut prev = d.lift(-0.5);
        for i in 1..=4000 {
            let x = -0.5 + i as f64 / 2000.0;
            let y = d.lift(x);
            assert!(y > prev);
            prev = y;
            assert!((d.lift(x + 1.0) - y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let d = CircleMap::denjoy(golden_rotation(), 0.1, 100).unwrap();
        for i in 0..1000 {
            let x = i as f64 / 1000.0 + 1e-4;
            assert!((d.lift_inverse(d.lift(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_semiconjugates_up_to_defect_width() {
        let d = DenjoyMap::new(golden_rotation(), 0.1, 100).unwrap();
        let defect = d.gap(100).len / 10.0;
        let mut y = 0.41;
        for _ in 0..2000 {
            let next = d.lift(y);
            let step = d.lifted_collapse(next) - d.lifted_collapse(y);
            assert!((step - d.rho).abs() <= defect, "step {step}");
            y = next;
        }
    }
}
