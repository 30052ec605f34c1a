//! Singular inventory, extended orbit graph and the Hamiltonian verdict for
//! flows with finitely many singular points.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::atlas::{wrap_diff, AtlasKind, Rect, SurfaceAtlas, SurfacePoint};
use crate::error::{FlowError, Result};
use crate::field::FieldSpec;
use crate::integrator::{integrate, integrate_observed, Direction, IntegratorSettings, Observer, Segment, Termination};
use crate::limits::{classify_limit, LimitLabel, LimitSetReport, Side, Tunables};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamTunables {
    /// Nodes per side of the zero-search grid in each chart.
    pub grid: usize,
    pub probes: usize,
    pub probe_budget: f64,
    pub separatrix_radius: f64,
    pub separatrix_budget: f64,
    pub match_tol: f64,
    /// Region representatives sampled per chart for the graph.
    pub graph_samples: usize,
    pub path_step: f64,
    pub trajectories: usize,
    pub trajectory_time: f64,
    pub arc_half_length: f64,
    pub level_tol: f64,
    pub flat_tol: f64,
}

impl Default for HamTunables {
    fn default() -> Self {
        HamTunables {
            grid: 512,
            probes: 50,
            probe_budget: 1e4,
            separatrix_radius: 1e-4,
            separatrix_budget: 1e3,
            match_tol: 1e-6,
            graph_samples: 64,
            path_step: 2e-3,
            trajectories: 100,
            trajectory_time: 10.0,
            arc_half_length: 1e-2,
            level_tol: 1e-6,
            flat_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SingularKind {
    Center,
    MultiSaddle { k: u32 },
    Degenerate { index: i32, directions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub point: SurfacePoint,
    pub kind: SingularKind,
    pub index: i32,
    /// Angles (chart frame) along which the field is radial.
    pub separatrix_angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separatrix {
    pub origin: usize,
    pub angle: f64,
    pub outgoing: bool,
    pub end: Option<usize>,
    pub termination: Termination,
    #[serde(skip)]
    pub polyline: Vec<SurfacePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularInventory {
    pub points: Vec<SingularPoint>,
    pub separatrices: Vec<Separatrix>,
}

impl SingularInventory {
    pub fn index_sum(&self) -> i32 {
        self.points.iter().map(|p| p.index).sum()
    }

    pub fn centers(&self) -> usize {
        self.points.iter().filter(|p| p.kind == SingularKind::Center).count()
    }

    pub fn saddles(&self) -> usize {
        self.points.iter().filter(|p| matches!(p.kind, SingularKind::MultiSaddle { .. })).count()
    }
}

/// Euler characteristic of the closed surface carried by `atlas`.
pub fn euler_characteristic(atlas: &SurfaceAtlas) -> i32 {
    match atlas.kind() {
        AtlasKind::Sphere => 2,
        _ => 0,
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Region of chart `c` searched for zeros; the sphere charts overlap, so
/// each is searched only slightly beyond the unit disk.
fn search_rect(atlas: &SurfaceAtlas, c: usize) -> Rect {
    match atlas.kind() {
        AtlasKind::Sphere => Rect::new(-1.05, 1.05, -1.05, 1.05),
        _ => atlas.chart_domains()[c],
    }
}

fn grid_wraps(atlas: &SurfaceAtlas) -> (bool, bool) {
    match atlas.kind() {
        AtlasKind::Torus => (true, true),
        AtlasKind::ClosedAnnulus => (true, false),
        AtlasKind::MappingTorus => (false, true),
        AtlasKind::Sphere => (false, false),
    }
}

fn zero_candidates(spec: &FieldSpec, n: usize) -> Vec<(SurfacePoint, f64)> {
    let atlas = &spec.atlas;
    let (wu, wv) = grid_wraps(atlas);
    let mut out = Vec::new();
    for c in 0..atlas.chart_count() {
        let r = search_rect(atlas, c);
        let (du, dv) = (r.width() / n as f64, r.height() / n as f64);
        let node = |i: usize, j: usize| SurfacePoint::new(c as u8, r.u0 + i as f64 * du, r.v0 + j as f64 * dv);
        let m = n + 1;
        let vals: Vec<[f64; 2]> = (0..m * m)
            .map(|k| {
                let p = node(k % m, k / m);
                if atlas.kind() == AtlasKind::Sphere && p.u.hypot(p.v) > 1.05 {
                    [f64::NAN, f64::NAN]
                } else {
                    spec.eval_raw(&p)
                }
            })
            .collect();
        let mags: Vec<f64> = vals.iter().map(|v| norm2(*v)).collect();
        let finite: Vec<f64> = mags.iter().copied().filter(|x| x.is_finite()).collect();
        let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
        let cell = du.max(dv);
        // sign-change cells
        for j in 0..n {
            for i in 0..n {
                let corners = [vals[j * m + i], vals[j * m + i + 1], vals[(j + 1) * m + i], vals[(j + 1) * m + i + 1]];
                if corners.iter().any(|v| !v[0].is_finite()) {
                    continue;
                }
                let straddles = |k: usize| {
                    let lo = corners.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
                    let hi = corners.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                    lo <= 0.0 && hi >= 0.0
                };
                if straddles(0) && straddles(1) {
                    let p = SurfacePoint::new(c as u8, r.u0 + (i as f64 + 0.5) * du, r.v0 + (j as f64 + 0.5) * dv);
                    out.push((p, cell));
                }
            }
        }
        // strict local minima of |F|, which also catch zeros of a
        // non-negative rescaling
        let idx = |i: isize, j: isize| -> Option<usize> {
            let ni = n as isize;
            let i = if wu { i.rem_euclid(ni) } else if (0..=ni).contains(&i) { i } else { return None };
            let j = if wv { j.rem_euclid(ni) } else if (0..=ni).contains(&j) { j } else { return None };
            Some(j as usize * m + i as usize)
        };
        for j in 0..m as isize {
            for i in 0..m as isize {
                if (wu && i == n as isize) || (wv && j == n as isize) {
                    continue;
                }
                let k = idx(i, j).expect("in range");
                let f = mags[k];
                if !(f.is_finite() && f < 0.25 * mean) {
                    continue;
                }
                let mut is_min = true;
                'nb: for dj in -1..=1 {
                    for di in -1..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        match idx(i + di, j + dj) {
                            Some(q) if mags[q].is_finite() => {
                                if mags[q] <= f {
                                    is_min = false;
                                    break 'nb;
                                }
                            }
                            _ => {
                                is_min = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_min {
                    out.push((node(i as usize, j as usize), cell));
                }
            }
        }
    }
    out
}

fn refine_zero(spec: &FieldSpec, p0: &SurfacePoint, cell: f64) -> Option<SurfacePoint> {
    const ACCEPT: f64 = 1e-10;
    let f = |p: &SurfacePoint| spec.eval_raw(p);
    let mut p = *p0;
    let mut newton_ok = false;
    for _ in 0..60 {
        let v = f(&p);
        if norm2(v) < 1e-14 {
            newton_ok = true;
            break;
        }
        let h = 1e-7;
        let fu = |du: f64| f(&SurfacePoint::new(p.chart, p.u + du, p.v));
        let fv = |dv: f64| f(&SurfacePoint::new(p.chart, p.u, p.v + dv));
        let (a, b) = (fu(h), fu(-h));
        let (c, d) = (fv(h), fv(-h));
        let j = [[(a[0] - b[0]) / (2.0 * h), (c[0] - d[0]) / (2.0 * h)], [(a[1] - b[1]) / (2.0 * h), (c[1] - d[1]) / (2.0 * h)]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det.abs() > 1e-12) {
            break;
        }
        let su = (j[1][1] * v[0] - j[0][1] * v[1]) / det;
        let sv = (-j[1][0] * v[0] + j[0][0] * v[1]) / det;
        if su.hypot(sv) > 2.0 * cell {
            break;
        }
        p = SurfacePoint::new(p.chart, p.u - su, p.v - sv);
        if su.hypot(sv) < 1e-15 {
            newton_ok = true;
            break;
        }
    }
    let close = (p.u - p0.u).hypot(p.v - p0.v) < 3.0 * cell;
    if (newton_ok || norm2(f(&p)) < ACCEPT) && close && norm2(f(&p)) < ACCEPT {
        return Some(p);
    }
    // compass search on |F| for non-smooth zeros
    let mut x = *p0;
    let mut fx = norm2(f(&x));
    let mut s = cell;
    let mut iters = 0;
    while s > 1e-15 && iters < 5000 {
        iters += 1;
        let mut moved = false;
        for k in 0..8 {
            let a = k as f64 * TAU / 8.0;
            let y = SurfacePoint::new(x.chart, x.u + s * a.cos(), x.v + s * a.sin());
            let fy = norm2(f(&y));
            if fy < fx {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
        }
        if !moved {
            s *= 0.5;
        }
    }
    ((x.u - p0.u).hypot(x.v - p0.v) < 3.0 * cell && fx < ACCEPT).then_some(x)
}

/// Winding number of the field and the angles where it is radial, on a
/// circle of radius `rho` around `p`.
fn local_structure(spec: &FieldSpec, p: &SurfacePoint, rho: f64) -> (i32, Vec<f64>) {
    const M: usize = 720;
    // half-step offset keeps sample angles off the axes
    let th = |i: usize| TAU * (i as f64 + 0.5) / M as f64;
    let mut ang = Vec::with_capacity(M);
    let mut cross = Vec::with_capacity(M);
    for i in 0..M {
        let (s, c) = th(i).sin_cos();
        let v = spec.eval_raw(&SurfacePoint::new(p.chart, p.u + rho * c, p.v + rho * s));
        ang.push(v[1].atan2(v[0]));
        cross.push(c * v[1] - s * v[0]);
    }
    let mut total = 0.0;
    let mut dirs = Vec::new();
    for i in 0..M {
        let j = (i + 1) % M;
        total += wrap_diff(ang[j] - ang[i], TAU);
        let (c0, c1) = (cross[i], cross[j]);
        if (c0 < 0.0 && c1 >= 0.0) || (c0 > 0.0 && c1 <= 0.0) {
            let t = th(i) + (TAU / M as f64) * c0 / (c0 - c1);
            dirs.push(t.rem_euclid(TAU));
        }
    }
    dirs.sort_by(f64::total_cmp);
    ((total / TAU).round() as i32, dirs)
}

fn classify_point(spec: &FieldSpec, p: &SurfacePoint, rho: f64) -> Result<(SingularKind, i32, Vec<f64>)> {
    let (index, dirs) = local_structure(spec, p, rho);
    let n = dirs.len();
    let kind = if index == 1 && n == 0 {
        let settings = IntegratorSettings { t_budget: 200.0, record_dt: f64::INFINITY, ..IntegratorSettings::default() };
        let q = SurfacePoint::new(p.chart, p.u + rho, p.v);
        let tr = integrate(spec, &q, &settings, Direction::Forward)?;
        if matches!(tr.termination, Termination::ClosedUp { .. }) {
            SingularKind::Center
        } else {
            SingularKind::Degenerate { index, directions: n }
        }
    } else if n >= 2 && n % 2 == 0 && index == 1 - (n as i32) / 2 {
        SingularKind::MultiSaddle { k: (n as u32) / 2 - 1 }
    } else {
        SingularKind::Degenerate { index, directions: n }
    };
    Ok((kind, index, dirs))
}

/// Locates the zeros of the field, decides their kinds and traces the
/// separatrices of every multi-saddle.
pub fn singular_inventory(spec: &FieldSpec, tun: &HamTunables) -> Result<SingularInventory> {
    if !spec.sing_is_finite() {
        return Err(FlowError::InfiniteSingularSet(format!("{} declares a non-isolated zero set", spec.name())));
    }
    let atlas = &spec.atlas;
    let mut found: Vec<SurfacePoint> = Vec::new();
    for (cand, cell) in zero_candidates(spec, tun.grid) {
        let Some(z) = refine_zero(spec, &cand, cell) else { continue };
        let Ok(z) = atlas.normalize(&z) else { continue };
        if found.iter().all(|q| atlas.distance(q, &z).unwrap_or(f64::INFINITY) > 1e-6) {
            found.push(z);
        }
        if found.len() > 10_000 {
            return Err(FlowError::InfiniteSingularSet("more than 10000 zeros located".into()));
        }
    }
    found.sort_by(|a, b| (a.chart, a.u, a.v).partial_cmp(&(b.chart, b.u, b.v)).unwrap_or(std::cmp::Ordering::Equal));
    let mut points = Vec::with_capacity(found.len());
    for (i, p) in found.iter().enumerate() {
        let nearest = found
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| atlas.distance(p, q).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let rho = (0.3 * nearest).min(1e-2);
        let (kind, index, mut angles) = classify_point(spec, p, rho)?;
        // radial directions drift with orbit curvature; resample them at
        // the tracing radius
        let (_, fine) = local_structure(spec, p, tun.separatrix_radius);
        if fine.len() == angles.len() {
            angles = fine;
        }
        points.push(SingularPoint { point: *p, kind, index, separatrix_angles: angles });
    }
    let mut separatrices = Vec::new();
    for (i, sp) in points.iter().enumerate() {
        if !matches!(sp.kind, SingularKind::MultiSaddle { .. }) {
            continue;
        }
        for &a in &sp.separatrix_angles {
            separatrices.push(trace_separatrix(spec, &points, i, a, tun)?);
        }
    }
    Ok(SingularInventory { points, separatrices })
}

/// Stops a separatrix trace once it comes within `tol` of a singular
/// point (its origin only after leaving the origin's neighbourhood).
struct EndpointWatch<'a> {
    spec: &'a FieldSpec,
    points: &'a [SingularPoint],
    origin: usize,
    tol: f64,
    left_origin: bool,
    hit: Option<usize>,
}

impl Observer for EndpointWatch<'_> {
    fn segment(&mut self, seg: &Segment<'_>) -> bool {
        let atlas = &self.spec.atlas;
        for (i, sp) in self.points.iter().enumerate() {
            let Ok(d) = atlas.distance(&seg.p1, &sp.point) else { continue };
            if i == self.origin && !self.left_origin {
                self.left_origin = d > 1e-2;
                continue;
            }
            if d <= self.tol {
                self.hit = Some(i);
                return false;
            }
        }
        true
    }
}

fn trace_separatrix(spec: &FieldSpec, points: &[SingularPoint], origin: usize, angle: f64, tun: &HamTunables) -> Result<Separatrix> {
    let p = points[origin].point;
    let r = tun.separatrix_radius;
    let q = SurfacePoint::new(p.chart, p.u + r * angle.cos(), p.v + r * angle.sin());
    let v = spec.eval_raw(&q);
    let outgoing = v[0] * angle.cos() + v[1] * angle.sin() > 0.0;
    let settings = IntegratorSettings {
        t_budget: tun.separatrix_budget,
        record_dt: 1e-4,
        detect_closure: false,
        max_samples: 2_000_000,
        ..IntegratorSettings::default()
    };
    let dir = if outgoing { Direction::Forward } else { Direction::Backward };
    let mut obs = EndpointWatch { spec, points, origin, tol: tun.match_tol, left_origin: false, hit: None };
    let tr = integrate_observed(spec, &q, &settings, dir, &mut obs)?;
    let end = obs.hit.or(match tr.termination {
        Termination::ConvergedToSing { point } => points
            .iter()
            .position(|s| spec.atlas.distance(&s.point, &point).is_ok_and(|d| d <= tun.match_tol + 1e-9)),
        _ => None,
    });
    let mut polyline: Vec<SurfacePoint> = vec![p];
    polyline.extend(tr.samples.iter().map(|s| s.1));
    Ok(Separatrix { origin, angle, outgoing, end, termination: tr.termination, polyline })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Center { point: usize },
    SaddleConnection { points: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    /// Region representatives whose annulus produced this edge.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedOrbitGraph {
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<GraphEdge>,
    pub sampled: usize,
    pub unresolved_samples: usize,
    pub oriented_by_h: bool,
}

impl ExtendedOrbitGraph {
    /// DOT text of the graph.
    pub fn to_dot(&self, inv: &SingularInventory) -> String {
        let mut s = String::from("digraph extended_orbit_space {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n {
                NodeKind::Center { point } => {
                    let p = inv.points[*point].point;
                    format!("center c{} ({:.4}, {:.4})", p.chart, p.u, p.v)
                }
                NodeKind::SaddleConnection { points } => format!("saddle connection x{}", points.len()),
            };
            let _ = writeln!(s, "  n{i} [label=\"{label}\"];");
        }
        for e in &self.edges {
            let _ = writeln!(s, "  n{} -> n{} [label=\"{}\"];", e.from, e.to, e.samples);
        }
        s.push_str("}\n");
        s
    }
}

/// Depth-first search for a directed cycle; nodes are visited in index
/// order.
pub fn has_directed_cycle(g: &ExtendedOrbitGraph) -> bool {
    let n = g.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for e in &g.edges {
        if e.from < n && e.to < n {
            adj[e.from].push(e.to);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    // 0 white, 1 on stack, 2 done
    let mut color = vec![0u8; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                match color[w] {
                    1 => return true,
                    0 => {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    false
}

/// Coordinates in which nearby-point queries are made: the chart for flat
/// surfaces (with periods), the unit sphere otherwise.
fn embed(atlas: &SurfaceAtlas, p: &SurfacePoint) -> Option<[f64; 3]> {
    match atlas.kind() {
        AtlasKind::Sphere => atlas.to_ambient(p).ok(),
        _ => atlas.normalize(p).ok().map(|q| [q.u, q.v, 0.0]),
    }
}

fn embed_periods(atlas: &SurfaceAtlas) -> [f64; 3] {
    let d = atlas.fundamental_domain();
    match atlas.kind() {
        AtlasKind::Torus => [d.width(), d.height(), 0.0],
        AtlasKind::ClosedAnnulus => [d.width(), 0.0, 0.0],
        AtlasKind::MappingTorus => [0.0, d.height(), 0.0],
        AtlasKind::Sphere => [0.0; 3],
    }
}

/// Bucketed point set with periodic distance.
struct PointCloud {
    cell: f64,
    periods: [f64; 3],
    buckets: HashMap<[i64; 3], Vec<(usize, [f64; 3])>>,
}

impl PointCloud {
    fn new(cell: f64, periods: [f64; 3]) -> Self {
        PointCloud { cell, periods, buckets: HashMap::new() }
    }

    fn key(&self, x: &[f64; 3]) -> [i64; 3] {
        let mut k = [0i64; 3];
        for d in 0..3 {
            let c = if self.periods[d] > 0.0 { x[d].rem_euclid(self.periods[d]) } else { x[d] };
            k[d] = (c / self.cell).floor() as i64;
        }
        k
    }

    fn insert(&mut self, tag: usize, x: [f64; 3]) {
        let k = self.key(&x);
        self.buckets.entry(k).or_default().push((tag, x));
    }

    fn dist(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for d in 0..3 {
            let mut x = a[d] - b[d];
            if self.periods[d] > 0.0 {
                x = wrap_diff(x, self.periods[d]);
            }
            s += x * x;
        }
        s.sqrt()
    }

    /// Nearest tagged point within one bucket width.
    fn nearest(&self, x: &[f64; 3]) -> Option<(usize, f64)> {
        let k = self.key(x);
        let counts: Vec<i64> = (0..3)
            .map(|d| if self.periods[d] > 0.0 { (self.periods[d] / self.cell).ceil() as i64 } else { 0 })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for a in -1..=1 {
            for b in -1..=1 {
                for c in -1..=1 {
                    let mut q = [k[0] + a, k[1] + b, k[2] + c];
                    for d in 0..3 {
                        if counts[d] > 0 {
                            q[d] = q[d].rem_euclid(counts[d]);
                        }
                    }
                    let Some(v) = self.buckets.get(&q) else { continue };
                    for (tag, y) in v {
                        let dd = self.dist(x, y);
                        if dd <= self.cell && best.is_none_or(|(_, b)| dd < b) {
                            best = Some((*tag, dd));
                        }
                    }
                }
            }
        }
        best
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Quasi-random points spread over the surface, skipping points too close
/// to the singular set.
pub fn surface_samples(atlas: &SurfaceAtlas, count: usize) -> Vec<SurfacePoint> {
    fn radical_inverse(mut i: u64, base: u64) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count && i < 100 * count as u64 + 100 {
        let (a, b) = (radical_inverse(i, 2), radical_inverse(i, 3));
        i += 1;
        match atlas.kind() {
            AtlasKind::Sphere => {
                // area-uniform on the sphere, then into the nearer chart
                let z = 2.0 * a - 1.0;
                let t = TAU * b;
                let s = (1.0 - z * z).sqrt();
                out.push(atlas.from_ambient([s * t.cos(), s * t.sin(), z]));
            }
            _ => {
                let d = atlas.fundamental_domain();
                out.push(SurfacePoint::new(0, d.u0 + a * d.width(), d.v0 + b * d.height()));
            }
        }
    }
    out
}

/// Builds the extended orbit graph. Nodes are centers and saddle-connection
/// components; each periodic annulus met by a region representative adds
/// an edge, directed towards the side the rotated field (or `h`, when
/// given) points to.
pub fn extended_orbit_graph(
    spec: &FieldSpec,
    inv: &SingularInventory,
    h: Option<&dyn Fn(&SurfacePoint) -> f64>,
    tun: &HamTunables,
) -> Result<ExtendedOrbitGraph> {
    let atlas = &spec.atlas;
    let np = inv.points.len();
    let mut parent: Vec<usize> = (0..np).collect();
    for s in &inv.separatrices {
        let Some(e) = s.end else {
            let p = inv.points[s.origin].point;
            return Err(FlowError::UnresolvedConnection(format!(
                "separatrix from ({:.6}, {:.6}) at angle {:.4} did not reach a singular point",
                p.u, p.v, s.angle
            )));
        };
        if inv.points[e].kind == SingularKind::Center {
            return Err(FlowError::UnresolvedConnection("separatrix ends at a center".into()));
        }
        let (a, b) = (find(&mut parent, s.origin), find(&mut parent, e));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut nodes = Vec::new();
    let mut node_of_point = vec![usize::MAX; np];
    for i in 0..np {
        match inv.points[i].kind {
            SingularKind::Center => {
                node_of_point[i] = nodes.len();
                nodes.push(NodeKind::Center { point: i });
            }
            SingularKind::MultiSaddle { .. } => {
                let r = find(&mut parent, i);
                if r == i {
                    let members: Vec<usize> = (0..np).filter(|&j| find(&mut parent, j) == r).collect();
                    let id = nodes.len();
                    for &m in &members {
                        node_of_point[m] = id;
                    }
                    nodes.push(NodeKind::SaddleConnection { points: members });
                }
            }
            SingularKind::Degenerate { .. } => {
                return Err(FlowError::UnresolvedConnection("degenerate singular point in graph input".into()));
            }
        }
    }
    for i in 0..np {
        if node_of_point[i] == usize::MAX {
            node_of_point[i] = node_of_point[find(&mut parent, i)];
        }
    }

    let step = tun.path_step;
    let thr = 1.25 * step;
    let mut cloud = PointCloud::new(thr, embed_periods(atlas));
    for s in &inv.separatrices {
        let node = node_of_point[s.origin];
        let mut prev: Option<[f64; 3]> = None;
        for p in &s.polyline {
            let Some(x) = embed(atlas, p) else { continue };
            // fill gaps wider than a quarter threshold
            if let Some(y) = prev {
                let d = cloud.dist(&x, &y);
                let k = (d / (0.25 * thr)).ceil() as usize;
                if k > 1 && d < 0.1 {
                    for j in 1..k {
                        let t = j as f64 / k as f64;
                        let mut z = [0.0; 3];
                        for c in 0..3 {
                            let mut dd = x[c] - y[c];
                            if cloud.periods[c] > 0.0 {
                                dd = wrap_diff(dd, cloud.periods[c]);
                            }
                            z[c] = y[c] + t * dd;
                        }
                        cloud.insert(node, z);
                    }
                }
            }
            cloud.insert(node, x);
            prev = Some(x);
        }
    }
    for (i, p) in inv.points.iter().enumerate() {
        if let (Some(x), true) = (embed(atlas, &p.point), matches!(p.kind, SingularKind::MultiSaddle { .. })) {
            cloud.insert(node_of_point[i], x);
        }
    }
    let centers: Vec<(usize, [f64; 3])> = inv
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == SingularKind::Center)
        .filter_map(|(i, p)| embed(atlas, &p.point).map(|x| (node_of_point[i], x)))
        .collect();

    let path_end = |x: &SurfacePoint, sign: f64| -> Option<(usize, SurfacePoint)> {
        let mut p = *x;
        let max_steps = (4.0 * atlas.diameter() / step).ceil() as usize + 100;
        for _ in 0..max_steps {
            let dir = |q: &SurfacePoint| -> Option<[f64; 2]> {
                let v = spec.eval_raw(q);
                let n = [-sign * v[1], sign * v[0]];
                let m = norm2(n);
                (m > 1e-14).then(|| [n[0] / m, n[1] / m])
            };
            // chart step giving roughly `step` in the embedding
            let scale = match atlas.kind() {
                AtlasKind::Sphere => 0.5 * (1.0 + p.u * p.u + p.v * p.v),
                _ => 1.0,
            };
            let hs = step * scale;
            let d1 = dir(&p)?;
            let mid = SurfacePoint::new(p.chart, p.u + 0.5 * hs * d1[0], p.v + 0.5 * hs * d1[1]);
            let d2 = dir(&mid)?;
            let q = SurfacePoint::new(p.chart, p.u + hs * d2[0], p.v + hs * d2[1]);
            p = atlas.settle(&q).ok()?;
            let e = embed(atlas, &p)?;
            for (node, c) in &centers {
                if cloud.dist(&e, c) < 2.0 * step {
                    return Some((*node, p));
                }
            }
            if let Some((node, _)) = cloud.nearest(&e) {
                return Some((node, p));
            }
        }
        None
    };

    let samples = surface_samples(atlas, tun.graph_samples * atlas.chart_count());
    let closure = IntegratorSettings { t_budget: 500.0, record_dt: f64::INFINITY, ..IntegratorSettings::default() };
    let mut edge_counts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut unresolved = 0;
    let mut sampled = 0;
    for x in &samples {
        let Some(e) = embed(atlas, x) else { continue };
        if spec.sing_distance(x) < 3.0 * thr || cloud.nearest(&e).is_some() || norm2(spec.eval_raw(x)) < 1e-9 {
            continue;
        }
        sampled += 1;
        let tr = integrate(spec, x, &closure, Direction::Forward)?;
        if !matches!(tr.termination, Termination::ClosedUp { .. }) {
            unresolved += 1;
            continue;
        }
        let (Some((hi, ph)), Some((lo, pl))) = (path_end(x, 1.0), path_end(x, -1.0)) else {
            unresolved += 1;
            continue;
        };
        let (from, to) = match h {
            Some(h) => {
                if h(&ph) >= h(&pl) {
                    (lo, hi)
                } else {
                    (hi, lo)
                }
            }
            None => (lo, hi),
        };
        *edge_counts.entry((from, to)).or_default() += 1;
    }
    let mut edges: Vec<GraphEdge> = edge_counts.into_iter().map(|((from, to), samples)| GraphEdge { from, to, samples }).collect();
    edges.sort_by_key(|e| (e.from, e.to));
    Ok(ExtendedOrbitGraph { nodes, edges, sampled, unresolved_samples: unresolved, oriented_by_h: h.is_some() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreHamReport {
    pub holds: bool,
    pub trajectories: usize,
    pub max_level_drift: f64,
    pub arcs: usize,
    pub pairs_checked: usize,
    pub failures: Vec<String>,
}

/// Checks that `h` is constant along orbits, strictly monotone across them
/// and separates nearby orbits on a common level.
pub fn pre_hamiltonian_check(spec: &FieldSpec, h: &dyn Fn(&SurfacePoint) -> f64, tun: &HamTunables) -> Result<PreHamReport> {
    let atlas = &spec.atlas;
    let starts: Vec<SurfacePoint> = surface_samples(atlas, 4 * tun.trajectories)
        .into_iter()
        .filter(|p| spec.sing_distance(p) > 0.05 && norm2(spec.eval_raw(p)) > 1e-9)
        .take(tun.trajectories)
        .collect();
    let settings = IntegratorSettings {
        t_budget: tun.trajectory_time,
        record_dt: 0.01,
        detect_closure: false,
        ..IntegratorSettings::default()
    };
    let mut failures = Vec::new();
    let mut max_drift: f64 = 0.0;
    let mut orbits = Vec::with_capacity(starts.len());
    for x in &starts {
        let tr = integrate(spec, x, &settings, Direction::Forward)?;
        let h0 = h(x);
        let drift = tr.samples.iter().map(|(_, p)| (h(p) - h0).abs()).fold(0.0, f64::max);
        max_drift = max_drift.max(drift);
        if drift > tun.level_tol {
            failures.push(format!("level drift {drift:.3e} along the orbit of ({:.4}, {:.4})", x.u, x.v));
        }
        orbits.push(tr.samples);
    }
    let mut arcs = 0;
    for x in &starts {
        let v = spec.eval_raw(x);
        let m = norm2(v);
        let n = [-v[1] / m, v[0] / m];
        let k = 20;
        let vals: Vec<f64> = (0..=k)
            .map(|i| {
                let s = tun.arc_half_length * (2.0 * i as f64 / k as f64 - 1.0);
                h(&SurfacePoint::new(x.chart, x.u + s * n[0], x.v + s * n[1]))
            })
            .collect();
        arcs += 1;
        let diffs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
        let up = diffs.iter().all(|d| *d > tun.flat_tol);
        let down = diffs.iter().all(|d| *d < -tun.flat_tol);
        if !(up || down) {
            failures.push(format!("h not strictly monotone across the orbit at ({:.4}, {:.4})", x.u, x.v));
        }
    }
    let mut pairs = 0;
    for i in 0..starts.len() {
        for j in (i + 1)..starts.len() {
            let (a, b) = (&starts[i], &starts[j]);
            let Ok(d) = atlas.distance(a, b) else { continue };
            if d > 0.05 || (h(a) - h(b)).abs() > 1e-7 {
                continue;
            }
            pairs += 1;
            let same_orbit = orbits[i].iter().any(|(_, p)| atlas.distance(p, b).is_ok_and(|e| e < 1e-3));
            let Ok(bb) = atlas.transition(b, a.chart) else { continue };
            let (mut du, mut dv) = (bb.u - a.u, bb.v - a.v);
            if let AtlasKind::Torus = atlas.kind() {
                du = wrap_diff(du, 1.0);
                dv = wrap_diff(dv, 1.0);
            }
            let ha = h(a);
            let varies = (1..20).any(|t| {
                let s = t as f64 / 20.0;
                (h(&SurfacePoint::new(a.chart, a.u + s * du, a.v + s * dv)) - ha).abs() > tun.flat_tol
            });
            if !same_orbit && !varies {
                failures.push(format!("distinct orbits through ({:.4}, {:.4}) and ({:.4}, {:.4}) share a flat level", a.u, a.v, b.u, b.v));
            }
        }
    }
    Ok(PreHamReport {
        holds: failures.is_empty(),
        trajectories: starts.len(),
        max_level_drift: max_drift,
        arcs,
        pairs_checked: pairs,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Hamiltonian,
    NotHamiltonian,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub field: String,
    pub verdict: Verdict,
    pub evidence: Vec<String>,
    pub inventory: Option<SingularInventory>,
    pub index_sum: Option<i32>,
    pub euler_characteristic: i32,
    pub probes_run: usize,
    pub witness: Option<LimitSetReport>,
    pub graph: Option<ExtendedOrbitGraph>,
    pub dot: Option<String>,
}

/// Decides whether a flow with finitely many singular points is
/// Hamiltonian, returning the evidence used.
pub fn hamiltonian_verdict(spec: &FieldSpec, tun: &HamTunables, limits: &Tunables) -> Result<VerdictReport> {
    let mut rep = VerdictReport {
        field: spec.name(),
        verdict: Verdict::Inconclusive,
        evidence: Vec::new(),
        inventory: None,
        index_sum: None,
        euler_characteristic: euler_characteristic(&spec.atlas),
        probes_run: 0,
        witness: None,
        graph: None,
        dot: None,
    };
    if !spec.sing_is_finite() {
        rep.evidence.push("singular set is not finite".into());
        return Ok(rep);
    }
    let inv = match singular_inventory(spec, tun) {
        Ok(inv) => inv,
        Err(e) => {
            rep.evidence.push(format!("inventory failed: {e}"));
            return Ok(rep);
        }
    };
    rep.index_sum = Some(inv.index_sum());
    rep.evidence.push(format!(
        "{} singular points: {} centers, {} multi-saddles, index sum {}",
        inv.points.len(),
        inv.centers(),
        inv.saddles(),
        inv.index_sum()
    ));
    let degenerate: Vec<&SingularPoint> = inv.points.iter().filter(|p| matches!(p.kind, SingularKind::Degenerate { .. })).collect();
    if let Some(d) = degenerate.first() {
        // a nearby orbit tending to the point rules out a center
        let settings = IntegratorSettings { t_budget: 1e3, record_dt: f64::INFINITY, ..IntegratorSettings::default() };
        let q = SurfacePoint::new(d.point.chart, d.point.u + 1e-3, d.point.v + 1e-3);
        let mut certain = false;
        for dir in [Direction::Forward, Direction::Backward] {
            if let Termination::ConvergedToSing { point } = integrate(spec, &q, &settings, dir)?.termination {
                certain |= spec.atlas.distance(&point, &d.point).is_ok_and(|x| x < 1e-5);
            }
        }
        rep.evidence.push(format!("degenerate singular point at chart {} ({:.6}, {:.6}): {:?}", d.point.chart, d.point.u, d.point.v, d.kind));
        rep.verdict = if certain { Verdict::NotHamiltonian } else { Verdict::Inconclusive };
        if certain {
            rep.evidence.push("nearby orbits converge to it, so it is neither a center nor a multi-saddle".into());
        }
        rep.inventory = Some(inv);
        return Ok(rep);
    }
    let probe_tun = Tunables { budget: tun.probe_budget, ..limits.clone() };
    let mut all_closed = true;
    for x in surface_samples(&spec.atlas, 4 * tun.probes)
        .into_iter()
        .filter(|p| spec.sing_distance(p) > limits.eps_sing)
        .take(tun.probes)
    {
        rep.probes_run += 1;
        let w = classify_limit(spec, &x, Side::Omega, &probe_tun)?;
        match w.label {
            LimitLabel::SelfClosed => {}
            LimitLabel::NowhereDenseSing => all_closed = false,
            LimitLabel::Undecided => {
                rep.evidence.push(format!("probe ({:.4}, {:.4}) undecided", x.u, x.v));
                rep.witness = Some(w);
                rep.inventory = Some(inv);
                return Ok(rep);
            }
            other => {
                let why = match other {
                    LimitLabel::LocallyDenseQSet => "a locally dense orbit",
                    LimitLabel::LimitCycle | LimitLabel::LimitQuasiCircuit => "a limit cycle or quasi-circuit",
                    _ => "a non-closed recurrent orbit in a transversely Cantor limit set",
                };
                rep.evidence.push(format!("probe ({:.4}, {:.4}) has omega = {}: {why}", x.u, x.v, other.as_str()));
                rep.verdict = Verdict::NotHamiltonian;
                rep.witness = Some(w);
                rep.inventory = Some(inv);
                return Ok(rep);
            }
        }
    }
    rep.evidence.push(format!("{} probes: every omega-limit is a closed orbit or singular", rep.probes_run));
    if inv.points.is_empty() {
        if all_closed {
            rep.evidence.push("no singular points and every probe periodic".into());
        }
        rep.inventory = Some(inv);
        return Ok(rep);
    }
    let hf = |p: &SurfacePoint| spec.hamiltonian_value(p).unwrap_or(f64::NAN);
    let h_ref: Option<&dyn Fn(&SurfacePoint) -> f64> = spec.hamiltonian_value(&inv.points[0].point).map(|_| &hf as &dyn Fn(&SurfacePoint) -> f64);
    let graph = match extended_orbit_graph(spec, &inv, h_ref, tun) {
        Ok(g) => g,
        Err(e) => {
            rep.evidence.push(format!("graph failed: {e}"));
            rep.inventory = Some(inv);
            return Ok(rep);
        }
    };
    rep.dot = Some(graph.to_dot(&inv));
    if graph.edges.is_empty() {
        rep.evidence.push("no periodic annulus was sampled".into());
    } else if has_directed_cycle(&graph) {
        rep.evidence.push("extended orbit graph has a directed cycle".into());
        rep.verdict = Verdict::NotHamiltonian;
    } else {
        rep.evidence.push(format!(
            "extended orbit graph: {} nodes, {} edges, acyclic",
            graph.nodes.len(),
            graph.edges.len()
        ));
        rep.verdict = Verdict::Hamiltonian;
    }
    rep.graph = Some(graph);
    rep.inventory = Some(inv);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{hamiltonian_field, HamiltonianId, HeightId};
    use crate::surgery::{apply_surgery, SurgerySpec};

    fn quick() -> HamTunables {
        HamTunables { grid: 128, probes: 6, graph_samples: 24, trajectories: 30, ..HamTunables::default() }
    }

    #[test]
    fn torus_sinsin_inventory() {
        let f = hamiltonian_field(HamiltonianId::TorusSinSin, &SurfaceAtlas::torus()).unwrap();
        let inv = singular_inventory(&f, &quick()).unwrap();
        assert_eq!(inv.centers(), 4);
        assert_eq!(inv.saddles(), 4);
        assert_eq!(inv.index_sum(), 0);
        assert!(inv.points.iter().all(|p| p.kind != SingularKind::MultiSaddle { k: 0 }));
        assert_eq!(inv.separatrices.len(), 16);
        assert!(inv.separatrices.iter().all(|s| s.end.is_some()));
    }

    #[test]
    fn sphere_inventory_two_centers() {
        let f = hamiltonian_field(HamiltonianId::SphereHeight, &SurfaceAtlas::sphere()).unwrap();
        let inv = singular_inventory(&f, &quick()).unwrap();
        assert_eq!(inv.centers(), 2);
        assert_eq!(inv.saddles(), 0);
        assert_eq!(inv.index_sum(), 2);
    }

    #[test]
    fn fake_saddle_is_zero_saddle() {
        let f = hamiltonian_field(HamiltonianId::TorusSinSin, &SurfaceAtlas::torus()).unwrap();
        let g = apply_surgery(&f, SurgerySpec::fake_saddle(SurfacePoint::at(0.1, 0.15), 0.05).unwrap()).unwrap();
        let inv = singular_inventory(&g, &quick()).unwrap();
        let fs: Vec<_> = inv.points.iter().filter(|p| p.kind == SingularKind::MultiSaddle { k: 0 }).collect();
        assert_eq!(fs.len(), 1);
        assert!((fs[0].point.u - 0.1).abs() < 1e-9 && (fs[0].point.v - 0.15).abs() < 1e-9);
        assert_eq!(fs[0].separatrix_angles.len(), 2);
        assert_eq!(inv.index_sum(), 0);
    }

    #[test]
    fn linear_torus_has_empty_inventory() {
        let f = FieldSpec::linear_torus(crate::circle_map::golden_rotation());
        assert!(singular_inventory(&f, &quick()).unwrap().points.is_empty());
    }

    #[test]
    fn reeb_torus_rejected() {
        let f = FieldSpec::reeb_singular_circle_torus();
        assert!(matches!(singular_inventory(&f, &quick()), Err(FlowError::InfiniteSingularSet(_))));
    }

    #[test]
    fn cycle_detection() {
        let mk = |edges: &[(usize, usize)], n: usize| ExtendedOrbitGraph {
            nodes: (0..n).map(|i| NodeKind::Center { point: i }).collect(),
            edges: edges.iter().map(|&(from, to)| GraphEdge { from, to, samples: 1 }).collect(),
            sampled: 0,
            unresolved_samples: 0,
            oriented_by_h: false,
        };
        assert!(!has_directed_cycle(&mk(&[(0, 1), (1, 2)], 3)));
        assert!(has_directed_cycle(&mk(&[(0, 1), (1, 2), (2, 0)], 3)));
        assert!(has_directed_cycle(&mk(&[(2, 0), (1, 2), (0, 1)], 3)));
        assert!(!has_directed_cycle(&mk(&[(0, 1), (0, 2), (1, 3), (2, 3)], 4)));
        assert!(has_directed_cycle(&mk(&[(1, 1)], 2)));
    }

    #[test]
    fn sphere_graph_is_a_path() {
        let f = hamiltonian_field(HamiltonianId::SphereHeight, &SurfaceAtlas::sphere()).unwrap();
        let t = quick();
        let inv = singular_inventory(&f, &t).unwrap();
        for h in [true, false] {
            let hf = |p: &SurfacePoint| f.hamiltonian_value(p).unwrap();
            let g = extended_orbit_graph(&f, &inv, h.then_some(&hf as &dyn Fn(&SurfacePoint) -> f64), &t).unwrap();
            assert_eq!(g.nodes.len(), 2);
            assert_eq!(g.edges.len(), 1, "{g:?}");
            assert!(!has_directed_cycle(&g));
            assert!(g.to_dot(&inv).starts_with("digraph"));
        }
    }

    #[test]
    fn torus_graph_orientation_agrees_with_h() {
        let f = hamiltonian_field(HamiltonianId::TorusSinSin, &SurfaceAtlas::torus()).unwrap();
        let t = quick();
        let inv = singular_inventory(&f, &t).unwrap();
        let hf = |p: &SurfacePoint| f.hamiltonian_value(p).unwrap();
        let a = extended_orbit_graph(&f, &inv, Some(&hf), &t).unwrap();
        let b = extended_orbit_graph(&f, &inv, None, &t).unwrap();
        assert_eq!(a.nodes.len(), 5);
        assert_eq!(a.edges.len(), 4);
        assert_eq!(a.edges, b.edges);
        assert!(!has_directed_cycle(&a));
    }

    #[test]
    fn pre_hamiltonian_own_h() {
        let f = hamiltonian_field(HamiltonianId::SphereHeight, &SurfaceAtlas::sphere()).unwrap();
        let r = pre_hamiltonian_check(&f, &|p| f.hamiltonian_value(p).unwrap(), &quick()).unwrap();
        assert!(r.holds, "{r:?}");
        let g = FieldSpec::linear_torus(crate::circle_map::golden_rotation());
        let r = pre_hamiltonian_check(&g, &|p| (TAU * p.v).cos(), &quick()).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn verdicts() {
        let t = quick();
        let lt = Tunables::default();
        let f = hamiltonian_field(HamiltonianId::TorusSinSin, &SurfaceAtlas::torus()).unwrap();
        assert_eq!(hamiltonian_verdict(&f, &t, &lt).unwrap().verdict, Verdict::Hamiltonian);
        let g = FieldSpec::gradient(HeightId::TorusSinSin);
        assert_eq!(hamiltonian_verdict(&g, &t, &lt).unwrap().verdict, Verdict::NotHamiltonian);
        let l = FieldSpec::linear_torus(crate::circle_map::golden_rotation());
        let r = hamiltonian_verdict(&l, &t, &lt).unwrap();
        assert_eq!(r.verdict, Verdict::NotHamiltonian);
        assert!(r.witness.is_some());
        let rational = FieldSpec::linear_torus(0.5);
        assert_eq!(hamiltonian_verdict(&rational, &t, &lt).unwrap().verdict, Verdict::Inconclusive);
    }
}
