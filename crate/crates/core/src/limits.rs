//! Estimation and classification of omega/alpha-limit sets from trajectory
//! tails, orbit classes and wandering-domain search.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::atlas::{wrap_diff, AtlasKind, Rect, SurfaceAtlas, SurfacePoint};
use crate::error::{FlowError, Result};
use crate::field::{FieldSpec, Section};
use crate::integrator::{integrate_observed, Direction, Hit, IntegratorSettings, Observer, Segment, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tunables {
    pub grid: usize,
    pub tail_fraction: f64,
    pub eps_sing: f64,
    pub fill_radius: f64,
    pub fill_fraction: f64,
    pub box_dim_min: f64,
    /// Persistent-gap floor as a fraction of the widest constructed
    /// wandering interval.
    pub gap_floor_factor: f64,
    /// Floor used when the field has no constructed wandering interval.
    pub gap_floor_default: f64,
    pub perfect_min: f64,
    pub depth_limit: u32,
    pub cluster_tol: f64,
    pub min_section_hits: usize,
    pub recurrence_tol: f64,
    pub budget: f64,
    pub tol: f64,
}

impl Default for Tunables {
    fn default() -> Self {
        Tunables {
            grid: 512,
            tail_fraction: 0.5,
            eps_sing: 1e-3,
            fill_radius: 0.1,
            fill_fraction: 0.99,
            box_dim_min: 1.9,
            gap_floor_factor: 0.5,
            gap_floor_default: 0.05,
            perfect_min: 0.5,
            depth_limit: 6,
            cluster_tol: 1e-2,
            min_section_hits: 1000,
            recurrence_tol: 1e-3,
            budget: 1e4,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Omega,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LimitLabel {
    NowhereDenseSing,
    LimitCycle,
    LimitQuasiCircuit,
    LocallyDenseQSet,
    TransverselyCantorQSet,
    QuasiQSetInSingP,
    SelfClosed,
    Undecided,
}

impl LimitLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitLabel::NowhereDenseSing => "NowhereDenseSing",
            LimitLabel::LimitCycle => "LimitCycle",
            LimitLabel::LimitQuasiCircuit => "LimitQuasiCircuit",
            LimitLabel::LocallyDenseQSet => "LocallyDenseQSet",
            LimitLabel::TransverselyCantorQSet => "TransverselyCantorQSet",
            LimitLabel::QuasiQSetInSingP => "QuasiQSetInSingP",
            LimitLabel::SelfClosed => "SelfClosed",
            LimitLabel::Undecided => "Undecided",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            LimitLabel::NowhereDenseSing,
            LimitLabel::LimitCycle,
            LimitLabel::LimitQuasiCircuit,
            LimitLabel::LocallyDenseQSet,
            LimitLabel::TransverselyCantorQSet,
            LimitLabel::QuasiQSetInSingP,
            LimitLabel::SelfClosed,
            LimitLabel::Undecided,
        ]
        .into_iter()
        .find(|l| l.as_str() == s)
    }
}

/// Tail occupancy over the unit square image of the fundamental domain.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub n: usize,
    pub counts: Vec<u32>,
    pub total: u64,
    pub wrap_x: bool,
    pub wrap_y: bool,
}

impl OccupancyGrid {
    pub fn new(n: usize, wrap_x: bool, wrap_y: bool) -> Self {
        OccupancyGrid { n, counts: vec![0; n * n], total: 0, wrap_x, wrap_y }
    }

    pub fn for_atlas(n: usize, atlas: &SurfaceAtlas) -> Self {
        let (wx, wy) = match atlas.kind() {
            AtlasKind::Torus => (true, true),
            AtlasKind::MappingTorus => (false, true),
            AtlasKind::ClosedAnnulus | AtlasKind::Sphere => (true, false),
        };
        Self::new(n, wx, wy)
    }

    /// Adds a point given in unit-square coordinates.
    pub fn add(&mut self, x: f64, y: f64) {
        let n = self.n as f64;
        let i = ((x * n).floor().max(0.0) as usize).min(self.n - 1);
        let j = ((y * n).floor().max(0.0) as usize).min(self.n - 1);
        self.counts[j * self.n + i] += 1;
        self.total += 1;
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Best occupied fraction over disks of radius `r` (unit-square units),
    /// centres on a lattice of spacing 4 cells.
    pub fn best_disk_fill(&self, r: f64) -> f64 {
        let n = self.n;
        let rc = r * n as f64;
        let ri = rc.ceil() as isize;
        // row prefix sums of occupancy
        let mut pref = vec![0u32; n * (n + 1)];
        for j in 0..n {
            for i in 0..n {
                pref[j * (n + 1) + i + 1] = pref[j * (n + 1) + i] + u32::from(self.counts[j * n + i] > 0);
            }
        }
        let row_count = |j: usize, a: isize, b: isize| -> (u32, u32) {
            // occupied and total cells of row j in columns a..=b
            let base = j * (n + 1);
            let ni = n as isize;
            if !self.wrap_x {
                let (a2, b2) = (a.max(0), b.min(ni - 1));
                if a2 > b2 {
                    return (0, 0);
                }
                return (pref[base + b2 as usize + 1] - pref[base + a2 as usize], (b2 - a2 + 1) as u32);
            }
            let mut occ = 0;
            let mut tot = 0;
            let mut c = a;
            while c <= b {
                let k = c.rem_euclid(ni);
                let run = (ni - k).min(b - c + 1);
                occ += pref[base + (k + run) as usize] - pref[base + k as usize];
                tot += run as u32;
                c += run;
            }
            (occ, tot)
        };
        let mut best: f64 = 0.0;
        let step = 4;
        let ni = n as isize;
        for cj in (0..n).step_by(step) {
            let cy = cj as isize;
            if !self.wrap_y && (cy - ri < 0 || cy + ri >= ni) {
                continue;
            }
            for ci in (0..n).step_by(step) {
                let cx = ci as isize;
                if !self.wrap_x && (cx - ri < 0 || cx + ri >= ni) {
                    continue;
                }
                let (mut occ, mut tot) = (0u64, 0u64);
                for dy in -ri..=ri {
                    let half = (rc * rc - (dy * dy) as f64).max(0.0).sqrt().floor() as isize;
                    let j = (cy + dy).rem_euclid(ni) as usize;
                    let (o, t) = row_count(j, cx - half, cx + half);
                    occ += o as u64;
                    tot += t as u64;
                }
                if tot > 0 {
                    best = best.max(occ as f64 / tot as f64);
                }
            }
        }
        best
    }
}

/// Box-counting dimension: least-squares slope of `log(occupied boxes)`
/// against `log(boxes per side)` over the dyadic coarsenings `N / 2^j`,
/// `j = 0..=4`.
pub fn box_dimension(grid: &OccupancyGrid) -> Result<f64> {
    if grid.occupied() < 1000 {
        return Err(FlowError::InsufficientData(format!("{} occupied cells, need 1000", grid.occupied())));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..=4u32 {
        let f = 1usize << j;
        let m = grid.n / f;
        let mut occ = vec![false; m * m];
        for jj in 0..grid.n {
            for ii in 0..grid.n {
                if grid.counts[jj * grid.n + ii] > 0 {
                    occ[(jj / f).min(m - 1) * m + (ii / f).min(m - 1)] = true;
                }
            }
        }
        let c = occ.iter().filter(|&&b| b).count();
        xs.push((m as f64).ln());
        ys.push((c as f64).ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Unit-square coordinates of a surface point for occupancy purposes
/// (Lambert cylindrical projection on the sphere, equal-area).
pub fn grid_coords(atlas: &SurfaceAtlas, p: &SurfacePoint) -> Option<(f64, f64)> {
    match atlas.kind() {
        AtlasKind::Sphere => {
            let x = atlas.to_ambient(p).ok()?;
            Some(((x[1].atan2(x[0]) / TAU + 0.5).rem_euclid(1.0), (0.5 * (x[2] + 1.0)).clamp(0.0, 1.0)))
        }
        _ => {
            let q = atlas.normalize(p).ok()?;
            let d = atlas.fundamental_domain();
            Some(((q.u - d.u0) / d.width(), (q.v - d.v0) / d.height()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionStats {
    pub hits: usize,
    pub max_gap_quarter: f64,
    pub max_gap_half: f64,
    pub max_gap_full: f64,
    /// Minimum of the three gaps above.
    pub persistent_gap: f64,
    pub perfectness: f64,
}

fn max_circular_gap(coords: &[f64]) -> f64 {
    if coords.is_empty() {
        return 1.0;
    }
    let mut c: Vec<f64> = coords.iter().map(|x| x.rem_euclid(1.0)).collect();
    c.sort_by(f64::total_cmp);
    let mut g = c[0] + 1.0 - c[c.len() - 1];
    for w in c.windows(2) {
        g = g.max(w[1] - w[0]);
    }
    g
}

/// Gap statistics of section hit coordinates normalized to the unit circle.
pub fn section_cantor_diagnostics(coords: &[f64], depth_limit: u32) -> Result<SectionStats> {
    let n = coords.len();
    if n < 1000 {
        return Err(FlowError::InsufficientData(format!("{n} section hits, need 1000")));
    }
    let q = max_circular_gap(&coords[..n / 4]);
    let h = max_circular_gap(&coords[..n / 2]);
    let f = max_circular_gap(coords);
    let mut split = 0usize;
    let mut occupied = 0usize;
    for j in 1..=depth_limit {
        let fine = 1usize << (j + 2);
        let mut bins = vec![false; fine];
        for x in coords {
            let b = ((x.rem_euclid(1.0) * fine as f64) as usize).min(fine - 1);
            bins[b] = true;
        }
        for coarse in bins.chunks(4) {
            let k = coarse.iter().filter(|&&b| b).count();
            if k > 0 {
                occupied += 1;
                if k >= 2 {
                    split += 1;
                }
            }
        }
    }
    Ok(SectionStats {
        hits: n,
        max_gap_quarter: q,
        max_gap_half: h,
        max_gap_full: f,
        persistent_gap: q.min(h).min(f),
        perfectness: if occupied > 0 { split as f64 / occupied as f64 } else { 0.0 },
    })
}

/// Streams the tail of a run into an occupancy grid and tracks distances
/// to the declared singular set.
struct TailObserver<'a> {
    spec: &'a FieldSpec,
    tail_start: f64,
    eps: f64,
    grid: OccupancyGrid,
    cell: f64,
    samples: u64,
    min_sing: f64,
    max_sing: f64,
    far_seen: bool,
}

impl<'a> TailObserver<'a> {
    fn new(spec: &'a FieldSpec, tail_start: f64, tun: &Tunables) -> Self {
        TailObserver {
            spec,
            tail_start,
            eps: tun.eps_sing,
            grid: OccupancyGrid::for_atlas(tun.grid, &spec.atlas),
            cell: 1.0 / tun.grid as f64,
            samples: 0,
            min_sing: f64::INFINITY,
            max_sing: 0.0,
            far_seen: false,
        }
    }

    fn record(&mut self, p: &SurfacePoint) {
        if let Some((x, y)) = grid_coords(&self.spec.atlas, p) {
            self.grid.add(x, y);
        }
        self.samples += 1;
        if self.far_seen && self.min_sing <= self.eps {
            return;
        }
        let d = self.spec.sing_distance(p);
        self.min_sing = self.min_sing.min(d);
        self.max_sing = self.max_sing.max(d);
        if d > self.eps {
            self.far_seen = true;
        }
    }
}

impl Observer for TailObserver<'_> {
    fn segment(&mut self, seg: &Segment<'_>) -> bool {
        if seg.s1 < self.tail_start {
            return true;
        }
        let scale = match seg.atlas.kind() {
            AtlasKind::Sphere => 0.25,
            _ => seg.atlas.fundamental_domain().width().max(seg.atlas.fundamental_domain().height()).recip(),
        };
        let n = ((seg.displacement() * scale / (0.5 * self.cell)).ceil() as usize).max(1);
        let a = seg.s0.max(self.tail_start);
        for i in 1..=n {
            let s = a + (seg.s1 - a) * i as f64 / n as f64;
            let p = seg.at(s);
            self.record(&p);
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSetReport {
    pub side: Side,
    pub label: LimitLabel,
    pub start: SurfacePoint,
    pub termination: Termination,
    pub budget_used: f64,
    pub tail_samples: u64,
    pub min_sing_distance: Option<f64>,
    pub max_tail_sing_distance: Option<f64>,
    pub terminal_sing_distance: f64,
    pub box_dimension: Option<f64>,
    pub fill_fraction: Option<f64>,
    pub section_hits: usize,
    pub cluster_spread: Option<f64>,
    pub section: Option<SectionStats>,
    pub hits_min_sing_distance: Option<f64>,
    pub gap_floor: f64,
    /// Section coordinates of the first and the tail hits, kept for orbit
    /// classification (not serialized).
    #[serde(skip)]
    pub first_hit: Option<f64>,
    #[serde(skip)]
    pub tail_hits: Vec<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Section coordinate normalized to the unit circle.
fn section_unit(section: &Section, atlas: &SurfaceAtlas, hit: &Hit) -> f64 {
    match section {
        Section::CircleU { .. } => {
            let d = atlas.fundamental_domain();
            (hit.coord - d.v0) / d.height()
        }
        Section::CircleV { .. } => {
            let d = atlas.fundamental_domain();
            (hit.coord - d.u0) / d.width()
        }
        Section::Ray { r0, r1, .. } => (hit.coord - r0) / (r1 - r0),
    }
}

/// Classifies the omega (or alpha) limit set of `x`.
pub fn classify_limit(spec: &FieldSpec, x: &SurfacePoint, side: Side, tun: &Tunables) -> Result<LimitSetReport> {
    let field = match side {
        Side::Omega => spec.clone(),
        Side::Alpha => spec.reversed(),
    };
    let section = field.default_section();
    let settings = IntegratorSettings {
        tol: tun.tol,
        t_budget: tun.budget,
        record_dt: f64::INFINITY,
        sections: section.iter().copied().collect(),
        ..IntegratorSettings::default()
    };
    let tail_start = (1.0 - tun.tail_fraction) * tun.budget;
    let mut obs = TailObserver::new(&field, tail_start, tun);
    let traj = integrate_observed(&field, x, &settings, Direction::Forward, &mut obs)?;
    let gap_floor = field.widest_gap().map_or(tun.gap_floor_default, |g| tun.gap_floor_factor * g);
    let mut rep = LimitSetReport {
        side,
        label: LimitLabel::Undecided,
        start: *x,
        termination: traj.termination,
        budget_used: traj.elapsed,
        tail_samples: obs.samples,
        min_sing_distance: finite(obs.min_sing),
        max_tail_sing_distance: (obs.samples > 0).then_some(obs.max_sing),
        terminal_sing_distance: field.sing_distance(&traj.final_point),
        box_dimension: None,
        fill_fraction: None,
        section_hits: 0,
        cluster_spread: None,
        section: None,
        hits_min_sing_distance: None,
        gap_floor,
        first_hit: None,
        tail_hits: Vec::new(),
    };
    match traj.termination {
        Termination::ClosedUp { .. } => {
            rep.label = LimitLabel::SelfClosed;
            return Ok(rep);
        }
        Termination::ConvergedToSing { .. } => {
            rep.label = LimitLabel::NowhereDenseSing;
            return Ok(rep);
        }
        _ => {}
    }
    let hits: Vec<Hit> = traj.crossings.first().map(|c| c.hits.clone()).unwrap_or_default();
    rep.section_hits = hits.len();
    if let Some(sec) = &section {
        rep.first_hit = hits.first().map(|h| section_unit(sec, &field.atlas, h));
        rep.tail_hits = hits
            .iter()
            .filter(|h| h.t.abs() >= tail_start)
            .map(|h| section_unit(sec, &field.atlas, h))
            .collect();
    }
    if obs.samples > 0 && !obs.far_seen {
        rep.label = LimitLabel::NowhereDenseSing;
        return Ok(rep);
    }
    let tail = &rep.tail_hits;
    if tail.len() >= 8 {
        let last = &tail[tail.len() - tail.len() / 4..];
        let spread = 1.0 - max_circular_gap(last);
        rep.cluster_spread = Some(spread);
        if spread < tun.cluster_tol {
            rep.label = if obs.min_sing <= tun.eps_sing { LimitLabel::LimitQuasiCircuit } else { LimitLabel::LimitCycle };
            return Ok(rep);
        }
    }
    let fill = obs.grid.best_disk_fill(tun.fill_radius);
    rep.fill_fraction = Some(fill);
    rep.box_dimension = box_dimension(&obs.grid).ok();
    if fill >= tun.fill_fraction && rep.box_dimension.is_some_and(|d| d >= tun.box_dim_min) {
        rep.label = LimitLabel::LocallyDenseQSet;
        return Ok(rep);
    }
    if tail.len() >= tun.min_section_hits.max(1000) {
        let stats = section_cantor_diagnostics(tail, tun.depth_limit)?;
        rep.section = Some(stats);
        if stats.persistent_gap >= gap_floor && stats.perfectness >= tun.perfect_min {
            let tail_pts: Vec<&Hit> = hits.iter().filter(|h| h.t.abs() >= tail_start).collect();
            let near = tail_pts.iter().map(|h| field.sing_distance(&h.point)).fold(f64::INFINITY, f64::min);
            rep.hits_min_sing_distance = finite(near);
            rep.label = if near <= tun.eps_sing {
                LimitLabel::QuasiQSetInSingP
            } else {
                LimitLabel::TransverselyCantorQSet
            };
            return Ok(rep);
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitClass {
    Singular,
    Periodic,
    ProperNonClosed,
    LocallyDense,
    Exceptional,
    Undecided,
}

/// Orbit class of `x` from its limit-set reports.
pub fn orbit_class(spec: &FieldSpec, x: &SurfacePoint, tun: &Tunables) -> Result<OrbitClass> {
    let v = spec.eval(x)?;
    if v[0].hypot(v[1]) <= 1e-12 {
        return Ok(OrbitClass::Singular);
    }
    let w = classify_limit(spec, x, Side::Omega, tun)?;
    Ok(match w.label {
        LimitLabel::SelfClosed => OrbitClass::Periodic,
        LimitLabel::LocallyDenseQSet => OrbitClass::LocallyDense,
        LimitLabel::NowhereDenseSing | LimitLabel::LimitCycle | LimitLabel::LimitQuasiCircuit => OrbitClass::ProperNonClosed,
        LimitLabel::TransverselyCantorQSet | LimitLabel::QuasiQSetInSingP => {
            // recurrent iff the start's section coordinate is accumulated
            let recurrent = w.first_hit.is_some_and(|c| {
                w.tail_hits.iter().any(|&t| wrap_diff(t - c, 1.0).abs() < tun.recurrence_tol)
            });
            if recurrent {
                OrbitClass::Exceptional
            } else {
                OrbitClass::ProperNonClosed
            }
        }
        LimitLabel::Undecided => OrbitClass::Undecided,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WanderingWitness {
    pub center: SurfacePoint,
    pub radius: f64,
    /// Last sampled time at which some image of the disk sample meets the disk.
    pub horizon: f64,
    pub samples: usize,
    pub t_check: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WanderingSearch {
    pub chart: u8,
    pub region: Rect,
    pub grid: usize,
    pub radius: f64,
    pub samples: usize,
    pub t_check: f64,
    pub dt: f64,
}

impl Default for WanderingSearch {
    fn default() -> Self {
        WanderingSearch {
            chart: 0,
            region: Rect::new(0.0, 1.0, 0.0, 1.0),
            grid: 32,
            radius: 0.02,
            samples: 1000,
            t_check: 200.0,
            dt: 0.01,
        }
    }
}

/// Tracks the last sampled time a trajectory is inside the disk.
struct DiskVisit<'a> {
    atlas: &'a SurfaceAtlas,
    center: SurfacePoint,
    radius: f64,
    dt: f64,
    next: f64,
    last_inside: f64,
    give_up_after: f64,
}

fn disk_offset(atlas: &SurfaceAtlas, c: &SurfacePoint, p: &SurfacePoint) -> f64 {
    let Ok(q) = atlas.transition(p, c.chart) else { return f64::INFINITY };
    let q = match atlas.kind() {
        AtlasKind::Sphere => q,
        _ => match atlas.normalize(&q) {
            Ok(q) => q,
            Err(_) => return f64::INFINITY,
        },
    };
    let (du, dv) = (q.u - c.u, q.v - c.v);
    let (du, dv) = match atlas.kind() {
        AtlasKind::Torus => (wrap_diff(du, 1.0), wrap_diff(dv, 1.0)),
        AtlasKind::ClosedAnnulus => (wrap_diff(du, atlas.fundamental_domain().width()), dv),
        AtlasKind::MappingTorus => (du, wrap_diff(dv, 1.0)),
        AtlasKind::Sphere => (du, dv),
    };
    du.hypot(dv)
}

impl Observer for DiskVisit<'_> {
    fn segment(&mut self, seg: &Segment<'_>) -> bool {
        while self.next <= seg.s1 {
            let p = seg.at(self.next);
            if disk_offset(self.atlas, &self.center, &p) < self.radius {
                self.last_inside = self.next;
                if self.last_inside > self.give_up_after {
                    return false;
                }
            }
            self.next += self.dt;
        }
        true
    }
}

fn last_visit(spec: &FieldSpec, start: &SurfacePoint, center: &SurfacePoint, radius: f64, search: &WanderingSearch) -> Result<f64> {
    let settings = IntegratorSettings {
        t_budget: search.t_check,
        tol: 1e-9,
        record_dt: f64::INFINITY,
        detect_closure: false,
        ..IntegratorSettings::default()
    };
    let mut obs = DiskVisit {
        atlas: &spec.atlas,
        center: *center,
        radius,
        dt: search.dt,
        next: 0.0,
        last_inside: 0.0,
        give_up_after: 0.5 * search.t_check,
    };
    let tr = integrate_observed(spec, start, &settings, Direction::Forward, &mut obs)?;
    if let Termination::ConvergedToSing { point } = tr.termination {
        // the orbit rests at `point` for the remaining time
        if disk_offset(&spec.atlas, center, &point) < radius {
            return Ok(search.t_check);
        }
    }
    Ok(obs.last_inside)
}

/// Searches a grid of candidate disks for a wandering domain: a disk whose
/// sampled forward images stay outside it for all checked times after a
/// horizon at most half the checking time.
pub fn detect_wandering_domain(spec: &FieldSpec, search: &WanderingSearch) -> Result<Option<WanderingWitness>> {
    let r = search.region;
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for j in 0..search.grid {
        for i in 0..search.grid {
            let c = SurfacePoint::new(
                search.chart,
                r.u0 + (i as f64 + 0.5) * r.width() / search.grid as f64,
                r.v0 + (j as f64 + 0.5) * r.height() / search.grid as f64,
            );
            if !spec.atlas.in_domain(&c) && spec.atlas.normalize(&c).is_err() {
                continue;
            }
            if spec.sing_distance(&c) <= 2.0 * search.radius {
                continue;
            }
            if last_visit(spec, &c, &c, search.radius, search)? > 0.5 * search.t_check {
                continue;
            }
            let mut horizon: f64 = 0.0;
            let mut ok = true;
            for k in 0..search.samples {
                let rho = search.radius * ((k as f64 + 0.5) / search.samples as f64).sqrt();
                let th = k as f64 * golden_angle;
                let p = SurfacePoint::new(c.chart, c.u + rho * th.cos(), c.v + rho * th.sin());
                let n = last_visit(spec, &p, &c, search.radius, search)?;
                horizon = horizon.max(n);
                if horizon > 0.5 * search.t_check {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(Some(WanderingWitness {
                    center: c,
                    radius: search.radius,
                    horizon,
                    samples: search.samples,
                    t_check: search.t_check,
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_map::golden_rotation;
    use crate::field::{hamiltonian_field, HamiltonianId};
    use crate::surgery::{apply_surgery, StripPlacement, SurgerySpec};

    fn quick() -> Tunables {
        Tunables { budget: 2000.0, ..Tunables::default() }
    }

    #[test]
    fn box_dimension_of_full_and_line() {
        let mut g = OccupancyGrid::new(512, true, true);
        for j in 0..512 {
            for i in 0..512 {
                g.add((i as f64 + 0.5) / 512.0, (j as f64 + 0.5) / 512.0);
            }
        }
        assert!((box_dimension(&g).unwrap() - 2.0).abs() < 1e-9);
        let mut l = OccupancyGrid::new(2048, true, true);
        for i in 0..20480 {
            l.add(i as f64 / 20480.0, 0.3);
        }
        assert!((box_dimension(&l).unwrap() - 1.0).abs() < 0.1);
        let sparse = OccupancyGrid::new(512, true, true);
        assert!(matches!(box_dimension(&sparse), Err(FlowError::InsufficientData(_))));
    }

    #[test]
    fn disk_fill_full_grid() {
        let mut g = OccupancyGrid::new(128, true, true);
        for j in 0..128 {
            for i in 0..128 {
                g.add((i as f64 + 0.5) / 128.0, (j as f64 + 0.5) / 128.0);
            }
        }
        assert_eq!(g.best_disk_fill(0.1), 1.0);
    }

    #[test]
    fn rotation_hits_gap_shrinks() {
        let rho = golden_rotation();
        let coords: Vec<f64> = (0..4000).map(|n| (0.1 + n as f64 * rho).rem_euclid(1.0)).collect();
        let s = section_cantor_diagnostics(&coords, 6).unwrap();
        assert!(s.persistent_gap < 1e-3);
        assert!(s.max_gap_full <= s.max_gap_quarter);
    }

    #[test]
    fn denjoy_hits_keep_the_widest_gap() {
        let g = crate::circle_map::CircleMap::denjoy(golden_rotation(), 0.1, 3000).unwrap();
        let d = g.as_denjoy().unwrap();
        let i0 = d.gap(0);
        let mut x = i0.theta + 0.3 * i0.len;
        let mut coords = Vec::new();
        for _ in 0..2000 {
            x = g.apply(x);
            coords.push(x);
        }
        let s = section_cantor_diagnostics(&coords, 6).unwrap();
        assert!(s.persistent_gap >= 0.1 - 1e-12, "{s:?}");
        assert!(s.perfectness > 0.5);
    }

    #[test]
    fn single_point_cluster_not_perfect() {
        let coords: Vec<f64> = (0..1000).map(|n| 0.5 + 1e-6 / (n + 1) as f64).collect();
        let s = section_cantor_diagnostics(&coords, 6).unwrap();
        assert!(s.perfectness < 0.1);
        assert!(matches!(section_cantor_diagnostics(&coords[..10], 6), Err(FlowError::InsufficientData(_))));
    }

    #[test]
    fn limit_cycle_both_sides() {
        let f = FieldSpec::single_limit_cycle_torus();
        let x = SurfacePoint::at(0.3, 0.5);
        for side in [Side::Omega, Side::Alpha] {
            let r = classify_limit(&f, &x, side, &quick()).unwrap();
            assert_eq!(r.label, LimitLabel::LimitCycle, "{side:?} {r:?}");
        }
        assert_eq!(orbit_class(&f, &SurfacePoint::at(0.3, 0.0), &quick()).unwrap(), OrbitClass::Periodic);
    }

    #[test]
    fn separatrix_goes_to_saddle() {
        let f = hamiltonian_field(HamiltonianId::TorusSinSin, &SurfaceAtlas::torus()).unwrap();
        let r = classify_limit(&f, &SurfacePoint::at(0.25, 0.0), Side::Omega, &quick()).unwrap();
        assert_eq!(r.label, LimitLabel::NowhereDenseSing);
        assert!(r.terminal_sing_distance < 1e-3);
    }

    #[test]
    fn minimal_torus_is_locally_dense() {
        let f = FieldSpec::linear_torus(golden_rotation());
        let r = classify_limit(&f, &SurfacePoint::at(0.1, 0.2), Side::Omega, &Tunables::default()).unwrap();
        assert_eq!(r.label, LimitLabel::LocallyDenseQSet, "{r:?}");
        assert!((r.box_dimension.unwrap() - 2.0).abs() < 0.1);
    }

    #[test]
    fn alpha_equals_omega_of_reversed() {
        let f = FieldSpec::morse_smale_sphere();
        let x = SurfacePoint::new(0, 0.3, 0.1);
        let a = classify_limit(&f, &x, Side::Alpha, &quick()).unwrap();
        let b = classify_limit(&f.reversed(), &x, Side::Omega, &quick()).unwrap();
        assert_eq!(a.label, b.label);
        assert_eq!(a.label, LimitLabel::NowhereDenseSing);
        let w = classify_limit(&f, &x, Side::Omega, &quick()).unwrap();
        assert_eq!(w.label, LimitLabel::LimitCycle);
    }

    #[test]
    fn wandering_on_strip_not_on_minimal() {
        let base = FieldSpec::trivial_annulus();
        let placement = StripPlacement::Affine { chart: 0, origin: [0.0, 0.0], scale: [1.0, 1.0] };
        let f = apply_surgery(&base, SurgerySpec::cantor_strip(placement, 4).unwrap()).unwrap();
        let search = WanderingSearch {
            region: Rect::new(-0.5, 1.5, -0.5, 1.5),
            samples: 200,
            t_check: 50.0,
            ..WanderingSearch::default()
        };
        let w = detect_wandering_domain(&f, &search).unwrap().expect("witness");
        assert!(w.horizon <= 25.0);
        let g = FieldSpec::linear_torus(golden_rotation());
        let s2 = WanderingSearch { grid: 4, samples: 50, t_check: 50.0, ..WanderingSearch::default() };
        assert!(detect_wandering_domain(&g, &s2).unwrap().is_none());
    }
}
