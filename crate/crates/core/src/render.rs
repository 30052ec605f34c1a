//! Deterministic SVG phase portraits.

use std::fmt::Write as _;

use crate::atlas::{AtlasKind, Rect, SurfacePoint};
use crate::config::RenderConfig;
use crate::error::Result;
use crate::field::{BaseField, FieldSpec};
use crate::hamiltonian::{singular_inventory, HamTunables, SingularKind};
use crate::integrator::{integrate, Direction, IntegratorSettings};
use crate::surgery::SurgeryKind;

/// One drawing panel: a chart region mapped onto a pixel square.
struct Panel {
    chart: u8,
    region: Rect,
    x0: f64,
    w: f64,
    h: f64,
    /// Only points with chart radius below this are drawn (sphere disks).
    disk: Option<f64>,
}

impl Panel {
    fn px(&self, u: f64, v: f64) -> (f64, f64) {
        let x = self.x0 + (u - self.region.u0) / self.region.width() * self.w;
        let y = self.h - (v - self.region.v0) / self.region.height() * self.h;
        (x, y)
    }

    /// Chart coordinates of `p` in this panel, if drawn here.
    fn local(&self, spec: &FieldSpec, p: &SurfacePoint) -> Option<(f64, f64)> {
        let q = spec.atlas.transition(p, self.chart).ok()?;
        if let Some(r) = self.disk {
            if q.u.hypot(q.v) > r {
                return None;
            }
        }
        Some((q.u, q.v))
    }
}

fn panels(spec: &FieldSpec, width: f64) -> Vec<Panel> {
    match spec.atlas.kind() {
        AtlasKind::Sphere => {
            let w = 0.5 * width;
            let r = Rect::new(-1.05, 1.05, -1.05, 1.05);
            vec![
                Panel { chart: 0, region: r, x0: 0.0, w, h: w, disk: Some(1.0) },
                Panel { chart: 1, region: r, x0: w, w, h: w, disk: Some(1.0) },
            ]
        }
        _ => {
            let d = spec.atlas.fundamental_domain();
            let h = width * d.height() / d.width();
            vec![Panel { chart: 0, region: d, x0: 0.0, w: width, h, disk: None }]
        }
    }
}

fn path_data(pts: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let _ = write!(s, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, x, y);
    }
    s
}

/// Renders streamlines from a fixed seed grid, singular points by kind and
/// surgery zero sets.
pub fn render_phase_portrait(spec: &FieldSpec, cfg: &RenderConfig) -> Result<String> {
    let width = cfg.width as f64;
    let panels = panels(spec, width);
    let height = panels.iter().map(|p| p.h).fold(0.0, f64::max);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = cfg.width,
        h = height.round() as u32
    );
    let _ = writeln!(svg, "<title>{}</title>", spec.name());
    for p in &panels {
        match p.disk {
            Some(r) => {
                let (cx, cy) = p.px(0.0, 0.0);
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"white\" stroke=\"black\"/>",
                    r / p.region.width() * p.w
                );
            }
            None => {
                let _ = writeln!(svg, "<rect x=\"{:.2}\" y=\"0\" width=\"{:.2}\" height=\"{:.2}\" fill=\"white\" stroke=\"black\"/>", p.x0, p.w, p.h);
            }
        }
    }

    let settings = IntegratorSettings {
        t_budget: cfg.streamline_time,
        tol: 1e-8,
        record_dt: 0.01,
        detect_closure: false,
        ..IntegratorSettings::default()
    };
    let _ = writeln!(svg, "<g fill=\"none\" stroke=\"#3060a0\" stroke-width=\"0.8\">");
    let n = cfg.seeds_per_side;
    for panel in &panels {
        for j in 0..n {
            for i in 0..n {
                let u = panel.region.u0 + (i as f64 + 0.5) / n as f64 * panel.region.width();
                let v = panel.region.v0 + (j as f64 + 0.5) / n as f64 * panel.region.height();
                let seed = SurfacePoint::new(panel.chart, u, v);
                if panel.disk.is_some_and(|r| u.hypot(v) > r) || spec.atlas.normalize(&seed).is_err() {
                    continue;
                }
                for dir in [Direction::Forward, Direction::Backward] {
                    let Ok(tr) = integrate(spec, &seed, &settings, dir) else { continue };
                    let mut pieces: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
                    let mut last: Option<(f64, f64)> = None;
                    for (_, p) in &tr.samples {
                        let Some((lu, lv)) = panel.local(spec, p) else {
                            pieces.push(Vec::new());
                            last = None;
                            continue;
                        };
                        // break at identifications of the fundamental domain
                        if let Some((a, b)) = last {
                            if (lu - a).abs() > 0.5 * panel.region.width() || (lv - b).abs() > 0.5 * panel.region.height() {
                                pieces.push(Vec::new());
                            }
                        }
                        last = Some((lu, lv));
                        pieces.last_mut().expect("non-empty").push(panel.px(lu, lv));
                    }
                    for piece in pieces.iter().filter(|p| p.len() > 1) {
                        let _ = writeln!(svg, "<path d=\"{}\"/>", path_data(piece));
                    }
                }
            }
        }
    }
    svg.push_str("</g>\n");

    // zero sets of surgeries and non-isolated base zeros
    let _ = writeln!(svg, "<g fill=\"#c03030\" stroke=\"#c03030\" stroke-width=\"1\">");
    if spec.base == BaseField::ReebSingularCircleTorus {
        for panel in &panels {
            let (a, y) = panel.px(panel.region.u0, 0.0);
            let (b, _) = panel.px(panel.region.u1, 0.0);
            let _ = writeln!(svg, "<line x1=\"{a:.2}\" y1=\"{y:.2}\" x2=\"{b:.2}\" y2=\"{y:.2}\"/>");
        }
    }
    for s in &spec.surgeries {
        match &s.kind {
            SurgeryKind::CantorStrip { .. } => {
                for (chart, poly) in s.zero_set_polygons() {
                    for panel in panels.iter().filter(|p| p.chart == chart) {
                        let mut pts: Vec<(f64, f64)> = poly.iter().map(|&(u, v)| panel.px(u, v)).collect();
                        pts.push(pts[0]);
                        let _ = writeln!(svg, "<path d=\"{} Z\"/>", path_data(&pts));
                    }
                }
            }
            SurgeryKind::SingularizeSection { section, .. } => {
                if let Some(g) = spec.atlas.monodromy().and_then(|m| m.as_denjoy()) {
                    for panel in &panels {
                        for (a, b) in g.cantor_arcs() {
                            let (x, ya) = panel.px(*section, a);
                            let (_, yb) = panel.px(*section, b);
                            if (ya - yb).abs() >= 0.5 {
                                let _ = writeln!(svg, "<line x1=\"{x:.2}\" y1=\"{ya:.2}\" x2=\"{x:.2}\" y2=\"{yb:.2}\"/>");
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    svg.push_str("</g>\n");

    if cfg.mark_singular_points && spec.sing_is_finite() {
        let tun = HamTunables { grid: 128, ..HamTunables::default() };
        let marks: Vec<(SurfacePoint, Option<SingularKind>)> = match singular_inventory(spec, &tun) {
            Ok(inv) => inv.points.iter().map(|p| (p.point, Some(p.kind))).collect(),
            Err(_) => spec.declared_sing_points().into_iter().map(|p| (p, None)).collect(),
        };
        let _ = writeln!(svg, "<g stroke-width=\"1.5\">");
        for (p, kind) in marks {
            for panel in &panels {
                let Some((u, v)) = panel.local(spec, &p) else { continue };
                let (x, y) = panel.px(u, v);
                let _ = match kind {
                    Some(SingularKind::Center) => writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"none\" stroke=\"#208040\"/>"),
                    Some(SingularKind::MultiSaddle { .. }) => writeln!(
                        svg,
                        "<path d=\"M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2}\" stroke=\"#c03030\"/>",
                        x - 4.0,
                        y - 4.0,
                        x + 4.0,
                        y + 4.0,
                        x - 4.0,
                        y + 4.0,
                        x + 4.0,
                        y - 4.0
                    ),
                    _ => writeln!(svg, "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"#806000\"/>", x - 4.0, y - 4.0),
                };
            }
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
