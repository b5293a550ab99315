//! Shipped road surfaces used by tests, the CLI examples, and the
//! simulation scenarios.

use crate::road::RoadSurface;

/// 30% off-camber bank angle: outside edge of the turn sits lower. The
/// shipped arcs turn left, so a positive bank raises the inside (left) edge.
pub const OFF_CAMBER_BANK: f64 = 0.291_456_794_477_867_2; // atan(0.3)

pub fn plane_road() -> RoadSurface {
    RoadSurface::plane(200.0, 4.0)
}

pub fn crest_road() -> RoadSurface {
    RoadSurface::crest(100.0, 60.0, 4.0)
}

/// Flat 50 m radius arc spanning a half turn.
pub fn flat_arc() -> RoadSurface {
    RoadSurface::banked_arc(50.0, 0.0, core::f64::consts::PI, 4.0)
}

/// Steady 50 m arc with a 30% off-camber bank, no entry straight.
pub fn off_camber_arc() -> RoadSurface {
    RoadSurface::banked_arc(50.0, OFF_CAMBER_BANK, core::f64::consts::PI, 4.0)
}

/// C2 smoothstep ramp: 0 at t=0, 1 at t=1.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn ramp(s: f64, start: f64, len: f64) -> f64 {
    smoothstep((s - start) / len)
}

/// The closed-loop test road: entry straight, u-turn of 50 m radius with a
/// 30% off-camber bank ramping in and out, exit straight.
///
/// Layout (in centerline arc length):
///   0..40    straight approach
///   40..60   curvature and bank ramp in
///   60..220  steady off-camber arc
///   220..240 ramp out
///   240..280 exit straight
pub fn off_camber_uturn() -> RoadSurface {
    let total = 280.0;
    let n = 281;
    let mut knots = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    let mut bank = Vec::with_capacity(n);
    let mut grade = Vec::with_capacity(n);
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        let shape = ramp(s, 40.0, 20.0) - ramp(s, 220.0, 20.0);
        knots.push(s);
        kappa.push(shape / 50.0);
        bank.push(shape * OFF_CAMBER_BANK);
        grade.push(0.0);
    }
    RoadSurface::ribbon(knots, kappa, bank, grade, 4.0).expect("valid preset road")
}

/// General-exercise ribbon: varying curvature, bank and grade. Geometry
/// torture test, not a driving scenario.
pub fn ribbon_wave() -> RoadSurface {
    let total = 120.0;
    let n = 121;
    let mut knots = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    let mut bank = Vec::with_capacity(n);
    let mut grade = Vec::with_capacity(n);
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        knots.push(s);
        kappa.push(0.012 * (0.09 * s).sin());
        bank.push(0.18 * (0.05 * s).sin());
        grade.push(0.06 * (0.04 * s + 1.0).cos());
    }
    RoadSurface::ribbon(knots, kappa, bank, grade, 4.0).expect("valid preset road")
}

/// Every shipped surface with a short label, for sweep-style tests.
pub fn all_shipped() -> Vec<(&'static str, RoadSurface)> {
    vec![
        ("plane", plane_road()),
        ("crest", crest_road()),
        ("flat_arc", flat_arc()),
        ("off_camber_arc", off_camber_arc()),
        ("off_camber_uturn", off_camber_uturn()),
        ("ribbon_wave", ribbon_wave()),
    ]
}
