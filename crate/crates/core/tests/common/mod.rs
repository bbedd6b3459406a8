//! Reference implementations used as test oracles. Each one takes a different
//! route to the answer than the library code it checks.

#![allow(dead_code)]

use nalgebra::{DMatrix, Point2, Vector2};
use spikewall_core::harness::RoomSpec;

/// de Boor's algorithm: repeated affine blending of control points.
pub fn de_boor(knots: &[f64], ctrl: &[Point2<f64>], degree: usize, t: f64) -> Point2<f64> {
    let n = ctrl.len() - 1;
    let span = if t >= knots[n + 1] {
        n
    } else {
        (degree..=n).rfind(|&s| knots[s] <= t).unwrap()
    };
    let mut d: Vec<Vector2<f64>> = (0..=degree).map(|j| ctrl[span - degree + j].coords).collect();
    for r in 1..=degree {
        for j in (r..=degree).rev() {
            let i = span - degree + j;
            let den = knots[i + degree + 1 - r] - knots[i];
            let alpha = if den > 0.0 { (t - knots[i]) / den } else { 0.0 };
            d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
        }
    }
    Point2::from(d[degree])
}

/// Structured doubling algorithm for `P = A'PA - A'PB(R + B'PB)^-1 B'PA + Q`.
pub fn dare_sda(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r.clone().try_inverse().expect("R invertible") * b.transpose();
    let mut hk = q.clone();
    for _ in 0..100 {
        let w = (&eye + &gk * &hk).try_inverse().expect("I + GH invertible");
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let change = (&h_next - &hk).abs().max();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if change <= 1e-14 * hk.abs().max() {
            break;
        }
    }
    (&hk + hk.transpose()) * 0.5
}

fn occupied(room: &RoomSpec, p: &Point2<f64>) -> bool {
    let h = room.side / 2.0;
    if p.x.abs() >= h || p.y.abs() >= h {
        return true;
    }
    room.cylinders.iter().any(|c| {
        let dx = p.x - c.center[0];
        let dy = p.y - c.center[1];
        dx * dx + dy * dy <= c.radius * c.radius
    })
}

/// Marches along a ray in `step` increments until the first occupied sample.
pub fn ray_march(room: &RoomSpec, origin: &Point2<f64>, heading: f64, step: f64, max_range: f64) -> Option<f64> {
    let dir = Vector2::new(heading.cos(), heading.sin());
    let mut s = 0.0;
    while s <= max_range + step {
        if occupied(room, &(origin + dir * s)) {
            return (s <= max_range).then_some(s);
        }
        s += step;
    }
    None
}

/// Closed-form LIF firing rate for a constant supra-threshold current.
pub fn lif_rate(tau_ref: f64, tau_d: f64, r_m: f64, v_th: f64, current: f64) -> f64 {
    let rj = r_m * current;
    1.0 / (tau_ref + tau_d * (rj / (rj - v_th)).ln())
}

/// Slack on window-to-window growth of the PES squared error once spike
/// noise dominates the residual (about 3e-3 RMS).
pub const PES_NOISE_FLOOR: f64 = 1e-5;

/// Mean squared error in consecutive windows of `len` samples.
pub fn windowed_mse(errors: &[f64], len: usize) -> Vec<f64> {
    errors
        .chunks_exact(len)
        .map(|w| w.iter().map(|e| e * e).sum::<f64>() / len as f64)
        .collect()
}
