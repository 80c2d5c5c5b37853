//! Second implementations used as oracles by the integration tests. Written
//! from the model definitions, not from the library code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

pub fn lambertian(phi_half: f64) -> f64 {
    -(2f64.ln()) / phi_half.cos().ln()
}

/// Direct path gain, evaluated through angles rather than cosines.
pub fn los_oracle(ap: [f64; 3], user: [f64; 3], phi_half: f64, fov: f64, area: f64) -> f64 {
    let dx = user[0] - ap[0];
    let dy = user[1] - ap[1];
    let h = ap[2] - user[2];
    let r = dx.hypot(dy);
    if h <= 0.0 {
        return 0.0;
    }
    let angle = r.atan2(h);
    if angle > fov {
        return 0.0;
    }
    let d2 = r * r + h * h;
    let m = lambertian(phi_half);
    let c = angle.cos();
    (m + 1.0) * area / (2.0 * PI * d2) * (m * c.ln()).exp() * c
}

fn rot_x(a: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]]
}

fn rot_z(a: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Mirror normal obtained by rotating the reference axis `+y` by `roll`
/// about `x`, then by `-yaw` about `z`.
pub fn mirror_normal(yaw: f64, roll: f64) -> [f64; 3] {
    rot_z(-yaw, rot_x(roll, [0.0, 1.0, 0.0]))
}

/// Cosine between the rotated normal and the unit vector from `target` to
/// the mirror.
pub fn orientation_oracle(mirror: [f64; 3], yaw: f64, roll: f64, target: [f64; 3]) -> f64 {
    let n = mirror_normal(yaw, roll);
    let v = [mirror[0] - target[0], mirror[1] - target[1], mirror[2] - target[2]];
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n[0] * v[0] + n[1] * v[1] + n[2] * v[2]) / len
}

pub struct IrsParams {
    pub phi_half: f64,
    pub fov: f64,
    pub area: f64,
    pub mirror_area: f64,
    pub reflectivity: f64,
}

/// Reflected path gain, term by term.
pub fn irs_oracle(ap: [f64; 3], mirror: [f64; 3], yaw: f64, roll: f64, user: [f64; 3], p: &IrsParams) -> f64 {
    let dist =
        |a: [f64; 3], b: [f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let d_ml = dist(ap, mirror);
    let d_km = dist(mirror, user);
    // irradiance angle at the AP: angle between AP axis (-z) and the ray to the mirror
    let cos_irr_ap = (ap[2] - mirror[2]) / d_ml;
    let cos_inc_ap = orientation_oracle(mirror, yaw, roll, ap);
    let cos_irr_mirror = (mirror[2] - user[2]) / d_km;
    let cos_inc_user = orientation_oracle(mirror, yaw, roll, user);
    if cos_inc_user <= 0.0 || cos_inc_user.acos() > p.fov {
        return 0.0;
    }
    if cos_irr_ap < 0.0 || cos_inc_ap < 0.0 || cos_irr_mirror < 0.0 {
        return 0.0;
    }
    let m = lambertian(p.phi_half);
    let numerator = (m + 1.0) * p.reflectivity * p.area * p.mirror_area;
    let angular = cos_irr_ap.powf(m) * cos_inc_ap * cos_irr_mirror * cos_inc_user;
    let spread = 2.0 * PI * PI * d_ml.powi(2) * d_km.powi(2);
    numerator * angular / spread
}

pub fn sinr_oracle(
    los: f64,
    visible: bool,
    irs: &[f64],
    responsivity: f64,
    power: f64,
    noise: f64,
    interference: f64,
) -> f64 {
    let indicator = if visible { 1.0 } else { 0.0 };
    let mut h = indicator * los;
    for g in irs {
        h += g;
    }
    responsivity.powi(2) * power.powi(2) * h.powi(2) / (interference + noise)
}

pub fn rate_oracle(gamma: f64, bandwidth: f64, users: usize) -> f64 {
    bandwidth / users as f64 * (1.0 + std::f64::consts::E * gamma / (2.0 * PI)).ln() / 2f64.ln()
}

/// Exact LoS blockage: does the straight AP-to-user ray pass through any
/// cylinder? The ray descends monotonically, so inside each cylinder's
/// footprint interval the lowest point is at the far end.
pub fn ray_blocked_oracle(ap: [f64; 3], user: [f64; 3], cylinders: &[([f64; 2], f64, f64)]) -> bool {
    cylinders.iter().any(|&(c, diameter, height)| {
        let r = diameter / 2.0;
        let (dx, dy) = (user[0] - ap[0], user[1] - ap[1]);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return (ap[0] - c[0]).hypot(ap[1] - c[1]) <= r && user[2] <= height;
        }
        let t_close = ((c[0] - ap[0]) * dx + (c[1] - ap[1]) * dy) / len2;
        let px = ap[0] + t_close * dx - c[0];
        let py = ap[1] + t_close * dy - c[1];
        let miss2 = px * px + py * py;
        if miss2 > r * r {
            return false;
        }
        let half = ((r * r - miss2) / len2).sqrt();
        let (lo, hi) = ((t_close - half).max(0.0), (t_close + half).min(1.0));
        if lo > hi {
            return false;
        }
        let z_low = ap[2] + hi * (user[2] - ap[2]);
        z_low <= height
    })
}

/// Segment blockage by sampling points every `step` meters.
pub fn segment_blocked_sampled(p0: [f64; 3], p1: [f64; 3], cylinders: &[([f64; 2], f64, f64)], step: f64) -> bool {
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2) + (p1[2] - p0[2]).powi(2)).sqrt();
    let n = (len / step).ceil().max(1.0) as usize;
    (0..=n).any(|i| {
        let t = i as f64 / n as f64;
        let p = [
            p0[0] + t * (p1[0] - p0[0]),
            p0[1] + t * (p1[1] - p0[1]),
            p0[2] + t * (p1[2] - p0[2]),
        ];
        cylinders
            .iter()
            .any(|&(c, d, h)| (p[0] - c[0]).hypot(p[1] - c[1]) <= d / 2.0 && p[2] >= 0.0 && p[2] <= h)
    })
}

/// RWP stationary density on `[-a/2, a/2]^2`.
pub fn rwp_pdf_oracle(x: f64, y: f64, a: f64) -> f64 {
    let q = a * a / 4.0;
    36.0 / a.powi(6) * (x * x - q) * (y * y - q)
}
pub mod scenarios;
