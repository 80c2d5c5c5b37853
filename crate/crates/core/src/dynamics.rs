//! User mobility (random waypoint) and static cylindrical blockages placed by
//! a Matern type-II hard-core process.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;
use crate::scene::RoomConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct UserState<T> {
    pub position: Vec3<T>,
    /// Speed on the current leg, m/s.
    pub velocity: T,
    pub waypoint: Vec3<T>,
    /// Seconds left at the current waypoint before a new leg starts.
    pub pause_remaining: T,
    /// Minimum rate requirement, bits/s.
    pub min_rate: T,
}

impl<T: Scalar> UserState<T> {
    /// A user parked at `position` with no pending leg.
    pub fn stationary(position: Vec3<T>, min_rate: T) -> Self {
        UserState {
            position,
            velocity: T::zero(),
            waypoint: position,
            pause_remaining: T::zero(),
            min_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct MobilityConfig<T> {
    pub v_min: T,
    pub v_max: T,
    /// Hold time at each waypoint, seconds.
    #[serde(default)]
    pub pause: T,
}

impl<T: Scalar> Default for MobilityConfig<T> {
    fn default() -> Self {
        MobilityConfig {
            v_min: T::zero(),
            v_max: T::lit(2.0),
            pause: T::zero(),
        }
    }
}

impl<T: Scalar> MobilityConfig<T> {
    pub fn fixed_speed(v: T) -> Self {
        MobilityConfig {
            v_min: v,
            v_max: v,
            pause: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min >= T::zero() && self.v_max >= self.v_min && self.v_max.is_finite()) {
            return Err(Error::config("mobility", "need 0 <= v_min <= v_max"));
        }
        if !(self.pause >= T::zero()) {
            return Err(Error::config("mobility.pause", "must be nonnegative"));
        }
        Ok(())
    }

    fn draw_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        self.v_min + (self.v_max - self.v_min) * T::lit(u)
    }
}

fn uniform_waypoint<T: Scalar, R: Rng + ?Sized>(room: &RoomConfig<T>, z: T, rng: &mut R) -> Vec3<T> {
    let ux: f64 = rng.random();
    let uy: f64 = rng.random();
    Vec3::new(room.width_x * T::lit(ux), room.depth_y * T::lit(uy), z)
}

/// Advances one user by `dt` seconds of random-waypoint motion.
///
/// Arrival snaps to the waypoint exactly; the remaining time is spent in the
/// pause and then on the next leg.
pub fn rwp_step<T: Scalar, R: Rng + ?Sized>(
    user: &UserState<T>,
    dt: T,
    room: &RoomConfig<T>,
    mobility: &MobilityConfig<T>,
    rng: &mut R,
) -> UserState<T> {
    let mut u = user.clone();
    let mut left = dt;
    // bounded: each pass either consumes time or starts a new leg
    for _ in 0..10_000 {
        if left <= T::zero() {
            break;
        }
        if u.pause_remaining > T::zero() {
            if u.pause_remaining.is_infinite() {
                break;
            }
            let hold = u.pause_remaining.min(left);
            u.pause_remaining = u.pause_remaining - hold;
            left = left - hold;
            if u.pause_remaining > T::zero() {
                break;
            }
            u.waypoint = uniform_waypoint(room, u.position.z, rng);
            u.velocity = mobility.draw_speed(rng);
            continue;
        }
        let to_go = u.waypoint - u.position;
        let dist = to_go.norm();
        if dist == T::zero() {
            // at the waypoint: start the pause, or a new leg directly
            if mobility.pause > T::zero() && u.velocity > T::zero() {
                u.pause_remaining = mobility.pause;
                u.velocity = T::zero();
            } else {
                u.waypoint = uniform_waypoint(room, u.position.z, rng);
                u.velocity = mobility.draw_speed(rng);
                if u.velocity <= T::zero() {
                    break;
                }
            }
            continue;
        }
        if u.velocity <= T::zero() {
            break;
        }
        let reach = u.velocity * left;
        if reach >= dist {
            u.position = u.waypoint;
            left = left - dist / u.velocity;
        } else {
            u.position = u.position + to_go * (reach / dist);
            left = T::zero();
        }
    }
    u.position.x = u.position.x.max(T::zero()).min(room.width_x);
    u.position.y = u.position.y.max(T::zero()).min(room.depth_y);
    u
}

/// Approximate stationary density of random-waypoint positions on the square
/// `[-a/2, a/2]^2`.
pub fn rwp_stationary_pdf<T: Scalar>(x: T, y: T, a: T) -> Result<T> {
    let h = a / T::lit(2.0);
    if !(a > T::zero()) || x.abs() > h || y.abs() > h {
        return Err(Error::Domain(format!("({x}, {y}) outside the square of side {a}")));
    }
    let q = a * a / T::lit(4.0);
    Ok(T::lit(36.0) / a.powi(6) * (x * x - q) * (y * y - q))
}

/// Draws a floor position from the stationary density. The density factors
/// into a Beta(2, 2) law per axis, sampled as the median of three uniforms.
pub fn sample_stationary_position<T: Scalar, R: Rng + ?Sized>(room: &RoomConfig<T>, rng: &mut R) -> Vec3<T> {
    let mut beta22 = || {
        let mut u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        u.sort_by(f64::total_cmp);
        u[1]
    };
    let (bx, by) = (beta22(), beta22());
    Vec3::new(
        room.width_x * T::lit(bx),
        room.depth_y * T::lit(by),
        room.receiver_height,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BlockageCylinder<T> {
    pub center_xy: [T; 2],
    pub diameter: T,
    /// Height above the floor.
    pub height: T,
}

impl<T: Scalar> BlockageCylinder<T> {
    fn radius(&self) -> T {
        self.diameter / T::lit(2.0)
    }

    fn contains_xy(&self, x: T, y: T) -> bool {
        let dx = x - self.center_xy[0];
        let dy = y - self.center_xy[1];
        dx * dx + dy * dy <= self.radius() * self.radius()
    }
}

/// Candidate point of the Matern process: floor position plus mark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkedPoint<T> {
    pub x: T,
    pub y: T,
    pub mark: T,
}

/// Matern type-II thinning: a candidate survives iff no other candidate
/// within `hard_core_radius` carries a smaller mark. Returns surviving indices
/// in input order.
pub fn mhcp_thin<T: Scalar>(candidates: &[MarkedPoint<T>], hard_core_radius: T) -> Vec<usize> {
    let r2 = hard_core_radius * hard_core_radius;
    (0..candidates.len())
        .filter(|&i| {
            let p = candidates[i];
            !candidates.iter().enumerate().any(|(j, q)| {
                let dx = p.x - q.x;
                let dy = p.y - q.y;
                j != i && dx * dx + dy * dy < r2 && (q.mark < p.mark || (q.mark == p.mark && j < i))
            })
        })
        .collect()
}

/// Blockage geometry shared by all placed cylinders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BlockageShape<T> {
    pub diameter: T,
    pub height: T,
    pub hard_core_radius: T,
}

impl<T: Scalar> Default for BlockageShape<T> {
    fn default() -> Self {
        BlockageShape {
            diameter: T::lit(0.4),
            height: T::lit(1.8),
            hard_core_radius: T::lit(0.6),
        }
    }
}

/// Places cylinders at the survivors of a Matern type-II process whose
/// parent Poisson process has `intensity` points per square meter.
pub fn place_blockages_mhcp<T: Scalar, R: Rng + ?Sized>(
    room: &RoomConfig<T>,
    intensity: T,
    shape: &BlockageShape<T>,
    rng: &mut R,
) -> Result<Vec<BlockageCylinder<T>>> {
    if !(intensity >= T::zero() && intensity.is_finite()) {
        return Err(Error::Domain(format!("intensity {intensity} must be nonnegative")));
    }
    let mean = (intensity * room.floor_area()).as_f64();
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let n = Poisson::new(mean)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng) as usize;
    Ok(realize(room, n, shape, rng))
}

fn realize<T: Scalar, R: Rng + ?Sized>(
    room: &RoomConfig<T>,
    candidates: usize,
    shape: &BlockageShape<T>,
    rng: &mut R,
) -> Vec<BlockageCylinder<T>> {
    let pts: Vec<MarkedPoint<T>> = (0..candidates)
        .map(|_| {
            let (ux, uy, m): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            MarkedPoint {
                x: room.width_x * T::lit(ux),
                y: room.depth_y * T::lit(uy),
                mark: T::lit(m),
            }
        })
        .collect();
    mhcp_thin(&pts, shape.hard_core_radius)
        .into_iter()
        .map(|i| BlockageCylinder {
            center_xy: [pts[i].x, pts[i].y],
            diameter: shape.diameter,
            height: shape.height,
        })
        .collect()
}

/// Matern type-II realization conditioned on exactly `count` survivors.
pub fn place_blockages_count<T: Scalar, R: Rng + ?Sized>(
    room: &RoomConfig<T>,
    count: usize,
    shape: &BlockageShape<T>,
    rng: &mut R,
) -> Result<Vec<BlockageCylinder<T>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let candidates = 2 * count;
    for _ in 0..100_000 {
        let b = realize(room, candidates, shape, rng);
        if b.len() == count {
            return Ok(b);
        }
    }
    Err(Error::config(
        "env.blockages",
        format!("cannot fit {count} blockages with the configured hard-core radius"),
    ))
}

/// Length of the shadow cast behind a blockage of height `h_b` for a
/// receiver at horizontal distance `d_l` from a source at height `h_l`
/// (heights measured from the receiver plane).
pub fn shadow_length<T: Scalar>(h_b: T, d_l: T, h_l: T) -> Result<T> {
    if !(h_l > T::zero()) || h_b >= h_l || h_b < T::zero() || d_l < T::zero() {
        return Err(Error::Domain(format!(
            "shadow needs 0 <= h_B < h_l and d_L >= 0, got h_B={h_b}, h_l={h_l}, d_L={d_l}"
        )));
    }
    Ok(h_b * d_l / h_l)
}

/// Rectangular-shadow LoS test on the receiver plane.
///
/// Each blockage shades a strip of width equal to its diameter that starts
/// at its far edge (seen from the AP foot) and runs `shadow_length` along the
/// AP-to-blockage azimuth. A receiver standing inside a footprint is blocked.
pub fn is_los_blocked<T: Scalar>(ap: Vec3<T>, user: Vec3<T>, blockages: &[BlockageCylinder<T>]) -> bool {
    let h_l = ap.z - user.z;
    blockages.iter().any(|b| {
        if b.contains_xy(user.x, user.y) {
            return true;
        }
        let h_b = b.height - user.z;
        if h_b <= T::zero() {
            return false;
        }
        let bx = b.center_xy[0] - ap.x;
        let by = b.center_xy[1] - ap.y;
        let d_c = (bx * bx + by * by).sqrt();
        if d_c == T::zero() {
            return false;
        }
        let (ex, ey) = (bx / d_c, by / d_c);
        let ux = user.x - ap.x;
        let uy = user.y - ap.y;
        let along = ux * ex + uy * ey;
        let across = (ux * ey - uy * ex).abs();
        let r = b.radius();
        if across > r {
            return false;
        }
        let far_edge = d_c + r;
        if along < far_edge {
            return false;
        }
        if h_b >= h_l {
            return true;
        }
        let d_l = (ux * ux + uy * uy).sqrt();
        match shadow_length(h_b, d_l, h_l) {
            Ok(len) => along - far_edge <= len,
            Err(_) => false,
        }
    })
}

/// Exact test of whether the segment `p0 -> p1` passes through any cylinder
/// volume (floor to top).
pub fn is_segment_blocked<T: Scalar>(p0: Vec3<T>, p1: Vec3<T>, blockages: &[BlockageCylinder<T>]) -> bool {
    blockages.iter().any(|b| segment_hits_cylinder(p0, p1, b))
}

fn segment_hits_cylinder<T: Scalar>(p0: Vec3<T>, p1: Vec3<T>, b: &BlockageCylinder<T>) -> bool {
    let zero = T::zero();
    let one = T::one();
    let d = p1 - p0;
    let fx = p0.x - b.center_xy[0];
    let fy = p0.y - b.center_xy[1];
    let r = b.radius();
    // parameter interval where the xy projection lies inside the circle
    let a = d.x * d.x + d.y * d.y;
    let c = fx * fx + fy * fy - r * r;
    let (mut t0, mut t1) = if a == zero {
        if c > zero {
            return false;
        }
        (zero, one)
    } else {
        let bq = T::lit(2.0) * (fx * d.x + fy * d.y);
        let disc = bq * bq - T::lit(4.0) * a * c;
        if disc < zero {
            return false;
        }
        let s = disc.sqrt();
        let two_a = T::lit(2.0) * a;
        ((-bq - s) / two_a, (-bq + s) / two_a)
    };
    t0 = t0.max(zero);
    t1 = t1.min(one);
    if t0 > t1 {
        return false;
    }
    // intersect with the slab 0 <= z <= height
    if d.z == zero {
        return p0.z >= zero && p0.z <= b.height;
    }
    let za = (zero - p0.z) / d.z;
    let zb = (b.height - p0.z) / d.z;
    let (zlo, zhi) = if za < zb { (za, zb) } else { (zb, za) };
    t0.max(zlo) <= t1.min(zhi)
}
