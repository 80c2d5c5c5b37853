//! Static room geometry: optical access point, receivers and the mirror array.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;

/// Order of Lambertian emission for a given half-power semi-angle.
pub fn lambertian_order<T: Scalar>(phi_half: T) -> Result<T> {
    if !(phi_half > T::zero() && phi_half < T::FRAC_PI_2()) {
        return Err(Error::Domain(format!(
            "half-power semi-angle {phi_half} outside (0, pi/2)"
        )));
    }
    Ok(-T::LN_2() / phi_half.cos().ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RoomConfig<T> {
    pub width_x: T,
    pub depth_y: T,
    pub height_z: T,
    /// Defaults to the ceiling center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_position: Option<Vec3<T>>,
    pub receiver_height: T,
}

impl<T: Scalar> Default for RoomConfig<T> {
    fn default() -> Self {
        RoomConfig {
            width_x: T::lit(5.0),
            depth_y: T::lit(5.0),
            height_z: T::lit(3.0),
            ap_position: None,
            receiver_height: T::lit(0.85),
        }
    }
}

impl<T: Scalar> RoomConfig<T> {
    pub fn ap(&self) -> Vec3<T> {
        self.ap_position
            .unwrap_or_else(|| Vec3::new(self.width_x / T::lit(2.0), self.depth_y / T::lit(2.0), self.height_z))
    }

    /// Whether the floor projection of `p` lies inside the room footprint.
    pub fn contains_xy(&self, p: Vec3<T>) -> bool {
        p.x >= T::zero() && p.x <= self.width_x && p.y >= T::zero() && p.y <= self.depth_y
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        self.contains_xy(p) && p.z >= T::zero() && p.z <= self.height_z
    }

    pub fn floor_area(&self) -> T {
        self.width_x * self.depth_y
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("room.width_x", self.width_x),
            ("room.depth_y", self.depth_y),
            ("room.height_z", self.height_z),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.receiver_height >= T::zero() && self.receiver_height < self.height_z) {
            return Err(Error::config(
                "room.receiver_height",
                format!("must lie in [0, height_z), got {}", self.receiver_height),
            ));
        }
        let ap = self.ap();
        if !(ap.is_finite() && self.contains(ap)) {
            return Err(Error::config("room.ap_position", "outside the room box"));
        }
        if ap.z <= self.receiver_height {
            return Err(Error::config("room.ap_position", "must be above the receiver plane"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LedConfig<T> {
    /// Radians.
    pub half_power_semiangle: T,
    /// Optical transmit power in watts.
    pub transmit_power: T,
}

impl<T: Scalar> Default for LedConfig<T> {
    fn default() -> Self {
        LedConfig {
            half_power_semiangle: T::FRAC_PI_3(),
            transmit_power: T::lit(2.0),
        }
    }
}

impl<T: Scalar> LedConfig<T> {
    pub fn lambertian_order(&self) -> Result<T> {
        lambertian_order(self.half_power_semiangle)
    }

    fn validate(&self) -> Result<()> {
        lambertian_order(self.half_power_semiangle)
            .map_err(|e| Error::config("led.half_power_semiangle", e.to_string()))?;
        if !(self.transmit_power > T::zero() && self.transmit_power.is_finite()) {
            return Err(Error::config("led.transmit_power", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ReceiverConfig<T> {
    /// Photodetector area in square meters.
    pub detector_area: T,
    /// Field-of-view semi-angle in radians.
    pub fov_semiangle: T,
    /// Responsivity in A/W.
    pub responsivity: T,
    /// Modulation bandwidth in Hz.
    pub bandwidth: T,
    pub refractive_index: T,
    pub filter_gain: T,
    /// Multiplier applied to every channel gain. The concentrator index and
    /// filter gain above are recorded but do not enter the gain formulas.
    #[serde(default = "one")]
    pub gain_factor: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> Default for ReceiverConfig<T> {
    fn default() -> Self {
        ReceiverConfig {
            detector_area: T::lit(20e-6),
            fov_semiangle: T::lit(70f64.to_radians()),
            responsivity: T::lit(0.4),
            bandwidth: T::lit(20e6),
            refractive_index: T::lit(1.5),
            filter_gain: T::one(),
            gain_factor: T::one(),
        }
    }
}

impl<T: Scalar> ReceiverConfig<T> {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("receiver.detector_area", self.detector_area),
            ("receiver.responsivity", self.responsivity),
            ("receiver.bandwidth", self.bandwidth),
            ("receiver.refractive_index", self.refractive_index),
            ("receiver.filter_gain", self.filter_gain),
            ("receiver.gain_factor", self.gain_factor),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.fov_semiangle > T::zero() && self.fov_semiangle <= T::FRAC_PI_2()) {
            return Err(Error::config("receiver.fov_semiangle", "must lie in (0, pi/2]"));
        }
        Ok(())
    }
}

/// Wall carrying the mirror array.
///
/// The orientation cosine treats a mirror with zero yaw and roll as facing
/// the `-y` direction, so only `YMax` yields a room-facing array at rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wall {
    YMin,
    YMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct MirrorArrayConfig<T> {
    pub rows: usize,
    pub cols: usize,
    pub mirror_height: T,
    pub mirror_width: T,
    pub gap: T,
    pub reflectivity: T,
    pub wall: Wall,
    /// Array center as (x, z) on the wall; defaults to the wall center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_offset: Option<[T; 2]>,
}

impl<T: Scalar> Default for MirrorArrayConfig<T> {
    fn default() -> Self {
        MirrorArrayConfig {
            rows: 10,
            cols: 10,
            mirror_height: T::lit(0.25),
            mirror_width: T::lit(0.10),
            gap: T::lit(0.02),
            reflectivity: T::lit(0.95),
            wall: Wall::YMax,
            wall_offset: None,
        }
    }
}

impl<T: Scalar> MirrorArrayConfig<T> {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Area of a single mirror.
    pub fn mirror_area(&self) -> T {
        self.mirror_height * self.mirror_width
    }

    fn validate(&self, room: &RoomConfig<T>) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::config("mirrors.rows", "must be at least 1"));
        }
        if self.cols == 0 {
            return Err(Error::config("mirrors.cols", "must be at least 1"));
        }
        for (name, v) in [
            ("mirrors.mirror_height", self.mirror_height),
            ("mirrors.mirror_width", self.mirror_width),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.gap >= T::zero() && self.gap.is_finite()) {
            return Err(Error::config("mirrors.gap", "must be nonnegative"));
        }
        if !(self.reflectivity >= T::zero() && self.reflectivity <= T::one()) {
            return Err(Error::config("mirrors.reflectivity", "must lie in [0, 1]"));
        }
        let (cx, cz) = self.center(room);
        let half_w = self.extent(self.cols, self.mirror_width) / T::lit(2.0);
        let half_h = self.extent(self.rows, self.mirror_height) / T::lit(2.0);
        if cx - half_w < T::zero() || cx + half_w > room.width_x {
            return Err(Error::config(
                "mirrors.cols",
                "array is wider than the wall at the requested offset",
            ));
        }
        if cz - half_h < T::zero() || cz + half_h > room.height_z {
            return Err(Error::config(
                "mirrors.rows",
                "array is taller than the wall at the requested offset",
            ));
        }
        Ok(())
    }

    fn extent(&self, n: usize, size: T) -> T {
        let n_t = T::from_usize(n).unwrap();
        n_t * size + (n_t - T::one()) * self.gap
    }

    fn center(&self, room: &RoomConfig<T>) -> (T, T) {
        match self.wall_offset {
            Some([x, z]) => (x, z),
            None => (room.width_x / T::lit(2.0), room.height_z / T::lit(2.0)),
        }
    }

    /// Mirror centers in row-major order; row 0 is the top row, column 0 is
    /// at the smallest `x`.
    pub fn centers(&self, room: &RoomConfig<T>) -> Vec<Vec3<T>> {
        let (cx, cz) = self.center(room);
        let y = match self.wall {
            Wall::YMin => T::zero(),
            Wall::YMax => room.depth_y,
        };
        let half = T::lit(0.5);
        let col_mid = T::from_usize(self.cols - 1).unwrap() * half;
        let row_mid = T::from_usize(self.rows - 1).unwrap() * half;
        let dx = self.mirror_width + self.gap;
        let dz = self.mirror_height + self.gap;
        let mut out = Vec::with_capacity(self.count());
        for r in 0..self.rows {
            for c in 0..self.cols {
                let x = cx + (T::from_usize(c).unwrap() - col_mid) * dx;
                let z = cz + (row_mid - T::from_usize(r).unwrap()) * dz;
                out.push(Vec3::new(x, y, z));
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SceneConfig<T: Scalar> {
    #[serde(default)]
    pub room: RoomConfig<T>,
    #[serde(default)]
    pub led: LedConfig<T>,
    #[serde(default)]
    pub receiver: ReceiverConfig<T>,
    #[serde(default)]
    pub mirrors: MirrorArrayConfig<T>,
}

impl<T: Scalar> SceneConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.led.validate()?;
        self.receiver.validate()?;
        self.mirrors.validate(&self.room)
    }
}

/// Orientation of one mirror. Angles are in radians and always lie in
/// `[-pi/2, pi/2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MirrorState<T> {
    yaw: T,
    roll: T,
    pub center: Vec3<T>,
}

impl<T: Scalar> MirrorState<T> {
    pub fn new(center: Vec3<T>) -> Self {
        MirrorState {
            yaw: T::zero(),
            roll: T::zero(),
            center,
        }
    }

    pub fn with_angles(center: Vec3<T>, yaw: T, roll: T) -> Result<Self> {
        let mut m = MirrorState::new(center);
        m.set_angles(yaw, roll)?;
        Ok(m)
    }

    pub fn yaw(&self) -> T {
        self.yaw
    }

    pub fn roll(&self) -> T {
        self.roll
    }

    pub fn set_angles(&mut self, yaw: T, roll: T) -> Result<()> {
        let lim = T::FRAC_PI_2();
        let ok = |a: T| a >= -lim && a <= lim;
        if !(ok(yaw) && ok(roll)) {
            return Err(Error::Domain(format!(
                "mirror angles ({yaw}, {roll}) outside [-pi/2, pi/2]"
            )));
        }
        self.yaw = yaw;
        self.roll = roll;
        Ok(())
    }
}

/// Immutable room description shared by every evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene<T: Scalar> {
    pub room: RoomConfig<T>,
    pub led: LedConfig<T>,
    pub receiver: ReceiverConfig<T>,
    pub mirrors: MirrorArrayConfig<T>,
    pub ap: Vec3<T>,
    pub lambertian_order: T,
    pub mirror_centers: Vec<Vec3<T>>,
}

impl<T: Scalar> Scene<T> {
    pub fn mirror_count(&self) -> usize {
        self.mirror_centers.len()
    }

    /// Mirror states with all angles at zero.
    pub fn initial_mirror_states(&self) -> Vec<MirrorState<T>> {
        self.mirror_centers.iter().map(|&c| MirrorState::new(c)).collect()
    }

    /// Same scene with a different transmit power.
    pub fn with_power(&self, watts: T) -> Result<Self> {
        let mut s = self.clone();
        s.led.transmit_power = watts;
        s.led.validate()?;
        Ok(s)
    }
}

pub fn build_scene<T: Scalar>(config: &SceneConfig<T>) -> Result<Scene<T>> {
    config.validate()?;
    Ok(Scene {
        room: config.room.clone(),
        led: config.led.clone(),
        receiver: config.receiver.clone(),
        mirrors: config.mirrors.clone(),
        ap: config.room.ap(),
        lambertian_order: config.led.lambertian_order()?,
        mirror_centers: config.mirrors.centers(&config.room),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_defaults_to_ceiling_center() {
        let scene = build_scene(&SceneConfig::<f64>::default()).unwrap();
        assert_eq!(scene.ap, Vec3::new(2.5, 2.5, 3.0));
    }

    #[test]
    fn sixty_degrees_gives_first_order() {
        let n = lambertian_order(60f64.to_radians()).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        let scene = build_scene(&SceneConfig::<f64>::default()).unwrap();
        assert!((scene.lambertian_order - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambertian_order_values() {
        // -ln 2 / ln(cos 30deg) = 0.693147 / 0.143841
        let n30 = lambertian_order(30f64.to_radians()).unwrap();
        assert!((n30 - 4.8188).abs() < 1e-3, "{n30}");
        let n = lambertian_order(89.9f64.to_radians()).unwrap();
        assert!(n.is_finite() && n > 0.0 && n < 1.0);
        assert!(lambertian_order(0.0f64).is_err());
        assert!(lambertian_order(std::f64::consts::FRAC_PI_2).is_err());
    }

    #[test]
    fn lambertian_order_decreasing_in_semiangle() {
        // Wider beams have lower order.
        let mut prev = f64::INFINITY;
        for i in 1..180 {
            let phi = i as f64 * std::f64::consts::FRAC_PI_2 / 180.0;
            let n = lambertian_order(phi).unwrap();
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn zero_rows_rejected() {
        let mut cfg = SceneConfig::<f64>::default();
        cfg.mirrors.rows = 0;
        match build_scene(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "mirrors.rows"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oversized_array_rejected() {
        let mut cfg = SceneConfig::<f64>::default();
        cfg.mirrors.cols = 60;
        assert!(matches!(build_scene(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn mirror_layout_spacing() {
        let scene = build_scene(&SceneConfig::<f64>::default()).unwrap();
        let cfg = &scene.mirrors;
        let c = &scene.mirror_centers;
        assert_eq!(c.len(), 100);
        for p in c {
            assert_eq!(p.y, 5.0);
        }
        // row-major: neighbours along a row differ in x, along a column in z
        assert!((c[1].x - c[0].x - (cfg.mirror_width + cfg.gap)).abs() < 1e-12);
        assert!((c[0].z - c[10].z - (cfg.mirror_height + cfg.gap)).abs() < 1e-12);
        let min_sep = cfg.mirror_width.min(cfg.mirror_height) + cfg.gap;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                assert!(c[i].distance(c[j]) >= min_sep - 1e-12);
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let cfg = SceneConfig::<f64>::default();
        assert_eq!(build_scene(&cfg).unwrap(), build_scene(&cfg).unwrap());
    }

    #[test]
    fn mirror_angle_limits() {
        let c = Vec3::new(1.0, 5.0, 1.5);
        assert!(MirrorState::with_angles(c, 1.6, 0.0).is_err());
        assert!(MirrorState::with_angles(c, -std::f64::consts::FRAC_PI_2, 0.3).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[room]\nwidth_x = 5.0\ndepth_y = 5.0\nheight_z = 3.0\nreceiver_height = 0.85\ncolor = 3\n";
        assert!(toml::from_str::<SceneConfig<f64>>(text).is_err());
    }

    #[test]
    fn f32_scene_builds() {
        let scene = build_scene(&SceneConfig::<f32>::default()).unwrap();
        assert!((scene.lambertian_order - 1.0).abs() < 1e-5);
    }
}
