//! Optical channel: line-of-sight gain, per-mirror reflected gain, SINR,
//! achievable rate and an on-off-keying bit error rate.
//!
//! All functions are pure. Gains are dimensionless DC channel gains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;
use crate::scene::{LedConfig, MirrorArrayConfig, MirrorState, ReceiverConfig, Scene};

/// Per-user channel state after one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelReport<T> {
    pub los_gain: T,
    pub irs_gains: Vec<T>,
    pub los_blocked: bool,
    pub sinr: T,
    pub rate: T,
}

impl<T: Scalar> ChannelReport<T> {
    /// Gain actually reaching the detector: blocked LoS contributes nothing.
    pub fn effective_gain(&self) -> T {
        let los = if self.los_blocked { T::zero() } else { self.los_gain };
        los + self.irs_gains.iter().copied().sum::<T>()
    }
}

/// Receiver noise: total variance plus optional per-user residual interference
/// (both in A^2). Users without an interference entry see zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct NoiseModel<T> {
    pub total_noise_variance: T,
    #[serde(default)]
    pub residual_interference: Vec<T>,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(total_noise_variance: T) -> Self {
        NoiseModel {
            total_noise_variance,
            residual_interference: Vec::new(),
        }
    }

    /// Noise variance that gives `snr_db` to a user at the room center under
    /// unobstructed LoS.
    pub fn calibrated(scene: &Scene<T>, snr_db: T) -> Result<Self> {
        let center = Vec3::new(
            scene.room.width_x / T::lit(2.0),
            scene.room.depth_y / T::lit(2.0),
            scene.room.receiver_height,
        );
        let h = los_gain(scene.ap, &scene.led, &scene.receiver, center)?;
        if h <= T::zero() {
            return Err(Error::Domain("room center outside the LoS footprint".into()));
        }
        let signal = scene.receiver.responsivity * scene.led.transmit_power * h;
        let snr = T::lit(10.0).powf(snr_db / T::lit(10.0));
        Ok(NoiseModel::new(signal * signal / snr))
    }

    pub fn interference(&self, user: usize) -> T {
        self.residual_interference.get(user).copied().unwrap_or_else(T::zero)
    }
}

/// Direct-path gain from the ceiling AP to an upward-facing detector.
pub fn los_gain<T: Scalar>(ap: Vec3<T>, led: &LedConfig<T>, rx: &ReceiverConfig<T>, user: Vec3<T>) -> Result<T> {
    let d = ap.distance(user);
    if !(d > T::zero()) {
        return Err(Error::Domain("AP and receiver coincide".into()));
    }
    let cos = (ap.z - user.z) / d;
    if cos <= T::zero() || cos < rx.fov_semiangle.cos() {
        return Ok(T::zero());
    }
    let n = led.lambertian_order()?;
    let two = T::lit(2.0);
    Ok(rx.gain_factor * (n + T::one()) * rx.detector_area * cos.powf(n) * cos / (two * T::PI() * d * d))
}

/// Cosine between the rotated mirror normal and the direction from `target`
/// to the mirror. May be negative; callers treat nonpositive values as no
/// reflection.
pub fn orientation_cosine<T: Scalar>(mirror: &MirrorState<T>, target: Vec3<T>) -> Result<T> {
    let m = mirror.center;
    let d = m.distance(target);
    if !(d > T::zero()) {
        return Err(Error::Domain("mirror and target coincide".into()));
    }
    let (sy, cy) = mirror.yaw().sin_cos();
    let (sr, cr) = mirror.roll().sin_cos();
    Ok((m.x - target.x) / d * sy * cr + (m.y - target.y) / d * cy * cr + (m.z - target.z) / d * sr)
}

/// Gain of the AP -> mirror -> user path for a single mirror.
pub fn irs_gain<T: Scalar>(
    ap: Vec3<T>,
    mirror: &MirrorState<T>,
    array: &MirrorArrayConfig<T>,
    led: &LedConfig<T>,
    rx: &ReceiverConfig<T>,
    user: Vec3<T>,
) -> Result<T> {
    let n = led.lambertian_order()?;
    irs_gain_with_order(ap, mirror, array, n, rx, user)
}

pub(crate) fn irs_gain_with_order<T: Scalar>(
    ap: Vec3<T>,
    mirror: &MirrorState<T>,
    array: &MirrorArrayConfig<T>,
    lambertian_order: T,
    rx: &ReceiverConfig<T>,
    user: Vec3<T>,
) -> Result<T> {
    if array.reflectivity == T::zero() {
        return Ok(T::zero());
    }
    let m = mirror.center;
    let d_user = m.distance(user);
    let d_ap = m.distance(ap);
    if !(d_user > T::zero() && d_ap > T::zero()) {
        return Err(Error::Domain("mirror coincides with AP or receiver".into()));
    }
    let cos_incidence_user = orientation_cosine(mirror, user)?;
    if cos_incidence_user <= T::zero() || cos_incidence_user < rx.fov_semiangle.cos() {
        return Ok(T::zero());
    }
    let cos_incidence_ap = orientation_cosine(mirror, ap)?;
    let cos_emit_ap = (ap.z - m.z) / d_ap;
    let cos_arrive_user = (m.z - user.z) / d_user;
    if cos_incidence_ap < T::zero() || cos_emit_ap < T::zero() || cos_arrive_user < T::zero() {
        return Ok(T::zero());
    }
    let n = lambertian_order;
    let two = T::lit(2.0);
    Ok(rx.gain_factor
        * (n + T::one())
        * array.reflectivity
        * rx.detector_area
        * array.mirror_area()
        * cos_emit_ap.powf(n)
        * cos_incidence_ap
        * cos_arrive_user
        * cos_incidence_user
        / (two * T::PI() * T::PI() * d_ap * d_ap * d_user * d_user))
}

/// Electrical SINR. `los_visible` is the blockage indicator: `false` removes
/// the LoS term.
pub fn sinr<T: Scalar>(
    los_gain: T,
    los_visible: bool,
    irs_gains: &[T],
    rx: &ReceiverConfig<T>,
    power: T,
    noise_variance: T,
    interference: T,
) -> Result<T> {
    if !(noise_variance > T::zero()) {
        return Err(Error::Domain(format!(
            "total noise variance must be positive, got {noise_variance}"
        )));
    }
    if los_gain < T::zero() || irs_gains.iter().any(|&g| g < T::zero()) {
        return Err(Error::Domain("channel gains must be nonnegative".into()));
    }
    let los = if los_visible { los_gain } else { T::zero() };
    let total = los + irs_gains.iter().copied().sum::<T>();
    let current = rx.responsivity * power * total;
    Ok(current * current / (interference + noise_variance))
}

/// Achievable rate in bits/s with the bandwidth shared among `users`.
pub fn user_rate<T: Scalar>(gamma: T, bandwidth: T, users: usize) -> Result<T> {
    if users == 0 {
        return Err(Error::Domain("user count must be at least 1".into()));
    }
    if gamma < T::zero() {
        return Err(Error::Domain(format!("negative SINR {gamma}")));
    }
    let share = bandwidth / T::from_usize(users).unwrap();
    let scale = T::E() / (T::lit(2.0) * T::PI());
    Ok(share * (T::one() + scale * gamma).log2())
}

/// OOK bit error probability `Q(sqrt(gamma))`.
pub fn ber_ook<T: Scalar>(gamma: T) -> T {
    let g = gamma.as_f64().max(0.0);
    T::lit(0.5 * libm::erfc((g / 2.0).sqrt()))
}

/// Evaluates every user's channel for a fixed set of mirror orientations.
///
/// `los_visible[k]` and `irs_visible(k, m)` carry blockage decisions made by
/// the caller.
pub fn channel_reports<T: Scalar>(
    scene: &Scene<T>,
    mirrors: &[MirrorState<T>],
    users: &[Vec3<T>],
    los_visible: &[bool],
    irs_visible: impl Fn(usize, usize) -> bool,
    noise: &NoiseModel<T>,
) -> Result<Vec<ChannelReport<T>>> {
    let k = users.len();
    let mut out = Vec::with_capacity(k);
    for (u, &pos) in users.iter().enumerate() {
        let los = los_gain(scene.ap, &scene.led, &scene.receiver, pos)?;
        let mut irs = Vec::with_capacity(mirrors.len());
        for (m, mirror) in mirrors.iter().enumerate() {
            let g = if irs_visible(u, m) {
                irs_gain_with_order(
                    scene.ap,
                    mirror,
                    &scene.mirrors,
                    scene.lambertian_order,
                    &scene.receiver,
                    pos,
                )?
            } else {
                T::zero()
            };
            irs.push(g);
        }
        let gamma = sinr(
            los,
            los_visible[u],
            &irs,
            &scene.receiver,
            scene.led.transmit_power,
            noise.total_noise_variance,
            noise.interference(u),
        )?;
        let rate = user_rate(gamma, scene.receiver.bandwidth, k)?;
        out.push(ChannelReport {
            los_gain: los,
            irs_gains: irs,
            los_blocked: !los_visible[u],
            sinr: gamma,
            rate,
        });
    }
    Ok(out)
}
