//! Scene and environment setups shared by the integration tests.

use irs_vlc::dynamics::{BlockageCylinder, MobilityConfig};
use irs_vlc::envmdp::{Env, EnvConfig};
use irs_vlc::scene::{build_scene, SceneConfig};

/// One mirror, one parked user whose direct path is cut by a cylinder
/// standing between the AP and the user.
pub fn frozen_single() -> (SceneConfig<f64>, EnvConfig<f64>) {
    let mut scene = SceneConfig::<f64>::default();
    scene.mirrors.rows = 1;
    scene.mirrors.cols = 1;
    let mut env = EnvConfig::<f64> {
        users: 1,
        fixed_users: Some(vec![[1.0, 3.5]]),
        mobility: MobilityConfig::fixed_speed(0.0),
        steps_per_episode: 25,
        end_on_qos: false,
        // the reflected link alone carries tens of bit/s here
        min_rate: 1.0,
        ..EnvConfig::default()
    };
    env.blockages.fixed = Some(vec![BlockageCylinder {
        center_xy: [1.45, 3.2],
        diameter: 0.4,
        height: 1.8,
    }]);
    env.reward.normalization = Some(10.0);
    env.reward.penalty_weight = 0.0;
    (scene, env)
}

pub fn frozen_single_env(seed: u64) -> Env<f64> {
    let (s, e) = frozen_single();
    Env::new(build_scene(&s).unwrap(), e, seed).unwrap()
}

/// Two mobile users, a 3 x 3 array and two cylinders at 2 W.
pub fn desk() -> (SceneConfig<f64>, EnvConfig<f64>) {
    let mut scene = SceneConfig::<f64>::default();
    scene.mirrors.rows = 3;
    scene.mirrors.cols = 3;
    scene.led.transmit_power = 2.0;
    let mut env = EnvConfig::<f64> {
        users: 2,
        steps_per_episode: 50,
        ..EnvConfig::default()
    };
    env.blockages.count = Some(2);
    env.reward.normalization = Some(1e7);
    (scene, env)
}
