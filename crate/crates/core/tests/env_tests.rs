mod common;

use common::scenarios::{desk, frozen_single, frozen_single_env};
use common::*;
use irs_vlc::channel::{irs_gain, los_gain, sinr, user_rate};
use irs_vlc::envmdp::{compute_reward, trace_records, write_trace_csv, Env, PenaltyRule};
use irs_vlc::scene::{build_scene, MirrorState};
use std::f64::consts::FRAC_PI_2;

#[test]
fn stepping_a_frozen_scene_matches_brute_force_channel() {
    let mut env = frozen_single_env(1);
    env.reset(1).unwrap();
    let scene = env.scene().clone();
    let user = env.positions()[0];
    let center = env.mirrors()[0].center;
    let noise = env.noise().total_noise_variance;
    // the cylinder cuts the direct path, so only the mirror contributes
    let los = los_gain(scene.ap, &scene.led, &scene.receiver, user).unwrap();
    let mut best = 0.0f64;
    for i in 0..50 {
        for j in 0..50 {
            let a = [-1.0 + 2.0 * i as f64 / 49.0, -1.0 + 2.0 * j as f64 / 49.0];
            let state = MirrorState::with_angles(center, a[0] * FRAC_PI_2, a[1] * FRAC_PI_2).unwrap();
            let g = irs_gain(scene.ap, &state, &scene.mirrors, &scene.led, &scene.receiver, user).unwrap();
            let gamma = sinr(los, false, &[g], &scene.receiver, scene.led.transmit_power, noise, 0.0).unwrap();
            let expected = user_rate(gamma, scene.receiver.bandwidth, 1).unwrap();

            let frozen = env.frozen_sum_rate(&a).unwrap();
            let out = env.step(&a).unwrap();
            assert_eq!(out.positions[0], user);
            assert!(rel_err(out.sum_rate, expected) < 1e-12, "{a:?}");
            assert_eq!(out.sum_rate, frozen);
            assert!(rel_err(out.reward, expected / 10.0) < 1e-12);
            best = best.max(expected);
            if out.done {
                env.reset(1).unwrap();
            }
        }
    }
    assert!(best > 1.0, "reflected link should carry traffic, best {best}");
    assert_eq!(env.illegal_angle_count(), 0);
}

#[test]
fn observation_layout_and_bounds() {
    let (s, e) = desk();
    let mut env = Env::new(build_scene(&s).unwrap(), e, 3).unwrap();
    let obs = env.reset(3).unwrap();
    assert_eq!(env.observation_dim(), 4 * 2 + 2 * 9);
    assert_eq!(obs.len(), env.observation_dim());
    assert_eq!(env.action_dim(), 18);
    for _ in 0..20 {
        let out = env.step(&[0.3; 18]).unwrap();
        assert!(out.observation.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(out.per_user_rates.len(), 2);
        if out.done {
            break;
        }
    }
}

#[test]
fn out_of_range_actions_are_clamped_and_bad_actions_rejected() {
    let mut env = frozen_single_env(0);
    env.reset(0).unwrap();
    let out = env.step(&[5.0, -7.0]).unwrap();
    assert_eq!(out.angles, vec![FRAC_PI_2, -FRAC_PI_2]);
    assert_eq!(env.illegal_angle_count(), 0);
    assert!(env.step(&[0.0]).is_err());
    assert!(env.step(&[f64::NAN, 0.0]).is_err());
}

#[test]
fn episode_ends_at_horizon_or_on_qos() {
    let mut env = frozen_single_env(0);
    env.reset(0).unwrap();
    let mut steps = 0;
    loop {
        steps += 1;
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert!(!out.terminal);
        if out.done {
            break;
        }
    }
    assert_eq!(steps, 25);

    let (s, mut e) = frozen_single();
    e.end_on_qos = true;
    e.min_rate = 1e-9;
    let mut env = Env::new(build_scene(&s).unwrap(), e, 0).unwrap();
    env.reset(0).unwrap();
    let out = env.step(&[0.0, 0.0]).unwrap();
    assert!(out.terminal && out.done);
}

#[test]
fn reward_counts_unmet_users() {
    let r = compute_reward(&[3.0, 1.0, 5.0], &[2.0, 2.0, 2.0], 2.0, 0.5, PenaltyRule::Unmet).unwrap();
    assert_eq!(r, 9.0 / 2.0 - 0.5);
    let r = compute_reward(&[3.0, 1.0, 5.0], &[2.0, 2.0, 2.0], 2.0, 0.5, PenaltyRule::Printed).unwrap();
    assert_eq!(r, 9.0 / 2.0 - 1.0);
    assert!(compute_reward(&[1.0], &[1.0, 2.0], 1.0, 0.0, PenaltyRule::Unmet).is_err());
}

#[test]
fn same_seed_reset_reproduces_the_episode() {
    let (s, e) = desk();
    let scene = build_scene(&s).unwrap();
    let run = |seed| {
        let mut env = Env::new(scene.clone(), e.clone(), 0).unwrap();
        let mut obs = env.reset(seed).unwrap();
        for _ in 0..10 {
            obs = env.step(&[-0.2; 18]).unwrap().observation;
        }
        (obs, env.blockages().to_vec())
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).0, run(6).0);
}

#[test]
fn invalid_configs_are_rejected() {
    let (s, mut e) = frozen_single();
    e.users = 2;
    assert!(Env::new(build_scene(&s).unwrap(), e, 0).is_err());
    let (s, mut e) = frozen_single();
    e.dt = 0.0;
    assert!(Env::new(build_scene(&s).unwrap(), e, 0).is_err());
}

#[test]
fn trace_csv_has_one_row_per_user_and_step() {
    let (s, e) = desk();
    let mut env = Env::new(build_scene(&s).unwrap(), e, 2).unwrap();
    env.reset(2).unwrap();
    let mut records = Vec::new();
    for step in 0..3 {
        let out = env.step(&[0.1; 18]).unwrap();
        records.extend(trace_records(0, step, &out, &[1e6, 1e6]));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[0].starts_with("episode,step,user_id,x,y,rate_bps,qos_met,reward,yaw_0,roll_0"));
    assert!(lines[0].ends_with("yaw_8,roll_8"));
    assert_eq!(lines[1].split(',').count(), 8 + 18);
    let rate: f64 = lines[1].split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(rate, records[0].rate_bps);
}
