use super::*;
use crate::nn::gradcheck::check_flat;
use ndarray::{arr1, arr2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN_2PI_HALF: f64 = 0.918_938_533_204_672_8;

fn spec(low: Vec<f64>, high: Vec<f64>, obs: usize) -> EnvSpec<f64> {
    EnvSpec {
        observation_dim: obs,
        action_dim: low.len(),
        action_low: low,
        action_high: high,
        max_episode_steps: 10,
    }
}

fn small_config() -> SacConfig {
    SacConfig {
        hidden_sizes: vec![8, 8],
        hidden_activation: Activation::Tanh,
        ..SacConfig::default()
    }
}

fn agent(seed: u64) -> SacAgent<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SacAgent::new(&spec(vec![-1.0, -1.0], vec![1.0, 1.0], 2), small_config(), &mut rng).unwrap()
}

fn zero(net: &mut Mlp<f64>) {
    let n = net.num_params();
    net.set_flat_params(&vec![0.0; n]).unwrap();
}

fn batch(rng: &mut ChaCha8Rng, n: usize) -> TransitionBatch<f64> {
    let mut u = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.random_range(-2.0..2.0));
    let states = u(n, 2);
    let actions = u(n, 2).mapv(|v| v / 2.0);
    let next_states = u(n, 2);
    let rewards = u(n, 1).column(0).to_owned();
    let not_terminal = Array1::from_shape_fn(n, |i| if i % 3 == 0 { 0.0 } else { 1.0 });
    TransitionBatch {
        states,
        actions,
        rewards,
        next_states,
        not_terminal,
    }
}

#[test]
fn zero_policy_acts_at_box_midpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut a = SacAgent::new(&spec(vec![0.0, -2.0], vec![4.0, 0.0], 3), small_config(), &mut rng).unwrap();
    zero(a.policy_mut());
    assert_eq!(a.act(&[5.0, -1.0, 0.3], true, &mut rng).unwrap(), vec![2.0, -1.0]);
}

#[test]
fn deterministic_action_is_repeatable() {
    let a = agent(1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let first = a.act(&[0.4, 0.7], true, &mut rng).unwrap();
    for _ in 0..5 {
        assert_eq!(a.act(&[0.4, 0.7], true, &mut rng).unwrap(), first);
    }
}

#[test]
fn stochastic_samples_match_gaussian_outputs() {
    let a = agent(2);
    let state = [0.8, -0.3];
    let out = a.policy().forward(&state).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    for j in 0..2 {
        let (m, std) = (out[j], out[2 + j].clamp(-10.0, 2.0).exp());
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut sample_rng = rng.clone();
        for _ in 0..n {
            let u = a.act(&state, false, &mut sample_rng).unwrap()[j].atanh();
            sum += u;
            sq += u * u;
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        assert!((mean - m).abs() < 3.0 * std / (n as f64).sqrt(), "mean {mean} vs {m}");
        assert!((sd - std).abs() < 3.0 * std / (2.0 * n as f64).sqrt(), "std {sd} vs {std}");
        rng = sample_rng;
    }
}

#[test]
fn critic_loss_is_zero_when_targets_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut a = SacAgent::new(&spec(vec![-1.0], vec![1.0], 1), SacConfig { discount: 0.0, ..small_config() }, &mut rng).unwrap();
    zero(a.critics_mut().0);
    zero(a.critics_mut().1);
    let mut b = batch(&mut rng, 6);
    b.states = b.states.slice(s![.., ..1]).to_owned();
    b.next_states = b.next_states.slice(s![.., ..1]).to_owned();
    b.actions = b.actions.slice(s![.., ..1]).to_owned();
    b.rewards.fill(0.0);
    let before = (a.q1.flat_params(), a.q2.flat_params());
    let loss = a.critic_update(&b, &mut rng).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!((a.q1.flat_params(), a.q2.flat_params()), before);
}

#[test]
fn myopic_target_is_the_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = SacAgent::new(&spec(vec![-1.0, -1.0], vec![1.0, 1.0], 2), SacConfig { discount: 0.0, ..small_config() }, &mut rng).unwrap();
    let b = batch(&mut rng, 5);
    let noise = standard_normal::<f64, _>(5, 2, &mut rng);
    assert_eq!(a.critic_targets(&b, noise.view()).unwrap(), b.rewards);
}

/// Recomputes the soft Bellman residual for a two-transition batch one scalar at a time.
#[test]
fn critic_loss_matches_hand_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = SacConfig {
        hidden_sizes: vec![3],
        discount: 0.9,
        init_temperature: 0.2,
        ..small_config()
    };
    let a = SacAgent::new(&spec(vec![-1.0], vec![1.0], 1), cfg, &mut rng).unwrap();
    let b = TransitionBatch {
        states: arr2(&[[0.5], [-1.5]]),
        actions: arr2(&[[0.25], [-0.75]]),
        rewards: arr1(&[1.0, -2.0]),
        next_states: arr2(&[[0.7], [2.0]]),
        not_terminal: arr1(&[1.0, 0.0]),
    };
    let noise = arr2(&[[0.3], [-1.1]]);

    let (q1t, q2t) = a.target_critics();
    let mut expected = 0.0;
    for i in 0..2 {
        let s1 = b.next_states[[i, 0]];
        let out = a.policy().forward(&[s1]).unwrap();
        let log_std = out[1].clamp(-10.0, 2.0);
        let u = out[0] + log_std.exp() * noise[[i, 0]];
        let t = u.tanh();
        let log_pi = -0.5 * noise[[i, 0]].powi(2) - log_std - LN_2PI_HALF - (1.0 - t * t + 1e-6).ln();
        let min_q = q1t.forward(&[s1, t]).unwrap()[0].min(q2t.forward(&[s1, t]).unwrap()[0]);
        let y = b.rewards[i] + 0.9 * b.not_terminal[i] * (min_q - 0.2 * log_pi);
        let row = [b.states[[i, 0]], b.actions[[i, 0]]];
        let (c1, c2) = a.critics();
        expected += ((c1.forward(&row).unwrap()[0] - y).powi(2) + (c2.forward(&row).unwrap()[0] - y).powi(2)) / 2.0;
    }
    let (loss, _, _) = a.critic_loss_and_grads(&b, noise.view()).unwrap();
    assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
}

#[test]
fn critic_gradients_match_finite_differences() {
    for draw in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + draw);
        let a = agent(200 + draw);
        let b = batch(&mut rng, 7);
        let noise = standard_normal::<f64, _>(7, 2, &mut rng);
        let (_, g1, g2) = a.critic_loss_and_grads(&b, noise.view()).unwrap();
        let targets = a.critic_targets(&b, noise.view()).unwrap();
        let n1 = a.q1.num_params();
        let params: Vec<f64> = a.q1.flat_params().into_iter().chain(a.q2.flat_params()).collect();
        let analytic: Vec<f64> = g1.flat().into_iter().chain(g2.flat()).collect();
        let (mut p1, mut p2) = (a.q1.clone(), a.q2.clone());
        let report = check_flat(
            &params,
            &analytic,
            |p| {
                p1.set_flat_params(&p[..n1]).unwrap();
                p2.set_flat_params(&p[n1..]).unwrap();
                SacAgent::critic_loss(&p1, &p2, &b, &targets).unwrap()
            },
            1e-5,
            1e-4,
        );
        assert!(report.passed, "draw {draw}: {report:?}");
    }
}

#[test]
fn actor_gradients_match_finite_differences() {
    for draw in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + draw);
        let a = agent(400 + draw);
        let states = batch(&mut rng, 6).states;
        let noise = standard_normal::<f64, _>(6, 2, &mut rng);
        let eval = a.actor_loss_and_grads(states.view(), noise.view()).unwrap();
        let mut probe = a.clone();
        let report = check_flat(
            &a.policy.flat_params(),
            &eval.grads.flat(),
            |p| {
                probe.policy.set_flat_params(p).unwrap();
                probe.actor_loss_and_grads(states.view(), noise.view()).unwrap().loss
            },
            1e-5,
            1e-4,
        );
        assert!(report.passed, "draw {draw}: {report:?}");
    }
}

#[test]
fn temperature_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a = agent(8);
    let states = batch(&mut rng, 5).states;
    let noise = standard_normal::<f64, _>(5, 2, &mut rng);
    let log_probs = a.actor_loss_and_grads(states.view(), noise.view()).unwrap().log_probs;
    let analytic = a.temperature_gradient(&log_probs);
    let report = check_flat(
        &[a.log_temperature()],
        &[analytic],
        |p| {
            a.log_temperature = p[0];
            a.temperature() * log_probs.iter().map(|&lp| -lp - a.target_entropy()).sum::<f64>() / 5.0
        },
        1e-5,
        1e-6,
    );
    assert!(report.passed, "{report:?}");
}

#[test]
fn flat_objective_gives_zero_policy_gradient() {
    let mut a = agent(9);
    zero(a.critics_mut().0);
    zero(a.critics_mut().1);
    a.set_temperature(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let states = batch(&mut rng, 4).states;
    let noise = standard_normal::<f64, _>(4, 2, &mut rng);
    let eval = a.actor_loss_and_grads(states.view(), noise.view()).unwrap();
    assert!(eval.grads.is_zero());
}

#[test]
fn matched_entropy_leaves_temperature_unchanged() {
    let mut a = agent(11);
    let states = arr2(&[[0.2, -0.6]]);
    let noise = arr2(&[[0.5, -0.1]]);
    let lp = a.actor_loss_and_grads(states.view(), noise.view()).unwrap().log_probs[0];
    a.set_target_entropy(-lp);
    let before = a.log_temperature();
    a.actor_update_with_noise(states.view(), noise.view()).unwrap();
    assert_eq!(a.log_temperature(), before);
}

#[test]
fn soft_target_update_rates() {
    let mut a = agent(12);
    for p in a.q1.tensors_mut().chain(a.q2.tensors_mut()) {
        p.iter_mut().for_each(|v| *v += 0.5);
    }
    let online = a.q1.flat_params();
    let start = a.q1_target.flat_params();

    let mut keep = a.clone();
    keep.soft_target_update_with(0.0).unwrap();
    assert_eq!(keep.q1_target.flat_params(), start);

    let mut copy = a.clone();
    copy.soft_target_update_with(1.0).unwrap();
    assert_eq!(copy.q1_target.flat_params(), online);
    assert_eq!(copy.q2_target.flat_params(), a.q2.flat_params());

    let dist = |x: &[f64]| x.iter().zip(&online).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let d0 = dist(&start);
    for _ in 0..1000 {
        a.soft_target_update_with(0.005).unwrap();
    }
    let ratio = dist(&a.q1_target.flat_params()) / d0;
    let expected = 0.995f64.powi(1000);
    assert!((expected - 0.006_654).abs() < 1e-5);
    assert!((ratio - expected).abs() < 1e-9 * expected.max(1.0) + 1e-12, "{ratio} vs {expected}");
}

#[test]
fn deterministic_action_log_likelihood_is_the_mode_density() {
    let a = agent(13);
    let state = [0.1, 0.9];
    let out = a.policy().forward(&state).unwrap();
    let action = a.act(&state, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let expected: f64 = (0..2)
        .map(|j| {
            let t = out[j].tanh();
            -out[2 + j].clamp(-10.0, 2.0) - LN_2PI_HALF - (1.0 - t * t + 1e-6).ln()
        })
        .sum();
    let got = a.log_likelihood(&state, &action).unwrap();
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    let far = a.log_likelihood(&state, &[-0.999_999, 0.999_999]).unwrap();
    assert!(far < got - 5.0);
}

#[test]
fn log_likelihood_inverts_sampled_draws() {
    let a = agent(14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let states = batch(&mut rng, 8).states;
    let noise = standard_normal::<f64, _>(8, 2, &mut rng).mapv(|v| v * 0.5);
    let out = a.policy.forward_batch(states.view()).unwrap();
    let draw = a.draw(out.view(), noise.view()).unwrap();
    let ll = a.log_likelihood_batch(states.view(), draw.actions.view()).unwrap();
    for (x, y) in ll.iter().zip(&draw.log_probs) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn update_periods_are_respected() {
    let mut a = agent(16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let b = batch(&mut rng, 16);
    let target0 = a.q1_target.flat_params();
    let stats = a.update(&b, &mut rng).unwrap();
    assert!(stats.actor_loss.is_some());
    assert_eq!(a.q1_target.flat_params(), target0);
    a.update(&b, &mut rng).unwrap();
    assert_ne!(a.q1_target.flat_params(), target0);
    assert_eq!(a.critic_update_count(), 2);
}

#[test]
fn snapshot_round_trip_preserves_behavior() {
    let mut a = agent(18);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let b = batch(&mut rng, 16);
    for _ in 0..3 {
        a.update(&b, &mut rng).unwrap();
    }
    let back = SacAgent::<f64>::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.policy, a.policy);
    assert_eq!(back.q2_target, a.q2_target);
    assert_eq!(back.log_temperature(), a.log_temperature());
    let s = [0.3, -0.2];
    assert_eq!(back.act(&s, true, &mut rng).unwrap(), a.act(&s, true, &mut rng).unwrap());
}

#[test]
fn single_precision_agent_trains() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let sp = EnvSpec::<f32> {
        observation_dim: 2,
        action_dim: 2,
        action_low: vec![-1.0; 2],
        action_high: vec![1.0; 2],
        max_episode_steps: 10,
    };
    let mut a = SacAgent::<f32>::new(&sp, small_config(), &mut rng).unwrap();
    let b64 = batch(&mut rng, 32);
    let b = TransitionBatch {
        states: b64.states.mapv(|v| v as f32),
        actions: b64.actions.mapv(|v| v as f32),
        rewards: b64.rewards.mapv(|v| v as f32),
        next_states: b64.next_states.mapv(|v| v as f32),
        not_terminal: b64.not_terminal.mapv(|v| v as f32),
    };
    for _ in 0..20 {
        let stats = a.update(&b, &mut rng).unwrap();
        assert!(stats.critic_loss.is_finite());
    }
    assert!(a.policy().is_finite());
}

#[test]
fn batch_from_transitions_uses_predicted_reward() {
    let t = Transition {
        state: vec![1.0, 2.0],
        action: vec![0.5, -0.5],
        predicted_reward: 0.25,
        ground_truth_reward: -9.0,
        next_state: vec![1.5, 1.5],
        done: true,
        terminal: false,
        trajectory_id: 0,
        step_index: 0,
    };
    let b = TransitionBatch::from_transitions(&[&t, &t]).unwrap();
    assert_eq!(b.rewards, arr1(&[0.25, 0.25]));
    assert_eq!(b.not_terminal, arr1(&[1.0, 1.0]));
    assert!(TransitionBatch::<f64>::from_transitions(&[]).is_err());
}

proptest! {
    #[test]
    fn actions_stay_strictly_inside_bounds(
        seed in 0u64..200,
        scale in 1.0f64..200.0,
        state in prop::collection::vec(-50.0f64..50.0, 2),
        deterministic: bool,
    ) {
        let mut a = agent(seed);
        for p in a.policy.tensors_mut() {
            p.iter_mut().for_each(|v| *v *= scale);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let action = a.act(&state, deterministic, &mut rng).unwrap();
        for v in action {
            prop_assert!(v > -1.0 && v < 1.0, "{}", v);
        }
    }
}
