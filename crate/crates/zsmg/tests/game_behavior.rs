//! Statistical behavior of game sampling and durability of the file
//! formats.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use tempfile::tempdir;
use zsmg::exact::{nash_backward_induction, ExactSolution};
use zsmg::game::{
    builtin_game, generate_random_game, play_episode, JointDistribution, MarkovGame,
};
use zsmg::rng::{sample_index, SeededRng, StreamKind};

fn chi_square_p_value(observed: &[u64], expected: &[f64]) -> f64 {
    let mut stat = 0.0;
    let mut df = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e < 1e-12 {
            assert_eq!(o, 0, "mass on a zero-probability outcome");
            continue;
        }
        let d = o as f64 - e;
        stat += d * d / e;
        df += 1.0;
    }
    let dist = ChiSquared::new(df - 1.0).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn transition_sampling_matches_the_declared_row() {
    let game = generate_random_game(55, 5, 2, 2, 2, 1.0).unwrap();
    let row = game.transition_row(1, 3, 0, 1).to_vec();
    let rng = SeededRng::new(606);
    let draws = 40_000u64;
    let mut counts = vec![0u64; row.len()];
    for i in 0..draws {
        let mut r = rng.stream(StreamKind::EnvTransition, i, 0);
        counts[sample_index(&mut r, &row)] += 1;
    }
    let expected: Vec<f64> = row.iter().map(|p| p * draws as f64).collect();
    let p = chi_square_p_value(&counts, &expected);
    assert!(p > 1e-3, "chi-square rejected transition sampling, p = {p}");
}

#[test]
fn played_actions_match_the_policy() {
    let game = builtin_game("matching_pennies").unwrap();
    let probs = vec![0.4, 0.1, 0.2, 0.3];
    let rng = SeededRng::new(11);
    let episodes = 100_000u64;
    let mut counts = [0u64; 4];
    for e in 0..episodes {
        let traj = play_episode(
            &game,
            |_, _| JointDistribution::from_probs(2, 2, probs.clone()),
            &rng,
            e,
        )
        .unwrap();
        counts[traj.steps[0].a * 2 + traj.steps[0].b] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        let freq = c as f64 / episodes as f64;
        assert!(
            (freq - probs[i]).abs() < 0.01,
            "joint action {i}: frequency {freq} vs probability {}",
            probs[i]
        );
    }
    let expected: Vec<f64> = probs.iter().map(|p| p * episodes as f64).collect();
    assert!(chi_square_p_value(&counts, &expected) > 1e-3);
}

#[test]
fn game_files_roundtrip_on_disk() {
    let dir = tempdir().unwrap();
    let game = generate_random_game(77, 4, 2, 3, 3, 0.6).unwrap();
    let path = dir.path().join("game.json");
    game.save(&path).unwrap();
    let loaded = MarkovGame::load(&path).unwrap();
    assert_eq!(game.to_json_string(), loaded.to_json_string());
    for h in 0..3 {
        for s in 0..4 {
            for a in 0..2 {
                for b in 0..3 {
                    assert_eq!(game.reward(h, s, a, b), loaded.reward(h, s, a, b));
                    assert_eq!(game.transition_row(h, s, a, b), loaded.transition_row(h, s, a, b));
                }
            }
        }
    }
}

#[test]
fn exact_solution_files_roundtrip_on_disk() {
    let dir = tempdir().unwrap();
    let game = builtin_game("matching_pennies_chain(3)").unwrap();
    let sol = nash_backward_induction(&game).unwrap();
    assert!((sol.value_at_initial(&game) - 1.5).abs() <= 1e-9);
    let path = dir.path().join("exact.json");
    sol.save(&path).unwrap();
    let loaded = ExactSolution::load(&path).unwrap();
    assert_eq!(sol.to_json_string(), loaded.to_json_string());
    for h in 0..3 {
        for s in 0..3 {
            assert_eq!(sol.v(h, s), loaded.v(h, s));
        }
    }
}

#[test]
fn generator_is_deterministic_and_density_aware() {
    let a = generate_random_game(9, 3, 2, 2, 4, 0.5).unwrap();
    let b = generate_random_game(9, 3, 2, 2, 4, 0.5).unwrap();
    assert_eq!(a.to_json_string(), b.to_json_string());
    let c = generate_random_game(10, 3, 2, 2, 4, 0.5).unwrap();
    assert_ne!(a.to_json_string(), c.to_json_string());
    let mut zeros = 0;
    let mut total = 0;
    for h in 0..4 {
        for s in 0..3 {
            for a_ in 0..2 {
                for b_ in 0..2 {
                    total += 1;
                    if a.reward(h, s, a_, b_) == 0.0 {
                        zeros += 1;
                    }
                }
            }
        }
    }
    let zero_frac = zeros as f64 / total as f64;
    assert!(zero_frac > 0.2 && zero_frac < 0.8, "density 0.5 gave zero fraction {zero_frac}");
}
