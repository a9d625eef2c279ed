mod common;

use common::*;

#[test]
fn clipped_surrogate_gradient_matches_finite_differences() {
    let (err, n_params) = ppo_fd_max_rel_err();
    assert_eq!(n_params, 23);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn infinite_clip_is_the_importance_weighted_objective() {
    let gap = unclipped_limit_gap();
    assert!(gap < 1e-10, "gap {gap:e}");
}

#[test]
fn reinforce_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let err = tabular_fd_max_rel_err(seed);
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn goal_room_is_learned() {
    let rates = train_goal_room(0, 200);
    assert!(first_success(&rates, 0.9).is_some(), "success rates {:?}", &rates[rates.len() - 10..]);
}
