use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bmdp::{
    check_cover_assumption, check_entropy_decomposition, check_surprise_bound, compute_metric, entropy,
    emission_entropy_vector, fixtures, maximize_concave_on_simplex, observation_marginal, rnd_stationary,
    solve_as_game, t_cover_check, total_variation, OccupancyMeasure, SimplexSolverOptions, TabularBMDP,
};
use crate::error::Result;

/// Largest tolerated gap between the softmax closed form and the numeric
/// maximizer, in total variation.
pub const RND_TV_TOL: f64 = 1e-6;
/// Tolerance for `KL = 0` when the model equals the observation marginal.
pub const EQUALITY_TOL: f64 = 1e-9;
/// Lower bound on the cross-entropy slack.
pub const KL_FLOOR: f64 = -1e-12;

/// Outcome of one named check on one fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub fixture: String,
    pub check: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TheoryReport {
    pub lines: Vec<CheckLine>,
}

impl TheoryReport {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.lines.iter().filter(|l| !l.pass)
    }

    fn push(&mut self, fixture: &str, check: &'static str, pass: bool, detail: String) {
        self.lines.push(CheckLine { fixture: fixture.to_string(), check, pass, detail });
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {:<14} {:<22} {}", if l.pass { "PASS" } else { "FAIL" }, l.fixture, l.check, l.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.lines.len(), failed)
    }
}

/// Maximizer of `<mu, h> + H(mu)` found numerically.
pub fn numeric_entropy_program(h: &[f64]) -> Vec<f64> {
    let f = |mu: &[f64]| mu.iter().zip(h).map(|(m, x)| m * x).sum::<f64>() + entropy(mu);
    let g = |mu: &[f64]| mu.iter().zip(h).map(|(&m, &x)| x - m.max(1e-300).ln() - 1.0).collect();
    maximize_concave_on_simplex(h.len(), f, g, &SimplexSolverOptions::default()).0
}

/// Decomposition, surprise-bound and closed-form checks shared by every fixture.
fn identity_checks(report: &mut TheoryReport, name: &str, bmdp: &TabularBMDP, rng: &mut ChaCha8Rng) -> Result<()> {
    let n = bmdp.n_states();
    let occ = fixtures::random_occupancy(rng, n);
    match check_entropy_decomposition(bmdp, &occ) {
        Ok(d) => report.push(name, "entropy_decomposition", true, format!("gap {:.2e}", d.gap)),
        Err(e) => report.push(name, "entropy_decomposition", false, e.to_string()),
    }

    let model = fixtures::random_distribution(rng, bmdp.n_obs());
    let smoothed: Vec<f64> = model.iter().map(|p| 0.5 * p + 0.5 / bmdp.n_obs() as f64).collect();
    let bound = check_surprise_bound(bmdp, &occ, &smoothed)?;
    let exact = check_surprise_bound(bmdp, &occ, &observation_marginal(bmdp, &occ))?;
    report.push(
        name,
        "surprise_bound",
        bound.kl >= KL_FLOOR && exact.kl.abs() < EQUALITY_TOL,
        format!("kl {:.3e}, kl at marginal {:.1e}", bound.kl, exact.kl),
    );

    let h = emission_entropy_vector(bmdp);
    let tv = total_variation(rnd_stationary(&h).weights(), &numeric_entropy_program(&h));
    report.push(name, "rnd_closed_form", tv < RND_TV_TOL, format!("tv {tv:.2e}"));
    Ok(())
}

/// Cover assumption, game solution and `T`-cover of its induced marginal.
fn cover_checks(report: &mut TheoryReport, name: &str, bmdp: &TabularBMDP, horizon: usize) -> Result<OccupancyMeasure> {
    let cover = check_cover_assumption(bmdp, horizon);
    report.push(name, "cover_assumption", cover.holds, format!("T={horizon}, {} violations", cover.violations.len()));
    let sol = solve_as_game(bmdp, horizon)?;
    let metric = compute_metric(bmdp, bmdp.n_states().max(horizon));
    let check = t_cover_check(&sol.induced_marginal, &metric, horizon);
    report.push(name, "t_cover", check.covered, format!("uncovered {:?}", check.uncovered_states));
    Ok(sol.induced_marginal)
}

/// Runs the exact theory checks on `n_fixtures` random fixtures and the
/// three hand-built ones. Random fixture `i` uses horizon `1 + i % 3`.
pub fn verify_theory(seed: u64, n_fixtures: usize) -> Result<TheoryReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = TheoryReport::default();
    for i in 0..n_fixtures {
        let horizon = 1 + i % 3;
        let bmdp = fixtures::random_cover_fixture(&mut rng, horizon)?;
        let name = format!("random_{i:03}");
        identity_checks(&mut report, &name, &bmdp, &mut rng)?;
        cover_checks(&mut report, &name, &bmdp, horizon)?;
    }

    let tv = fixtures::noisy_tv_chain();
    identity_checks(&mut report, "noisy_tv", &tv, &mut rng)?;
    let induced = cover_checks(&mut report, "noisy_tv", &tv, 1)?;
    let h = emission_entropy_vector(&tv);
    let noisy = (0..h.len()).max_by(|&a, &b| h[a].total_cmp(&h[b])).expect("nonempty");
    let (rnd_mass, as_mass) = (rnd_stationary(&h).weights()[noisy], induced.weights()[noisy]);
    report.push(
        "noisy_tv",
        "noisy_state_mass",
        rnd_mass > as_mass,
        format!("state {noisy}: rnd {rnd_mass:.4} vs game {as_mass:.4}"),
    );

    let rooms = fixtures::four_dark_room_chain();
    identity_checks(&mut report, "dark_chain", &rooms, &mut rng)?;
    cover_checks(&mut report, "dark_chain", &rooms, 2)?;

    // The counterexample must be rejected, naming the far state.
    let far = fixtures::dark_room_far_counterexample();
    identity_checks(&mut report, "counterexample", &far, &mut rng)?;
    let cover = check_cover_assumption(&far, 1);
    let states: Vec<usize> = cover.violations.iter().map(|v| v.state).collect();
    report.push(
        "counterexample",
        "violation_reported",
        !cover.holds && states.contains(&0),
        format!("T=1, violating states {states:?}"),
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let report = verify_theory(3, 6).unwrap();
        assert!(report.all_pass(), "{report}");
        assert!(report.lines.iter().any(|l| l.check == "noisy_state_mass"));
    }

    #[test]
    fn numeric_program_matches_softmax() {
        let h = [0.0, 1.0, 2.0f64.ln()];
        let tv = total_variation(rnd_stationary(&h).weights(), &numeric_entropy_program(&h));
        assert!(tv < 1e-7);
    }
}
