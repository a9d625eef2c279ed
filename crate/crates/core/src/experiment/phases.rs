use crate::error::{Error, Result};
use crate::game::{EpisodeLedger, Turn};
use crate::gridworld::GridEnv;

/// Rule-based behavior label of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// Neither rule below fires.
    Explore = 1,
    /// Control's first turn ends in a dark room.
    DarkRoom = 2,
    /// As `DarkRoom`, with every door of that room locked.
    LockedIn = 3,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Explore => "1",
            Phase::DarkRoom => "2",
            Phase::LockedIn => "3",
        }
    }
}

/// Checks that the phase rules apply to `env`.
pub fn check_phase_env(env: &GridEnv) -> Result<()> {
    if !env.config().with_door_key {
        return Err(Error::Config("phase detection needs doors and a key".into()));
    }
    if env.dark_rooms().is_empty() {
        return Err(Error::Config("phase detection needs a dark room".into()));
    }
    Ok(())
}

/// Labels each episode by the state at the end of Control's first turn.
pub fn behavior_phases(env: &GridEnv, ledgers: &[EpisodeLedger]) -> Result<Vec<Phase>> {
    check_phase_env(env)?;
    let dark = env.dark_rooms();
    ledgers
        .iter()
        .map(|l| {
            let span = l
                .spans
                .iter()
                .find(|s| s.turn == Turn::Control)
                .ok_or_else(|| Error::Config("episode has no Control turn".into()))?;
            let last = l
                .steps
                .get(span.start + span.len - 1)
                .ok_or_else(|| Error::Config("episode ended before Control's first turn".into()))?;
            if !dark.contains(&last.room) {
                return Ok(Phase::Explore);
            }
            let doors = env.doors_of_room(last.room);
            let locked = !doors.is_empty() && doors.iter().all(|&d| last.lock_mask & (1 << d) != 0);
            Ok(if locked { Phase::LockedIn } else { Phase::DarkRoom })
        })
        .collect()
}

/// Majority label over parallel environments: the highest phase reached by
/// at least half of them.
pub fn majority_phase(labels: &[Phase]) -> Phase {
    let n = labels.len();
    for p in [Phase::LockedIn, Phase::DarkRoom] {
        if 2 * labels.iter().filter(|&&l| l >= p).count() >= n && n > 0 {
            return p;
        }
    }
    Phase::Explore
}

/// First episode whose label reaches `phase`.
pub fn onset(labels: &[Phase], phase: Phase) -> Option<usize> {
    labels.iter().position(|&l| l >= phase)
}
