//! Room-level abstraction of a gridworld as a tabular BMDP.

use std::collections::HashMap;

use super::{Cell, GridEnv};
use crate::bmdp::TabularBMDP;
use crate::error::{Error, Result};

/// Abstract states allowed by [`GridEnv::to_tabular`].
pub const MAX_ABSTRACT_STATES: usize = 8;
/// Largest per-state observation support that is enumerated.
pub const MAX_EMISSION_SUPPORT: usize = 100_000;

/// Abstract actions.
pub const STAY: usize = 0;
pub const NEXT_ROOM: usize = 1;
pub const PREV_ROOM: usize = 2;
pub const TOGGLE_SWITCH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Abstraction {
    /// States are rooms, or (room, switch_on) pairs when the env has a switch.
    /// Each state emits the view from its room center, facing east.
    #[default]
    Room,
    /// As `Room`, with the top-left view cell replaced by the abstract state
    /// index so that emissions are disjoint by construction.
    RoomWithCue,
}

impl GridEnv {
    /// Number of abstract states of the room-level abstraction.
    pub fn n_abstract_states(&self) -> usize {
        self.config.n_rooms * if self.config.with_switch { 2 } else { 1 }
    }

    /// Index of the abstract state for `room` with the switch `on`
    /// (`on` is ignored without a switch).
    pub fn abstract_state(&self, room: usize, on: bool) -> usize {
        if self.config.with_switch {
            room * 2 + usize::from(!on)
        } else {
            room
        }
    }

    /// Whether the doorway between `room` and `room + 1` can be walked through
    /// at reset.
    fn rooms_connected(&self, room: usize) -> bool {
        let state = &self.state;
        let row = state.door_rows[room];
        let col = self.door_column(room);
        let walk = |r: usize, c: usize| self.walkable(state, r, c);
        walk(row, col) && walk(row, col - 1) && walk(row, col + 1)
    }

    /// Builds the room-level BMDP.
    ///
    /// Transitions follow room adjacency through walkable doorways; toggling
    /// only acts in the room holding the switch. Emissions are computed
    /// exactly: every noisy cell in view is independent and uniform over the
    /// color classes, so a state with `k` visible noisy cells emits
    /// `n_colors^k` equally likely observations.
    pub fn to_tabular(&self, abstraction: Abstraction) -> Result<TabularBMDP> {
        let n_rooms = self.config.n_rooms;
        let n_states = self.n_abstract_states();
        if n_states > MAX_ABSTRACT_STATES {
            return Err(Error::Abstraction(format!("{n_states} abstract states exceed {MAX_ABSTRACT_STATES}")));
        }
        let switches = if self.config.with_switch { vec![true, false] } else { vec![true] };
        let n_actions = if self.config.with_switch { 4 } else { 3 };
        let switch_room = self.switch_pos.map(|(_, c)| self.room_of_col(c));

        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for room in 0..n_rooms {
            for &on in &switches {
                let s = self.abstract_state(room, on);
                for a in 0..n_actions {
                    let (next_room, next_on) = match a {
                        NEXT_ROOM if room + 1 < n_rooms && self.rooms_connected(room) => (room + 1, on),
                        PREV_ROOM if room > 0 && self.rooms_connected(room - 1) => (room - 1, on),
                        TOGGLE_SWITCH if switch_room == Some(room) => (room, !on),
                        _ => (room, on),
                    };
                    transition[(s * n_actions + a) * n_states + self.abstract_state(next_room, next_on)] = 1.0;
                }
            }
        }

        let n_colors = self.config.n_colors();
        let rs = self.config.room_size;
        let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_states];
        for room in 0..n_rooms {
            for &on in &switches {
                let s = self.abstract_state(room, on);
                let mut view_state = self.state.clone();
                view_state.agent_pos = (rs.div_ceil(2), 1 + room * (rs + 1) + rs / 2);
                view_state.agent_dir = 0;
                view_state.switch_on.iter_mut().for_each(|x| *x = on);
                let mut template = self.view_template(&view_state);
                if abstraction == Abstraction::RoomWithCue {
                    template[0] = Some(s as u8);
                }
                let noisy: Vec<usize> = (0..template.len()).filter(|&i| template[i].is_none()).collect();
                let support = u32::try_from(noisy.len())
                    .ok()
                    .and_then(|k| n_colors.checked_pow(k))
                    .filter(|&n| n <= MAX_EMISSION_SUPPORT)
                    .ok_or_else(|| {
                        Error::Abstraction(format!("room {room} shows {} noisy cells; too many to enumerate", noisy.len()))
                    })?;
                let p = 1.0 / support as f64;
                let mut obs: Vec<u8> = template.iter().map(|c| c.unwrap_or(0)).collect();
                for code in 0..support {
                    let mut c = code;
                    for &i in &noisy {
                        obs[i] = super::class::COLOR_BASE + (c % n_colors) as u8;
                        c /= n_colors;
                    }
                    let next = index.len();
                    let o = *index.entry(obs.clone()).or_insert(next);
                    rows[s].push((o, p));
                }
            }
        }
        let n_obs = index.len();
        let mut emission = vec![0.0; n_states * n_obs];
        for (s, row) in rows.iter().enumerate() {
            for &(o, p) in row {
                emission[s * n_obs + o] += p;
            }
        }
        let mut init = vec![0.0; n_states];
        init[self.abstract_state(0, true)] = 1.0;
        TabularBMDP::new(n_states, n_actions, n_obs, transition, emission, init, 0.9).map_err(|e| match e {
            Error::Disjointness { a, b, obs } => Error::Abstraction(format!(
                "abstract states {a} and {b} both emit observation {obs}; use a cue to disambiguate"
            )),
            other => other,
        })
    }

    /// Number of noisy cells visible from the canonical viewpoint of `room`.
    pub fn noisy_cells_in_view(&self, room: usize) -> usize {
        let rs = self.config.room_size;
        let mut view_state = self.state.clone();
        view_state.agent_pos = (rs.div_ceil(2), 1 + room * (rs + 1) + rs / 2);
        view_state.agent_dir = 0;
        view_state.switch_on.iter_mut().for_each(|x| *x = true);
        let (r0, c0) = view_state.agent_pos;
        let h = self.config.view_size / 2;
        let mut k = 0;
        for r in r0.saturating_sub(h)..=(r0 + h).min(self.height - 1) {
            for c in c0.saturating_sub(h)..=(c0 + h).min(self.width - 1) {
                k += usize::from(self.cell_at(&view_state, r, c) == Cell::Noisy);
            }
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmdp::{emission_entropy_vector, OccupancyMeasure};
    use crate::gridworld::GridConfig;

    fn env(n_rooms: usize, with_switch: bool, fraction: f64) -> GridEnv {
        GridEnv::generate(GridConfig {
            n_rooms,
            room_size: 4,
            view_size: 5,
            noisy_cell_fraction: fraction,
            with_switch,
            seed: 3,
            ..GridConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn two_rooms_without_switch() {
        let b = env(2, false, 0.0).to_tabular(Abstraction::RoomWithCue).unwrap();
        assert_eq!(b.n_states(), 2);
        assert_eq!(b.n_actions(), 3);
        assert!(b.is_deterministic_edge(0, NEXT_ROOM, 1));
        assert!(b.is_deterministic_edge(1, PREV_ROOM, 0));
        assert!(b.is_deterministic_edge(1, NEXT_ROOM, 1));
    }

    #[test]
    fn four_room_chain_has_eight_states_with_switch() {
        let e = env(4, true, 0.3);
        let b = e.to_tabular(Abstraction::RoomWithCue).unwrap();
        assert_eq!(b.n_states(), 8);
        // Connectivity oracle: flood fill reaches every room, so the chain is connected.
        assert_eq!(e.reachable_rooms().len(), 4);
        for r in 0..3 {
            for on in [true, false] {
                assert!(b.is_deterministic_edge(e.abstract_state(r, on), NEXT_ROOM, e.abstract_state(r + 1, on)));
            }
        }
        assert!(b.is_deterministic_edge(e.abstract_state(0, true), TOGGLE_SWITCH, e.abstract_state(0, false)));
        assert!(b.is_deterministic_edge(e.abstract_state(1, true), TOGGLE_SWITCH, e.abstract_state(1, true)));
    }

    #[test]
    fn noisy_room_entropy_is_per_cell_sum() {
        let e = env(2, true, 0.3);
        let k = e.noisy_cells_in_view(0);
        assert!(k > 0);
        let b = e.to_tabular(Abstraction::RoomWithCue).unwrap();
        let h = emission_entropy_vector(&b);
        let expected = k as f64 * (e.config().n_colors() as f64).ln();
        assert!((h[e.abstract_state(0, true)] - expected).abs() < 1e-9);
        assert_eq!(h[e.abstract_state(0, false)], 0.0);
        assert_eq!(h[e.abstract_state(1, true)], 0.0);
    }

    #[test]
    fn identical_views_need_a_cue() {
        // Without noise, the dark room looks the same with the switch on or off.
        let e = env(2, true, 0.0);
        assert!(matches!(e.to_tabular(Abstraction::Room), Err(Error::Abstraction(_))));
        let b = e.to_tabular(Abstraction::RoomWithCue).unwrap();
        let occ = OccupancyMeasure::uniform(4);
        assert_eq!(crate::bmdp::observation_marginal(&b, &occ).len(), b.n_obs());
    }

    #[test]
    fn too_many_abstract_states() {
        let e = env(5, true, 0.0);
        assert!(matches!(e.to_tabular(Abstraction::RoomWithCue), Err(Error::Abstraction(_))));
    }
}
