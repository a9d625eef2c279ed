//! Procedurally generated stochastic gridworlds.
//!
//! Rooms are laid out left to right and joined by one-cell doorways. Even
//! rooms (including the start room 0) contain noisy cells that show a random
//! color each step while the switch is on; odd rooms are dark. The agent sees
//! an egocentric `view_size × view_size` window of cell classes, centered on
//! itself and rotated so that its heading points up.

mod tabular;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tabular::{Abstraction, MAX_ABSTRACT_STATES, NEXT_ROOM, PREV_ROOM, STAY, TOGGLE_SWITCH};

use crate::error::{Error, Result};

/// Observation classes. Classes `COLOR_BASE..n_cell_classes` are noisy colors.
pub mod class {
    pub const UNSEEN: u8 = 0;
    pub const WALL: u8 = 1;
    pub const FLOOR: u8 = 2;
    pub const DOOR_OPEN: u8 = 3;
    pub const DOOR_CLOSED: u8 = 4;
    pub const DOOR_LOCKED: u8 = 5;
    pub const KEY: u8 = 6;
    pub const SWITCH_OFF: u8 = 7;
    pub const SWITCH_ON: u8 = 8;
    pub const COLOR_BASE: u8 = 9;
}

/// Number of non-color classes.
pub const STATIC_CLASSES: usize = class::COLOR_BASE as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Toggle = 3,
    Pickup = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::TurnLeft, Action::TurnRight, Action::Forward, Action::Toggle, Action::Pickup];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL.get(index).copied().ok_or(Error::InvalidAction { action: index, n_actions: Self::COUNT })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_rooms: usize,
    /// Interior side length of each room.
    pub room_size: usize,
    pub view_size: usize,
    pub n_cell_classes: usize,
    /// Probability that an interior cell of a noisy room is noisy.
    pub noisy_cell_fraction: f64,
    pub with_switch: bool,
    pub with_door_key: bool,
    /// Redraw doorway positions at every reset.
    pub randomize_doors: bool,
    pub max_episode_steps: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_rooms: 4,
            room_size: 12,
            view_size: 7,
            n_cell_classes: 12,
            noisy_cell_fraction: 0.2,
            with_switch: true,
            with_door_key: false,
            randomize_doors: false,
            max_episode_steps: 128,
            seed: 0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_rooms == 0 {
            return fail("n_rooms must be positive".into());
        }
        if self.room_size < 3 {
            return fail(format!("room_size {} < 3 leaves no room for objects", self.room_size));
        }
        if self.view_size % 2 == 0 || self.view_size == 0 {
            return fail(format!("view_size {} must be odd", self.view_size));
        }
        if self.n_cell_classes < STATIC_CLASSES + 2 || self.n_cell_classes > u8::MAX as usize {
            return fail(format!(
                "n_cell_classes {} must leave at least two color classes after {STATIC_CLASSES} static ones",
                self.n_cell_classes
            ));
        }
        if !(0.0..=1.0).contains(&self.noisy_cell_fraction) {
            return fail(format!("noisy_cell_fraction {} outside [0, 1]", self.noisy_cell_fraction));
        }
        if self.max_episode_steps == 0 {
            return fail("max_episode_steps must be positive".into());
        }
        Ok(())
    }

    pub fn n_colors(&self) -> usize {
        self.n_cell_classes - STATIC_CLASSES
    }

    pub fn obs_cells(&self) -> usize {
        self.view_size * self.view_size
    }
}

/// Static cell contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Floor,
    Noisy,
    /// Doorway between room `i` and room `i + 1`; a door object when doors are enabled.
    Door(usize),
    Switch,
    Key,
}

/// One egocentric observation: `view_size²` class indices, row-major, with the
/// agent's heading pointing to row 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridObservation {
    view_size: usize,
    cells: Vec<u8>,
}

impl GridObservation {
    pub fn new(view_size: usize, cells: Vec<u8>) -> Self {
        assert_eq!(cells.len(), view_size * view_size);
        Self { view_size, cells }
    }

    pub fn view_size(&self) -> usize {
        self.view_size
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.view_size + col]
    }
}

/// Latent state of a gridworld episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub agent_pos: (usize, usize),
    /// 0 = east, 1 = south, 2 = west, 3 = north.
    pub agent_dir: u8,
    pub door_rows: Vec<usize>,
    pub door_open: Vec<bool>,
    pub door_locked: Vec<bool>,
    pub has_key: bool,
    pub key_on_floor: bool,
    pub switch_on: Vec<bool>,
    pub step_index: usize,
}

/// What a step changed besides the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: GridObservation,
    pub done: bool,
    pub switch_toggled: bool,
}

const DIRS: [(isize, isize); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

/// A generated gridworld and its current episode.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
    width: usize,
    height: usize,
    /// Static layout without doors (doorway cells hold `Wall` and are
    /// resolved through `state.door_rows`).
    cells: Vec<Cell>,
    switch_pos: Option<(usize, usize)>,
    key_pos: Option<(usize, usize)>,
    start: (usize, usize),
    layout_door_rows: Vec<usize>,
    state: GridState,
    rng: ChaCha8Rng,
    active: bool,
}

impl GridEnv {
    /// Builds the layout for `config`. Same seed, same layout.
    pub fn generate(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let rs = config.room_size;
        let width = config.n_rooms * (rs + 1) + 1;
        let height = rs + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut cells = vec![Cell::Wall; width * height];
        for r in 0..config.n_rooms {
            let c0 = 1 + r * (rs + 1);
            for row in 1..=rs {
                for col in c0..c0 + rs {
                    cells[row * width + col] = Cell::Floor;
                }
            }
        }
        let start = ((rs + 1) / 2, 1 + rs / 2);
        let switch_pos = config.with_switch.then(|| (1, 1 + rng.random_range(1..rs - 1)));
        let key_pos = config.with_door_key.then(|| (rs, 1 + rng.random_range(1..rs - 1)));
        for pos in [switch_pos, key_pos].into_iter().flatten() {
            cells[pos.0 * width + pos.1] = if Some(pos) == switch_pos { Cell::Switch } else { Cell::Key };
        }

        for r in (0..config.n_rooms).step_by(2) {
            let c0 = 1 + r * (rs + 1);
            for row in 1..=rs {
                for col in c0..c0 + rs {
                    let cell = &mut cells[row * width + col];
                    let noisy = rng.random_bool(config.noisy_cell_fraction);
                    if *cell == Cell::Floor && (row, col) != start && noisy {
                        *cell = Cell::Noisy;
                    }
                }
            }
        }
        let layout_door_rows: Vec<usize> = (0..config.n_rooms - 1).map(|_| rng.random_range(1..=rs)).collect();

        let n_doors = config.n_rooms - 1;
        let state = GridState {
            agent_pos: start,
            agent_dir: 0,
            door_rows: layout_door_rows.clone(),
            door_open: vec![true; n_doors],
            door_locked: vec![false; n_doors],
            has_key: false,
            key_on_floor: key_pos.is_some(),
            switch_on: vec![true; usize::from(switch_pos.is_some())],
            step_index: 0,
        };
        Ok(Self {
            config,
            width,
            height,
            cells,
            switch_pos,
            key_pos,
            start,
            layout_door_rows,
            state,
            rng,
            active: false,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_actions(&self) -> usize {
        Action::COUNT
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn switch_pos(&self) -> Option<(usize, usize)> {
        self.switch_pos
    }

    pub fn key_pos(&self) -> Option<(usize, usize)> {
        self.key_pos
    }

    fn door_col(&self, door: usize) -> usize {
        (door + 1) * (self.config.room_size + 1)
    }

    /// Cell contents at `(row, col)` in `state`, with doors resolved.
    pub fn cell_at(&self, state: &GridState, row: usize, col: usize) -> Cell {
        let rs1 = self.config.room_size + 1;
        if col % rs1 == 0 && col > 0 && col < self.width - 1 {
            let door = col / rs1 - 1;
            if state.door_rows[door] == row {
                return Cell::Door(door);
            }
        }
        match self.cells[row * self.width + col] {
            Cell::Key if !state.key_on_floor => Cell::Floor,
            c => c,
        }
    }

    /// Whether room `room` contains noisy cells.
    pub fn is_noisy_room(&self, room: usize) -> bool {
        let rs = self.config.room_size;
        let c0 = 1 + room * (rs + 1);
        (1..=rs).any(|row| (c0..c0 + rs).any(|col| self.cells[row * self.width + col] == Cell::Noisy))
    }

    /// Rooms without noisy cells.
    pub fn dark_rooms(&self) -> Vec<usize> {
        (0..self.config.n_rooms).filter(|&r| !self.is_noisy_room(r)).collect()
    }

    /// Index of the room containing `col` (doorways belong to the left room).
    pub fn room_of_col(&self, col: usize) -> usize {
        (col.saturating_sub(1) / (self.config.room_size + 1)).min(self.config.n_rooms - 1)
    }

    pub fn room_index(&self, state: &GridState) -> usize {
        self.room_of_col(state.agent_pos.1)
    }

    /// Doors on the boundary of `room`.
    pub fn doors_of_room(&self, room: usize) -> Vec<usize> {
        let n_doors = self.config.n_rooms - 1;
        [room.checked_sub(1), (room < n_doors).then_some(room)].into_iter().flatten().collect()
    }

    fn walkable(&self, state: &GridState, row: usize, col: usize) -> bool {
        match self.cell_at(state, row, col) {
            Cell::Floor | Cell::Noisy => true,
            Cell::Door(d) => !self.config.with_door_key || state.door_open[d],
            Cell::Wall | Cell::Switch | Cell::Key => false,
        }
    }

    fn front(&self, state: &GridState) -> Option<(usize, usize)> {
        let (dr, dc) = DIRS[state.agent_dir as usize];
        let r = state.agent_pos.0.checked_add_signed(dr)?;
        let c = state.agent_pos.1.checked_add_signed(dc)?;
        (r < self.height && c < self.width).then_some((r, c))
    }

    /// Starts an episode. Per-episode randomness (doorway rows when
    /// `randomize_doors` is set, and all observation noise) comes from `episode_seed`.
    pub fn reset(&mut self, episode_seed: u64) -> GridObservation {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed);
        let n_doors = self.config.n_rooms - 1;
        let door_rows = if self.config.randomize_doors {
            (0..n_doors).map(|_| self.rng.random_range(1..=self.config.room_size)).collect()
        } else {
            self.layout_door_rows.clone()
        };
        self.state = GridState {
            agent_pos: self.start,
            agent_dir: 0,
            door_rows,
            door_open: vec![true; n_doors],
            door_locked: vec![false; n_doors],
            has_key: false,
            key_on_floor: self.key_pos.is_some(),
            switch_on: vec![true; usize::from(self.switch_pos.is_some())],
            step_index: 0,
        };
        self.active = true;
        self.observe()
    }

    /// Applies `action`. The latent transition is deterministic; only noisy
    /// cells add randomness to the returned observation.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if !self.active {
            return Err(Error::EpisodeEnded { steps: self.state.step_index });
        }
        let mut switch_toggled = false;
        match action {
            Action::TurnLeft => self.state.agent_dir = (self.state.agent_dir + 3) % 4,
            Action::TurnRight => self.state.agent_dir = (self.state.agent_dir + 1) % 4,
            Action::Forward => {
                if let Some((r, c)) = self.front(&self.state) {
                    if self.walkable(&self.state, r, c) {
                        self.state.agent_pos = (r, c);
                    }
                }
            }
            Action::Toggle => {
                if let Some((r, c)) = self.front(&self.state) {
                    match self.cell_at(&self.state, r, c) {
                        Cell::Switch => {
                            self.state.switch_on[0] = !self.state.switch_on[0];
                            switch_toggled = true;
                        }
                        Cell::Door(d) if self.config.with_door_key => {
                            let s = &mut self.state;
                            if s.door_locked[d] {
                                if s.has_key {
                                    s.door_locked[d] = false;
                                    s.door_open[d] = true;
                                }
                            } else if s.door_open[d] {
                                s.door_open[d] = false;
                            } else if s.has_key {
                                s.door_locked[d] = true;
                            } else {
                                s.door_open[d] = true;
                            }
                        }
                        _ => {}
                    }
                }
            }
            Action::Pickup => {
                if let Some((r, c)) = self.front(&self.state) {
                    if self.cell_at(&self.state, r, c) == Cell::Key {
                        self.state.key_on_floor = false;
                        self.state.has_key = true;
                    }
                }
            }
        }
        self.state.step_index += 1;
        let done = self.state.step_index >= self.config.max_episode_steps;
        if done {
            self.active = false;
        }
        Ok(StepResult { obs: self.observe(), done, switch_toggled })
    }

    fn lights_on(&self, state: &GridState) -> bool {
        state.switch_on.first().copied().unwrap_or(true)
    }

    /// Class of a world cell, or `None` for noisy cells whose lights are on.
    fn static_class(&self, state: &GridState, row: usize, col: usize) -> Option<u8> {
        Some(match self.cell_at(state, row, col) {
            Cell::Wall => class::WALL,
            Cell::Floor => class::FLOOR,
            Cell::Noisy => {
                if self.lights_on(state) {
                    return None;
                }
                class::FLOOR
            }
            Cell::Door(d) => {
                if !self.config.with_door_key || state.door_open[d] {
                    class::DOOR_OPEN
                } else if state.door_locked[d] {
                    class::DOOR_LOCKED
                } else {
                    class::DOOR_CLOSED
                }
            }
            Cell::Switch => {
                if self.lights_on(state) {
                    class::SWITCH_ON
                } else {
                    class::SWITCH_OFF
                }
            }
            Cell::Key => class::KEY,
        })
    }

    /// World coordinates of view cell `(i, j)` for an agent at `pos` facing `dir`.
    fn view_to_world(&self, pos: (usize, usize), dir: u8, i: usize, j: usize) -> Option<(usize, usize)> {
        let c = (self.config.view_size / 2) as isize;
        let fwd = c - i as isize;
        let right = j as isize - c;
        let (fr, fc) = DIRS[dir as usize];
        let (rr, rc) = DIRS[(dir as usize + 1) % 4];
        let r = pos.0 as isize + fwd * fr + right * rr;
        let col = pos.1 as isize + fwd * fc + right * rc;
        (r >= 0 && col >= 0 && (r as usize) < self.height && (col as usize) < self.width)
            .then_some((r as usize, col as usize))
    }

    /// The view from `state` with noisy cells left as `None`.
    pub(crate) fn view_template(&self, state: &GridState) -> Vec<Option<u8>> {
        let v = self.config.view_size;
        let mut out = Vec::with_capacity(v * v);
        for i in 0..v {
            for j in 0..v {
                out.push(match self.view_to_world(state.agent_pos, state.agent_dir, i, j) {
                    Some((r, c)) => self.static_class(state, r, c),
                    None => Some(class::UNSEEN),
                });
            }
        }
        out
    }

    fn observe(&mut self) -> GridObservation {
        let template = self.view_template(&self.state);
        let n_colors = self.config.n_colors() as u8;
        let cells = template
            .into_iter()
            .map(|c| c.unwrap_or_else(|| class::COLOR_BASE + self.rng.random_range(0..n_colors)))
            .collect();
        GridObservation::new(self.config.view_size, cells)
    }

    /// Rooms reachable from the start cell, with all doors treated as open.
    pub fn reachable_rooms(&self) -> Vec<usize> {
        let mut open = self.state.clone();
        open.door_open.iter_mut().for_each(|d| *d = true);
        open.door_locked.iter_mut().for_each(|d| *d = false);
        let mut seen = vec![false; self.width * self.height];
        let mut stack = vec![self.start];
        seen[self.start.0 * self.width + self.start.1] = true;
        let mut rooms = vec![false; self.config.n_rooms];
        while let Some((r, c)) = stack.pop() {
            rooms[self.room_of_col(c)] = true;
            for (dr, dc) in DIRS {
                let (Some(nr), Some(nc)) = (r.checked_add_signed(dr), c.checked_add_signed(dc)) else {
                    continue;
                };
                if nr < self.height && nc < self.width && !seen[nr * self.width + nc] && self.walkable(&open, nr, nc) {
                    seen[nr * self.width + nc] = true;
                    stack.push((nr, nc));
                }
            }
        }
        (0..self.config.n_rooms).filter(|&r| rooms[r]).collect()
    }

    /// Plain-text layout, one character per cell:
    /// `#` wall, `.` floor, `~` noisy, `/` open door, `+` closed door,
    /// `L` locked door, `K` key, `S`/`s` switch on/off, `>v<^` agent.
    pub fn layout_dump(&self) -> String {
        let s = &self.state;
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = if (r, c) == s.agent_pos {
                    ['>', 'v', '<', '^'][s.agent_dir as usize]
                } else {
                    match self.cell_at(s, r, c) {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Noisy => '~',
                        Cell::Door(d) => {
                            if !self.config.with_door_key || s.door_open[d] {
                                '/'
                            } else if s.door_locked[d] {
                                'L'
                            } else {
                                '+'
                            }
                        }
                        Cell::Key => 'K',
                        Cell::Switch => {
                            if self.lights_on(s) {
                                'S'
                            } else {
                                's'
                            }
                        }
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Picks a uniformly random action; used by random-policy baselines.
    pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
        *Action::ALL.choose(rng).expect("nonempty")
    }

    #[cfg(test)]
    pub(crate) fn state_mut(&mut self) -> &mut GridState {
        &mut self.state
    }

    pub(crate) fn door_column(&self, door: usize) -> usize {
        self.door_col(door)
    }
}
