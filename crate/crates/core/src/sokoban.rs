//! Single-box Sokoban on a bounded grid.
//!
//! Coordinates are `(row, col)` with `(0, 0)` at the top-left. The grid's
//! border is always wall. Observations list every entity as
//! `"<Kind> at (r, c)"` in row-major order.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentSpec};
use crate::episode::{EnvId, Observation, Simulator, Transition};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn step(self, dir: Dir) -> Pos {
        let (dr, dc) = dir.delta();
        Pos::new(self.row + dr, self.col + dc)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Move direction. Declaration order is the BFS tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Down, Dir::Left, Dir::Right];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
            Dir::Right => (0, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dir::Up => "up",
            Dir::Down => "down",
            Dir::Left => "left",
            Dir::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Dir> {
        Dir::ALL.into_iter().find(|d| s.trim().eq_ignore_ascii_case(d.as_str()))
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SokobanError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("no solvable layout found after {0} samples")]
    GenerationExhausted(u32),
    #[error("cannot parse observation: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SokobanState {
    pub height: i32,
    pub width: i32,
    pub walls: BTreeSet<Pos>,
    pub player: Pos,
    pub box_pos: Pos,
    pub goal: Pos,
    pub steps_taken: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveResult {
    pub state: SokobanState,
    pub moved: bool,
    pub pushed: bool,
}

impl SokobanState {
    pub fn new(
        height: i32,
        width: i32,
        walls: BTreeSet<Pos>,
        player: Pos,
        box_pos: Pos,
        goal: Pos,
    ) -> Result<Self, SokobanError> {
        let state = Self { height, width, walls, player, box_pos, goal, steps_taken: 0 };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), SokobanError> {
        let bad = |m: String| Err(SokobanError::InvalidState(m));
        if self.height < 3 || self.width < 3 {
            return bad(format!("grid {}x{} too small", self.height, self.width));
        }
        for r in 0..self.height {
            for c in 0..self.width {
                let p = Pos::new(r, c);
                if self.on_border(p) && !self.walls.contains(&p) {
                    return bad(format!("border cell {p} is not a wall"));
                }
            }
        }
        if let Some(w) = self.walls.iter().find(|w| !self.in_bounds(**w)) {
            return bad(format!("wall {w} out of bounds"));
        }
        for (name, p) in [("player", self.player), ("box", self.box_pos), ("goal", self.goal)] {
            if !self.in_bounds(p) || self.walls.contains(&p) {
                return bad(format!("{name} at {p} is not on a free cell"));
            }
        }
        if self.player == self.box_pos {
            return bad("player and box share a cell".into());
        }
        Ok(())
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.row >= 0 && p.row < self.height && p.col >= 0 && p.col < self.width
    }

    fn on_border(&self, p: Pos) -> bool {
        p.row == 0 || p.col == 0 || p.row == self.height - 1 || p.col == self.width - 1
    }

    /// Walls and out-of-bounds cells both block.
    pub fn blocked(&self, p: Pos) -> bool {
        !self.in_bounds(p) || self.walls.contains(&p)
    }

    pub fn apply_move(&self, dir: Dir) -> MoveResult {
        let target = self.player.step(dir);
        let unchanged = || MoveResult { state: self.clone(), moved: false, pushed: false };
        if self.blocked(target) {
            return unchanged();
        }
        if target == self.box_pos {
            let beyond = target.step(dir);
            if self.blocked(beyond) {
                return unchanged();
            }
            let mut state = self.clone();
            state.box_pos = beyond;
            state.player = target;
            return MoveResult { state, moved: true, pushed: true };
        }
        let mut state = self.clone();
        state.player = target;
        MoveResult { state, moved: true, pushed: false }
    }

    pub fn is_solved(&self) -> bool {
        self.box_pos == self.goal
    }

    /// Box off-goal with a wall on one vertical and one horizontal side.
    pub fn is_corner_deadlocked(&self) -> bool {
        if self.is_solved() {
            return false;
        }
        let b = self.box_pos;
        let vertical = self.blocked(b.step(Dir::Up)) || self.blocked(b.step(Dir::Down));
        let horizontal = self.blocked(b.step(Dir::Left)) || self.blocked(b.step(Dir::Right));
        vertical && horizontal
    }

    /// Row-major entity listing. A box on the goal renders as the box only;
    /// a player on the goal renders the goal mention followed by the player.
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let p = Pos::new(r, c);
                if self.walls.contains(&p) {
                    parts.push(format!("Wall at {p}"));
                } else if p == self.box_pos {
                    parts.push(format!("Box at {p}"));
                } else if p == self.goal && p == self.player {
                    parts.push(format!("Goal at {p}"));
                    parts.push(format!("Player at {p}"));
                } else if p == self.goal {
                    parts.push(format!("Goal at {p}"));
                } else if p == self.player {
                    parts.push(format!("Player at {p}"));
                }
            }
        }
        parts.join(" ")
    }

    /// Inverse of [`render`](Self::render). Text other than entity mentions
    /// (for instance distractor lines) is ignored.
    pub fn parse_render(text: &str) -> Result<SokobanState, SokobanError> {
        static MENTION: OnceLock<Regex> = OnceLock::new();
        let re = MENTION.get_or_init(|| Regex::new(r"(Wall|Goal|Box|Player) at \((\d+), (\d+)\)").unwrap());
        let mut walls = BTreeSet::new();
        let (mut player, mut box_pos, mut goal) = (None, None, None);
        let (mut max_r, mut max_c) = (-1, -1);
        for cap in re.captures_iter(text) {
            let p = Pos::new(
                cap[2].parse().map_err(|_| SokobanError::Parse(cap[0].to_string()))?,
                cap[3].parse().map_err(|_| SokobanError::Parse(cap[0].to_string()))?,
            );
            max_r = max_r.max(p.row);
            max_c = max_c.max(p.col);
            let slot = match &cap[1] {
                "Wall" => {
                    walls.insert(p);
                    continue;
                }
                "Goal" => &mut goal,
                "Box" => &mut box_pos,
                _ => &mut player,
            };
            if slot.replace(p).is_some() {
                return Err(SokobanError::Parse(format!("duplicate {} mention", &cap[1])));
            }
        }
        let player = player.ok_or_else(|| SokobanError::Parse("no player".into()))?;
        let box_pos = box_pos.ok_or_else(|| SokobanError::Parse("no box".into()))?;
        let goal = goal.unwrap_or(box_pos);
        SokobanState::new(max_r + 1, max_c + 1, walls, player, box_pos, goal)
    }

    /// Shortest action sequence that puts the box on the goal, by
    /// breadth-first search over (player, box) pairs.
    pub fn solve_bfs(&self) -> Option<Vec<Dir>> {
        if self.is_solved() {
            return Some(Vec::new());
        }
        let (h, w) = (self.height as usize, self.width as usize);
        let cells = h * w;
        let idx = |p: Pos| p.row as usize * w + p.col as usize;
        let pos = |i: usize| Pos::new((i / w) as i32, (i % w) as i32);
        let free: Vec<bool> = (0..cells).map(|i| !self.walls.contains(&pos(i))).collect();
        let goal = idx(self.goal);

        const UNSEEN: u32 = u32::MAX;
        // parent[state] = previous state index and the move taken (packed).
        let mut parent = vec![UNSEEN; cells * cells];
        let mut via = vec![0u8; cells * cells];
        let start = idx(self.player) * cells + idx(self.box_pos);
        parent[start] = start as u32;
        let mut queue = VecDeque::from([start]);

        let step_in = |i: usize, d: Dir| -> Option<usize> {
            let p = pos(i).step(d);
            (p.row >= 0 && p.col >= 0 && (p.row as usize) < h && (p.col as usize) < w && free[idx(p)]).then(|| idx(p))
        };

        while let Some(s) = queue.pop_front() {
            let (pl, bx) = (s / cells, s % cells);
            for (k, d) in Dir::ALL.into_iter().enumerate() {
                let Some(np) = step_in(pl, d) else { continue };
                let next = if np == bx {
                    match step_in(bx, d) {
                        Some(nb) => np * cells + nb,
                        None => continue,
                    }
                } else {
                    np * cells + bx
                };
                if parent[next] != UNSEEN {
                    continue;
                }
                parent[next] = s as u32;
                via[next] = k as u8;
                if next % cells == goal {
                    let mut plan = Vec::new();
                    let mut cur = next;
                    while cur != start {
                        plan.push(Dir::ALL[via[cur] as usize]);
                        cur = parent[cur] as usize;
                    }
                    plan.reverse();
                    return Some(plan);
                }
                queue.push_back(next);
            }
        }
        None
    }
}

/// Parameters for instance generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateParams {
    pub height: i32,
    pub width: i32,
    pub wall_density: f64,
    /// Reject instances whose optimal plan is longer than this.
    pub max_plan_len: Option<usize>,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self { height: 6, width: 6, wall_density: 0.1, max_plan_len: None }
    }
}

pub const MAX_GENERATION_SAMPLES: u32 = 10_000;

/// Rejection-samples a solvable layout; deterministic in `seed`.
pub fn generate(seed: u64, height: i32, width: i32, wall_density: f64) -> Result<SokobanState, SokobanError> {
    generate_with(seed, GenerateParams { height, width, wall_density, max_plan_len: None })
}

pub fn generate_with(seed: u64, params: GenerateParams) -> Result<SokobanState, SokobanError> {
    let GenerateParams { height, width, wall_density, max_plan_len } = params;
    if !(0.0..1.0).contains(&wall_density) {
        return Err(SokobanError::InvalidState(format!("wall density {wall_density} not in [0, 1)")));
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..MAX_GENERATION_SAMPLES {
        if height < 3 || width < 3 {
            continue;
        }
        let mut walls = BTreeSet::new();
        let mut free = Vec::new();
        for r in 0..height {
            for c in 0..width {
                let p = Pos::new(r, c);
                if r == 0 || c == 0 || r == height - 1 || c == width - 1 || rng.gen_bool(wall_density) {
                    walls.insert(p);
                } else {
                    free.push(p);
                }
            }
        }
        if free.len() < 3 {
            continue;
        }
        let picks: Vec<Pos> = free.choose_multiple(&mut rng, 3).copied().collect();
        let state =
            SokobanState { height, width, walls, player: picks[0], box_pos: picks[1], goal: picks[2], steps_taken: 0 };
        match state.solve_bfs() {
            Some(plan) if !plan.is_empty() && max_plan_len.is_none_or(|m| plan.len() <= m) => return Ok(state),
            _ => continue,
        }
    }
    Err(SokobanError::GenerationExhausted(MAX_GENERATION_SAMPLES))
}

pub const SOKOBAN_TASK: &str = "Push the box onto the goal.";

/// Sokoban wired into the episode runner.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SokobanEnv {
    pub state: SokobanState,
}

impl SokobanEnv {
    pub fn new(state: SokobanState) -> Self {
        Self { state }
    }
}

impl Simulator for SokobanEnv {
    fn env_id(&self) -> EnvId {
        EnvId::Sokoban
    }

    fn observe(&self) -> Observation {
        Observation::new(
            self.state.render(),
            Dir::ALL.iter().map(|d| d.as_str().to_string()).collect(),
            SOKOBAN_TASK.to_string(),
        )
    }

    fn augment(&self, obs: Observation, spec: &AugmentSpec, rng: &mut StreamRng) -> Observation {
        augment::augment_sokoban(&self.state, obs, spec, rng)
    }

    fn transition(&mut self, action: &str) -> Transition {
        let Some(dir) = Dir::parse(action) else {
            return Transition::Rejected;
        };
        let mut next = self.state.apply_move(dir).state;
        next.steps_taken += 1;
        self.state = next;
        if self.state.is_solved() {
            Transition::Success
        } else {
            Transition::Continue
        }
    }
}
