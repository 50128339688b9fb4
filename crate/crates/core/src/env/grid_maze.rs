use rand::{Rng as _, SeedableRng};

use super::{check_tag, Action, ActionKind, EnvSpec, Environment, SnapReader, StateSnapshot, Transition};
use crate::error::{Error, Result};
use crate::rng::{splitmix64, Rng};

pub const SIZE: usize = 12;
const DIVIDER: usize = 6;

/// Two rooms on a 12x12 grid joined by a one-cell door.
///
/// The border and the dividing column `x = 6` are walls; room one spans `x = 1..=5` and room
/// two `x = 7..=10`. The door row and the goal cell (in room two) come from the layout seed,
/// episodes start at a uniformly drawn room-one cell. The observation is the flattened
/// 144-cell bitplane with walls and the agent set to 1. Reaching the goal pays 1 and ends the
/// episode. Actions: 0 up, 1 down, 2 left, 3 right.
#[derive(Debug, Clone)]
pub struct GridMaze {
    spec: EnvSpec,
    tag: String,
    walls: Vec<bool>,
    door: usize,
    goal: (usize, usize),
    pos: (usize, usize),
    t: usize,
    done: bool,
}

impl GridMaze {
    pub fn new(layout_seed: u64, horizon: usize) -> Result<Self> {
        let mut rng = Rng::seed_from_u64(splitmix64(layout_seed ^ 0x6d61_7a65));
        let door = rng.random_range(1..SIZE - 1);
        let goal = (rng.random_range(DIVIDER + 1..SIZE - 1), rng.random_range(1..SIZE - 1));
        let mut walls = vec![false; SIZE * SIZE];
        for y in 0..SIZE {
            for x in 0..SIZE {
                let border = x == 0 || y == 0 || x == SIZE - 1 || y == SIZE - 1;
                walls[y * SIZE + x] = border || (x == DIVIDER && y != door);
            }
        }
        let spec = EnvSpec {
            obs_dim: SIZE * SIZE,
            action: ActionKind::Discrete(4),
            horizon,
            binary_obs: true,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            tag: format!("grid_maze/seed={layout_seed}/h={horizon}"),
            walls,
            door,
            goal,
            pos: (1, 1),
            t: 0,
            done: false,
        })
    }

    pub fn door_row(&self) -> usize {
        self.door
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn is_wall(&self, x: usize, y: usize) -> bool {
        self.walls[y * SIZE + x]
    }

    /// True when the agent stands in room two (right of the divider).
    pub fn in_second_room(&self) -> bool {
        self.pos.0 > DIVIDER
    }
}

impl Environment for GridMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        self.pos = (rng.random_range(1..DIVIDER), rng.random_range(1..SIZE - 1));
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        self.spec.check_action(action)?;
        let Action::Discrete(a) = action else { unreachable!() };
        let (x, y) = self.pos;
        let next = match a {
            0 => (x, y - 1),
            1 => (x, y + 1),
            2 => (x - 1, y),
            _ => (x + 1, y),
        };
        if !self.is_wall(next.0, next.1) {
            self.pos = next;
        }
        self.t += 1;
        let terminal = self.pos == self.goal;
        self.done = terminal || self.t >= self.spec.horizon;
        Ok(Transition {
            observation: self.observe(),
            reward: if terminal { 1.0 } else { 0.0 },
            done: self.done,
            terminal,
            success: terminal,
            snapshot: Some(self.snapshot()),
        })
    }

    fn snapshot(&self) -> StateSnapshot {
        let mut bytes = Vec::with_capacity(13);
        bytes.extend_from_slice(&(self.pos.0 as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.pos.1 as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.t as u32).to_le_bytes());
        bytes.push(u8::from(self.done));
        StateSnapshot {
            env_tag: self.tag.clone(),
            bytes,
        }
    }

    fn reset_clock(&mut self) {
        self.t = 0;
    }

    fn restore(&mut self, snapshot: &StateSnapshot) -> Result<Vec<f64>> {
        check_tag(&self.tag, snapshot)?;
        let mut r = SnapReader::new(&snapshot.bytes);
        let pos = (r.u32()? as usize, r.u32()? as usize);
        let t = r.u32()? as usize;
        let done = r.bool()?;
        r.finish()?;
        if pos.0 >= SIZE || pos.1 >= SIZE || self.is_wall(pos.0, pos.1) || t > self.spec.horizon {
            return Err(Error::Snapshot("invalid maze state".into()));
        }
        self.pos = pos;
        self.t = t;
        self.done = done;
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let mut o: Vec<f64> = self.walls.iter().map(|&w| if w { 1.0 } else { 0.0 }).collect();
        o[self.pos.1 * SIZE + self.pos.0] = 1.0;
        o
    }

    fn name(&self) -> &'static str {
        "grid_maze"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut a = GridMaze::new(3, 100).unwrap();
        let mut b = GridMaze::new(3, 100).unwrap();
        assert_eq!(a.reset(11), b.reset(11));
        assert_eq!(a.observe().len(), 144);
        assert!(!a.in_second_room());
    }

    #[test]
    fn walls_block_and_door_passes() {
        let mut env = GridMaze::new(5, 1000).unwrap();
        env.reset(0);
        let door = env.door_row();
        env.restore(&StateSnapshot {
            env_tag: env.snapshot().env_tag,
            bytes: [5u32.to_le_bytes(), (door as u32).to_le_bytes(), 0u32.to_le_bytes()]
                .concat()
                .into_iter()
                .chain([0u8])
                .collect(),
        })
        .unwrap();
        env.step(&Action::Discrete(3)).unwrap();
        assert_eq!(env.position(), (6, door));
        env.step(&Action::Discrete(3)).unwrap();
        assert!(env.in_second_room());
        // Border wall above row 1 blocks movement.
        let mut e2 = GridMaze::new(5, 1000).unwrap();
        e2.reset(0);
        for _ in 0..20 {
            e2.step(&Action::Discrete(0)).unwrap();
        }
        assert_eq!(e2.position().1, 1);
    }
}
