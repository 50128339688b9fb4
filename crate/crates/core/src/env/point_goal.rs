use rand::{Rng as _, SeedableRng};

use super::{check_tag, Action, ActionKind, EnvSpec, Environment, SnapReader, StateSnapshot, Transition};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const BOUND: f64 = 1.0;

/// Point mass in `[-1, 1]^2` steering toward a goal.
///
/// Observation is `[x, y, goal_x, goal_y]`. An action `a` in `[-1, 1]^2` moves the point by
/// `step_size * a / max(1, |a|)`, clipped to the box. Sparse mode pays 1 once the point is
/// within `goal_radius` of the goal (ending the episode); dense mode pays `-distance` each
/// step and also ends on arrival.
#[derive(Debug, Clone)]
pub struct PointGoal {
    spec: EnvSpec,
    tag: String,
    step_size: f64,
    goal_radius: f64,
    dense: bool,
    pos: [f64; 2],
    goal: [f64; 2],
    t: usize,
    done: bool,
}

impl PointGoal {
    pub fn new(goal_radius: f64, step_size: f64, dense: bool, horizon: usize) -> Result<Self> {
        if !(goal_radius > 0.0) || !(step_size > 0.0) {
            return Err(Error::Config("goal radius and step size must be positive".into()));
        }
        let spec = EnvSpec {
            obs_dim: 4,
            action: ActionKind::Continuous {
                dim: 2,
                low: -1.0,
                high: 1.0,
            },
            horizon,
            binary_obs: false,
        };
        spec.validate()?;
        Ok(Self {
            spec,
            tag: format!("point_goal/r={goal_radius}/s={step_size}/d={dense}/h={horizon}"),
            step_size,
            goal_radius,
            dense,
            pos: [0.0; 2],
            goal: [0.5; 2],
            t: 0,
            done: false,
        })
    }

    pub fn distance(&self) -> f64 {
        ((self.pos[0] - self.goal[0]).powi(2) + (self.pos[1] - self.goal[1]).powi(2)).sqrt()
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }
}

impl Environment for PointGoal {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        loop {
            self.pos = [rng.random_range(-BOUND..BOUND), rng.random_range(-BOUND..BOUND)];
            self.goal = [rng.random_range(-BOUND..BOUND), rng.random_range(-BOUND..BOUND)];
            if self.distance() > self.goal_radius {
                break;
            }
        }
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        self.spec.check_action(action)?;
        let Action::Continuous(a) = action else { unreachable!() };
        let norm = (a[0] * a[0] + a[1] * a[1]).sqrt().max(1.0);
        for (p, ai) in self.pos.iter_mut().zip(a) {
            *p = (*p + self.step_size * ai / norm).clamp(-BOUND, BOUND);
        }
        self.t += 1;
        let d = self.distance();
        let terminal = d <= self.goal_radius;
        self.done = terminal || self.t >= self.spec.horizon;
        let reward = if self.dense {
            -d
        } else if terminal {
            1.0
        } else {
            0.0
        };
        Ok(Transition {
            observation: self.observe(),
            reward,
            done: self.done,
            terminal,
            success: terminal,
            snapshot: Some(self.snapshot()),
        })
    }

    fn snapshot(&self) -> StateSnapshot {
        let mut bytes = Vec::with_capacity(37);
        for v in self.pos.iter().chain(&self.goal) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
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
        let pos = [r.f64()?, r.f64()?];
        let goal = [r.f64()?, r.f64()?];
        let t = r.u32()? as usize;
        let done = r.bool()?;
        r.finish()?;
        if pos.iter().chain(&goal).any(|v| !v.is_finite() || v.abs() > BOUND) || t > self.spec.horizon {
            return Err(Error::Snapshot("point state out of bounds".into()));
        }
        self.pos = pos;
        self.goal = goal;
        self.t = t;
        self.done = done;
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.goal[0], self.goal[1]]
    }

    fn name(&self) -> &'static str {
        "point_goal"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_within_bounds() {
        let mut env = PointGoal::new(0.1, 0.1, false, 50).unwrap();
        for seed in 0..50 {
            let o = env.reset(seed);
            assert!(o.iter().all(|v| v.abs() <= BOUND));
            assert!(env.distance() > 0.1);
        }
    }

    #[test]
    fn step_toward_goal_shrinks_distance_by_step() {
        let mut env = PointGoal::new(0.05, 0.1, false, 50).unwrap();
        env.reset(3);
        // Pick a seed whose start is far enough that the move stays inside the box.
        let d0 = env.distance();
        assert!(d0 > 0.1);
        let dir = [(env.goal()[0] - env.position()[0]) / d0, (env.goal()[1] - env.position()[1]) / d0];
        let tr = env.step(&Action::Continuous(dir.to_vec())).unwrap();
        assert!((env.distance() - (d0 - 0.1)).abs() < 1e-12);
        assert_eq!(tr.reward, 0.0);
    }

    #[test]
    fn arrival_pays_and_terminates() {
        let mut env = PointGoal::new(0.1, 0.1, false, 50).unwrap();
        env.reset(1);
        let mut last = None;
        for _ in 0..50 {
            let d = env.distance();
            let dir = vec![(env.goal()[0] - env.position()[0]) / d, (env.goal()[1] - env.position()[1]) / d];
            let tr = env.step(&Action::Continuous(dir)).unwrap();
            let done = tr.done;
            last = Some(tr);
            if done {
                break;
            }
        }
        let tr = last.unwrap();
        assert!(tr.terminal && tr.success);
        assert_eq!(tr.reward, 1.0);
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let mut env = PointGoal::new(0.1, 0.1, false, 50).unwrap();
        env.reset(0);
        assert!(env.step(&Action::Continuous(vec![1.5, 0.0])).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
        assert!(env.step(&Action::Discrete(0)).is_err());
    }
}
