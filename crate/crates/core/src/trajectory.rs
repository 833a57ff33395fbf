//! Rest-to-rest motor trajectories with velocity and acceleration limits.
//!
//! Every motor gets its own trapezoidal (or triangular, for short moves)
//! profile; all three are then stretched in time to the slowest motor so they
//! start and stop together.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::kinematics::LegAngles;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryLimits {
    /// rad/s
    pub vel_max: f64,
    /// rad/s^2
    pub acc_max: f64,
}

impl Default for TrajectoryLimits {
    fn default() -> Self {
        Self { vel_max: 20.0 * PI / 9.0, acc_max: 5.0 * PI / 6.0 }
    }
}

/// One motor's unscaled profile.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Profile {
    start: f64,
    delta: f64,
    /// Duration of the accelerating (and decelerating) phase.
    t_acc: f64,
    /// Duration at cruise speed.
    t_cruise: f64,
    acc: f64,
}

impl Profile {
    fn new(start: f64, delta: f64, limits: &TrajectoryLimits) -> Self {
        let dist = delta.abs();
        let (v, a) = (limits.vel_max, limits.acc_max);
        if dist == 0.0 {
            return Self { start, delta, t_acc: 0.0, t_cruise: 0.0, acc: a };
        }
        if dist <= v * v / a {
            let t_acc = (dist / a).sqrt();
            Self { start, delta, t_acc, t_cruise: 0.0, acc: a }
        } else {
            Self { start, delta, t_acc: v / a, t_cruise: dist / v - v / a, acc: a }
        }
    }

    fn duration(&self) -> f64 {
        2.0 * self.t_acc + self.t_cruise
    }

    /// Signed displacement, velocity and acceleration at profile time `tau`.
    fn eval(&self, tau: f64) -> (f64, f64, f64) {
        let sign = self.delta.signum();
        let (a, ta, tc) = (self.acc, self.t_acc, self.t_cruise);
        let total = self.duration();
        let vp = a * ta;
        let (s, v, acc) = if tau <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if tau >= total {
            return (self.delta, 0.0, 0.0);
        } else if tau < ta {
            (0.5 * a * tau * tau, a * tau, a)
        } else if tau < ta + tc {
            (0.5 * a * ta * ta + vp * (tau - ta), vp, 0.0)
        } else {
            let rem = total - tau;
            (self.delta.abs() - 0.5 * a * rem * rem, a * rem, -a)
        };
        (sign * s, sign * v, sign * acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub from: LegAngles,
    pub to: LegAngles,
    pub duration: f64,
    pub limits: TrajectoryLimits,
    profiles: [Profile; 3],
}

pub fn plan_trajectory(from: &LegAngles, to: &LegAngles, limits: &TrajectoryLimits) -> TrajectoryPlan {
    let profiles: [Profile; 3] = std::array::from_fn(|i| Profile::new(from.0[i], to.0[i] - from.0[i], limits));
    let duration = profiles.iter().map(Profile::duration).fold(0.0, f64::max);
    TrajectoryPlan { from: *from, to: *to, duration, limits: *limits, profiles }
}

impl TrajectoryPlan {
    fn scaled(&self, i: usize, t: f64) -> (f64, f64, f64) {
        let p = &self.profiles[i];
        let own = p.duration();
        if own == 0.0 || self.duration == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let k = own / self.duration;
        let (s, v, a) = p.eval(t * k);
        (s, v * k, a * k * k)
    }

    /// Motor angles at time `t` after the start; exactly `to` from `duration` on.
    pub fn sample(&self, t: f64) -> LegAngles {
        if t >= self.duration {
            return self.to;
        }
        LegAngles(std::array::from_fn(|i| self.profiles[i].start + self.scaled(i, t).0))
    }

    pub fn velocity(&self, t: f64) -> [f64; 3] {
        std::array::from_fn(|i| self.scaled(i, t).1)
    }

    pub fn acceleration(&self, t: f64) -> [f64; 3] {
        std::array::from_fn(|i| self.scaled(i, t).2)
    }

    pub fn is_finished(&self, t: f64) -> bool {
        t >= self.duration
    }
}
