//! Static placement and random-waypoint movement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::phy::Position;

/// Position update period for moving nodes.
pub const MOBILITY_TICK: SimTime = SimTime::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Position {
        Position::new(rng.gen_range(0.0..=self.width), rng.gen_range(0.0..=self.height))
    }
}

impl Default for Area {
    fn default() -> Self {
        Area {
            width: 1500.0,
            height: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MobilityModel {
    #[default]
    Static,
    RandomWaypoint {
        /// m/s
        v_min: f64,
        /// m/s
        v_max: f64,
        /// seconds spent at each waypoint
        #[serde(default = "default_pause")]
        pause: f64,
    },
}

fn default_pause() -> f64 {
    10.0
}

impl MobilityModel {
    pub fn is_valid(&self) -> bool {
        match *self {
            MobilityModel::Static => true,
            MobilityModel::RandomWaypoint { v_min, v_max, pause } => {
                v_min >= 0.0 && v_min <= v_max && v_max.is_finite() && pause >= 0.0
            }
        }
    }

    pub fn is_mobile(&self) -> bool {
        matches!(self, MobilityModel::RandomWaypoint { v_max, .. } if *v_max > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Leg {
    Paused { until: SimTime },
    Moving { target: Position, speed: f64 },
    Parked,
}

/// Continuous-time random-waypoint trajectory, sampled on demand.
///
/// The walker starts with a pause at its initial position, then repeats:
/// uniform destination in the area, uniform speed in `[v_min, v_max]`,
/// straight-line travel, pause.
#[derive(Debug, Clone)]
pub struct WaypointWalker {
    area: Area,
    v_min: f64,
    v_max: f64,
    pause: SimTime,
    pos: Position,
    at: SimTime,
    leg: Leg,
}

impl WaypointWalker {
    pub fn new(model: MobilityModel, area: Area, start: Position) -> Self {
        let (v_min, v_max, pause) = match model {
            MobilityModel::Static => (0.0, 0.0, 0.0),
            MobilityModel::RandomWaypoint { v_min, v_max, pause } => (v_min, v_max, pause),
        };
        let leg = if v_max > 0.0 {
            Leg::Paused {
                until: SimTime::from_secs_f64(pause),
            }
        } else {
            Leg::Parked
        };
        WaypointWalker {
            area,
            v_min,
            v_max,
            pause: SimTime::from_secs_f64(pause),
            pos: area.clamp(start),
            at: SimTime::ZERO,
            leg,
        }
    }

    pub fn position(&self) -> Position {
        self.pos
    }

    pub fn is_paused(&self) -> bool {
        matches!(self.leg, Leg::Paused { .. } | Leg::Parked)
    }

    /// Advances the trajectory to `now` and returns the position there.
    pub fn advance<R: Rng>(&mut self, now: SimTime, rng: &mut R) -> Position {
        while self.at < now {
            match self.leg {
                Leg::Parked => self.at = now,
                Leg::Paused { until } => {
                    if until > now {
                        self.at = now;
                    } else {
                        self.at = until;
                        let target = self.area.sample(rng);
                        let speed = if self.v_max > self.v_min {
                            rng.gen_range(self.v_min..=self.v_max)
                        } else {
                            self.v_max
                        };
                        self.leg = if speed > 0.0 {
                            Leg::Moving { target, speed }
                        } else {
                            Leg::Parked
                        };
                    }
                }
                Leg::Moving { target, speed } => {
                    let budget = (now.0 - self.at.0) as f64 / 1e6;
                    let dist = self.pos.distance(target);
                    let need = dist / speed;
                    if need <= budget {
                        let arrive = self.at + SimTime((need * 1e6).round() as u64);
                        self.pos = target;
                        self.at = arrive.min(now);
                        self.leg = Leg::Paused {
                            until: arrive + self.pause,
                        };
                    } else {
                        let frac = budget * speed / dist;
                        self.pos = self.area.clamp(Position::new(
                            self.pos.x + (target.x - self.pos.x) * frac,
                            self.pos.y + (target.y - self.pos.y) * frac,
                        ));
                        self.at = now;
                    }
                }
            }
        }
        self.pos
    }
}
