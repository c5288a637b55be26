//! Parametric point-scatterer models of the nine motion classes.
//!
//! Body coordinates: the subject stands at the origin facing +x, +y points
//! to the subject's left and +z is up. Lengths are for a 1.92 m subject and
//! scale with `subject_scale`. A radar at aspect `a` sits at
//! `(L cos a, L sin a, radar_height)`, so 0° looks at the subject's front and
//! 90° at the left side.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance at which scatterer amplitudes are specified, m.
pub const REFERENCE_DISTANCE: f64 = 1.2;

/// Height of the subject the body templates are drawn for, m.
pub const REFERENCE_HEIGHT: f64 = 1.92;

pub const DEFAULT_RADAR_HEIGHT: f64 = 1.2;

/// Instantaneous radar-relative state of one point scatterer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScattererState {
    /// Radial distance to the radar, m.
    pub range: f64,
    /// Rate of change of `range`, m/s.
    pub radial_velocity: f64,
    pub amplitude: f64,
}

impl ScattererState {
    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0) || !self.range.is_finite() {
            return Err(Error::Config(format!("scatterer range must be positive, got {}", self.range)));
        }
        if !(self.amplitude >= 0.0) || !self.radial_velocity.is_finite() {
            return Err(Error::Config(format!(
                "scatterer amplitude must be non-negative and velocity finite, got {} / {}",
                self.amplitude, self.radial_velocity
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Squat,
    WaveRightHand,
    RightHandVertical,
    CircleBothHands,
    CircleRightHand,
    Stand,
    Rotate,
    CircleLeftHand,
    LeftHandVertical,
}

impl MotionClass {
    pub const ALL: [MotionClass; 9] = [
        MotionClass::Squat,
        MotionClass::WaveRightHand,
        MotionClass::RightHandVertical,
        MotionClass::CircleBothHands,
        MotionClass::CircleRightHand,
        MotionClass::Stand,
        MotionClass::Rotate,
        MotionClass::CircleLeftHand,
        MotionClass::LeftHandVertical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Squat => "squat",
            MotionClass::WaveRightHand => "wave_right_hand",
            MotionClass::RightHandVertical => "right_hand_vertical",
            MotionClass::CircleBothHands => "circle_both_hands",
            MotionClass::CircleRightHand => "circle_right_hand",
            MotionClass::Stand => "stand",
            MotionClass::Rotate => "rotate",
            MotionClass::CircleLeftHand => "circle_left_hand",
            MotionClass::LeftHandVertical => "left_hand_vertical",
        }
    }

    pub fn roster() -> String {
        Self::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown motion class `{s}`; known classes: {}", Self::roster())))
    }
}

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

const X: Vec3 = [1.0, 0.0, 0.0];
const Y: Vec3 = [0.0, 1.0, 0.0];
const Z: Vec3 = [0.0, 0.0, 1.0];

/// Body-frame trajectory of one scatterer.
#[derive(Clone, Debug, PartialEq)]
pub enum Path {
    Static(Vec3),
    /// `center + dir * amplitude * sin(2πt/period + phase)`
    Oscillate {
        center: Vec3,
        dir: Vec3,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Point at `length` from `pivot`, swinging in the plane spanned by the
    /// horizontal unit vector `toward` and +z; angle 0 hangs straight down
    /// and positive angles swing toward `toward`.
    Pendulum {
        pivot: Vec3,
        toward: Vec3,
        length: f64,
        rest: f64,
        swing: f64,
        period: f64,
        phase: f64,
    },
    /// `center + radius (cos ψ u + sin ψ v)`, `ψ = 2πt/period + phase`.
    Circle {
        center: Vec3,
        u: Vec3,
        v: Vec3,
        radius: f64,
        period: f64,
        phase: f64,
    },
}

impl Path {
    /// Position and velocity at time `t`.
    pub fn kinematics(&self, t: f64) -> (Vec3, Vec3) {
        match *self {
            Path::Static(p) => (p, [0.0; 3]),
            Path::Oscillate {
                center,
                dir,
                amplitude,
                period,
                phase,
            } => {
                let w = TAU / period;
                let arg = w * t + phase;
                (add(center, scale(dir, amplitude * arg.sin())), scale(dir, amplitude * w * arg.cos()))
            }
            Path::Pendulum {
                pivot,
                toward,
                length,
                rest,
                swing,
                period,
                phase,
            } => {
                let w = TAU / period;
                let arg = w * t + phase;
                let theta = rest + swing * arg.sin();
                let dtheta = swing * w * arg.cos();
                let pos = add(pivot, add(scale(toward, length * theta.sin()), scale(Z, -length * theta.cos())));
                let vel = add(scale(toward, length * theta.cos() * dtheta), scale(Z, length * theta.sin() * dtheta));
                (pos, vel)
            }
            Path::Circle {
                center,
                u,
                v,
                radius,
                period,
                phase,
            } => {
                let w = TAU / period;
                let psi = w * t + phase;
                let pos = add(center, add(scale(u, radius * psi.cos()), scale(v, radius * psi.sin())));
                let vel = add(scale(u, -radius * w * psi.sin()), scale(v, radius * w * psi.cos()));
                (pos, vel)
            }
        }
    }

    fn jitter<R: Rng + ?Sized>(&mut self, rng: &mut R, spread: f64) {
        let mut f = || 1.0 + rng.random_range(-spread..spread);
        match self {
            Path::Static(_) => {}
            Path::Oscillate { amplitude, period, .. } => {
                *amplitude *= f();
                *period *= f();
            }
            Path::Pendulum { swing, period, .. } => {
                *swing *= f();
                *period *= f();
            }
            Path::Circle { radius, period, .. } => {
                *radius *= f();
                *period *= f();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyScatterer {
    pub name: &'static str,
    pub amplitude: f64,
    pub path: Path,
}

/// A labeled articulated target seen from one aspect.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionModel {
    pub class: MotionClass,
    pub scatterers: Vec<BodyScatterer>,
    pub aspect_deg: f64,
    pub subject_scale: f64,
    pub base_distance: f64,
    pub radar_height: f64,
    /// Trajectories are defined on `[0, valid_until]`; `None` means forever.
    pub valid_until: Option<f64>,
}

fn hand_pendulum(name: &'static str, side: f64, length: f64, rest: f64, swing: f64, period: f64, amp: f64) -> BodyScatterer {
    BodyScatterer {
        name,
        amplitude: amp,
        path: Path::Pendulum {
            pivot: [0.0, 0.22 * side, 1.5],
            toward: X,
            length,
            rest,
            swing,
            period,
            phase: 0.0,
        },
    }
}

fn body_template(class: MotionClass) -> Vec<BodyScatterer> {
    let torso = |p: Path| BodyScatterer {
        name: "torso",
        amplitude: 1.0,
        path: p,
    };
    let head = |p: Path| BodyScatterer {
        name: "head",
        amplitude: 0.35,
        path: p,
    };
    let still_torso = || torso(Path::Static([0.0, 0.0, 1.25]));
    let still_head = || head(Path::Static([0.0, 0.0, 1.75]));
    let circle = |name, center, u, v, radius, period, amp| BodyScatterer {
        name,
        amplitude: amp,
        path: Path::Circle {
            center,
            u,
            v,
            radius,
            period,
            phase: 0.0,
        },
    };
    match class {
        MotionClass::Squat => {
            let bob = |center: Vec3| Path::Oscillate {
                center,
                dir: Z,
                amplitude: 0.2,
                period: 2.2,
                phase: 0.0,
            };
            vec![
                torso(bob([0.0, 0.0, 1.05])),
                head(bob([0.0, 0.0, 1.55])),
                BodyScatterer {
                    name: "knees",
                    amplitude: 0.4,
                    path: Path::Oscillate {
                        center: [0.12, 0.0, 0.5],
                        dir: X,
                        amplitude: -0.1,
                        period: 2.2,
                        phase: 0.0,
                    },
                },
                BodyScatterer {
                    name: "right_hand",
                    amplitude: 0.25,
                    path: bob([0.35, -0.2, 1.1]),
                },
                BodyScatterer {
                    name: "left_hand",
                    amplitude: 0.25,
                    path: bob([0.35, 0.2, 1.1]),
                },
            ]
        }
        MotionClass::WaveRightHand => vec![
            still_torso(),
            still_head(),
            BodyScatterer {
                name: "right_hand",
                amplitude: 0.3,
                path: Path::Pendulum {
                    pivot: [0.1, -0.3, 1.35],
                    toward: scale(Y, -1.0),
                    length: 0.35,
                    rest: PI,
                    swing: 0.6,
                    period: 0.9,
                    phase: 0.0,
                },
            },
            BodyScatterer {
                name: "right_elbow",
                amplitude: 0.2,
                path: Path::Static([0.1, -0.3, 1.35]),
            },
        ],
        MotionClass::RightHandVertical => vec![
            still_torso(),
            still_head(),
            hand_pendulum("right_hand", -1.0, 0.65, 0.6, 0.7, 1.2, 0.3),
            hand_pendulum("right_elbow", -1.0, 0.3, 0.6, 0.7, 1.2, 0.2),
        ],
        MotionClass::CircleBothHands => vec![
            still_torso(),
            still_head(),
            circle("right_hand", [0.35, -0.22, 1.3], X, Z, 0.25, 1.6, 0.3),
            circle("left_hand", [0.35, 0.22, 1.3], X, Z, 0.25, 1.6, 0.3),
        ],
        MotionClass::CircleRightHand => vec![
            still_torso(),
            still_head(),
            circle("right_hand", [0.3, -0.25, 1.2], X, Y, 0.22, 1.3, 0.3),
            BodyScatterer {
                name: "left_hand",
                amplitude: 0.25,
                path: Path::Static([0.0, 0.28, 0.85]),
            },
        ],
        MotionClass::Stand => {
            let sway = |center: Vec3| Path::Oscillate {
                center,
                dir: X,
                amplitude: 0.015,
                period: 4.0,
                phase: 0.0,
            };
            vec![
                torso(sway([0.0, 0.0, 1.25])),
                head(sway([0.0, 0.0, 1.75])),
                BodyScatterer {
                    name: "right_hand",
                    amplitude: 0.25,
                    path: Path::Static([0.0, -0.28, 0.85]),
                },
                BodyScatterer {
                    name: "left_hand",
                    amplitude: 0.25,
                    path: Path::Static([0.0, 0.28, 0.85]),
                },
            ]
        }
        MotionClass::Rotate => {
            let spin = |name, phase: f64, radius, height, amp| BodyScatterer {
                name,
                amplitude: amp,
                path: Path::Circle {
                    center: [0.0, 0.0, height],
                    u: X,
                    v: Y,
                    radius,
                    period: 3.0,
                    phase,
                },
            };
            vec![
                spin("torso", 0.0, 0.12, 1.25, 1.0),
                still_head(),
                spin("right_shoulder", -PI / 2.0, 0.22, 1.5, 0.3),
                spin("left_shoulder", PI / 2.0, 0.22, 1.5, 0.3),
                spin("right_hand", -PI / 2.0, 0.3, 0.9, 0.25),
                spin("left_hand", PI / 2.0, 0.3, 0.9, 0.25),
            ]
        }
        MotionClass::CircleLeftHand => vec![
            still_torso(),
            still_head(),
            circle("left_hand", [0.15, 0.3, 1.35], Y, Z, 0.2, 1.0, 0.3),
            BodyScatterer {
                name: "right_hand",
                amplitude: 0.25,
                path: Path::Static([0.0, -0.28, 0.85]),
            },
        ],
        MotionClass::LeftHandVertical => vec![
            still_torso(),
            still_head(),
            hand_pendulum("left_hand", 1.0, 0.65, 0.3, 0.45, 0.8, 0.3),
            hand_pendulum("left_elbow", 1.0, 0.3, 0.3, 0.45, 0.8, 0.2),
        ],
    }
}

impl MotionModel {
    pub fn new(class: MotionClass, aspect_deg: f64, subject_scale: f64, base_distance: f64) -> Result<Self> {
        let model = Self {
            class,
            scatterers: body_template(class),
            aspect_deg: aspect_deg.rem_euclid(360.0),
            subject_scale,
            base_distance,
            radar_height: DEFAULT_RADAR_HEIGHT,
            valid_until: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..360.0).contains(&self.aspect_deg) {
            return Err(Error::Config(format!("aspect must lie in [0, 360), got {}", self.aspect_deg)));
        }
        if !(self.subject_scale > 0.0) || !(self.base_distance > 0.0) {
            return Err(Error::Config("subject scale and base distance must be positive".into()));
        }
        if self.scatterers.iter().any(|s| !(s.amplitude >= 0.0)) {
            return Err(Error::Config("scatterer amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    /// Randomizes periods, motion extents and per-scatterer amplitudes by up
    /// to `±spread` (relative), and all motion phases uniformly.
    pub fn with_variation<R: Rng + ?Sized>(mut self, rng: &mut R, spread: f64) -> Self {
        let phase = rng.random_range(0.0..TAU);
        for s in &mut self.scatterers {
            s.amplitude *= 1.0 + rng.random_range(-spread..spread);
        }
        // Replaying one stream for every path keeps linked limbs in step.
        let state: u64 = rng.random();
        for s in &mut self.scatterers {
            let mut local = ChaCha8Rng::seed_from_u64(state);
            s.path.jitter(&mut local, spread);
            match &mut s.path {
                Path::Oscillate { phase: p, .. } | Path::Pendulum { phase: p, .. } | Path::Circle { phase: p, .. } => {
                    *p += phase
                }
                Path::Static(_) => {}
            }
        }
        self
    }

    /// Radar position in body coordinates.
    pub fn radar_position(&self) -> Vec3 {
        let a = self.aspect_deg.to_radians();
        [self.base_distance * a.cos(), self.base_distance * a.sin(), self.radar_height]
    }

    /// Radar-relative state of every scatterer at time `t`.
    ///
    /// Velocities are projected onto each scatterer's line of sight, so a
    /// limb moving along +x is fully Doppler-visible at 0° and nearly
    /// invisible at 90°. Amplitudes fall off as `(1.2 m / base_distance)^2`,
    /// independently of aspect.
    pub fn states_at(&self, t: f64) -> Result<Vec<ScattererState>> {
        if let Some(end) = self.valid_until {
            if t < 0.0 || t > end {
                return Err(Error::Config(format!("trajectory undefined at t = {t} s (valid on [0, {end}])")));
            }
        }
        let radar = self.radar_position();
        let falloff = (REFERENCE_DISTANCE / self.base_distance).powi(2);
        self.scatterers
            .iter()
            .map(|s| {
                let (p, v) = s.path.kinematics(t);
                let p = scale(p, self.subject_scale);
                let v = scale(v, self.subject_scale);
                let rel = [p[0] - radar[0], p[1] - radar[1], p[2] - radar[2]];
                let range = dot(rel, rel).sqrt();
                let state = ScattererState {
                    range,
                    radial_velocity: dot(rel, v) / range,
                    amplitude: s.amplitude * self.subject_scale * falloff,
                };
                state.validate()?;
                Ok(state)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_round_trip() {
        for c in MotionClass::ALL {
            assert_eq!(c.name().parse::<MotionClass>().unwrap(), c);
        }
        let err = "jump".parse::<MotionClass>().unwrap_err().to_string();
        assert!(err.contains("squat") && err.contains("left_hand_vertical"));
    }

    #[test]
    fn velocities_match_position_derivative() {
        let model = MotionModel::new(MotionClass::Rotate, 30.0, 1.0, 2.4).unwrap();
        let h = 1e-6;
        for s in &model.scatterers {
            let (p0, v) = s.path.kinematics(0.37);
            let (p1, _) = s.path.kinematics(0.37 + h);
            for k in 0..3 {
                assert!(((p1[k] - p0[k]) / h - v[k]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn aspect_keeps_count_and_total_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for class in MotionClass::ALL {
            let base = MotionModel::new(class, 0.0, 0.92, 2.4).unwrap().with_variation(&mut rng, 0.1);
            let side = MotionModel {
                aspect_deg: 90.0,
                ..base.clone()
            };
            let a = base.states_at(1.3).unwrap();
            let b = side.states_at(1.3).unwrap();
            assert_eq!(a.len(), b.len());
            let total = |v: &[ScattererState]| v.iter().map(|s| s.amplitude).sum::<f64>();
            assert!((total(&a) - total(&b)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_swing_is_less_radial_from_the_side() {
        let front = MotionModel::new(MotionClass::RightHandVertical, 0.0, 1.0, 1.2).unwrap();
        let side = MotionModel::new(MotionClass::RightHandVertical, 90.0, 1.0, 1.2).unwrap();
        let hand = |m: &MotionModel| m.states_at(0.0).unwrap()[2].radial_velocity.abs();
        assert!(hand(&side) < 0.5 * hand(&front), "{} vs {}", hand(&side), hand(&front));
    }

    #[test]
    fn out_of_window_time_is_config_error() {
        let mut m = MotionModel::new(MotionClass::Stand, 0.0, 1.0, 1.2).unwrap();
        m.valid_until = Some(1.0);
        assert!(m.states_at(0.5).is_ok());
        assert!(matches!(m.states_at(1.5), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(MotionModel::new(MotionClass::Stand, 0.0, 0.0, 1.2).is_err());
        assert!(MotionModel::new(MotionClass::Stand, 0.0, 1.0, -1.0).is_err());
        assert_eq!(MotionModel::new(MotionClass::Stand, 450.0, 1.0, 1.2).unwrap().aspect_deg, 90.0);
    }
}
