use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::{BoxDomain, Plant};
use crate::error::Error;

pub const GRAVITY: f64 = 9.81;
/// Earth's gravitational parameter, m³/s².
pub const MU_EARTH: f64 = 3.986e14;
/// Semi-major axis of the reference low Earth orbit, m.
pub const LEO_SEMI_MAJOR_AXIS: f64 = 6_793_137.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Pendulum,
    VanDerPol,
    CartPole,
    Hcw,
}

impl PlantKind {
    pub const ALL: [PlantKind; 4] = [PlantKind::Pendulum, PlantKind::VanDerPol, PlantKind::CartPole, PlantKind::Hcw];

    pub fn name(self) -> &'static str {
        match self {
            PlantKind::Pendulum => "pendulum",
            PlantKind::VanDerPol => "vanderpol",
            PlantKind::CartPole => "cartpole",
            PlantKind::Hcw => "hcw",
        }
    }
}

impl fmt::Display for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlantKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownPlant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// `ẋ1 = x2, ẋ2 = −(m g / l) sin x1 + u`
    Pendulum { mass: f64, length: f64, gravity: f64 },
    /// `ẋ1 = x2, ẋ2 = (1 − x1²) x2 + x1 + u`
    VanDerPol,
    /// State `[x, θ, ẋ, θ̇]`, force `u` on the cart.
    CartPole { cart_mass: f64, pole_mass: f64, length: f64, gravity: f64 },
    /// Relative motion in a circular orbit with mean motion `n`; state `[x, y, ẋ, ẏ]`.
    Hcw { mean_motion: f64 },
}

impl Dynamics {
    pub fn eval(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match *self {
            Dynamics::Pendulum { mass, length, gravity } => {
                out[0] = x[1];
                out[1] = -(mass * gravity / length) * x[0].sin() + u[0];
            }
            Dynamics::VanDerPol => {
                out[0] = x[1];
                out[1] = (1.0 - x[0] * x[0]) * x[1] + x[0] + u[0];
            }
            Dynamics::CartPole { cart_mass, pole_mass, length, gravity } => {
                let (s, c) = x[1].sin_cos();
                let thd = x[3];
                let den = cart_mass + pole_mass * s * s;
                out[0] = x[2];
                out[1] = thd;
                out[2] = (u[0] + pole_mass * s * (length * thd * thd - gravity * c)) / den;
                out[3] = (u[0] * c + pole_mass * length * thd * thd * c * s - (cart_mass + pole_mass) * gravity * s) / (length * den);
            }
            Dynamics::Hcw { mean_motion: n } => {
                out[0] = x[2];
                out[1] = x[3];
                out[2] = 3.0 * n * n * x[0] + 2.0 * n * x[3] + u[0];
                out[3] = -2.0 * n * x[2] + u[1];
            }
        }
    }
}

pub fn make_plant(kind: PlantKind) -> Plant {
    match kind {
        PlantKind::Pendulum => make_pendulum(),
        PlantKind::VanDerPol => make_vanderpol(),
        PlantKind::CartPole => make_cartpole(),
        PlantKind::Hcw => make_hcw(),
    }
}

pub fn make_pendulum() -> Plant {
    pendulum_with(1.0, 1.0, GRAVITY)
}

pub fn pendulum_with(mass: f64, length: f64, gravity: f64) -> Plant {
    Plant {
        kind: PlantKind::Pendulum,
        dynamics: Dynamics::Pendulum { mass, length, gravity },
        state_domain: BoxDomain::cube(2, 1.0),
        input_domain: BoxDomain::cube(1, 20.0),
        default_period: 0.005,
    }
}

pub fn make_vanderpol() -> Plant {
    Plant {
        kind: PlantKind::VanDerPol,
        dynamics: Dynamics::VanDerPol,
        state_domain: BoxDomain::cube(2, 10.0),
        input_domain: BoxDomain::cube(1, 20.0),
        default_period: 0.01,
    }
}

pub fn make_cartpole() -> Plant {
    Plant {
        kind: PlantKind::CartPole,
        dynamics: Dynamics::CartPole { cart_mass: 4.0, pole_mass: 1.0, length: 1.0, gravity: GRAVITY },
        state_domain: BoxDomain::symmetric(&[2.0, 0.8, 2.0, 2.0]),
        input_domain: BoxDomain::cube(1, 30.0),
        default_period: 0.005,
    }
}

pub fn hcw_mean_motion() -> f64 {
    (MU_EARTH / LEO_SEMI_MAJOR_AXIS.powi(3)).sqrt()
}

pub fn make_hcw() -> Plant {
    Plant {
        kind: PlantKind::Hcw,
        dynamics: Dynamics::Hcw { mean_motion: hcw_mean_motion() },
        state_domain: BoxDomain::cube(4, 10.0),
        input_domain: BoxDomain::cube(2, 30.0),
        default_period: 0.005,
    }
}
