//! Ground-vehicle simulator with switchable dynamics.
//!
//! The plant is a unicycle driven by commanded forward speed and turn rate,
//! plus an additive disturbance rate that depends on the active *mode*
//! (ground/vehicle condition). The controller never sees mode parameters;
//! it only ever observes their effect through realized states, which is what
//! makes the disturbance worth learning.
//!
//! State update over one step of length `dt`:
//!
//! ```text
//! x'     = x     + dt * (cos(theta) * v_cmd + g_x)
//! y'     = y     + dt * (sin(theta) * v_cmd + g_y)
//! theta' = wrap(theta + dt * (omega_cmd + g_theta))
//! ```
//!
//! where `g = disturbance_mean(mode, state, cmd) + noise`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::path::wrap_angle;

/// Control period of the simulated system [s] (10 Hz).
pub const CONTROL_DT: f64 = 0.1;

/// Planar vehicle pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    /// Position [m].
    pub x: f64,
    /// Position [m].
    pub y: f64,
    /// Heading, wrapped to `(-pi, pi]` [rad].
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        VehicleState { x, y, theta: wrap_angle(theta) }
    }
}

/// Commanded input for one control step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command {
    /// Forward speed command [m/s].
    pub v: f64,
    /// Turn rate command [rad/s].
    pub omega: f64,
}

impl Command {
    pub const ZERO: Command = Command { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Command { v, omega }
    }

    /// Clamp both channels into symmetric box bounds.
    pub fn clamped(self, v_max: f64, omega_max: f64) -> Self {
        Command {
            v: self.v.clamp(-v_max, v_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

/// Parameters of one dynamics mode.
///
/// `turn_gain` scales how much of the commanded turn rate the vehicle
/// actually realizes; `lateral_slip_gain` pushes the vehicle sideways in
/// turns; `drag_gain` bleeds forward speed. `noise_std` is the per-axis
/// standard deviation of the white disturbance noise (x, y [m/s] and
/// theta [rad/s] rates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub turn_gain: f64,
    #[serde(default)]
    pub lateral_slip_gain: f64,
    #[serde(default)]
    pub drag_gain: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: [f64; 3],
}

pub const DEFAULT_NOISE_STD: [f64; 3] = [0.02, 0.02, 0.03];

fn default_noise_std() -> [f64; 3] {
    DEFAULT_NOISE_STD
}

impl ModeConfig {
    /// Baseline vehicle on plain ground: commands realized one-to-one.
    pub fn nominal() -> Self {
        ModeConfig {
            turn_gain: 1.0,
            lateral_slip_gain: 0.0,
            drag_gain: 0.0,
            noise_std: DEFAULT_NOISE_STD,
        }
    }

    /// Degraded steering: only 70 percent of the commanded turn rate is
    /// realized (worn tracks / slick ground).
    pub fn altered() -> Self {
        ModeConfig {
            turn_gain: 0.7,
            lateral_slip_gain: 0.0,
            drag_gain: 0.0,
            noise_std: DEFAULT_NOISE_STD,
        }
    }

    /// Carrying a payload: slightly oversteery with lateral slip in turns
    /// and a touch of drag. Deliberately closer to nominal than `altered`.
    pub fn loaded() -> Self {
        ModeConfig {
            turn_gain: 1.15,
            lateral_slip_gain: 0.05,
            drag_gain: 0.02,
            noise_std: DEFAULT_NOISE_STD,
        }
    }

    /// The three built-in modes by name.
    pub fn builtin(name: &str) -> Option<ModeConfig> {
        match name {
            "nominal" => Some(ModeConfig::nominal()),
            "altered" => Some(ModeConfig::altered()),
            "loaded" => Some(ModeConfig::loaded()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.noise_std.iter().enumerate() {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(format!("noise_std[{i}] must be finite and nonnegative, got {s}"));
            }
        }
        for (name, v) in [
            ("turn_gain", self.turn_gain),
            ("lateral_slip_gain", self.lateral_slip_gain),
            ("drag_gain", self.drag_gain),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} must be finite, got {v}"));
            }
        }
        if self.turn_gain <= 0.0 {
            return Err(format!(
                "turn_gain must be positive (commanded yaw must not reverse), got {}",
                self.turn_gain
            ));
        }
        Ok(())
    }
}

/// Deterministic part of the disturbance rate `(g_x, g_y, g_theta)` for a
/// mode at a given state and command. Units: [m/s, m/s, rad/s].
pub fn disturbance_mean(mode: &ModeConfig, state: &VehicleState, cmd: &Command) -> [f64; 3] {
    let (sin_t, cos_t) = state.theta.sin_cos();
    // Sideways push proportional to cornering intensity, plus drag opposing
    // the direction of travel.
    let slip = mode.lateral_slip_gain * cmd.omega * cmd.v;
    let drag = mode.drag_gain * cmd.v;
    let g_x = slip * -sin_t + drag * -cos_t;
    let g_y = slip * cos_t + drag * -sin_t;
    let g_theta = (mode.turn_gain - 1.0) * cmd.omega;
    [g_x, g_y, g_theta]
}

/// Disturbance rate with sampled white noise. Always draws exactly three
/// standard normal variates so RNG consumption per step is independent of
/// the mode parameters.
pub fn sample_disturbance<R: Rng + ?Sized>(
    mode: &ModeConfig,
    state: &VehicleState,
    cmd: &Command,
    rng: &mut R,
) -> [f64; 3] {
    let mean = disturbance_mean(mode, state, cmd);
    let mut g = [0.0; 3];
    for i in 0..3 {
        let z: f64 = StandardNormal.sample(rng);
        g[i] = mean[i] + mode.noise_std[i] * z;
    }
    g
}

/// Disturbance-free unicycle step; this is the model the controller and the
/// experience store share, so observed disturbances are exactly what this
/// prediction misses.
pub fn unicycle_step(state: &VehicleState, cmd: &Command, dt: f64) -> VehicleState {
    VehicleState {
        x: state.x + dt * state.theta.cos() * cmd.v,
        y: state.y + dt * state.theta.sin() * cmd.v,
        theta: wrap_angle(state.theta + dt * cmd.omega),
    }
}

/// One plant step with a given disturbance rate.
pub fn step_with_disturbance(
    state: &VehicleState,
    cmd: &Command,
    g: &[f64; 3],
    dt: f64,
) -> VehicleState {
    VehicleState {
        x: state.x + dt * (state.theta.cos() * cmd.v + g[0]),
        y: state.y + dt * (state.theta.sin() * cmd.v + g[1]),
        theta: wrap_angle(state.theta + dt * (cmd.omega + g[2])),
    }
}

/// One plant step in a mode, sampling disturbance noise from `rng`.
pub fn step<R: Rng + ?Sized>(
    state: &VehicleState,
    cmd: &Command,
    mode: &ModeConfig,
    dt: f64,
    rng: &mut R,
) -> VehicleState {
    let g = sample_disturbance(mode, state, cmd, rng);
    step_with_disturbance(state, cmd, &g, dt)
}

/// One noise-free plant step in a mode (disturbance mean only).
pub fn step_noise_free(state: &VehicleState, cmd: &Command, mode: &ModeConfig, dt: f64) -> VehicleState {
    let g = disturbance_mean(mode, state, cmd);
    step_with_disturbance(state, cmd, &g, dt)
}
