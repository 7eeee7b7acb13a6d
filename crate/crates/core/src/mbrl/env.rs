//! Frictionless cart-pole with a continuous force input.
//!
//! Equations of motion (angle 0 = upright, positive angle leans towards +x):
//!
//! ```text
//! temp = (F + m_p l θ̇² sin θ) / (m_c + m_p)
//! θ̈    = (g sin θ − cos θ · temp) / (l (4/3 − m_p cos² θ / (m_c + m_p)))
//! ẍ    = temp − m_p l θ̈ cos θ / (m_c + m_p)
//! ```
//!
//! integrated with semi-implicit Euler: velocities first, then positions from the new
//! velocities. The cart is clipped to `|x| ≤ 10` with its velocity zeroed at the wall.
//! Reward is `cos θ − 0.001 x²` evaluated on the next state.

use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
/// Half the pole length.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const DT: f64 = 0.02;
pub const FORCE_BOUND: f64 = 10.0;
pub const POSITION_BOUND: f64 = 10.0;
pub const STEPS_PER_EPISODE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvState {
    pub cart_position: f64,
    pub cart_velocity: f64,
    pub pole_angle: f64,
    pub pole_angular_velocity: f64,
}

impl EnvState {
    pub fn new(cart_position: f64, cart_velocity: f64, pole_angle: f64, pole_angular_velocity: f64) -> Self {
        Self {
            cart_position,
            cart_velocity,
            pole_angle,
            pole_angular_velocity,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cart_position, self.cart_velocity, self.pole_angle, self.pole_angular_velocity]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Pole hanging straight down, at rest.
    pub fn hanging() -> Self {
        Self::new(0.0, 0.0, std::f64::consts::PI, 0.0)
    }
}

pub fn reward(state: &EnvState) -> f64 {
    state.pole_angle.cos() - 0.001 * state.cart_position * state.cart_position
}

pub fn clip_action(action: f64) -> f64 {
    action.clamp(-FORCE_BOUND, FORCE_BOUND)
}

/// Returns `(θ̈, ẍ)` for the given state and force.
pub fn accelerations(state: &EnvState, force: f64) -> (f64, f64) {
    let total = CART_MASS + POLE_MASS;
    let (sin, cos) = state.pole_angle.sin_cos();
    let omega = state.pole_angular_velocity;
    let temp = (force + POLE_MASS * POLE_HALF_LENGTH * omega * omega * sin) / total;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total));
    let x_acc = temp - POLE_MASS * POLE_HALF_LENGTH * theta_acc * cos / total;
    (theta_acc, x_acc)
}

/// Advances one time step. The action is clipped to the force bounds first.
pub fn cartpole_step(state: &EnvState, action: f64) -> (EnvState, f64) {
    let force = clip_action(action);
    let (theta_acc, x_acc) = accelerations(state, force);
    let mut cart_velocity = state.cart_velocity + DT * x_acc;
    let mut cart_position = state.cart_position + DT * cart_velocity;
    let pole_angular_velocity = state.pole_angular_velocity + DT * theta_acc;
    let pole_angle = state.pole_angle + DT * pole_angular_velocity;
    if cart_position.abs() > POSITION_BOUND {
        cart_position = cart_position.clamp(-POSITION_BOUND, POSITION_BOUND);
        cart_velocity = 0.0;
    }
    let next = EnvState {
        cart_position,
        cart_velocity,
        pole_angle,
        pole_angular_velocity,
    };
    (next, reward(&next))
}

/// Total mechanical energy, with the potential measured from the hanging position.
pub fn mechanical_energy(state: &EnvState) -> f64 {
    let total = CART_MASS + POLE_MASS;
    let (m, l) = (POLE_MASS, POLE_HALF_LENGTH);
    let (v, w) = (state.cart_velocity, state.pole_angular_velocity);
    let cos = state.pole_angle.cos();
    let kinetic = 0.5 * total * v * v + m * l * v * w * cos + 0.5 * (4.0 / 3.0) * m * l * l * w * w;
    kinetic + m * GRAVITY * l * (cos + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let (next, r) = cartpole_step(&EnvState::default(), 0.0);
        assert_eq!(next, EnvState::default());
        assert_eq!(r, 1.0);
    }

    #[test]
    fn hanging_rest() {
        let s = EnvState::hanging();
        let (theta_acc, _) = accelerations(&s, 0.0);
        assert!(theta_acc.abs() < 1e-12);
        let (_, r) = cartpole_step(&s, 0.0);
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_by_hand() {
        // Written out independently of `accelerations`.
        let th: f64 = 0.1;
        let total = 1.1;
        let temp = 0.0 / total;
        let alpha = (9.8 * th.sin() - th.cos() * temp) / (0.5 * (4.0 / 3.0 - 0.1 * th.cos().powi(2) / total));
        let w1 = 0.02 * alpha;
        let th1 = th + 0.02 * w1;
        let (next, _) = cartpole_step(&EnvState::new(0.0, 0.0, th, 0.0), 0.0);
        assert!((next.pole_angle - th1).abs() < 1e-12);
        assert!((next.pole_angular_velocity - w1).abs() < 1e-12);
        assert!(next.cart_velocity < 0.0, "the cart recoils from a falling pole");
    }

    #[test]
    fn deterministic() {
        let s = EnvState::new(0.3, -0.2, 2.0, 1.5);
        assert_eq!(cartpole_step(&s, 3.3), cartpole_step(&s, 3.3));
    }

    #[test]
    fn action_is_clipped() {
        let s = EnvState::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(cartpole_step(&s, 50.0), cartpole_step(&s, FORCE_BOUND));
    }

    #[test]
    fn wall_clips_position() {
        let s = EnvState::new(9.99, 5.0, 0.0, 0.0);
        let (next, _) = cartpole_step(&s, 10.0);
        assert_eq!(next.cart_position, POSITION_BOUND);
        assert_eq!(next.cart_velocity, 0.0);
    }

    #[test]
    fn energy_drift_is_small_without_force() {
        let mut s = EnvState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let e0 = mechanical_energy(&s);
        let mut worst: f64 = 0.0;
        for _ in 0..STEPS_PER_EPISODE {
            s = cartpole_step(&s, 0.0).0;
            worst = worst.max((mechanical_energy(&s) - e0).abs() / e0);
        }
        assert!(worst < 0.05, "relative drift {worst}");
    }
}
