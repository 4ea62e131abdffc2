use crate::particle::StateVector;
use crate::rng::RngStream;

/// Near-constant-velocity model noise levels; `dt` is one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_int: f64,
    pub dt: f64,
}

impl DynamicsParams {
    /// Defaults used by the tracking experiment: 0.5 px, 0.2 px/frame and 5% of `i0`.
    pub fn for_intensity(i0: f64) -> Self {
        Self {
            q_pos: 0.5,
            q_vel: 0.2,
            q_int: 0.05 * i0,
            dt: 1.0,
        }
    }

    pub fn noiseless() -> Self {
        Self {
            q_pos: 0.0,
            q_vel: 0.0,
            q_int: 0.0,
            dt: 1.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.q_pos, self.q_vel, self.q_int]
            .iter()
            .all(|q| q.is_finite() && *q >= 0.0)
            && self.dt.is_finite()
    }
}

/// One step of the near-constant-velocity model.
///
/// Five standard normals are drawn per call in the order x, y, vx, vy, I0,
/// even when a noise level is zero, so stream positions do not depend on the
/// configuration. The intensity is clamped at zero.
pub fn propagate(state: &StateVector, params: &DynamicsParams, rng: &mut RngStream) -> StateVector {
    let ex = rng.normal();
    let ey = rng.normal();
    let evx = rng.normal();
    let evy = rng.normal();
    let ei = rng.normal();
    StateVector {
        x_hat: state.x_hat + state.vx * params.dt + params.q_pos * ex,
        y_hat: state.y_hat + state.vy * params.dt + params.q_pos * ey,
        vx: state.vx + params.q_vel * evx,
        vy: state.vy + params.q_vel * evy,
        i0: (state.i0 + params.q_int * ei).max(0.0),
    }
}
