//! Fixed 52-byte little-endian particle record.
//!
//! Layout: `x̂, ŷ, vx, vy, I0, weight` as f64 (48 bytes) followed by the tag
//! as u32 (4 bytes).

use super::{Particle, StateVector};
use thiserror::Error;

pub const PARTICLE_BYTES: usize = 52;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("particle payload of {len} bytes is not a multiple of {PARTICLE_BYTES}")]
pub struct WireError {
    pub len: usize,
}

impl Particle {
    pub fn to_bytes(&self) -> [u8; PARTICLE_BYTES] {
        let mut out = [0u8; PARTICLE_BYTES];
        let values = [
            self.state.x_hat,
            self.state.y_hat,
            self.state.vx,
            self.state.vy,
            self.state.i0,
            self.weight,
        ];
        for (chunk, v) in out.chunks_exact_mut(8).zip(values) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        out[48..].copy_from_slice(&self.tag.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; PARTICLE_BYTES]) -> Self {
        let f = |i: usize| f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        Self {
            state: StateVector::new(f(0), f(1), f(2), f(3), f(4)),
            weight: f(5),
            tag: u32::from_le_bytes(bytes[48..52].try_into().unwrap()),
        }
    }
}

pub fn encode_particles(particles: &[Particle]) -> Vec<u8> {
    let mut out = Vec::with_capacity(particles.len() * PARTICLE_BYTES);
    for p in particles {
        out.extend_from_slice(&p.to_bytes());
    }
    out
}

pub fn decode_particles(bytes: &[u8]) -> Result<Vec<Particle>, WireError> {
    if !bytes.len().is_multiple_of(PARTICLE_BYTES) {
        return Err(WireError { len: bytes.len() });
    }
    Ok(bytes
        .chunks_exact(PARTICLE_BYTES)
        .map(|c| Particle::from_bytes(c.try_into().unwrap()))
        .collect())
}
