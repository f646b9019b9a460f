//! Social force stepper for open environments: goal attraction plus pairwise
//! exponential repulsion.

use crate::error::{Error, Result};
use crate::math::Vec2;

#[derive(Debug, Clone, Copy)]
pub struct SfmParams {
    /// Relaxation time of the goal attraction term, seconds.
    pub tau: f64,
    /// Repulsion amplitude, m/s^2.
    pub repulsion_a: f64,
    /// Repulsion range, meters.
    pub repulsion_b: f64,
    /// Agent body radius, meters.
    pub radius: f64,
    pub v_max: f64,
    pub dt: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        SfmParams {
            tau: 0.5,
            repulsion_a: 2.0,
            repulsion_b: 0.3,
            radius: 0.3,
            v_max: 2.5,
            dt: 0.2,
        }
    }
}

/// Acceleration on one agent given its preferred velocity and the positions
/// of all agents (snapshot semantics: every agent sees the same tick).
pub fn sfm_acceleration(
    index: usize,
    positions: &[Vec2],
    velocities: &[Vec2],
    pref_velocity: Vec2,
    params: &SfmParams,
) -> Vec2 {
    let p = positions[index];
    let mut acc = (pref_velocity - velocities[index]) / params.tau;
    let r_sum = 2.0 * params.radius;
    for j in 0..positions.len() {
        if j == index {
            continue;
        }
        let diff = p - positions[j];
        let dist = diff.norm();
        if dist < 1e-9 {
            continue;
        }
        let magnitude = params.repulsion_a * ((r_sum - dist) / params.repulsion_b).exp();
        acc += diff / dist * magnitude;
    }
    acc
}

/// Advance all agents one step: integrate accelerations, clip speeds, move.
/// Returns the new (velocity, position) pairs.
pub fn sfm_step(
    positions: &[Vec2],
    velocities: &[Vec2],
    pref_velocities: &[Vec2],
    params: &SfmParams,
    tick: u64,
) -> Result<Vec<(Vec2, Vec2)>> {
    let mut out = Vec::with_capacity(positions.len());
    for i in 0..positions.len() {
        let acc = sfm_acceleration(i, positions, velocities, pref_velocities[i], params);
        if !acc.is_finite() {
            return Err(Error::SimNonFinite {
                tick,
                agent: i as u64,
            });
        }
        let v = (velocities[i] + acc * params.dt).clamp_norm(params.v_max);
        let p = positions[i] + v * params.dt;
        out.push((v, p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_term_magnitude_from_rest() {
        // Single agent at rest, goal straight ahead: |a| = v_pref / tau.
        let params = SfmParams::default();
        let acc = sfm_acceleration(
            0,
            &[Vec2::ZERO],
            &[Vec2::ZERO],
            Vec2::new(1.3, 0.0),
            &params,
        );
        assert!((acc.norm() - 1.3 / 0.5).abs() < 1e-12);
        assert!((acc.x - 2.6).abs() < 1e-12);
    }

    #[test]
    fn zero_force_at_goal() {
        let params = SfmParams::default();
        let acc = sfm_acceleration(0, &[Vec2::ZERO], &[Vec2::ZERO], Vec2::ZERO, &params);
        assert_eq!(acc, Vec2::ZERO);
    }

    #[test]
    fn head_on_pair_stays_mirror_symmetric() {
        let params = SfmParams::default();
        let mut positions = vec![Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0)];
        let mut velocities = vec![Vec2::ZERO, Vec2::ZERO];
        for tick in 0..200 {
            let pref = vec![Vec2::new(1.3, 0.0), Vec2::new(-1.3, 0.0)];
            let next = sfm_step(&positions, &velocities, &pref, &params, tick).unwrap();
            for (i, (v, p)) in next.into_iter().enumerate() {
                velocities[i] = v;
                positions[i] = p;
            }
            // Bitwise mirror through x = 0.
            assert_eq!(positions[0].x, -positions[1].x);
            assert_eq!(positions[0].y, positions[1].y);
            assert_eq!(velocities[0].x, -velocities[1].x);
        }
    }

    #[test]
    fn speed_stays_clipped() {
        let params = SfmParams::default();
        let next = sfm_step(
            &[Vec2::ZERO],
            &[Vec2::new(2.4, 0.0)],
            &[Vec2::new(2.5, 0.0)],
            &params,
            0,
        )
        .unwrap();
        assert!(next[0].0.norm() <= params.v_max + 1e-12);
    }
}
