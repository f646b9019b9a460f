//! Reciprocal collision avoidance for environments with static obstacles.
//!
//! Each agent picks the velocity closest to its preferred velocity outside
//! all half-plane constraints induced by neighboring agents (reciprocal,
//! half responsibility each) and nearby obstacle segments (full
//! responsibility). The selection solves a small incremental linear program;
//! when the program is infeasible the best velocity from a deterministic
//! candidate grid is used instead.

use crate::math::Vec2;
use crate::world::Segment;

#[derive(Debug, Clone, Copy)]
pub struct RvoParams {
    /// Look-ahead for agent-agent constraints, seconds.
    pub time_horizon: f64,
    /// Look-ahead for obstacle constraints, seconds.
    pub obstacle_horizon: f64,
    pub radius: f64,
    /// Extra clearance added to constraint radii, meters.
    pub margin: f64,
    pub v_max: f64,
    pub dt: f64,
    /// Agents and segments beyond this range are ignored, meters.
    pub neighbor_range: f64,
}

impl Default for RvoParams {
    fn default() -> Self {
        RvoParams {
            time_horizon: 2.0,
            obstacle_horizon: 1.0,
            radius: 0.3,
            margin: 0.02,
            v_max: 2.5,
            dt: 0.2,
            neighbor_range: 4.0,
        }
    }
}

/// Directed line in velocity space. Velocities `v` with
/// `dir.det(v - point) >= 0` (left of the line) are feasible.
#[derive(Debug, Clone, Copy)]
pub struct Line {
    pub point: Vec2,
    pub dir: Vec2,
}

impl Line {
    fn violation(&self, v: Vec2) -> f64 {
        (self.dir.det(self.point - v)).max(0.0)
    }
}

/// Half-plane forbidding approach toward the closest point of an obstacle
/// segment faster than the clearance allows. Inside the clearance the
/// constraint forces outward motion within one step.
fn obstacle_line(p: Vec2, segment: &Segment, params: &RvoParams) -> Option<Line> {
    let closest = segment.closest_point(p);
    let away = p - closest;
    let dist = away.norm();
    if dist > params.neighbor_range {
        return None;
    }
    let r_eff = params.radius + params.margin;
    let normal = if dist > 1e-9 {
        away / dist
    } else {
        // Degenerate: agent center on the segment; push along the segment
        // normal.
        (segment.b - segment.a).normalized().perp()
    };
    let horizon = if dist <= r_eff {
        params.dt
    } else {
        params.obstacle_horizon
    };
    // Feasible velocities satisfy v . normal >= (r_eff - dist) / horizon.
    let offset = (r_eff - dist) / horizon;
    Some(Line {
        point: normal * offset,
        dir: Vec2::new(normal.y, -normal.x),
    })
}

/// Standard reciprocal half-plane for a neighboring agent, half
/// responsibility each.
fn agent_line(
    p: Vec2,
    v: Vec2,
    other_p: Vec2,
    other_v: Vec2,
    params: &RvoParams,
) -> Option<Line> {
    let rel_p = other_p - p;
    if rel_p.norm() > params.neighbor_range {
        return None;
    }
    let rel_v = v - other_v;
    let dist_sq = rel_p.norm_sq();
    let combined_r = 2.0 * params.radius + params.margin;
    let combined_r_sq = combined_r * combined_r;

    let (dir, u) = if dist_sq > combined_r_sq {
        let w = rel_v - rel_p / params.time_horizon;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_p);
        if dot1 < 0.0 && dot1 * dot1 > combined_r_sq * w_len_sq {
            // Project on the cut-off circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (combined_r / params.time_horizon - w_len),
            )
        } else {
            // Project on the nearer leg of the cone.
            let leg = (dist_sq - combined_r_sq).sqrt();
            let dir = if rel_p.det(w) > 0.0 {
                Vec2::new(
                    rel_p.x * leg - rel_p.y * combined_r,
                    rel_p.x * combined_r + rel_p.y * leg,
                ) / dist_sq
            } else {
                Vec2::new(
                    rel_p.x * leg + rel_p.y * combined_r,
                    -rel_p.x * combined_r + rel_p.y * leg,
                ) / -dist_sq
            };
            (dir, dir * rel_v.dot(dir) - rel_v)
        }
    } else {
        // Already overlapping: resolve within one time step.
        let inv_dt = 1.0 / params.dt;
        let w = rel_v - rel_p * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > 1e-9 {
            w / w_len
        } else {
            -rel_p.normalized()
        };
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (combined_r * inv_dt - w_len),
        )
    };
    Some(Line {
        point: v + u * 0.5,
        dir,
    })
}

/// Clip the segment of `lines[index]` to the feasible interval given the
/// speed circle and all earlier constraints, then place the result optimally.
fn linear_program_1(
    lines: &[Line],
    index: usize,
    radius: f64,
    opt_v: Vec2,
    result: &mut Vec2,
) -> bool {
    let line = lines[index];
    let dot = line.point.dot(line.dir);
    let disc = dot * dot + radius * radius - line.point.norm_sq();
    if disc < 0.0 {
        return false;
    }
    let sqrt_disc = disc.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prev in lines.iter().take(index) {
        let denominator = line.dir.det(prev.dir);
        let numerator = prev.dir.det(line.point - prev.point);
        if denominator.abs() < 1e-9 {
            // Parallel lines.
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    let t = line.dir.dot(opt_v - line.point).clamp(t_left, t_right);
    *result = line.point + line.dir * t;
    true
}

/// Incremental 2-D linear program: closest point to `opt_v` within the speed
/// circle satisfying all lines. Returns the chosen velocity and whether every
/// constraint was satisfiable.
fn linear_program_2(lines: &[Line], radius: f64, opt_v: Vec2) -> (Vec2, bool) {
    let mut result = if opt_v.norm_sq() > radius * radius {
        opt_v.normalized() * radius
    } else {
        opt_v
    };
    for (i, line) in lines.iter().enumerate() {
        if line.dir.det(line.point - result) > 0.0 {
            let backup = result;
            if !linear_program_1(lines, i, radius, opt_v, &mut result) {
                return (backup, false);
            }
        }
    }
    (result, true)
}

/// Deterministic candidate sweep used when the linear program is infeasible:
/// minimize obstacle violations first, then agent violations, then distance
/// to the preferred velocity.
fn sampled_fallback(
    lines: &[Line],
    n_obstacle_lines: usize,
    pref_v: Vec2,
    params: &RvoParams,
) -> Vec2 {
    let mut best = Vec2::ZERO;
    let mut best_key = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut consider = |v: Vec2| {
        let mut obstacle_violation = 0.0;
        let mut agent_violation = 0.0;
        for (i, line) in lines.iter().enumerate() {
            let viol = line.violation(v);
            if i < n_obstacle_lines {
                obstacle_violation += viol;
            } else {
                agent_violation += viol;
            }
        }
        let key = (obstacle_violation, agent_violation, v.dist(pref_v));
        if key < best_key {
            best_key = key;
            best = v;
        }
    };
    consider(Vec2::ZERO);
    consider(pref_v.clamp_norm(params.v_max));
    const ANGLES: usize = 32;
    for speed_step in 1..=4 {
        let speed = params.v_max * speed_step as f64 / 4.0;
        for a in 0..ANGLES {
            let angle = a as f64 * std::f64::consts::TAU / ANGLES as f64;
            consider(Vec2::new(speed * angle.cos(), speed * angle.sin()));
        }
    }
    best
}

/// Compute new velocities for all agents from a snapshot of positions,
/// velocities and preferred velocities.
pub fn rvo_velocities(
    positions: &[Vec2],
    velocities: &[Vec2],
    pref_velocities: &[Vec2],
    segments: &[Segment],
    params: &RvoParams,
) -> Vec<Vec2> {
    let n = positions.len();
    let mut out = Vec::with_capacity(n);
    let mut lines: Vec<Line> = Vec::new();
    for i in 0..n {
        lines.clear();
        for segment in segments {
            if let Some(line) = obstacle_line(positions[i], segment, params) {
                lines.push(line);
            }
        }
        let n_obstacle_lines = lines.len();
        for j in 0..n {
            if j == i {
                continue;
            }
            if let Some(line) = agent_line(
                positions[i],
                velocities[i],
                positions[j],
                velocities[j],
                params,
            ) {
                lines.push(line);
            }
        }
        let (v, feasible) = linear_program_2(&lines, params.v_max, pref_velocities[i]);
        out.push(if feasible {
            v
        } else {
            sampled_fallback(&lines, n_obstacle_lines, pref_velocities[i], params)
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_agent_keeps_preferred_velocity() {
        let params = RvoParams::default();
        let pref = Vec2::new(1.2, 0.3);
        let v = rvo_velocities(&[Vec2::ZERO], &[Vec2::ZERO], &[pref], &[], &params);
        assert!((v[0] - pref).norm() < 1e-12);
    }

    #[test]
    fn wall_ahead_limits_approach_speed() {
        // Wall 0.5 m ahead of the agent; hand-constructed half-plane allows
        // approach no faster than (dist - r_eff) / obstacle_horizon.
        let params = RvoParams::default();
        let wall = Segment {
            a: Vec2::new(2.0, -5.0),
            b: Vec2::new(2.0, 5.0),
        };
        let p = Vec2::new(1.5, 0.0);
        let pref = Vec2::new(1.3, 0.0);
        let v = rvo_velocities(&[p], &[pref], &[pref], &[wall], &params);
        let allowed = (0.5 - (params.radius + params.margin)) / params.obstacle_horizon;
        assert!(
            v[0].x <= allowed + 1e-9,
            "approach speed {} exceeds hand-derived bound {}",
            v[0].x,
            allowed
        );
        // One integration step must not breach the clearance radius.
        let next = p + v[0] * params.dt;
        assert!(2.0 - next.x >= params.radius - 1e-9);
    }

    #[test]
    fn wall_approach_converges_without_penetration() {
        let params = RvoParams::default();
        let wall = Segment {
            a: Vec2::new(3.0, -5.0),
            b: Vec2::new(3.0, 5.0),
        };
        let mut p = Vec2::new(0.0, 0.0);
        let mut v = Vec2::ZERO;
        for _ in 0..100 {
            let pref = Vec2::new(1.3, 0.0);
            let next = rvo_velocities(&[p], &[v], &[pref], &[wall], &params);
            v = next[0];
            p = p + v * params.dt;
            assert!(p.x < 3.0 - params.radius + 1e-6, "penetrated wall at x={}", p.x);
        }
        // Settled against the clearance boundary.
        assert!(p.x > 3.0 - params.radius - params.margin - 0.05);
    }

    #[test]
    fn symmetric_head_on_pair_passes_cleanly() {
        // Preferred velocities carry the shared deterministic tie-break
        // rotation so the mirrored pair picks the same passing side.
        let params = RvoParams::default();
        let mut positions = vec![Vec2::new(-4.0, 0.0), Vec2::new(4.0, 0.0)];
        let mut velocities = vec![Vec2::ZERO, Vec2::ZERO];
        let mut min_dist = f64::INFINITY;
        let mut crossed = false;
        for _ in 0..400 {
            let pref: Vec<Vec2> = [Vec2::new(6.0, 0.0), Vec2::new(-6.0, 0.0)]
                .iter()
                .map(|goal| {
                    let i = if goal.x > 0.0 { 0 } else { 1 };
                    ((*goal - positions[i]).normalized() * 1.3).rotated(1e-3)
                })
                .collect();
            let next = rvo_velocities(&positions, &velocities, &pref, &[], &params);
            for i in 0..2 {
                velocities[i] = next[i];
                positions[i] = positions[i] + next[i] * params.dt;
            }
            min_dist = min_dist.min(positions[0].dist(positions[1]));
            if positions[0].x > positions[1].x {
                crossed = true;
            }
        }
        assert!(crossed, "agents failed to pass each other");
        assert!(
            min_dist > 2.0 * params.radius,
            "agents collided: min distance {min_dist}"
        );
    }

    #[test]
    fn deterministic_given_same_snapshot() {
        let params = RvoParams::default();
        let positions = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.2), Vec2::new(-0.5, 1.0)];
        let velocities = vec![Vec2::new(1.0, 0.0); 3];
        let prefs = vec![Vec2::new(1.0, 0.1); 3];
        let wall = Segment {
            a: Vec2::new(2.0, -2.0),
            b: Vec2::new(2.0, 2.0),
        };
        let a = rvo_velocities(&positions, &velocities, &prefs, &[wall], &params);
        let b = rvo_velocities(&positions, &velocities, &prefs, &[wall], &params);
        assert_eq!(a, b);
    }
}
