//! Pedestrian crowd simulation: scenario definitions for the square,
//! obstacle, hall and open environments, and the deterministic episode
//! driver.

pub mod rvo;
pub mod sfm;
pub mod stream;

use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::rng;
use crate::world::{AgentState, OccupancyMap, Segment};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub use rvo::RvoParams;
pub use sfm::SfmParams;

/// The built-in environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Square,
    Obstacle,
    Hall,
    Open,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [EnvKind::Square, EnvKind::Obstacle, EnvKind::Hall, EnvKind::Open];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Square => "square",
            EnvKind::Obstacle => "obstacle",
            EnvKind::Hall => "hall",
            EnvKind::Open => "open",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(EnvKind::Square),
            "obstacle" => Ok(EnvKind::Obstacle),
            "hall" => Ok(EnvKind::Hall),
            "open" => Ok(EnvKind::Open),
            other => Err(Error::InvalidScenario(format!("unknown environment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepperKind {
    Sfm,
    Rvo,
}

/// Spawn/goal rectangle pair; finished agents respawn with a fresh draw from
/// their lane.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lane {
    pub spawn_min: Vec2,
    pub spawn_max: Vec2,
    pub goal_min: Vec2,
    pub goal_max: Vec2,
}

impl Lane {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec2, Vec2) {
        let spawn = sample_rect(self.spawn_min, self.spawn_max, rng);
        let goal = sample_rect(self.goal_min, self.goal_max, rng);
        (spawn, goal)
    }
}

fn sample_rect(min: Vec2, max: Vec2, rng: &mut ChaCha8Rng) -> Vec2 {
    Vec2::new(rng.gen_range(min.x..=max.x), rng.gen_range(min.y..=max.y))
}

/// One concrete agent definition: spawn position, waypoint plan and
/// preferred walking speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSetup {
    pub spawn: Vec2,
    pub waypoints: Vec<Vec2>,
    /// Cyclic plans loop forever; point plans respawn on arrival.
    pub cyclic: bool,
    pub pref_speed: f64,
    /// Lane used for respawn sampling, if any.
    pub lane: Option<usize>,
    /// Index of the first waypoint to head for.
    pub first_waypoint: usize,
}

/// Dynamics parameters shared by both steppers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub v_max: f64,
    pub radius: f64,
    pub tau: f64,
    pub repulsion_a: f64,
    pub repulsion_b: f64,
    pub rvo_time_horizon: f64,
    pub rvo_obstacle_horizon: f64,
    pub rvo_margin: f64,
    pub neighbor_range: f64,
    pub waypoint_tolerance: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.2,
            v_max: 2.5,
            radius: 0.3,
            tau: 0.5,
            repulsion_a: 2.0,
            repulsion_b: 0.3,
            rvo_time_horizon: 2.0,
            rvo_obstacle_horizon: 1.0,
            rvo_margin: 0.02,
            neighbor_range: 4.0,
            waypoint_tolerance: 0.4,
        }
    }
}

impl SimParams {
    fn sfm(&self) -> SfmParams {
        SfmParams {
            tau: self.tau,
            repulsion_a: self.repulsion_a,
            repulsion_b: self.repulsion_b,
            radius: self.radius,
            v_max: self.v_max,
            dt: self.dt,
        }
    }

    fn rvo(&self) -> RvoParams {
        RvoParams {
            time_horizon: self.rvo_time_horizon,
            obstacle_horizon: self.rvo_obstacle_horizon,
            radius: self.radius,
            margin: self.rvo_margin,
            v_max: self.v_max,
            dt: self.dt,
            neighbor_range: self.neighbor_range,
        }
    }
}

/// A complete environment description: static map, agent population and
/// stepper choice.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub map: OccupancyMap,
    /// Obstacle boundary, derived from the map.
    pub segments: Vec<Segment>,
    pub agents: Vec<AgentSetup>,
    pub lanes: Vec<Lane>,
    pub stepper: StepperKind,
    pub n_pedestrians: usize,
    pub params: SimParams,
}

/// Snapshot of every tracked agent at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub tick: u64,
    pub agents: Vec<AgentState>,
}

const MAP_RESOLUTION: f64 = 0.1;
const WALL: f64 = 0.3;

/// Build one of the built-in scenarios. `seed` drives spawn placement and
/// preferred speeds; the same (kind, n, seed) always yields the same
/// scenario.
pub fn make_scenario(kind: EnvKind, n_pedestrians: usize, seed: u64) -> Scenario {
    let mut rng = rng::stream_rng(seed, rng::Stream::Simulation, 0x5C_E0);
    let params = SimParams::default();
    match kind {
        EnvKind::Square => square_scenario(n_pedestrians, params, &mut rng),
        EnvKind::Obstacle => obstacle_scenario(n_pedestrians, params, &mut rng),
        EnvKind::Hall => hall_scenario(n_pedestrians, params, &mut rng),
        EnvKind::Open => open_scenario(n_pedestrians, params, &mut rng),
    }
}

fn pref_speed(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(1.0..=1.4)
}

/// 10 m x 10 m walled square with a 4 m x 4 m central block: an endless
/// corridor loop. Half the agents walk the loop one way, half the other.
fn square_scenario(n: usize, params: SimParams, rng: &mut ChaCha8Rng) -> Scenario {
    let mut map = OccupancyMap::free(Vec2::ZERO, MAP_RESOLUTION, 100, 100);
    fill_walls(&mut map, 10.0, 10.0);
    map.fill_rect(Vec2::new(3.0, 3.0), Vec2::new(7.0, 7.0));

    // Corridor centerline corners.
    let c0 = 1.65;
    let c1 = 8.35;
    let loop_ccw = vec![
        Vec2::new(c0, c0),
        Vec2::new(c1, c0),
        Vec2::new(c1, c1),
        Vec2::new(c0, c1),
    ];
    let loop_cw: Vec<Vec2> = loop_ccw.iter().rev().cloned().collect();

    let n_ccw = n / 2 + n % 2;
    let mut agents = Vec::with_capacity(n);
    for group in 0..2 {
        let (loop_pts, count) = if group == 0 {
            (&loop_ccw, n_ccw)
        } else {
            (&loop_cw, n - n_ccw)
        };
        for k in 0..count {
            let fraction = (k as f64 + 0.5 * group as f64) / count.max(1) as f64;
            let (spawn, first_waypoint) = point_on_loop(loop_pts, fraction);
            let jitter = Vec2::new(rng.gen_range(-0.15..=0.15), rng.gen_range(-0.15..=0.15));
            agents.push(AgentSetup {
                spawn: spawn + jitter,
                waypoints: loop_pts.clone(),
                cyclic: true,
                pref_speed: pref_speed(rng),
                lane: None,
                first_waypoint,
            });
        }
    }

    let segments = map.boundary_segments();
    Scenario {
        name: "square".into(),
        map,
        segments,
        agents,
        lanes: Vec::new(),
        stepper: StepperKind::Rvo,
        n_pedestrians: n,
        params,
    }
}

/// Walk `fraction` of the loop perimeter; returns the point and the index of
/// the next corner to head for.
fn point_on_loop(points: &[Vec2], fraction: f64) -> (Vec2, usize) {
    let mut lengths = Vec::with_capacity(points.len());
    let mut total = 0.0;
    for i in 0..points.len() {
        let next = points[(i + 1) % points.len()];
        let len = points[i].dist(next);
        lengths.push(len);
        total += len;
    }
    let mut remaining = fraction.clamp(0.0, 0.999) * total;
    for i in 0..points.len() {
        if remaining <= lengths[i] {
            let next = points[(i + 1) % points.len()];
            let dir = (next - points[i]).normalized();
            return (points[i] + dir * remaining, (i + 1) % points.len());
        }
        remaining -= lengths[i];
    }
    (points[0], 0)
}

/// 10 m x 10 m walled room with three pillars; two groups cross left-right.
fn obstacle_scenario(n: usize, params: SimParams, rng: &mut ChaCha8Rng) -> Scenario {
    let mut map = OccupancyMap::free(Vec2::ZERO, MAP_RESOLUTION, 100, 100);
    fill_walls(&mut map, 10.0, 10.0);
    map.fill_rect(Vec2::new(2.4, 2.4), Vec2::new(3.6, 3.6));
    map.fill_rect(Vec2::new(4.4, 5.9), Vec2::new(5.6, 7.1));
    map.fill_rect(Vec2::new(6.4, 2.9), Vec2::new(7.6, 4.1));

    let lanes = vec![
        Lane {
            spawn_min: Vec2::new(0.7, 1.0),
            spawn_max: Vec2::new(1.5, 9.0),
            goal_min: Vec2::new(8.5, 1.0),
            goal_max: Vec2::new(9.3, 9.0),
        },
        Lane {
            spawn_min: Vec2::new(8.5, 1.0),
            spawn_max: Vec2::new(9.3, 9.0),
            goal_min: Vec2::new(0.7, 1.0),
            goal_max: Vec2::new(1.5, 9.0),
        },
    ];
    let agents = lane_agents(n, &lanes, rng);
    let segments = map.boundary_segments();
    Scenario {
        name: "obstacle".into(),
        map,
        segments,
        agents,
        lanes,
        stepper: StepperKind::Rvo,
        n_pedestrians: n,
        params,
    }
}

/// 12 m x 6 m hall; two groups cross end to end, cooperating via the social
/// force model (no static obstacles inside).
fn hall_scenario(n: usize, params: SimParams, rng: &mut ChaCha8Rng) -> Scenario {
    let mut map = OccupancyMap::free(Vec2::ZERO, MAP_RESOLUTION, 120, 60);
    fill_walls(&mut map, 12.0, 6.0);

    let lanes = vec![
        Lane {
            spawn_min: Vec2::new(0.6, 0.8),
            spawn_max: Vec2::new(1.4, 5.2),
            goal_min: Vec2::new(10.6, 0.8),
            goal_max: Vec2::new(11.4, 5.2),
        },
        Lane {
            spawn_min: Vec2::new(10.6, 0.8),
            spawn_max: Vec2::new(11.4, 5.2),
            goal_min: Vec2::new(0.6, 0.8),
            goal_max: Vec2::new(1.4, 5.2),
        },
    ];
    let agents = lane_agents(n, &lanes, rng);
    let segments = map.boundary_segments();
    Scenario {
        name: "hall".into(),
        map,
        segments,
        agents,
        lanes,
        stepper: StepperKind::Sfm,
        n_pedestrians: n,
        params,
    }
}

/// 15 m x 15 m unbounded open area with four crossing flows; used for
/// pre-training.
fn open_scenario(n: usize, params: SimParams, rng: &mut ChaCha8Rng) -> Scenario {
    let map = OccupancyMap::free(Vec2::ZERO, MAP_RESOLUTION, 150, 150);
    let lanes = vec![
        Lane {
            spawn_min: Vec2::new(1.0, 2.0),
            spawn_max: Vec2::new(3.0, 13.0),
            goal_min: Vec2::new(12.0, 2.0),
            goal_max: Vec2::new(14.0, 13.0),
        },
        Lane {
            spawn_min: Vec2::new(12.0, 2.0),
            spawn_max: Vec2::new(14.0, 13.0),
            goal_min: Vec2::new(1.0, 2.0),
            goal_max: Vec2::new(3.0, 13.0),
        },
        Lane {
            spawn_min: Vec2::new(2.0, 1.0),
            spawn_max: Vec2::new(13.0, 3.0),
            goal_min: Vec2::new(2.0, 12.0),
            goal_max: Vec2::new(13.0, 14.0),
        },
        Lane {
            spawn_min: Vec2::new(2.0, 12.0),
            spawn_max: Vec2::new(13.0, 14.0),
            goal_min: Vec2::new(2.0, 1.0),
            goal_max: Vec2::new(13.0, 3.0),
        },
    ];
    let agents = lane_agents(n, &lanes, rng);
    Scenario {
        name: "open".into(),
        map,
        segments: Vec::new(),
        agents,
        lanes,
        stepper: StepperKind::Sfm,
        n_pedestrians: n,
        params,
    }
}

fn lane_agents(n: usize, lanes: &[Lane], rng: &mut ChaCha8Rng) -> Vec<AgentSetup> {
    (0..n)
        .map(|i| {
            let lane_idx = i % lanes.len();
            let (spawn, goal) = lanes[lane_idx].sample(rng);
            AgentSetup {
                spawn,
                waypoints: vec![goal],
                cyclic: false,
                pref_speed: pref_speed(rng),
                lane: Some(lane_idx),
                first_waypoint: 0,
            }
        })
        .collect()
}

fn fill_walls(map: &mut OccupancyMap, width: f64, height: f64) {
    map.fill_rect(Vec2::new(0.0, 0.0), Vec2::new(width, WALL));
    map.fill_rect(Vec2::new(0.0, height - WALL), Vec2::new(width, height));
    map.fill_rect(Vec2::new(0.0, 0.0), Vec2::new(WALL, height));
    map.fill_rect(Vec2::new(width - WALL, 0.0), Vec2::new(width, height));
}

/// Load a scenario from a TOML description next to a plain-text map file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    #[derive(Deserialize)]
    struct LaneDef {
        spawn: [f64; 4],
        goal: [f64; 4],
    }
    #[derive(Deserialize)]
    struct ScenarioDef {
        name: String,
        stepper: StepperKind,
        n_pedestrians: usize,
        map: String,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        cyclic: bool,
        #[serde(default)]
        waypoints: Vec<[f64; 2]>,
        #[serde(default)]
        lane: Vec<LaneDef>,
    }

    let text = std::fs::read_to_string(path)?;
    let def: ScenarioDef =
        toml::from_str(&text).map_err(|e| Error::format("scenario file", e.to_string()))?;
    let map_path = path.parent().unwrap_or(Path::new(".")).join(&def.map);
    let map = OccupancyMap::load(&map_path)?;
    let segments = map.boundary_segments();
    let lanes: Vec<Lane> = def
        .lane
        .iter()
        .map(|l| Lane {
            spawn_min: Vec2::new(l.spawn[0], l.spawn[1]),
            spawn_max: Vec2::new(l.spawn[2], l.spawn[3]),
            goal_min: Vec2::new(l.goal[0], l.goal[1]),
            goal_max: Vec2::new(l.goal[2], l.goal[3]),
        })
        .collect();

    let mut rng = rng::stream_rng(def.seed, rng::Stream::Simulation, 0x5C_E0);
    let agents = if def.cyclic {
        if def.waypoints.len() < 2 {
            return Err(Error::InvalidScenario(
                "cyclic scenario needs at least two waypoints".into(),
            ));
        }
        let loop_pts: Vec<Vec2> = def.waypoints.iter().map(|w| Vec2::new(w[0], w[1])).collect();
        (0..def.n_pedestrians)
            .map(|k| {
                let fraction = k as f64 / def.n_pedestrians.max(1) as f64;
                let (spawn, first_waypoint) = point_on_loop(&loop_pts, fraction);
                AgentSetup {
                    spawn,
                    waypoints: loop_pts.clone(),
                    cyclic: true,
                    pref_speed: pref_speed(&mut rng),
                    lane: None,
                    first_waypoint,
                }
            })
            .collect()
    } else {
        if lanes.is_empty() {
            return Err(Error::InvalidScenario(
                "non-cyclic scenario needs at least one [[lane]]".into(),
            ));
        }
        lane_agents(def.n_pedestrians, &lanes, &mut rng)
    };

    Ok(Scenario {
        name: def.name,
        map,
        segments,
        agents,
        lanes,
        stepper: def.stepper,
        n_pedestrians: def.n_pedestrians,
        params: SimParams::default(),
    })
}

struct RuntimeAgent {
    id: u64,
    p: Vec2,
    v: Vec2,
    waypoints: Vec<Vec2>,
    wp_index: usize,
    cyclic: bool,
    pref_speed: f64,
    lane: Option<usize>,
}

/// Deterministic episode driver. Respawned agents receive fresh ids, which
/// downstream consumers treat as track loss.
pub struct Simulator {
    scenario: Scenario,
    agents: Vec<RuntimeAgent>,
    tick: u64,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(scenario: &Scenario, seed: u64) -> Simulator {
        let agents = scenario
            .agents
            .iter()
            .enumerate()
            .map(|(i, setup)| RuntimeAgent {
                id: i as u64,
                p: setup.spawn,
                v: Vec2::ZERO,
                waypoints: setup.waypoints.clone(),
                wp_index: setup.first_waypoint,
                cyclic: setup.cyclic,
                pref_speed: setup.pref_speed,
                lane: setup.lane,
            })
            .collect();
        Simulator {
            scenario: scenario.clone(),
            agents,
            tick: 0,
            next_id: scenario.agents.len() as u64,
            rng: rng::stream_rng(seed, rng::Stream::Simulation, 0x57E9),
        }
    }

    pub fn state(&self) -> SimState {
        SimState {
            tick: self.tick,
            agents: self
                .agents
                .iter()
                .map(|a| AgentState::new(a.id, a.p, a.v, self.tick))
                .collect(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn pref_velocity(&self, agent: &RuntimeAgent) -> Vec2 {
        let target = agent.waypoints[agent.wp_index];
        let to_goal = target - agent.p;
        let dist = to_goal.norm();
        if dist < 1e-9 {
            return Vec2::ZERO;
        }
        let speed = agent.pref_speed.min(dist / self.scenario.params.dt);
        let v = to_goal / dist * speed;
        match self.scenario.stepper {
            // Deterministic tie-break for mirror-symmetric encounters.
            StepperKind::Rvo => v.rotated(1e-3),
            StepperKind::Sfm => v,
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let params = &self.scenario.params;
        let positions: Vec<Vec2> = self.agents.iter().map(|a| a.p).collect();
        let velocities: Vec<Vec2> = self.agents.iter().map(|a| a.v).collect();
        let prefs: Vec<Vec2> = self.agents.iter().map(|a| self.pref_velocity(a)).collect();

        match self.scenario.stepper {
            StepperKind::Sfm => {
                let next = sfm::sfm_step(&positions, &velocities, &prefs, &params.sfm(), self.tick)?;
                for (agent, (v, p)) in self.agents.iter_mut().zip(next) {
                    agent.v = v;
                    agent.p = p;
                }
            }
            StepperKind::Rvo => {
                let chosen = rvo::rvo_velocities(
                    &positions,
                    &velocities,
                    &prefs,
                    &self.scenario.segments,
                    &params.rvo(),
                );
                let map = &self.scenario.map;
                let dt = params.dt;
                for (agent, v) in self.agents.iter_mut().zip(chosen) {
                    if !v.is_finite() {
                        return Err(Error::SimNonFinite {
                            tick: self.tick,
                            agent: agent.id,
                        });
                    }
                    let mut p_new = agent.p + v * dt;
                    if map.occupied_at(p_new) {
                        // Bisect the step back to the last free point, then
                        // re-derive the velocity so p' = p + v' * dt holds
                        // exactly.
                        let mut lo = 0.0;
                        let mut hi = 1.0;
                        for _ in 0..12 {
                            let mid = 0.5 * (lo + hi);
                            if map.occupied_at(agent.p + v * (dt * mid)) {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        p_new = agent.p + v * (dt * lo);
                    }
                    let v_new = (p_new - agent.p) / dt;
                    agent.v = v_new;
                    agent.p = agent.p + v_new * dt;
                }
            }
        }

        self.tick += 1;
        self.advance_waypoints();
        Ok(())
    }

    fn advance_waypoints(&mut self) {
        let tolerance = self.scenario.params.waypoint_tolerance;
        let mut respawns: Vec<usize> = Vec::new();
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let target = agent.waypoints[agent.wp_index];
            if agent.p.dist(target) > tolerance {
                continue;
            }
            if agent.cyclic {
                agent.wp_index = (agent.wp_index + 1) % agent.waypoints.len();
            } else if agent.wp_index + 1 < agent.waypoints.len() {
                agent.wp_index += 1;
            } else {
                respawns.push(i);
            }
        }
        for i in respawns {
            let lane_idx = self.agents[i].lane.unwrap_or(0);
            let lane = self.scenario.lanes[lane_idx];
            let (spawn, goal) = lane.sample(&mut self.rng);
            let speed = pref_speed(&mut self.rng);
            self.agents[i] = RuntimeAgent {
                id: self.next_id,
                p: spawn,
                v: Vec2::ZERO,
                waypoints: vec![goal],
                wp_index: 0,
                cyclic: false,
                pref_speed: speed,
                lane: Some(lane_idx),
            };
            self.next_id += 1;
        }
    }
}

/// Run `ticks` states of the scenario: the initial state plus `ticks - 1`
/// integration steps. Identical (scenario, ticks, seed) yield bit-identical
/// streams.
pub fn run_scenario(scenario: &Scenario, ticks: usize, seed: u64) -> Result<Vec<SimState>> {
    assert!(ticks >= 1, "ticks must be >= 1");
    let mut sim = Simulator::new(scenario, seed);
    let mut states = Vec::with_capacity(ticks);
    states.push(sim.state());
    for _ in 1..ticks {
        sim.step()?;
        states.push(sim.state());
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_length_matches_request() {
        let scenario = make_scenario(EnvKind::Open, 4, 3);
        let states = run_scenario(&scenario, 1000, 3).unwrap();
        assert_eq!(states.len(), 1000);
        assert_eq!(states.last().unwrap().tick, 999);
    }

    #[test]
    fn deterministic_streams() {
        for kind in [EnvKind::Square, EnvKind::Obstacle, EnvKind::Hall, EnvKind::Open] {
            let scenario = make_scenario(kind, 6, 11);
            let a = run_scenario(&scenario, 120, 11).unwrap();
            let b = run_scenario(&scenario, 120, 11).unwrap();
            assert_eq!(a, b, "{kind} stream not deterministic");
        }
    }

    #[test]
    fn square_population_splits_directions() {
        let scenario = make_scenario(EnvKind::Square, 6, 7);
        assert_eq!(scenario.agents.len(), 6);
        assert!(scenario.agents.iter().all(|a| a.cyclic));
        // Three walk the loop one way, three the other.
        let first_loop = &scenario.agents[0].waypoints;
        let same = scenario
            .agents
            .iter()
            .filter(|a| &a.waypoints == first_loop)
            .count();
        assert_eq!(same, 3);
    }

    #[test]
    fn spawns_inside_free_space() {
        for kind in EnvKind::ALL {
            for n in [6, 10, 20] {
                let scenario = make_scenario(kind, n, 5);
                assert_eq!(scenario.agents.len(), n);
                for a in &scenario.agents {
                    assert!(
                        !scenario.map.occupied_at(a.spawn),
                        "{kind} spawn {:?} occupied",
                        a.spawn
                    );
                }
            }
        }
    }

    #[test]
    fn speed_bound_holds_everywhere() {
        for kind in EnvKind::ALL {
            let scenario = make_scenario(kind, 6, 2);
            let states = run_scenario(&scenario, 200, 2).unwrap();
            for s in &states {
                for a in &s.agents {
                    assert!(a.v.norm() <= scenario.params.v_max + 1e-9);
                }
            }
        }
    }

    #[test]
    fn rvo_agents_stay_out_of_occupied_cells() {
        for kind in [EnvKind::Square, EnvKind::Obstacle] {
            let scenario = make_scenario(kind, 6, 9);
            let states = run_scenario(&scenario, 400, 9).unwrap();
            for s in &states {
                for a in &s.agents {
                    assert!(
                        !scenario.map.occupied_at(a.p),
                        "{kind}: agent {} inside occupied cell at tick {}",
                        a.id,
                        s.tick
                    );
                }
            }
        }
    }

    #[test]
    fn respawn_assigns_fresh_ids() {
        let scenario = make_scenario(EnvKind::Hall, 6, 4);
        let states = run_scenario(&scenario, 600, 4).unwrap();
        let max_id = states
            .iter()
            .flat_map(|s| s.agents.iter().map(|a| a.id))
            .max()
            .unwrap();
        assert!(max_id >= 6, "no respawns happened in 120 s of hall traffic");
        for s in &states {
            assert_eq!(s.agents.len(), 6, "population must stay constant");
        }
    }

    #[test]
    fn scenario_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = OccupancyMap::free(Vec2::ZERO, 0.5, 20, 20);
        map.save(&dir.path().join("flat.map")).unwrap();
        std::fs::write(
            dir.path().join("scn.toml"),
            r#"
name = "custom"
stepper = "sfm"
n_pedestrians = 4
map = "flat.map"
seed = 3

[[lane]]
spawn = [1.0, 1.0, 2.0, 9.0]
goal = [8.0, 1.0, 9.0, 9.0]
"#,
        )
        .unwrap();
        let scenario = load_scenario(&dir.path().join("scn.toml")).unwrap();
        assert_eq!(scenario.n_pedestrians, 4);
        assert_eq!(scenario.agents.len(), 4);
        let states = run_scenario(&scenario, 50, 1).unwrap();
        assert_eq!(states.len(), 50);
    }
}
