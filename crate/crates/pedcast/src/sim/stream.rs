//! Binary state-stream files produced by `simulate`.

use super::SimState;
use crate::binfmt;
use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::world::AgentState;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const STREAM_MAGIC: &[u8; 4] = b"PCSS";
const STREAM_VERSION: u16 = 1;

pub fn write_stream(
    w: &mut impl Write,
    scenario_name: &str,
    dt: f64,
    states: &[SimState],
) -> Result<()> {
    binfmt::write_magic(w, STREAM_MAGIC, STREAM_VERSION)?;
    binfmt::write_string(w, scenario_name)?;
    binfmt::write_f64(w, dt)?;
    binfmt::write_u64(w, states.len() as u64)?;
    for state in states {
        binfmt::write_u64(w, state.tick)?;
        binfmt::write_u32(w, state.agents.len() as u32)?;
        for a in &state.agents {
            binfmt::write_u64(w, a.id)?;
            binfmt::write_f64_slice(w, &[a.p.x, a.p.y, a.v.x, a.v.y])?;
        }
    }
    Ok(())
}

pub fn read_stream(r: &mut impl Read) -> Result<(String, f64, Vec<SimState>)> {
    let version = binfmt::read_magic(r, STREAM_MAGIC, "state stream")?;
    if version != STREAM_VERSION {
        return Err(Error::format(
            "state stream",
            format!("unsupported version {version}"),
        ));
    }
    let name = binfmt::read_string(r, "state stream")?;
    let dt = binfmt::read_f64(r)?;
    let n = binfmt::read_u64(r)? as usize;
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let tick = binfmt::read_u64(r)?;
        let count = binfmt::read_u32(r)? as usize;
        let mut agents = Vec::with_capacity(count);
        for _ in 0..count {
            let id = binfmt::read_u64(r)?;
            let vals = binfmt::read_f64_vec(r, 4)?;
            agents.push(AgentState {
                id,
                p: Vec2::new(vals[0], vals[1]),
                v: Vec2::new(vals[2], vals[3]),
                t: tick,
            });
        }
        states.push(SimState { tick, agents });
    }
    Ok((name, dt, states))
}

pub fn save_stream(path: &Path, scenario_name: &str, dt: f64, states: &[SimState]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_stream(&mut w, scenario_name, dt, states)?;
    w.flush()?;
    Ok(())
}

pub fn load_stream(path: &Path) -> Result<(String, f64, Vec<SimState>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_stream(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{make_scenario, run_scenario, EnvKind};

    #[test]
    fn stream_round_trip() {
        let scenario = make_scenario(EnvKind::Open, 3, 1);
        let states = run_scenario(&scenario, 40, 1).unwrap();
        let mut buf = Vec::new();
        write_stream(&mut buf, "open", 0.2, &states).unwrap();
        let (name, dt, back) = read_stream(&mut buf.as_slice()).unwrap();
        assert_eq!(name, "open");
        assert_eq!(dt, 0.2);
        assert_eq!(states, back);
    }

    #[test]
    fn identical_runs_produce_identical_bytes() {
        let scenario = make_scenario(EnvKind::Square, 6, 7);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_stream(&mut a, "square", 0.2, &run_scenario(&scenario, 100, 7).unwrap()).unwrap();
        write_stream(&mut b, "square", 0.2, &run_scenario(&scenario, 100, 7).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
