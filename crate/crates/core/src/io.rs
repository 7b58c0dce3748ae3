//! On-disk formats: trajectory dumps (JSONL and a compact binary framing),
//! regeneration record streams and process CSV tables.
//!
//! Binary trajectory framing, little-endian throughout:
//!
//! ```text
//! magic  b"RWTB"
//! u8     format version (1)
//! u8     dimension d
//! u64    step count (positions after the start)
//! i16*d  start coordinates
//! then, per step, d zig-zag varint coordinate deltas
//! ```

use crate::env::{EnvConfig, Point};
use crate::regen::{ProcessSample, RegenerationRecord};
use crate::walk::Trajectory;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Read, Write};

const MAGIC: &[u8; 4] = b"RWTB";
const VERSION: u8 = 1;

/// One JSONL trajectory row.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub x: Vec<i16>,
}

/// Writes `{"step": n, "x": [..]}` rows, one per recorded position.
pub fn write_trajectory_jsonl<W: Write>(
    w: &mut W,
    traj: &Trajectory,
    d: usize,
) -> io::Result<()> {
    for (step, p) in traj.positions.iter().enumerate() {
        let row = TrajectoryRow { step, x: p.coords(d).to_vec() };
        serde_json::to_writer(&mut *w, &row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory_jsonl<R: BufRead>(r: R, d: usize) -> io::Result<Vec<Point>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TrajectoryRow = serde_json::from_str(&line)?;
        if row.x.len() != d {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "dimension mismatch"));
        }
        out.push(Point::new(&row.x));
    }
    Ok(out)
}

fn zigzag_encode(v: i32) -> u32 {
    ((v << 1) ^ (v >> 31)) as u32
}

fn zigzag_decode(v: u32) -> i32 {
    ((v >> 1) as i32) ^ -((v & 1) as i32)
}

fn write_varint<W: Write>(w: &mut W, mut v: u32) -> io::Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            w.write_all(&[byte])?;
            return Ok(());
        }
        w.write_all(&[byte | 0x80])?;
    }
}

fn read_varint<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut v = 0u32;
    let mut shift = 0;
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        v |= ((byte[0] & 0x7f) as u32) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
        if shift > 28 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "varint overflow"));
        }
    }
}

/// Compact binary dump: magic, version, d, step count, start coordinates,
/// then zig-zag varint deltas per axis and step.
pub fn write_trajectory_binary<W: Write>(
    w: &mut W,
    traj: &Trajectory,
    d: usize,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, d as u8])?;
    let steps = (traj.positions.len() - 1) as u64;
    w.write_all(&steps.to_le_bytes())?;
    for i in 0..d {
        w.write_all(&traj.positions[0].coord(i).to_le_bytes())?;
    }
    for pair in traj.positions.windows(2) {
        for i in 0..d {
            let delta = pair[1].coord(i) as i32 - pair[0].coord(i) as i32;
            write_varint(w, zigzag_encode(delta))?;
        }
    }
    Ok(())
}

pub fn read_trajectory_binary<R: Read>(r: &mut R) -> io::Result<Vec<Point>> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    if head[4] != VERSION {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "unsupported version"));
    }
    let d = head[5] as usize;
    let mut steps_b = [0u8; 8];
    r.read_exact(&mut steps_b)?;
    let steps = u64::from_le_bytes(steps_b) as usize;
    let mut coords = vec![0i16; d];
    for c in coords.iter_mut() {
        let mut b = [0u8; 2];
        r.read_exact(&mut b)?;
        *c = i16::from_le_bytes(b);
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(Point::new(&coords));
    for _ in 0..steps {
        for c in coords.iter_mut() {
            let delta = zigzag_decode(read_varint(r)?);
            *c = (*c as i32 + delta) as i16;
        }
        out.push(Point::new(&coords));
    }
    Ok(out)
}

/// JSONL row for a regeneration record stream.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RegenRow {
    pub k: usize,
    pub tau: usize,
    pub point: Vec<i16>,
    pub chi: u32,
    pub censored: bool,
}

pub fn write_regen_jsonl<W: Write>(
    w: &mut W,
    records: &[RegenerationRecord],
    d: usize,
) -> io::Result<()> {
    for r in records {
        let row = RegenRow {
            k: r.k,
            tau: r.tau,
            point: r.point.coords(d).to_vec(),
            chi: r.chi,
            censored: r.censored,
        };
        serde_json::to_writer(&mut *w, &row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Process sample as CSV with the header `t, y1.., z1.., s`.
pub fn write_process_csv<W: Write>(
    w: &mut W,
    sample: &ProcessSample,
    cfg: &EnvConfig,
) -> io::Result<()> {
    let mut header = String::from("t");
    for i in 1..=cfg.d {
        header.push_str(&format!(",y{i}"));
    }
    for i in 1..=cfg.d {
        header.push_str(&format!(",z{i}"));
    }
    header.push_str(",s\n");
    w.write_all(header.as_bytes())?;
    for j in 0..sample.t_grid.len() {
        let mut line = format!("{}", sample.t_grid[j]);
        for v in &sample.y[j] {
            line.push_str(&format!(",{v}"));
        }
        for v in &sample.z[j] {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{}\n", sample.s[j]));
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}
