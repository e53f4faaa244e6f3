//! Self-describing checkpoint container: a text metadata header followed by
//! named double-precision arrays in row-major order, little-endian.
//!
//! Header keys are `dim`, `n`, `time`, `params` and the array directory
//! `arrays`; array keys are `u0`, `u1` (`u2` in 3-D) and `q11`, `q12`,
//! `q13`, `q22`, `q23`.

use crate::algebra::PotentialParams;
use crate::error::{Error, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::scalar::{as_f64, r64, Real};
use crate::timestepper::State;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "qtensor-checkpoint v1";
const Q_KEYS: [&str; 5] = ["q11", "q12", "q13", "q22", "q23"];

fn array_keys(dim: usize) -> Vec<String> {
    let mut keys: Vec<String> = (0..dim).map(|c| format!("u{c}")).collect();
    keys.extend(Q_KEYS.iter().map(|s| s.to_string()));
    keys
}

pub fn write_state<R: Real, P: AsRef<Path>>(
    path: P,
    grid: &Grid<R>,
    state: &State<R>,
    params: &PotentialParams<R>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dim: {}", grid.dim())?;
    writeln!(w, "n: {}", grid.n())?;
    writeln!(w, "time: {}", as_f64(state.t))?;
    writeln!(
        w,
        "params: a={} b={} c={} r={} c1={} lambda={}",
        as_f64(params.a),
        as_f64(params.b),
        as_f64(params.c),
        as_f64(params.r),
        as_f64(params.c1),
        as_f64(params.lambda)
    )?;
    writeln!(w, "arrays: {}", array_keys(grid.dim()).join(" "))?;
    writeln!(w, "data:")?;
    let mut write_plane = |plane: &ScalarField<R>| -> Result<()> {
        for &v in &plane.data {
            w.write_all(&as_f64(v).to_le_bytes())?;
        }
        Ok(())
    };
    for comp in &state.u.comps {
        write_plane(comp)?;
    }
    for comp in &state.q.comps {
        write_plane(comp)?;
    }
    Ok(())
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(':'))
        .map(str::trim)
}

pub fn read_state<R: Real, P: AsRef<Path>>(
    path: P,
) -> Result<(Grid<R>, State<R>, PotentialParams<R>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    // Split the text header from the binary payload at the `data:` line.
    let marker = b"\ndata:\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::CheckpointFormat("missing data section".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::CheckpointFormat("header is not UTF-8".into()))?;
    let payload = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::CheckpointFormat("unrecognized magic line".into()));
    }
    let mut dim = None;
    let mut n = None;
    let mut time = None;
    let mut params = None;
    let mut arrays: Option<Vec<String>> = None;
    for line in lines {
        if let Some(v) = header_value(line, "dim") {
            dim = Some(v.parse::<usize>().map_err(|e| {
                Error::CheckpointFormat(format!("bad dim: {e}"))
            })?);
        } else if let Some(v) = header_value(line, "n") {
            n = Some(v.parse::<usize>().map_err(|e| {
                Error::CheckpointFormat(format!("bad n: {e}"))
            })?);
        } else if let Some(v) = header_value(line, "time") {
            time = Some(v.parse::<f64>().map_err(|e| {
                Error::CheckpointFormat(format!("bad time: {e}"))
            })?);
        } else if let Some(v) = header_value(line, "params") {
            let mut kv = std::collections::HashMap::new();
            for pair in v.split_whitespace() {
                let (key, value) = pair.split_once('=').ok_or_else(|| {
                    Error::CheckpointFormat(format!("bad params entry: {pair}"))
                })?;
                let value = value.parse::<f64>().map_err(|e| {
                    Error::CheckpointFormat(format!("bad params value {pair}: {e}"))
                })?;
                kv.insert(key.to_string(), value);
            }
            let get = |k: &str| -> Result<f64> {
                kv.get(k).copied().ok_or_else(|| {
                    Error::CheckpointFormat(format!("params missing {k}"))
                })
            };
            params = Some(PotentialParams {
                a: r64::<R>(get("a")?),
                b: r64::<R>(get("b")?),
                c: r64::<R>(get("c")?),
                r: r64::<R>(get("r")?),
                c1: r64::<R>(get("c1")?),
                lambda: r64::<R>(get("lambda")?),
            });
        } else if let Some(v) = header_value(line, "arrays") {
            arrays = Some(v.split_whitespace().map(str::to_string).collect());
        } else if !line.trim().is_empty() {
            return Err(Error::CheckpointFormat(format!(
                "unrecognized header line: {line}"
            )));
        }
    }

    let dim = dim.ok_or_else(|| Error::CheckpointFormat("missing dim".into()))?;
    let n = n.ok_or_else(|| Error::CheckpointFormat("missing n".into()))?;
    let time = time.ok_or_else(|| Error::CheckpointFormat("missing time".into()))?;
    let params = params.ok_or_else(|| Error::CheckpointFormat("missing params".into()))?;
    let arrays = arrays.ok_or_else(|| Error::CheckpointFormat("missing arrays".into()))?;
    let expected = array_keys(dim);
    if arrays != expected {
        return Err(Error::CheckpointFormat(format!(
            "array directory {arrays:?} does not match {expected:?}"
        )));
    }

    let grid = Grid::<R>::new(dim, n)?;
    let plane_bytes = grid.len() * 8;
    if payload.len() != plane_bytes * arrays.len() {
        return Err(Error::CheckpointFormat(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            plane_bytes * arrays.len()
        )));
    }
    let mut planes: Vec<ScalarField<R>> = Vec::with_capacity(arrays.len());
    for chunk in payload.chunks_exact(plane_bytes) {
        let data = chunk
            .chunks_exact(8)
            .map(|b| r64::<R>(f64::from_le_bytes(b.try_into().unwrap())))
            .collect();
        planes.push(ScalarField { data });
    }
    let q = TensorField {
        comps: planes.split_off(dim),
    };
    let u = VectorField { comps: planes };
    Ok((grid, State::new(r64(time), u, q), params))
}
