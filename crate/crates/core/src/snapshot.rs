//! `SLW1` binary snapshots.
//!
//! Layout, all little-endian:
//!
//! | offset | field                         |
//! |--------|-------------------------------|
//! | 0      | magic `b"SLW1"`               |
//! | 4      | `dim` (u64)                   |
//! | 12     | `points_per_axis` (u64)       |
//! | 20     | `L` (f64)                     |
//! | 28     | `N` (u64)                     |
//! | 36     | `time` (f64)                  |
//! | 44     | `N × points` pairs `(re, im)` of f64, field-major, row-major grid |

use num_complex::Complex64;

use crate::error::{LoheError, Result};
use crate::grid::{GridSpec, WaveField};
use crate::model::EnsembleState;

pub const MAGIC: &[u8; 4] = b"SLW1";
pub const HEADER_LEN: usize = 44;

/// Upper bound on oscillators accepted from a file.
pub const MAX_OSCILLATORS: u64 = 4096;

pub fn encode(state: &EnsembleState) -> Vec<u8> {
    let grid = state.grid();
    let points = grid.total_points();
    let mut out = Vec::with_capacity(HEADER_LEN + state.n() * points * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(grid.points_per_axis() as u64).to_le_bytes());
    out.extend_from_slice(&grid.length().to_le_bytes());
    out.extend_from_slice(&(state.n() as u64).to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    for field in state.fields() {
        for v in field.values() {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Decode and validate a snapshot. Never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<EnsembleState> {
    let bad = |msg: String| LoheError::Snapshot(msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing SLW1 magic".into()));
    }
    let dim = read_u64(bytes, 4);
    let ppa = read_u64(bytes, 12);
    let length = read_f64(bytes, 20);
    let n = read_u64(bytes, 28);
    let time = read_f64(bytes, 36);
    if !(1..=3).contains(&dim) {
        return Err(bad(format!("dimension {dim} not in 1..=3")));
    }
    if ppa > u32::MAX as u64 {
        return Err(bad(format!("points per axis {ppa} too large")));
    }
    let grid = GridSpec::new(dim as usize, ppa as usize, length).map_err(|e| bad(e.to_string()))?;
    if n == 0 || n > MAX_OSCILLATORS {
        return Err(bad(format!("oscillator count {n} out of range")));
    }
    if !time.is_finite() {
        return Err(bad("non-finite time".into()));
    }
    let points = grid.total_points();
    let expected = (n as usize)
        .checked_mul(points)
        .and_then(|c| c.checked_mul(16))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("payload size overflows".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut fields = Vec::with_capacity(n as usize);
    let mut at = HEADER_LEN;
    for _ in 0..n {
        let mut values = Vec::with_capacity(points);
        for _ in 0..points {
            let v = Complex64::new(read_f64(bytes, at), read_f64(bytes, at + 8));
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(bad(format!("non-finite sample at byte {at}")));
            }
            values.push(v);
            at += 16;
        }
        fields.push(WaveField::new(grid, values).map_err(|e| bad(e.to_string()))?);
    }
    EnsembleState::new(time, fields).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::{gaussian, GaussianSpec};
    use proptest::prelude::*;

    fn sample_state() -> EnsembleState {
        let g = GridSpec::line(16, 4.0).unwrap();
        let a = gaussian(&g, &GaussianSpec::centered_at(2.0, 0.5)).unwrap();
        let b = gaussian(&g, &GaussianSpec { phase: 1.0, ..GaussianSpec::centered_at(1.0, 0.7) }).unwrap();
        EnsembleState::new(3.25, vec![a, b]).unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode(&sample_state());
        assert_eq!(&bytes[..4], b"SLW1");
        assert_eq!(read_u64(&bytes, 4), 1);
        assert_eq!(read_u64(&bytes, 12), 16);
        assert_eq!(read_f64(&bytes, 20), 4.0);
        assert_eq!(read_u64(&bytes, 28), 2);
        assert_eq!(read_f64(&bytes, 36), 3.25);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 16 * 16);
    }

    #[test]
    fn rejects_malformed_input() {
        let good = encode(&sample_state());
        assert!(decode(&good[..10]).is_err());
        let mut wrong_magic = good.clone();
        wrong_magic[0] = b'X';
        assert!(decode(&wrong_magic).is_err());
        assert!(decode(&good[..good.len() - 1]).is_err());
        let mut huge_n = good.clone();
        huge_n[28..36].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode(&huge_n).is_err());
        let mut bad_ppa = good.clone();
        bad_ppa[12..20].copy_from_slice(&17u64.to_le_bytes());
        assert!(decode(&bad_ppa).is_err());
        let mut nan = good.clone();
        nan[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&nan).is_err());
    }

    proptest! {
        #[test]
        fn round_trips(values in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 32), t in -1e6f64..1e6) {
            let g = GridSpec::line(16, 2.5).unwrap();
            let fields = values.chunks(16)
                .map(|c| WaveField::new(g, c.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap())
                .collect();
            let state = EnsembleState::new(t, fields).unwrap();
            prop_assert_eq!(decode(&encode(&state)).unwrap(), state);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode(&bytes);
        }
    }
}
