//! `RSPD1` dataset files.
//!
//! Layout: magic `RSPD1`, u32 LE header length, JSON header, then every state
//! row followed by every action row as LE `f32`, trajectory-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::{ACTION_DIM, GOAL_DIM, STATE_DIM};
use super::norm::NormStats;
use crate::binio::{self, ByteReader};
use crate::env::{PointState, Trajectory};
use crate::error::Result;

pub const DATASET_MAGIC: &[u8; 5] = b"RSPD1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub count: usize,
    pub lengths: Vec<usize>,
    pub norm: NormStats,
    /// Preset the data was collected in, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
}

/// Trajectories plus the statistics fitted on them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub norm: NormStats,
    pub env: Option<String>,
}

impl Dataset {
    /// Fits normalization statistics on `trajectories`.
    pub fn new(trajectories: Vec<Trajectory>, env: Option<String>) -> Result<Self> {
        let norm = NormStats::fit(&trajectories)?;
        Ok(Self {
            trajectories,
            norm,
            env,
        })
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            state_dim: STATE_DIM,
            action_dim: ACTION_DIM,
            goal_dim: GOAL_DIM,
            count: self.trajectories.len(),
            lengths: self.trajectories.iter().map(Trajectory::len).collect(),
            norm: self.norm.clone(),
            env: self.env.clone(),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = binio::header_bytes(&self.header());
        let mut out = Vec::with_capacity(dataset_file_size(json.len(), self.total_steps()));
        binio::put_header(&mut out, DATASET_MAGIC, &json);
        for t in &self.trajectories {
            for s in &t.states {
                binio::put_f32s(&mut out, &s.to_array());
            }
        }
        for t in &self.trajectories {
            for a in &t.actions {
                binio::put_f32s(&mut out, a);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(DATASET_MAGIC)?;
        let h: DatasetHeader = r.header()?;
        if (h.state_dim, h.action_dim, h.goal_dim) != (STATE_DIM, ACTION_DIM, GOAL_DIM) {
            return Err(r.err(format!(
                "dimension mismatch: file has state/action/goal dims {}/{}/{}, expected {STATE_DIM}/{ACTION_DIM}/{GOAL_DIM}",
                h.state_dim, h.action_dim, h.goal_dim
            )));
        }
        if h.count != h.lengths.len() {
            return Err(r.err(format!(
                "header count {} disagrees with {} listed lengths",
                h.count,
                h.lengths.len()
            )));
        }
        if h.norm.state_dim() != STATE_DIM || h.norm.action_dim() != ACTION_DIM || !h.norm.is_valid() {
            return Err(r.err("normalization statistics have the wrong shape or invalid values"));
        }
        let total: usize = h.lengths.iter().sum();
        let states = r.f32s(total * STATE_DIM)?;
        let actions = r.f32s(total * ACTION_DIM)?;
        r.finish()?;
        let mut trajectories = Vec::with_capacity(h.count);
        let mut at = 0;
        for &len in &h.lengths {
            trajectories.push(Trajectory {
                states: states[at * STATE_DIM..(at + len) * STATE_DIM]
                    .chunks_exact(STATE_DIM)
                    .map(PointState::from_slice)
                    .collect(),
                actions: actions[at * ACTION_DIM..(at + len) * ACTION_DIM]
                    .chunks_exact(ACTION_DIM)
                    .map(|a| [a[0], a[1]])
                    .collect(),
            });
            at += len;
        }
        Ok(Self {
            trajectories,
            norm: h.norm,
            env: h.env,
        })
    }
}

/// Closed-form file size for a header of `header_len` bytes and `total_steps` rows.
pub fn dataset_file_size(header_len: usize, total_steps: usize) -> usize {
    DATASET_MAGIC.len() + 4 + header_len + 4 * total_steps * (STATE_DIM + ACTION_DIM)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    binio::write_file(path, &ds.to_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&binio::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{scripted_collect, CollectStyle, Maze};
    use crate::error::Error;

    fn small() -> Dataset {
        let m = Maze::preset("umaze").unwrap();
        let t = scripted_collect(&m, CollectStyle::Diverse, 5, 100, 2).unwrap();
        Dataset::new(t, Some("umaze".into())).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = small();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn corrupt_magic_names_offset_zero() {
        let mut b = small().to_bytes();
        b[2] ^= 0xff;
        match Dataset::from_bytes(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_a_format_error() {
        let b = small().to_bytes();
        assert!(matches!(
            Dataset::from_bytes(&b[..b.len() - 3]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ds = small();
        let mut h = ds.header();
        h.state_dim = 3;
        let mut b = Vec::new();
        binio::put_header(&mut b, DATASET_MAGIC, &binio::header_bytes(&h));
        assert!(matches!(Dataset::from_bytes(&b), Err(Error::Format { .. })));
    }
}
