//! Binary trainer checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "INAVRL1\0"
//! hash       u64      architecture hash of the run
//! iteration  u64      completed global iterations
//! phase      u32      zero-based curriculum phase
//! kl_coeff   f64
//! adam_step  u64
//! history    u32 count, then f64 goal rates (NaN marks a missing rate)
//! actor      u32 layer-size count, then u32 sizes
//! critic     u32 layer-size count, then u32 sizes
//! payload    f32 actor params, critic params, Adam m, Adam v
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::env::ACTION_COUNT;
use crate::ppo::nn::{Adam, Mlp};
use crate::ppo::{PolicyParams, TrainerState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INAVRL1\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("truncated checkpoint")]
    Truncated,
    #[error("checkpoint config hash mismatch: expected {expected:016x}, found {found:016x}")]
    HashMismatch { expected: u64, found: u64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Trainer state plus the metadata needed to resume a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub state: TrainerState,
    /// Goal rates of the most recent iterations, oldest first.
    pub goal_rate_history: Vec<Option<f64>>,
}

/// Human-readable summary written next to each binary checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointSidecar {
    pub iteration: u64,
    /// One-based, matching the metrics CSV.
    pub phase: u32,
    pub config_hash: String,
    pub kl_coeff: f64,
    pub adam_step: u64,
    pub param_count: usize,
    pub checksum: String,
    pub goal_rate_history: Vec<Option<f64>>,
}

impl Checkpoint {
    pub fn sidecar(&self) -> CheckpointSidecar {
        CheckpointSidecar {
            iteration: self.state.iteration,
            phase: self.state.phase + 1,
            config_hash: format!("{:016x}", self.config_hash),
            kl_coeff: self.state.kl_coeff,
            adam_step: self.state.optimizer.step,
            param_count: self.state.params.param_count(),
            checksum: self.state.checksum(),
            goal_rate_history: self.goal_rate_history.clone(),
        }
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let state = &ck.state;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&ck.config_hash.to_le_bytes());
    out.extend_from_slice(&state.iteration.to_le_bytes());
    out.extend_from_slice(&state.phase.to_le_bytes());
    out.extend_from_slice(&state.kl_coeff.to_le_bytes());
    out.extend_from_slice(&state.optimizer.step.to_le_bytes());
    out.extend_from_slice(&(ck.goal_rate_history.len() as u32).to_le_bytes());
    for rate in &ck.goal_rate_history {
        out.extend_from_slice(&rate.unwrap_or(f64::NAN).to_le_bytes());
    }
    for net in [&state.params.actor, &state.params.critic] {
        let sizes = net.sizes();
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
    }
    let params = state.params.param_slices();
    let moments = [state.optimizer.m.as_slice(), state.optimizer.v.as_slice()];
    for slice in params.into_iter().chain(moments) {
        for v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let chunk = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(chunk)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, out: &mut [f32]) -> Result<(), CheckpointError> {
        let chunk = self.take(out.len() * 4)?;
        for (v, b) in out.iter_mut().zip(chunk.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
        Ok(())
    }

    fn sizes(&mut self) -> Result<Vec<usize>, CheckpointError> {
        let count = self.u32()? as usize;
        if !(2..=64).contains(&count) {
            return Err(CheckpointError::Corrupt(format!("{count} layer sizes")));
        }
        let sizes = (0..count)
            .map(|_| self.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if sizes.iter().any(|&s| s == 0 || s > 1 << 16) {
            return Err(CheckpointError::Corrupt(format!("layer sizes {sizes:?}")));
        }
        Ok(sizes)
    }
}

/// Decodes a checkpoint. With `expected_hash`, a file from a different
/// architecture is refused before its payload is read.
pub fn decode_checkpoint(bytes: &[u8], expected_hash: Option<u64>) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        return if CHECKPOINT_MAGIC.starts_with(bytes) {
            Err(CheckpointError::Truncated)
        } else {
            Err(CheckpointError::BadMagic)
        };
    }
    let mut r = Reader { bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let config_hash = r.u64()?;
    if let Some(expected) = expected_hash {
        if expected != config_hash {
            return Err(CheckpointError::HashMismatch {
                expected,
                found: config_hash,
            });
        }
    }
    let iteration = r.u64()?;
    let phase = r.u32()?;
    let kl_coeff = r.f64()?;
    let adam_step = r.u64()?;
    let history_len = r.u32()? as usize;
    if history_len > 1 << 20 {
        return Err(CheckpointError::Corrupt(format!("{history_len} history entries")));
    }
    let goal_rate_history = (0..history_len)
        .map(|_| r.f64().map(|v| (!v.is_nan()).then_some(v)))
        .collect::<Result<Vec<_>, _>>()?;
    let actor_sizes = r.sizes()?;
    let critic_sizes = r.sizes()?;
    if actor_sizes[0] != critic_sizes[0] || actor_sizes.last() != Some(&ACTION_COUNT) || critic_sizes.last() != Some(&1)
    {
        return Err(CheckpointError::Corrupt(format!(
            "network shapes actor {actor_sizes:?}, critic {critic_sizes:?}"
        )));
    }
    let count = |sizes: &[usize]| sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum::<usize>();
    let param_count = count(&actor_sizes) + count(&critic_sizes);
    // Sized before allocating so a damaged header cannot request huge buffers.
    if bytes.len() - r.pos < param_count * 3 * 4 {
        return Err(CheckpointError::Truncated);
    }
    let mut params = PolicyParams {
        actor: Mlp::zeros(&actor_sizes),
        critic: Mlp::zeros(&critic_sizes),
    };
    for slice in params.param_slices_mut() {
        r.f32s(slice)?;
    }
    let mut optimizer = Adam::new(params.param_count());
    optimizer.step = adam_step;
    r.f32s(&mut optimizer.m)?;
    r.f32s(&mut optimizer.v)?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        config_hash,
        state: TrainerState {
            params,
            optimizer,
            kl_coeff,
            iteration,
            phase,
        },
        goal_rate_history,
    })
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the checkpoint through a temporary file and a rename, so an
/// interrupted write never leaves a half-written checkpoint in place.
pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, encode_checkpoint(ck)).map_err(io_error(&tmp))?;
    fs::rename(&tmp, path).map_err(io_error(path))
}

pub fn read_checkpoint(path: &Path, expected_hash: Option<u64>) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    decode_checkpoint(&bytes, expected_hash)
}

pub fn write_sidecar(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let mut text = serde_json::to_string_pretty(&ck.sidecar()).expect("sidecar serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::{architecture_hash, TrainConfig};

    fn sample() -> Checkpoint {
        let config = TrainConfig {
            hidden_layers: vec![5, 4],
            seed: 3,
            ..TrainConfig::default()
        };
        let mut state = TrainerState::new(&config, 38);
        state.iteration = 12;
        state.phase = 1;
        state.kl_coeff = 0.45;
        state.optimizer.step = 360;
        for (i, v) in state.optimizer.m.iter_mut().enumerate() {
            *v = i as f32 * 1e-3;
        }
        Checkpoint {
            config_hash: architecture_hash(38, &[5, 4]),
            state,
            goal_rate_history: vec![Some(0.5), None, Some(1.0)],
        }
    }

    #[test]
    fn round_trip_is_lossless_and_byte_stable() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint(&bytes, Some(ck.config_hash)).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn distinct_failure_kinds() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck);
        for cut in [3, 8, 20, 60, bytes.len() - 1] {
            assert!(
                matches!(decode_checkpoint(&bytes[..cut], None), Err(CheckpointError::Truncated)),
                "cut at {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad, None), Err(CheckpointError::BadMagic)));
        let other = architecture_hash(40, &[5, 4]);
        match decode_checkpoint(&bytes, Some(other)) {
            Err(CheckpointError::HashMismatch { expected, found }) => {
                assert_eq!((expected, found), (other, ck.config_hash));
            }
            r => panic!("unexpected {r:?}"),
        }
        let mut long = bytes;
        long.push(0);
        assert!(matches!(
            decode_checkpoint(&long, None),
            Err(CheckpointError::Corrupt(_))
        ));
        let msg = CheckpointError::Truncated.to_string();
        assert_eq!(msg, "truncated checkpoint");
    }

    #[test]
    fn file_round_trip_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let ck = sample();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        write_checkpoint(&a, &ck).unwrap();
        let back = read_checkpoint(&a, Some(ck.config_hash)).unwrap();
        write_checkpoint(&b, &back).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let side = dir.path().join("a.json");
        write_sidecar(&side, &ck).unwrap();
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(side).unwrap()).unwrap();
        assert_eq!(json["iteration"], 12);
        assert_eq!(json["phase"], 2);
        assert_eq!(json["checksum"], ck.state.checksum());
        assert!(json["goal_rate_history"][1].is_null());
    }
}
