//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size    | field                              |
//! |--------|---------|------------------------------------|
//! | 0      | 8       | magic `RFSTPOL\0`                  |
//! | 8      | 4       | format version (`u32`)             |
//! | 12     | 8       | network config hash (`u64`)        |
//! | 20     | 8       | parameter count `n` (`u64`)        |
//! | 28     | 4·n     | parameters (`f32`)                 |

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{NetConfig, NnError};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"RFSTPOL\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

/// FNV-1a over the canonical JSON of the network config.
pub fn config_hash(config: &NetConfig) -> u64 {
    let json = serde_json::to_vec(config).expect("config serializes");
    json.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub params: Vec<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.params.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let bad = |m: &str| NnError::Checkpoint(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let config_hash = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let n = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len()
            != n.checked_mul(4)
                .ok_or_else(|| bad("parameter count overflow"))?
        {
            return Err(NnError::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                n * 4,
                body.len()
            )));
        }
        let params = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            config_hash,
            params,
        })
    }
}

/// Writes to a sibling temp file and renames it into place.
pub fn save_checkpoint(path: &Path, config: &NetConfig, params: &[f32]) -> Result<(), NnError> {
    let ckpt = Checkpoint {
        config_hash: config_hash(config),
        params: params.to_vec(),
    };
    write_atomic(path, &ckpt.to_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), NnError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Loads parameters, rejecting files written for a different network config.
pub fn load_checkpoint(path: &Path, config: &NetConfig) -> Result<Vec<f32>, NnError> {
    let ckpt = Checkpoint::from_bytes(&fs::read(path)?)?;
    let expected = config_hash(config);
    if ckpt.config_hash != expected {
        return Err(NnError::ConfigMismatch {
            expected,
            found: ckpt.config_hash,
        });
    }
    Ok(ckpt.params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let cfg = NetConfig::default();
        let params = vec![1.5f32, -0.0, f32::MIN_POSITIVE, 3.25];
        save_checkpoint(&path, &cfg, &params).unwrap();
        let back = load_checkpoint(&path, &cfg).unwrap();
        assert_eq!(
            back.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            params.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        let other = NetConfig {
            hidden_units: 64,
            ..cfg
        };
        assert!(matches!(
            load_checkpoint(&path, &other),
            Err(NnError::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn header_layout() {
        let bytes = Checkpoint {
            config_hash: 0x0102_0304_0506_0708,
            params: vec![1.0],
        }
        .to_bytes();
        assert_eq!(&bytes[..8], b"RFSTPOL\0");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&bytes[20..28], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[28..], &1.0f32.to_le_bytes());
        assert!(Checkpoint::from_bytes(&bytes[..30]).is_err());
    }
}
