//! Model container (little-endian): magic `ADOM`, u32 version, u64 length of
//! a JSON block holding the network config and formulation, then u64 count
//! and f64 parameters, then u64 count and f64 batch-norm running statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Formulation, NetworkConfig};
use super::network::Network;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ADOM";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    formulation: Formulation,
}

pub fn to_bytes(net: &Network) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&Header {
        config: net.config().clone(),
        formulation: net.formulation().clone(),
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for block in [net.params(), net.running_stats()] {
        buf.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Network> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("missing ADOM header"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let json_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(json_len)?)?;
    let mut blocks = Vec::new();
    for _ in 0..2 {
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(n.checked_mul(8).ok_or_else(|| bad("bad count"))?)?;
        blocks.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let running = blocks.pop().unwrap();
    let params = blocks.pop().unwrap();
    if params.iter().chain(&running).any(|v| !v.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Network::from_parts(header.config, header.formulation, params, running)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(net)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Network> {
    from_bytes(&std::fs::read(path)?, path)
}
