//! Binary checkpoints of a [`PpoAgent`].
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `ASCK` | 4 bytes |
//! | version (1) | u32 |
//! | onehot_dim, dense_dim, hidden, n_actions | 4 × u32 |
//! | Adam step count | u64 |
//! | return normalizer count, mean, m2 | u64, f64, f64 |
//! | parameters | n × f32 |
//! | Adam first moments | n × f32 |
//! | Adam second moments | n × f32 |
//!
//! where `n` is the parameter count implied by the dimensions.

use std::io::{Read, Write};
use std::path::Path;

use super::net::{ActorCritic, NetShape};
use super::ppo::{Adam, PpoAgent, RunningStat};
use super::PPOConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<checkpoint stream>", e)
}

pub fn write_checkpoint<W: Write>(agent: &PpoAgent, w: &mut W) -> Result<()> {
    let s = agent.net.shape();
    let mut buf = Vec::with_capacity(64 + 12 * s.n_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [s.onehot_dim, s.dense_dim, s.hidden, s.n_actions] {
        let d = u32::try_from(d).map_err(|_| Error::Config(format!("dimension {d} does not fit a checkpoint")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&agent.adam.t.to_le_bytes());
    buf.extend_from_slice(&agent.return_stat.count.to_le_bytes());
    buf.extend_from_slice(&agent.return_stat.mean.to_le_bytes());
    buf.extend_from_slice(&agent.return_stat.m2.to_le_bytes());
    for tensor in [agent.net.params(), &agent.adam.m, &agent.adam.v] {
        for x in tensor {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::parse("checkpoint", format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| Ok(f32::from_le_bytes(self.take()?))).collect()
    }
}

/// Reads a checkpoint; `cfg` supplies the optimizer settings.
pub fn read_checkpoint<R: Read>(r: &mut R, cfg: PPOConfig) -> Result<PpoAgent> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if &c.take::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::parse("checkpoint", "bad magic"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse("checkpoint", format!("unsupported version {version}")));
    }
    let shape = NetShape {
        onehot_dim: c.u32()? as usize,
        dense_dim: c.u32()? as usize,
        hidden: c.u32()? as usize,
        n_actions: c.u32()? as usize,
    };
    let n = shape.n_params();
    let t = c.u64()?;
    let return_stat = RunningStat { count: c.u64()?, mean: c.f64()?, m2: c.f64()? };
    let params = c.f32s(n)?;
    let m = c.f32s(n)?;
    let v = c.f32s(n)?;
    if c.pos != bytes.len() {
        return Err(Error::parse("checkpoint", format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let mut adam = Adam::new(n, cfg.learning_rate);
    adam.m = m;
    adam.v = v;
    adam.t = t;
    Ok(PpoAgent { net: ActorCritic::from_params(shape, params), adam, cfg, return_stat })
}

pub fn save_checkpoint(agent: &PpoAgent, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(agent, &mut f)
}

pub fn load_checkpoint(path: &Path, cfg: PPOConfig) -> Result<PpoAgent> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut f, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = NetShape { onehot_dim: 10, dense_dim: 3, hidden: 4, n_actions: 5 };
        let mut agent = PpoAgent::new(shape, 2, PPOConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        agent.adam.t = 7;
        agent.adam.m[3] = -0.25;
        agent.return_stat.push(1.5);
        agent.return_stat.push(-2.0);
        let mut bytes = Vec::new();
        write_checkpoint(&agent, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"ASCK");
        let back = read_checkpoint(&mut bytes.as_slice(), PPOConfig::default()).unwrap();
        assert_eq!(back.net, agent.net);
        assert_eq!(back.adam, agent.adam);
        assert_eq!(back.return_stat, agent.return_stat);
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(read_checkpoint(&mut &b"XXXX"[..], PPOConfig::default()).is_err());
        let shape = NetShape { onehot_dim: 2, dense_dim: 1, hidden: 2, n_actions: 2 };
        let agent = PpoAgent::new(shape, 1, PPOConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let mut bytes = Vec::new();
        write_checkpoint(&agent, &mut bytes).unwrap();
        bytes.pop();
        assert!(read_checkpoint(&mut bytes.as_slice(), PPOConfig::default()).is_err());
    }
}
