//! Versioned little-endian binary containers for trajectories and
//! parameter checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"DSKT";
pub const TRAJECTORY_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DSKP";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; count * 8];
        self.inner
            .read_exact(&mut raw)
            .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

fn write_f64s(out: &mut impl Write, data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Writes a node-major `N x T x d` trajectory.
pub fn write_trajectory(mut out: impl Write, traj: &Trajectory) -> Result<()> {
    out.write_all(TRAJECTORY_MAGIC)?;
    out.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
    out.write_all(&(traj.node_count as u64).to_le_bytes())?;
    out.write_all(&(traj.len as u64).to_le_bytes())?;
    out.write_all(&(traj.dim as u32).to_le_bytes())?;
    out.write_all(&traj.dt.to_le_bytes())?;
    write_f64s(&mut out, &traj.data)
}

pub fn read_trajectory(input: impl Read) -> Result<Trajectory> {
    let mut r = Reader { inner: input };
    let magic: [u8; 4] = r.bytes()?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Format("not a trajectory file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != TRAJECTORY_VERSION {
        return Err(Error::Format(format!("unsupported trajectory version {version}")));
    }
    let node_count = r.u64()? as usize;
    let len = r.u64()? as usize;
    let dim = r.u32()? as usize;
    let dt = r.f64()?;
    let data = r.f64s(node_count * len * dim)?;
    Ok(Trajectory {
        node_count,
        len,
        dim,
        dt,
        data,
    })
}

pub fn save_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory(file, traj)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    read_trajectory(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// One named tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn write_checkpoint(mut out: impl Write, tensors: &[NamedTensor]) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.name.len() as u32).to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&(t.rows as u64).to_le_bytes())?;
        out.write_all(&(t.cols as u64).to_le_bytes())?;
        write_f64s(&mut out, &t.data)?;
    }
    Ok(())
}

pub fn read_checkpoint(input: impl Read) -> Result<Vec<NamedTensor>> {
    let mut r = Reader { inner: input };
    let magic: [u8; 4] = r.bytes()?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut name = vec![0u8; len];
        r.inner
            .read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let data = r.f64s(rows * cols)?;
        out.push(NamedTensor { name, rows, cols, data });
    }
    Ok(out)
}
