//! The `PSAN` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "PSAN"
//! version  u32
//! count    u32      number of tensors
//! count x {
//!     name_len u32, name (UTF-8, name_len bytes)
//!     rank     u32, dims (rank x u64)
//!     data     product(dims) x f64
//! }
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load cycle is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::params::Parameters;

pub const MAGIC: &[u8; 4] = b"PSAN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        ensure!(
            dims.iter().product::<usize>() == data.len(),
            "tensor `{name}` has dims {dims:?} but {} values",
            data.len()
        );
        Ok(Self { name, dims, data })
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len()],
            data,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.require(name)?;
        match t.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Format(format!("tensor `{name}` is not a scalar"))),
        }
    }

    pub fn contains_prefix(&self, prefix: &str) -> bool {
        self.tensors.iter().any(|t| t.name.starts_with(prefix))
    }

    /// Appends every tensor of `params` under `prefix.`.
    pub fn push_params(&mut self, prefix: &str, params: &impl Parameters) {
        params.visit(&mut |name, dims, data| {
            self.tensors.push(Tensor {
                name: format!("{prefix}.{name}"),
                dims: dims.to_vec(),
                data: data.to_vec(),
            });
        });
    }

    /// Overwrites every tensor of `params` from `prefix.` entries, checking
    /// that shapes agree.
    pub fn load_params(&self, prefix: &str, params: &mut impl Parameters) -> Result<()> {
        let mut dims = Vec::new();
        params.visit(&mut |_, d, _| dims.push(d.to_vec()));
        let mut err = None;
        let mut i = 0;
        params.visit_mut(&mut |name, data| {
            if err.is_some() {
                return;
            }
            let full = format!("{prefix}.{name}");
            match self.get(&full) {
                Some(t) if t.dims == dims[i] && t.data.len() == data.len() => {
                    data.copy_from_slice(&t.data)
                }
                Some(t) => {
                    err = Some(Error::Format(format!(
                        "tensor `{full}` has dims {:?}, expected {:?}",
                        t.dims, dims[i]
                    )))
                }
                None => err = Some(Error::Format(format!("missing tensor `{full}`"))),
            }
            i += 1;
        });
        err.map_or(Ok(()), Err)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(
            &u32::try_from(self.tensors.len())
                .map_err(|_| Error::Format("too many tensors".into()))?
                .to_le_bytes(),
        )?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for &d in &t.dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic bytes {magic:?}, expected \"PSAN\""
            )));
        }
        let version = read_u32(&mut r, "version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = read_u32(&mut r, "tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = read_u32(&mut r, "name length")? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name, "tensor name")?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r, "rank")? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b, "dims")?;
                dims.push(
                    usize::try_from(u64::from_le_bytes(b))
                        .map_err(|_| Error::Format("dimension overflow".into()))?,
                );
            }
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor `{name}` is too large")))?;
            let mut data = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b, "tensor data")?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.push(Tensor { name, dims, data });
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Format(format!("truncated checkpoint while reading {what}"))
        }
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
