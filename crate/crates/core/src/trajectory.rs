//! Multi-field 2D trajectories and the `DWTRJ1` file format.
//!
//! Header (little-endian): magic `DWTRJ1`, version u32, T, M, H, W as u32,
//! dt f64, two periodicity flags u8, M length-prefixed field names, then M
//! (mean, std) f64 pairs. The f32 payload is frame-major, then field-major,
//! then row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::*;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"DWTRJ1";
pub const VERSION: u32 = 1;
const WHAT: &str = "trajectory";

/// Per-field normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FieldStats {
    pub fn identity(fields: usize) -> Self {
        FieldStats { mean: vec![0.0; fields], std: vec![1.0; fields] }
    }

    /// Pooled mean and population standard deviation of each field over all
    /// frames of all trajectories. Zero spread falls back to 1.
    pub fn pooled(trajs: &[Trajectory]) -> Result<Self> {
        let first = trajs.first().ok_or_else(|| Error::EmptyDataset("no trajectories".into()))?;
        let m = first.fields();
        let mut sum = vec![0.0f64; m];
        let mut sq = vec![0.0f64; m];
        let mut count = 0usize;
        for t in trajs {
            if t.fields() != m {
                return Err(Error::InvalidArgument("trajectories disagree on field count".into()));
            }
            for f in 0..t.frames() {
                for k in 0..m {
                    for &v in t.field(f, k) {
                        sum[k] += v as f64;
                        sq[k] += (v as f64) * (v as f64);
                    }
                }
            }
            count += t.frames() * t.height() * t.width();
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, mu)| {
                let var = (q / n - mu * mu).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FieldStats { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dims: [usize; 4],
    data: Vec<f32>,
    pub dt: f64,
    pub periodic: [bool; 2],
    pub names: Vec<String>,
    pub stats: FieldStats,
}

impl Trajectory {
    /// `dims` is (T, M, H, W).
    pub fn new(dims: [usize; 4], data: Vec<f32>, dt: f64, names: Vec<String>) -> Result<Self> {
        let [t, m, h, w] = dims;
        if t == 0 || m == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!("empty trajectory dims {dims:?}")));
        }
        if data.len() != t * m * h * w {
            return Err(Error::InvalidArgument(format!("trajectory data length {} != {t}*{m}*{h}*{w}", data.len())));
        }
        if names.len() != m {
            return Err(Error::InvalidArgument(format!("{} field names for {m} fields", names.len())));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("trajectory data".into()));
        }
        Ok(Trajectory { dims, data, dt, periodic: [true, true], names, stats: FieldStats::identity(m) })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    pub fn frames(&self) -> usize {
        self.dims[0]
    }
    pub fn fields(&self) -> usize {
        self.dims[1]
    }
    pub fn height(&self) -> usize {
        self.dims[2]
    }
    pub fn width(&self) -> usize {
        self.dims[3]
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn is_periodic(&self) -> bool {
        self.periodic[0] && self.periodic[1]
    }

    pub fn frame_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    /// All fields of frame `t`, shape (M, H, W).
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn field(&self, t: usize, k: usize) -> &[f32] {
        let plane = self.dims[2] * self.dims[3];
        let start = t * self.frame_len() + k * plane;
        &self.data[start..start + plane]
    }

    /// Frames `range` as a new trajectory sharing metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames() {
            return Err(Error::InvalidArgument(format!("frame range {start}..{end} of {}", self.frames())));
        }
        let n = self.frame_len();
        let mut out = self.clone();
        out.data = self.data[start * n..end * n].to_vec();
        out.dims[0] = end - start;
        Ok(out)
    }

    /// Map each value `v` of field `k` to `(v - mean_k) / std_k`.
    pub fn normalized(&self, s: &FieldStats) -> Self {
        self.map_fields(|k, v| ((v as f64 - s.mean[k]) / s.std[k]) as f32)
    }

    pub fn denormalized(&self, s: &FieldStats) -> Self {
        self.map_fields(|k, v| (v as f64 * s.std[k] + s.mean[k]) as f32)
    }

    fn map_fields(&self, f: impl Fn(usize, f32) -> f32) -> Self {
        let plane = self.height() * self.width();
        let m = self.fields();
        let mut out = self.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = f((i / plane) % m, *v);
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        for d in self.dims {
            put_len(w, d, WHAT)?;
        }
        put_f64(w, self.dt)?;
        put_u8(w, self.periodic[0] as u8)?;
        put_u8(w, self.periodic[1] as u8)?;
        for n in &self.names {
            put_str(w, n, WHAT)?;
        }
        for k in 0..self.fields() {
            put_f64(w, self.stats.mean[k])?;
            put_f64(w, self.stats.std[k])?;
        }
        put_f32s(w, &self.data)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic: [u8; 6] = get_bytes(r, WHAT)?;
        if &magic != MAGIC {
            return Err(Error::Format { what: WHAT, detail: "bad magic".into() });
        }
        let version = get_u32(r, WHAT)?;
        if version != VERSION {
            return Err(Error::Format { what: WHAT, detail: format!("unsupported version {version}") });
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = get_u32(r, WHAT)? as usize;
        }
        let dt = get_f64(r, WHAT)?;
        let periodic = [get_u8(r, WHAT)? != 0, get_u8(r, WHAT)? != 0];
        let names = (0..dims[1]).map(|_| get_str(r, WHAT, 1024)).collect::<Result<Vec<_>>>()?;
        let mut stats = FieldStats { mean: Vec::new(), std: Vec::new() };
        for _ in 0..dims[1] {
            stats.mean.push(get_f64(r, WHAT)?);
            stats.std.push(get_f64(r, WHAT)?);
        }
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Format { what: WHAT, detail: "dimension overflow".into() })?;
        let data = get_f32s(r, n, WHAT)?;
        let mut t = Trajectory::new(dims, data, dt, names)?;
        t.periodic = periodic;
        t.stats = stats;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_from(&mut BufReader::new(f))
    }

    /// Import a `.npy` array of shape (T, M, H, W) (f32 or f64).
    pub fn import_npy(path: impl AsRef<Path>, dt: f64, names: Option<Vec<String>>) -> Result<Self> {
        use ndarray::{Array4, ArrayD};
        use ndarray_npy::ReadNpyExt;
        let path = path.as_ref();
        let open = || -> Result<BufReader<File>> {
            Ok(BufReader::new(File::open(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
                _ => Error::Io(e),
            })?))
        };
        let fmt = |e: ndarray_npy::ReadNpyError| Error::Format { what: "npy", detail: e.to_string() };
        let arr: ArrayD<f32> = match ArrayD::<f32>::read_npy(open()?) {
            Ok(a) => a,
            Err(_) => ArrayD::<f64>::read_npy(open()?).map_err(fmt)?.mapv(|v| v as f32),
        };
        let arr: Array4<f32> = arr
            .into_dimensionality()
            .map_err(|e| Error::Format { what: "npy", detail: format!("expected a (T, M, H, W) array: {e}") })?;
        let dims = [arr.shape()[0], arr.shape()[1], arr.shape()[2], arr.shape()[3]];
        let names = names.unwrap_or_else(|| (0..dims[1]).map(|k| format!("field{k}")).collect());
        let data = arr.as_standard_layout().iter().copied().collect();
        Trajectory::new(dims, data, dt, names)
    }
}
