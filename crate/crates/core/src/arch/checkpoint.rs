//! `DWNCKPT1` model checkpoints.
//!
//! Layout (little-endian): magic, config record, parameter count, then per
//! parameter its name, four u32 dims and f32 data. Optional tagged sections
//! follow (`ADAM` optimizer moments, `NORM` field statistics) and the file
//! ends with the tag `END!`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Family, Model, ModelConfig};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::tensor::{PaddingMode, Shape, Tensor};
use crate::trainer::AdamState;
use crate::trajectory::FieldStats;

pub const MAGIC: &[u8; 8] = b"DWNCKPT1";
const WHAT: &str = "checkpoint";
const MAX_NAME: usize = 4096;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<AdamState>,
    pub norm: Option<FieldStats>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint { model, adam: None, norm: None }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let c = self.model.config();
        w.write_all(MAGIC)?;
        put_u8(w, c.family.code())?;
        for v in [c.width, c.levels, c.waves, c.in_channels, c.out_channels] {
            put_len(w, v, WHAT)?;
        }
        put_u8(w, matches!(c.padding, PaddingMode::Zero) as u8)?;
        put_len(w, c.norm_groups, WHAT)?;
        put_len(w, self.model.params().len(), WHAT)?;
        for (name, p) in self.model.param_names().iter().zip(self.model.params()) {
            put_str(w, name, WHAT)?;
            write_tensor(w, p)?;
        }
        if let Some(a) = &self.adam {
            w.write_all(b"ADAM")?;
            put_u64(w, a.step)?;
            for t in a.m.iter().chain(&a.v) {
                write_tensor(w, t)?;
            }
        }
        if let Some(n) = &self.norm {
            w.write_all(b"NORM")?;
            put_len(w, n.mean.len(), WHAT)?;
            for (m, s) in n.mean.iter().zip(&n.std) {
                put_f64(w, *m)?;
                put_f64(w, *s)?;
            }
        }
        w.write_all(b"END!")?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic: [u8; 8] = get_bytes(r, WHAT)?;
        if &magic != MAGIC {
            return Err(Error::Format { what: WHAT, detail: "bad magic".into() });
        }
        let code = get_u8(r, WHAT)?;
        let family = Family::from_code(code)
            .ok_or_else(|| Error::Format { what: WHAT, detail: format!("unknown family code {code}") })?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = get_u32(r, WHAT)? as usize;
        }
        let padding = match get_u8(r, WHAT)? {
            0 => PaddingMode::Periodic,
            1 => PaddingMode::Zero,
            p => return Err(Error::Format { what: WHAT, detail: format!("unknown padding code {p}") }),
        };
        let config = ModelConfig {
            family,
            width: dims[0],
            levels: dims[1],
            waves: dims[2],
            in_channels: dims[3],
            out_channels: dims[4],
            padding,
            norm_groups: get_u32(r, WHAT)? as usize,
        };
        config.validate()?;
        let n = get_u32(r, WHAT)? as usize;
        let expected = Model::build(config, 0)?;
        if n != expected.params().len() {
            return Err(Error::Format {
                what: WHAT,
                detail: format!("config implies {} parameters, file has {n}", expected.params().len()),
            });
        }
        let mut names = Vec::with_capacity(n);
        let mut params = Vec::with_capacity(n);
        for reference in expected.params() {
            names.push(get_str(r, WHAT, MAX_NAME)?);
            params.push(read_tensor(r, Some(reference.shape()))?);
        }
        let model = Model::from_parts(config, params, &names)?;
        let mut ck = Checkpoint::new(model);
        loop {
            let tag: [u8; 4] = get_bytes(r, WHAT)?;
            match &tag {
                b"ADAM" => {
                    let step = get_u64(r, WHAT)?;
                    let shapes: Vec<Shape> = ck.model.params().iter().map(Tensor::shape).collect();
                    let m = shapes.iter().map(|s| read_tensor(r, Some(*s))).collect::<Result<Vec<_>>>()?;
                    let v = shapes.iter().map(|s| read_tensor(r, Some(*s))).collect::<Result<Vec<_>>>()?;
                    ck.adam = Some(AdamState { step, m, v });
                }
                b"NORM" => {
                    let fields = get_u32(r, WHAT)? as usize;
                    let mut stats = FieldStats { mean: Vec::with_capacity(fields), std: Vec::with_capacity(fields) };
                    for _ in 0..fields {
                        stats.mean.push(get_f64(r, WHAT)?);
                        stats.std.push(get_f64(r, WHAT)?);
                    }
                    ck.norm = Some(stats);
                }
                b"END!" => return Ok(ck),
                other => {
                    return Err(Error::Format {
                        what: WHAT,
                        detail: format!("unknown section tag {:?}", String::from_utf8_lossy(other)),
                    })
                }
            }
        }
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
}

fn write_tensor(w: &mut impl Write, t: &Tensor<f32>) -> Result<()> {
    for d in t.shape().0 {
        put_len(w, d, WHAT)?;
    }
    put_f32s(w, t.data())
}

fn read_tensor(r: &mut impl Read, expect: Option<Shape>) -> Result<Tensor<f32>> {
    let mut d = [0usize; 4];
    for v in &mut d {
        *v = get_u32(r, WHAT)? as usize;
    }
    let shape = Shape(d);
    if let Some(e) = expect {
        if e != shape {
            return Err(Error::Format { what: WHAT, detail: format!("tensor shape {d:?} != expected {:?}", e.0) });
        }
    }
    let data = get_f32s(r, shape.numel(), WHAT)?;
    Tensor::from_vec(shape, data)
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::new(self.clone()).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Ok(Checkpoint::load(path)?.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::build(ModelConfig::new(Family::DWNet, 4, 2, 1).with_levels(3), 9).unwrap();
        let mut ck = Checkpoint::new(m.clone());
        ck.norm = Some(FieldStats { mean: vec![0.25, -1.0], std: vec![2.0, 3.5] });
        ck.adam = Some(AdamState {
            step: 17,
            m: m.params().to_vec(),
            v: m.params().iter().map(|p| Tensor::full(p.shape(), 0.125)).collect(),
        });
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.model.config(), m.config());
        assert_eq!(back.model.param_names(), m.param_names());
        for (a, b) in back.model.params().iter().zip(m.params()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.adam.unwrap().step, 17);
        assert_eq!(back.norm.unwrap().std, vec![2.0, 3.5]);
        let mut again = Vec::new();
        Checkpoint::read_from(&mut buf.as_slice()).unwrap().write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let m = Model::build(ModelConfig::new(Family::UNetBase, 4, 1, 1).with_levels(2), 0).unwrap();
        let mut buf = Vec::new();
        Checkpoint::new(m).write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&mut &buf[..buf.len() - 6]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
    }
}
