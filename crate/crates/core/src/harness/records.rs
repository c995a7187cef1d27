//! Sweep records and their CSV form.

use std::collections::BTreeMap;
use std::path::Path;

use crate::arch::Family;
use crate::datagen::SystemKind;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "system",
    "family",
    "width",
    "waves",
    "seed",
    "params",
    "train_s",
    "infer_s_per_step",
    "err_first",
    "err_last",
    "selected_flag",
    "hardware_string",
];

pub const FAILED: &str = "failed";

/// One trained-and-evaluated sweep cell. `None` errors mark a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub system: SystemKind,
    pub family: Family,
    pub width: usize,
    pub waves: usize,
    pub seed: u64,
    pub params: usize,
    pub train_s: f64,
    pub infer_s_per_step: f64,
    pub err_first: Option<f64>,
    pub err_last: Option<f64>,
    pub selected: bool,
    pub hardware: String,
}

/// Identity of a curve point: everything but the seed.
pub type CellKey = (SystemKind, Family, usize, usize, String);

impl Record {
    pub fn failed(&self) -> bool {
        self.err_first.is_none() || self.err_last.is_none()
    }

    pub fn cell(&self) -> CellKey {
        (self.system, self.family, self.width, self.waves, self.hardware.clone())
    }

    pub fn run_key(&self) -> (CellKey, u64) {
        (self.cell(), self.seed)
    }

    /// Best-of-seeds selection key: the last-step error for frame-wise
    /// systems, the mean of the two per-field spectrum errors for HW.
    pub fn selection_key(&self) -> Option<f64> {
        let (a, b) = (self.err_first?, self.err_last?);
        Some(match self.system {
            SystemKind::HasegawaWakatani => 0.5 * (a + b),
            SystemKind::Kolmogorov => b,
        })
    }

    pub fn label(&self) -> String {
        if self.family.is_multi_wave() {
            format!("{}-{}", self.family, self.waves)
        } else {
            self.family.to_string()
        }
    }

    fn to_row(&self) -> [String; 12] {
        let err = |e: Option<f64>| e.map_or_else(|| FAILED.to_string(), |v| v.to_string());
        [
            self.system.to_string(),
            self.family.to_string(),
            self.width.to_string(),
            self.waves.to_string(),
            self.seed.to_string(),
            self.params.to_string(),
            self.train_s.to_string(),
            self.infer_s_per_step.to_string(),
            err(self.err_first),
            err(self.err_last),
            self.selected.to_string(),
            self.hardware.clone(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Format { what: "records CSV", detail: format!("row has {} columns", row.len()) });
        }
        let bad = |col: &str, v: &str| Error::Format { what: "records CSV", detail: format!("bad {col} '{v}'") };
        let num = |i: usize| -> Result<f64> { row[i].parse::<f64>().map_err(|_| bad(CSV_HEADER[i], &row[i])) };
        let int = |i: usize| -> Result<u64> { row[i].parse::<u64>().map_err(|_| bad(CSV_HEADER[i], &row[i])) };
        let err = |i: usize| -> Result<Option<f64>> {
            if &row[i] == FAILED {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        Ok(Record {
            system: row[0].parse()?,
            family: row[1].parse()?,
            width: int(2)? as usize,
            waves: int(3)? as usize,
            seed: int(4)?,
            params: int(5)? as usize,
            train_s: num(6)?,
            infer_s_per_step: num(7)?,
            err_first: err(8)?,
            err_last: err(9)?,
            selected: row[10].parse::<bool>().map_err(|_| bad("selected_flag", &row[10]))?,
            hardware: row[11].to_string(),
        })
    }
}

pub fn write_csv<W: std::io::Write>(w: W, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Write one row without a header and flush it.
pub fn append_row<W: std::io::Write>(w: &mut csv::Writer<W>, r: &Record) -> Result<()> {
    w.write_record(r.to_row())?;
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Record>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format { what: "records CSV", detail: format!("unexpected header {header:?}") });
    }
    rd.records().map(|row| Record::from_row(&row?)).collect()
}

pub fn save_csv(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, records)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_csv(f)
}

/// Mark, per cell, the non-failed seed with the smallest selection key.
pub fn select_best(records: &mut [Record]) {
    let mut best: BTreeMap<CellKey, (f64, usize)> = BTreeMap::new();
    for (i, r) in records.iter_mut().enumerate() {
        r.selected = false;
        if let Some(k) = r.selection_key() {
            let key = r.cell();
            match best.get(&key) {
                Some(&(b, _)) if b <= k => {}
                _ => {
                    best.insert(key, (k, i));
                }
            }
        }
    }
    for (_, i) in best.into_values() {
        records[i].selected = true;
    }
}

/// Canonical order: system, family, width, waves, hardware, seed.
pub fn sort_records(records: &mut [Record]) {
    records.sort_by_key(|a| a.run_key());
}
