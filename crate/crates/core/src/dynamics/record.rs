//! Sampled diagnostics along a trajectory and their CSV form.
//!
//! Header: `time,Phi,E,I,H_norm,Lp_norm,work` followed by any named extra
//! columns. `work` is the forcing work `int <g, u_t> dt` accumulated since
//! the previous sample. Snapshot sidecars carry `time,u1..uN,v1..vN`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::ModalField;

pub const BASE_COLUMNS: [&str; 7] = ["time", "Phi", "E", "I", "H_norm", "Lp_norm", "work"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub phi: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub h_norm: f64,
    pub lp_norm: f64,
    pub work: f64,
}

impl Sample {
    fn values(&self) -> [f64; 7] {
        [self.time, self.phi, self.energy, self.dissipation, self.h_norm, self.lp_norm, self.work]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub u: ModalField,
    pub v: ModalField,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    /// Named extra columns, one value per sample.
    pub extras: Vec<(String, Vec<f64>)>,
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick = |f: fn(&Sample) -> f64| Some(self.samples.iter().map(f).collect());
        match name {
            "time" => pick(|s| s.time),
            "Phi" => pick(|s| s.phi),
            "E" => pick(|s| s.energy),
            "I" => pick(|s| s.dissipation),
            "H_norm" => pick(|s| s.h_norm),
            "Lp_norm" => pick(|s| s.lp_norm),
            "work" => pick(|s| s.work),
            other => self.extras.iter().find(|(n, _)| n == other).map(|(_, v)| v.clone()),
        }
    }

    pub fn push_extra(&mut self, name: &str, value: f64) {
        match self.extras.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => v.push(value),
            None => self.extras.push((name.to_string(), vec![value])),
        }
    }

    /// Strictly increasing times and finite diagnostics.
    pub fn check(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::InvalidArgument(format!("non-increasing times at {}", w[1].time)));
            }
        }
        for s in &self.samples {
            if s.values().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { time: s.time, what: "diagnostics".into() });
            }
        }
        for (name, col) in &self.extras {
            if col.len() != self.samples.len() {
                return Err(Error::DimensionMismatch { expected: self.samples.len(), got: col.len() });
            }
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { time: f64::NAN, what: name.clone() });
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.extras.iter().map(|(n, _)| n.clone()));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row: Vec<String> = s.values().iter().map(|x| format!("{x:?}")).collect();
            row.extend(self.extras.iter().map(|(_, v)| format!("{:?}", v[i])));
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        if !self.snapshots.is_empty() {
            write_snapshots(&self.snapshots, snapshot_path(path))?;
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        if header.len() < BASE_COLUMNS.len() || header[..7] != BASE_COLUMNS {
            return Err(Error::config(path.display().to_string(), "unexpected trajectory header"));
        }
        let mut rec = TrajectoryRecord {
            extras: header[7..].iter().map(|n| (n.clone(), Vec::new())).collect(),
            ..Default::default()
        };
        for row in r.records() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let vals = row
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            rec.samples.push(Sample {
                time: vals[0],
                phi: vals[1],
                energy: vals[2],
                dissipation: vals[3],
                h_norm: vals[4],
                lp_norm: vals[5],
                work: vals[6],
            });
            for (i, (_, col)) in rec.extras.iter_mut().enumerate() {
                col.push(vals[7 + i]);
            }
        }
        let snap = snapshot_path(path);
        if snap.exists() {
            rec.snapshots = read_snapshots(&snap)?;
        }
        Ok(rec)
    }
}

pub fn snapshot_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    path.with_file_name(format!("{stem}.snapshots.csv"))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn write_snapshots(snaps: &[Snapshot], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let n = snaps.first().map_or(0, |s| s.u.dim());
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|k| format!("u{k}")));
    header.extend((1..=n).map(|k| format!("v{k}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for s in snaps {
        let mut row = vec![format!("{:?}", s.time)];
        row.extend(s.u.0.iter().chain(&s.v.0).map(|x| format!("{x:?}")));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshots(path: impl AsRef<Path>) -> Result<Vec<Snapshot>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let vals = row
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let n = (vals.len() - 1) / 2;
        out.push(Snapshot {
            time: vals[0],
            u: ModalField(vals[1..1 + n].to_vec()),
            v: ModalField(vals[1 + n..].to_vec()),
        });
    }
    Ok(out)
}
