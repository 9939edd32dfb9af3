//! Proprioceptive sequence datasets: schema, CSV storage, the synthetic
//! quadruped generator, windowing and per-node input preparation.
//!
//! File layout: one line `# {json metadata}`, one header row, then one row
//! per sample. Columns, in order:
//!
//! | columns | meaning |
//! |---|---|
//! | `t` | time, s |
//! | `q00..q11` | joint angles, rad |
//! | `dq00..dq11` | joint velocities, rad/s |
//! | `tau00..tau11` | joint torques, N·m |
//! | `ab0..ab2` | IMU specific force, base frame, m/s² |
//! | `wb0..wb2` | IMU angular velocity, base frame, rad/s |
//! | `p{leg}{axis}` | foot position in base frame, m |
//! | `v{leg}{axis}` | foot velocity in base frame, m/s |
//! | `T0..T2` | base position in world, m |
//! | `quat0..quat3` | base orientation (w, x, y, z), world from base |
//! | `grf0..grf3` | vertical ground reaction force per foot, N |
//! | `c0..c3` | contact state per foot |
//!
//! Joints are numbered leg-major (hip, thigh, calf) and legs follow the
//! graph's foot order (LF, LH, RF, RH for the bundled quadruped).

mod generator;
mod windows;

pub use generator::{generate_sequence, GenParams, NoiseStd};
pub use windows::{
    flatten_mlp, make_windows, mlp_input_dim, normalize, normalize_series, prepare, regroup, split, standard_design,
    SequenceSpec, SplitAssignment, SplitSpec, Window, WINDOW_LEN,
};

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;

/// Column indices.
pub mod col {
    pub const T: usize = 0;
    pub const Q: usize = 1;
    pub const DQ: usize = 13;
    pub const TAU: usize = 25;
    pub const AB: usize = 37;
    pub const WB: usize = 40;
    pub const P: usize = 43;
    pub const V: usize = 55;
    pub const POS: usize = 67;
    pub const QUAT: usize = 70;
    pub const GRF: usize = 74;
    pub const C: usize = 78;
    pub const COUNT: usize = 82;

    pub fn q(j: usize) -> usize {
        Q + j
    }
    pub fn dq(j: usize) -> usize {
        DQ + j
    }
    pub fn tau(j: usize) -> usize {
        TAU + j
    }
    pub fn p(leg: usize, axis: usize) -> usize {
        P + 3 * leg + axis
    }
    pub fn v(leg: usize, axis: usize) -> usize {
        V + 3 * leg + axis
    }
}

pub fn column_names() -> Vec<String> {
    let mut names = vec!["t".to_string()];
    names.extend((0..NUM_JOINTS).map(|j| format!("q{j:02}")));
    names.extend((0..NUM_JOINTS).map(|j| format!("dq{j:02}")));
    names.extend((0..NUM_JOINTS).map(|j| format!("tau{j:02}")));
    names.extend((0..3).map(|i| format!("ab{i}")));
    names.extend((0..3).map(|i| format!("wb{i}")));
    for prefix in ["p", "v"] {
        for l in 0..NUM_LEGS {
            names.extend((0..3).map(|a| format!("{prefix}{l}{a}")));
        }
    }
    names.extend((0..3).map(|i| format!("T{i}")));
    names.extend((0..4).map(|i| format!("quat{i}")));
    names.extend((0..NUM_LEGS).map(|i| format!("grf{i}")));
    names.extend((0..NUM_LEGS).map(|i| format!("c{i}")));
    names
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("sequence has {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("foot target out of reach for leg {leg} at t = {t:.4} s")]
    IkUnreachable { leg: usize, t: f64 },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("graph does not match the dataset layout: {0}")]
    TaskMismatch(String),
    #[error("sequence '{0}' is assigned to more than one split")]
    OverlappingSpec(String),
    #[error("sequence '{0}' is not assigned to any split")]
    Unassigned(String),
    #[error("split spec names unknown sequence '{0}'")]
    UnknownSequence(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub robot: String,
    pub sample_rate: f64,
    pub contact_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<GenParams>,
}

/// A synchronized multichannel recording, stored column-wise so each
/// channel's history is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub meta: Metadata,
    pub columns: Vec<Vec<f64>>,
}

impl SequenceDataset {
    pub fn new(meta: Metadata, columns: Vec<Vec<f64>>) -> Result<Self, DataError> {
        if columns.len() != col::COUNT {
            return Err(DataError::Malformed(format!("expected {} columns, got {}", col::COUNT, columns.len())));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(DataError::Malformed("columns differ in length".into()));
        }
        Ok(Self { meta, columns })
    }

    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn contact(&self, leg: usize, i: usize) -> usize {
        usize::from(self.columns[col::C + leg][i] > 0.5)
    }

    pub fn grf(&self, leg: usize, i: usize) -> f64 {
        self.columns[col::GRF + leg][i]
    }

    /// Checks the schema invariants: uniform timestamps, labels consistent
    /// with the contact threshold, unit quaternions.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.len();
        let t = self.column(col::T);
        let dt = 1.0 / self.meta.sample_rate;
        for i in 1..n {
            if ((t[i] - t[i - 1]) - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(DataError::Malformed(format!("non-uniform timestamp at row {i}")));
            }
        }
        for i in 0..n {
            for l in 0..NUM_LEGS {
                let c = self.columns[col::C + l][i];
                if c != 0.0 && c != 1.0 {
                    return Err(DataError::Malformed(format!("contact value {c} at row {i}")));
                }
                if (c == 1.0) != (self.grf(l, i) > self.meta.contact_threshold) {
                    return Err(DataError::Malformed(format!("contact label inconsistent with force at row {i}, leg {l}")));
                }
            }
            let norm: f64 = (0..4).map(|k| self.columns[col::QUAT + k][i].powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(DataError::Malformed(format!("quaternion norm {norm} at row {i}")));
            }
        }
        Ok(())
    }

    /// Swaps legs in every per-leg column: leg `l` of the result is leg
    /// `leg_perm[l]` of `self`.
    pub fn relabel_legs(&self, leg_perm: &[usize]) -> Self {
        let mut out = self.clone();
        for l in 0..NUM_LEGS {
            let src = leg_perm[l];
            for k in 0..3 {
                out.columns[col::q(3 * l + k)] = self.columns[col::q(3 * src + k)].clone();
                out.columns[col::dq(3 * l + k)] = self.columns[col::dq(3 * src + k)].clone();
                out.columns[col::tau(3 * l + k)] = self.columns[col::tau(3 * src + k)].clone();
                out.columns[col::p(l, k)] = self.columns[col::p(src, k)].clone();
                out.columns[col::v(l, k)] = self.columns[col::v(src, k)].clone();
            }
            out.columns[col::GRF + l] = self.columns[col::GRF + src].clone();
            out.columns[col::C + l] = self.columns[col::C + src].clone();
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        let meta = serde_json::to_string(&self.meta).map_err(|e| DataError::Malformed(e.to_string()))?;
        writeln!(w, "# {meta}")?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(column_names())?;
        let mut row = Vec::with_capacity(col::COUNT);
        for i in 0..self.len() {
            row.clear();
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, DataError> {
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let json = first
            .trim_end()
            .strip_prefix('#')
            .ok_or_else(|| DataError::Malformed("missing '#' metadata line".into()))?;
        let meta: Metadata = serde_json::from_str(json.trim()).map_err(|e| DataError::Malformed(format!("metadata: {e}")))?;
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != column_names() {
            return Err(DataError::Malformed("unexpected column header".into()));
        }
        let mut columns = vec![Vec::new(); col::COUNT];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| DataError::Malformed(format!("bad number '{field}' at row {i}, column {c}")))?;
                columns[c].push(v);
            }
        }
        Self::new(meta, columns)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(f)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::read(std::fs::File::open(path)?)
    }
}

/// Loads every `*.csv` in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(String, SequenceDataset)>, DataError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, SequenceDataset::load(&p)?))
        })
        .collect()
}
