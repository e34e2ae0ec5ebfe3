//! JSON instance and solution files, CSV reports.
//!
//! Matrices are written as arrays of rows, each entry a `[re, im]` pair.
//! Floats use the shortest representation that parses back to the same bits.

use std::fs;
use std::io::Write;
use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::channel::{ChoiMatrix, DensityMatrix};
use crate::constraints::FeasibilityInstance;
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::solvers::SolverConfig;
use crate::verify::Certificate;

type RawMatrix = Vec<Vec<[f64; 2]>>;

/// Column names of benchmark reports, in order.
pub const REPORT_HEADER: [&str; 13] = [
    "m",
    "n",
    "k",
    "r",
    "method",
    "iters",
    "converged",
    "residual",
    "max_cos",
    "rank",
    "psd_seconds",
    "affine_seconds",
    "wall_seconds",
];

fn raw_matrix(h: &HermitianMatrix) -> RawMatrix {
    let m = h.as_mat();
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn parse_error(location: impl Into<String>, message: impl ToString) -> Error {
    Error::Parse { location: location.into(), message: message.to_string() }
}

fn hermitian_from_raw(raw: &RawMatrix, dim: usize, location: &str) -> Result<HermitianMatrix> {
    if raw.len() != dim {
        return Err(parse_error(location, format!("expected {dim} rows, found {}", raw.len())));
    }
    for (i, row) in raw.iter().enumerate() {
        if row.len() != dim {
            return Err(parse_error(format!("{location}[{i}]"), format!("expected {dim} entries, found {}", row.len())));
        }
    }
    let mat = Mat::from_fn(dim, dim, |i, j| c64::new(raw[i][j][0], raw[i][j][1]));
    HermitianMatrix::try_from_mat(mat.as_ref()).map_err(|e| parse_error(location, e))
}

fn density_from_raw(raw: &RawMatrix, dim: usize, location: &str) -> Result<DensityMatrix> {
    DensityMatrix::new(hermitian_from_raw(raw, dim, location)?).map_err(|e| parse_error(location, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_error(format!("{source}:{}:{}", e.line(), e.column()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    n: usize,
    m: usize,
    k: usize,
    unital: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(rename = "A")]
    a: Vec<RawMatrix>,
    #[serde(rename = "B")]
    b: Vec<RawMatrix>,
    #[serde(rename = "P_true", default, skip_serializing_if = "Option::is_none")]
    p_true: Option<RawMatrix>,
}

/// Contents of an instance file.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFile {
    pub instance: FeasibilityInstance,
    pub seed: Option<u64>,
    pub p_true: Option<ChoiMatrix>,
}

impl InstanceFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let raw: RawInstance = parse_json(text, source)?;
        if raw.a.len() != raw.k {
            return Err(parse_error(format!("{source}: A"), format!("k = {} but {} matrices", raw.k, raw.a.len())));
        }
        if raw.b.len() != raw.k {
            return Err(parse_error(format!("{source}: B"), format!("k = {} but {} matrices", raw.k, raw.b.len())));
        }
        let a = raw
            .a
            .iter()
            .enumerate()
            .map(|(l, x)| density_from_raw(x, raw.n, &format!("{source}: A[{l}]")))
            .collect::<Result<Vec<_>>>()?;
        let b = raw
            .b
            .iter()
            .enumerate()
            .map(|(l, y)| density_from_raw(y, raw.m, &format!("{source}: B[{l}]")))
            .collect::<Result<Vec<_>>>()?;
        let instance =
            FeasibilityInstance::new(raw.n, raw.m, a, b, raw.unital).map_err(|e| parse_error(source, e))?;
        let p_true = match &raw.p_true {
            None => None,
            Some(p) => {
                let location = format!("{source}: P_true");
                let h = hermitian_from_raw(p, raw.n * raw.m, &location)?;
                Some(ChoiMatrix::new(raw.n, raw.m, h).map_err(|e| parse_error(location, e))?)
            }
        };
        Ok(Self { instance, seed: raw.seed, p_true })
    }

    pub fn to_json(&self) -> String {
        let inst = &self.instance;
        let raw = RawInstance {
            n: inst.input_dim(),
            m: inst.output_dim(),
            k: inst.k(),
            unital: inst.unital(),
            seed: self.seed,
            a: inst.inputs().iter().map(|x| raw_matrix(x.as_hermitian())).collect(),
            b: inst.outputs().iter().map(|y| raw_matrix(y.as_hermitian())).collect(),
            p_true: self.p_true.as_ref().map(|p| raw_matrix(p.matrix())),
        };
        let mut text = serde_json::to_string_pretty(&raw).expect("plain data serializes");
        text.push('\n');
        text
    }
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<InstanceFile> {
    let path = path.as_ref();
    InstanceFile::parse(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn write_instance(path: impl AsRef<Path>, file: &InstanceFile) -> Result<()> {
    fs::write(path, file.to_json())?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolution {
    n: usize,
    m: usize,
    method: String,
    converged: bool,
    iterations: usize,
    residual: f64,
    rank: usize,
    max_cos: f64,
    config: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<Certificate>,
    #[serde(rename = "P")]
    p: RawMatrix,
}

/// A computed Choi matrix with how it was obtained and how well it fits.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionFile {
    pub p: ChoiMatrix,
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub rank: usize,
    pub max_cos: f64,
    pub config: SolverConfig,
    pub certificate: Option<Certificate>,
}

pub fn write_solution(path: impl AsRef<Path>, sol: &SolutionFile) -> Result<()> {
    let raw = RawSolution {
        n: sol.p.input_dim(),
        m: sol.p.output_dim(),
        method: sol.method.clone(),
        converged: sol.converged,
        iterations: sol.iterations,
        residual: sol.residual,
        rank: sol.rank,
        max_cos: sol.max_cos,
        config: sol.config.clone(),
        certificate: sol.certificate,
        p: raw_matrix(sol.p.matrix()),
    };
    write_json(path.as_ref(), &raw)
}

pub fn read_solution(path: impl AsRef<Path>) -> Result<SolutionFile> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let raw: RawSolution = parse_json(&fs::read_to_string(path)?, &source)?;
    let location = format!("{source}: P");
    let h = hermitian_from_raw(&raw.p, raw.n * raw.m, &location)?;
    Ok(SolutionFile {
        p: ChoiMatrix::new(raw.n, raw.m, h).map_err(|e| parse_error(location, e))?,
        method: raw.method,
        converged: raw.converged,
        iterations: raw.iterations,
        residual: raw.residual,
        rank: raw.rank,
        max_cos: raw.max_cos,
        config: raw.config,
        certificate: raw.certificate,
    })
}

/// One benchmark cell. Failed cells leave the measured columns empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub method: String,
    pub iters: Option<usize>,
    pub converged: bool,
    pub residual: Option<f64>,
    pub max_cos: Option<f64>,
    pub rank: Option<usize>,
    pub psd_seconds: Option<f64>,
    pub affine_seconds: Option<f64>,
    pub wall_seconds: f64,
}

/// CSV writer that always emits [`REPORT_HEADER`], even with no rows.
pub struct ReportWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner.write_record(REPORT_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write_row(&mut self, row: &ReportRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn write_report(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let mut w = ReportWriter::new(fs::File::create(path)?)?;
    for row in rows {
        w.write_row(row)?;
    }
    Ok(())
}
