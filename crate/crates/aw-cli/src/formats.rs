//! File formats: path-measure and Markov-measure JSON, sample CSV, model
//! specifications, experiment reports and run manifests. JSON floats are
//! serialized through the shortest round-trip decimal form, so measure files
//! reload bit for bit.

use std::fs;
use std::io;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use aw_core::estimators::SampleSet;
use aw_core::experiments::{DeviationReport, EstimatorKind, LogLogFit, RateSeries};
use aw_core::measures::{MarkovMeasure, Path, PathMeasure, ProcessShape};
use aw_core::processes::{FigureMember, InitialLaw, ProcessModel, StepMap};
use aw_core::stopping::StoppingReport;

/// Errors of the IO layer, separated so the binary can map them to exit
/// codes: input problems exit 2, resource limits exit 3.
#[derive(Debug)]
pub enum IoError {
    Io(io::Error),
    Parse(String),
    Invalid(aw_core::Error),
    /// Refusal to overwrite without `--force`.
    Exists(String),
}

impl core::fmt::Display for IoError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io error: {e}"),
            IoError::Parse(m) => write!(f, "parse error: {m}"),
            IoError::Invalid(e) => write!(f, "invalid input: {e}"),
            IoError::Exists(p) => write!(f, "{p} exists; pass --force to overwrite"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<io::Error> for IoError {
    fn from(e: io::Error) -> Self {
        IoError::Io(e)
    }
}

impl From<aw_core::Error> for IoError {
    fn from(e: aw_core::Error) -> Self {
        IoError::Invalid(e)
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Parse(e.to_string())
    }
}

pub type IoResult<T> = Result<T, IoError>;

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct MeasureDto {
    d: usize,
    #[serde(rename = "T")]
    t: usize,
    atoms: Vec<AtomDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomDto {
    path: Vec<Vec<f64>>,
    w: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkovDto {
    d: usize,
    #[serde(rename = "T")]
    t: usize,
    /// Per time step, the support as a list of `d`-vectors.
    supports: Vec<Vec<Vec<f64>>>,
    initial: Vec<f64>,
    /// Per time step, the transition matrix as a list of rows.
    transitions: Vec<Vec<Vec<f64>>>,
}

/// Either measure representation, as found in a file.
#[derive(Debug, Clone)]
pub enum MeasureFile {
    Paths(PathMeasure),
    Markov(MarkovMeasure),
}

impl MeasureFile {
    pub fn shape(&self) -> ProcessShape {
        match self {
            MeasureFile::Paths(m) => m.shape(),
            MeasureFile::Markov(m) => m.shape(),
        }
    }
}

pub fn write_path_measure(path: &FsPath, m: &PathMeasure, force: bool) -> IoResult<()> {
    let shape = m.shape();
    let dto = MeasureDto {
        d: shape.d(),
        t: shape.t(),
        atoms: m
            .atoms()
            .iter()
            .map(|(p, w)| AtomDto {
                path: p.steps().map(|s| s.to_vec()).collect(),
                w: *w,
            })
            .collect(),
    };
    write_json(path, &dto, force)
}

pub fn write_markov_measure(path: &FsPath, m: &MarkovMeasure, force: bool) -> IoResult<()> {
    let shape = m.shape();
    let d = shape.d();
    let dto = MarkovDto {
        d,
        t: shape.t(),
        supports: m
            .supports()
            .iter()
            .map(|flat| flat.chunks(d).map(|c| c.to_vec()).collect())
            .collect(),
        initial: m.initial().to_vec(),
        transitions: (1..shape.t())
            .map(|t| {
                (0..m.support_len(t))
                    .map(|i| m.transition_row(t, i).to_vec())
                    .collect()
            })
            .collect(),
    };
    write_json(path, &dto, force)
}

/// Reads a measure file, detecting the representation by its keys.
pub fn read_measure(path: &FsPath) -> IoResult<MeasureFile> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))?;
    if value.get("atoms").is_some() {
        let dto: MeasureDto = serde_json::from_value(value)
            .map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))?;
        let shape = ProcessShape::new(dto.d, dto.t)?;
        let atoms = dto
            .atoms
            .into_iter()
            .map(|a| {
                let coords: Vec<f64> = a.path.into_iter().flatten().collect();
                Ok((Path::new(shape, coords)?, a.w))
            })
            .collect::<Result<Vec<_>, aw_core::Error>>()?;
        Ok(MeasureFile::Paths(PathMeasure::new(shape, atoms)?))
    } else if value.get("supports").is_some() {
        let dto: MarkovDto = serde_json::from_value(value)
            .map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))?;
        let shape = ProcessShape::new(dto.d, dto.t)?;
        let supports = dto
            .supports
            .into_iter()
            .map(|pts| pts.into_iter().flatten().collect())
            .collect();
        let transitions = dto
            .transitions
            .into_iter()
            .map(|rows| rows.into_iter().flatten().collect())
            .collect();
        Ok(MeasureFile::Markov(MarkovMeasure::new(
            shape,
            supports,
            dto.initial,
            transitions,
        )?))
    } else {
        Err(IoError::Parse(format!(
            "{}: neither \"atoms\" nor \"supports\" present",
            path.display()
        )))
    }
}

// ---------------------------------------------------------------------------
// Samples CSV
// ---------------------------------------------------------------------------

/// Writes one row per sample with header columns `x{t}_{i}`, time-major.
pub fn write_samples(path: &FsPath, s: &SampleSet, force: bool) -> IoResult<()> {
    check_overwrite(path, force)?;
    let shape = s.shape();
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=shape.t())
        .flat_map(|t| (1..=shape.d()).map(move |i| format!("x{t}_{i}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for row in s.rows() {
        let record: Vec<String> = row.coords().iter().map(|c| format!("{c}")).collect();
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample CSV; the header dictates the shape.
pub fn read_samples(path: &FsPath) -> IoResult<SampleSet> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let (d, t) = shape_from_header(&header)
        .ok_or_else(|| IoError::Parse(format!("{}: malformed header", path.display())))?;
    let shape = ProcessShape::new(d, t)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err)?;
        let coords = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))
            })
            .collect::<IoResult<Vec<f64>>>()?;
        rows.push(coords);
    }
    Ok(SampleSet::from_rows(shape, rows)?)
}

fn shape_from_header(header: &csv::StringRecord) -> Option<(usize, usize)> {
    let mut fields: Vec<(usize, usize)> = Vec::with_capacity(header.len());
    for field in header.iter() {
        let rest = field.strip_prefix('x')?;
        let (t, i) = rest.split_once('_')?;
        fields.push((t.parse().ok()?, i.parse().ok()?));
    }
    let t = fields.iter().map(|f| f.0).max()?;
    let d = fields.iter().map(|f| f.1).max()?;
    let expected: Vec<(usize, usize)> = (1..=t)
        .flat_map(|tt| (1..=d).map(move |ii| (tt, ii)))
        .collect();
    (fields == expected).then_some((d, t))
}

fn csv_err(e: csv::Error) -> IoError {
    IoError::Parse(e.to_string())
}

// ---------------------------------------------------------------------------
// Model specifications
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `X_{t+1} = rho X_t + (1 - rho) Z`, uniform innovations.
    LipschitzAr {
        d: usize,
        #[serde(rename = "T")]
        t: usize,
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<FiniteInitialSpec>,
    },
    Density {
        d: usize,
        #[serde(rename = "T")]
        t: usize,
        alpha: f64,
    },
    Finite {
        measure: serde_json::Value,
    },
    FigureOne {
        epsilon: f64,
        member: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteInitialSpec {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ModelSpec {
    pub fn to_model(&self) -> IoResult<ProcessModel> {
        let model = match self {
            ModelSpec::LipschitzAr { d, t, rho, initial } => {
                let initial = match initial {
                    None => InitialLaw::Uniform,
                    Some(f) => InitialLaw::Finite {
                        points: f.points.iter().flatten().copied().collect(),
                        weights: f.weights.clone(),
                    },
                };
                ProcessModel::LipschitzDynamics {
                    shape: ProcessShape::new(*d, *t)?,
                    initial,
                    step: StepMap::AutoRegressive { rho: *rho },
                }
            }
            ModelSpec::Density { d, t, alpha } => ProcessModel::Density {
                shape: ProcessShape::new(*d, *t)?,
                alpha: *alpha,
            },
            ModelSpec::Finite { measure } => {
                let dto: MeasureDto = serde_json::from_value(measure.clone())
                    .map_err(|e| IoError::Parse(format!("finite model: {e}")))?;
                let shape = ProcessShape::new(dto.d, dto.t)?;
                let atoms = dto
                    .atoms
                    .into_iter()
                    .map(|a| {
                        let coords: Vec<f64> = a.path.into_iter().flatten().collect();
                        Ok((Path::new(shape, coords)?, a.w))
                    })
                    .collect::<Result<Vec<_>, aw_core::Error>>()?;
                ProcessModel::Finite {
                    measure: PathMeasure::new(shape, atoms)?,
                }
            }
            ModelSpec::FigureOne { epsilon, member } => {
                let member = match member.as_str() {
                    "mu" => FigureMember::Mu,
                    "nu" => FigureMember::Nu,
                    other => {
                        return Err(IoError::Parse(format!(
                            "figure_one member must be \"mu\" or \"nu\", got {other}"
                        )))
                    }
                };
                ProcessModel::FigureOne {
                    epsilon: *epsilon,
                    member,
                }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn read_model(path: &FsPath) -> IoResult<ModelSpec> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Reports and manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDto {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
}

impl From<LogLogFit> for FitDto {
    fn from(f: LogLogFit) -> Self {
        FitDto {
            slope: f.slope,
            intercept: f.intercept,
            half_width: f.half_width,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSeriesDto {
    pub estimator: String,
    pub ns: Vec<u64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub reps: usize,
    pub budget: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitDto>,
}

impl From<&RateSeries> for RateSeriesDto {
    fn from(s: &RateSeries) -> Self {
        RateSeriesDto {
            estimator: s.estimator.label().to_string(),
            ns: s.ns.clone(),
            means: s.means.clone(),
            std_errors: s.std_errors.clone(),
            reps: s.reps,
            budget: s.budget,
            fit: s.fit.map(Into::into),
        }
    }
}

/// `rates` CSV: one row per (estimator, N) with the mean, its standard error
/// and the reference budget.
pub fn write_rate_csv(path: &FsPath, series: &[RateSeries], force: bool) -> IoResult<()> {
    check_overwrite(path, force)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimator", "n", "mean", "std_error", "budget", "reps"])
        .map_err(csv_err)?;
    for s in series {
        for (i, &n) in s.ns.iter().enumerate() {
            w.write_record([
                s.estimator.label().to_string(),
                n.to_string(),
                crate::fmt_sig(s.means[i]),
                crate::fmt_sig(s.std_errors[i]),
                crate::fmt_sig(s.budget),
                s.reps.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `deviation` CSV: one row per (N, epsilon).
pub fn write_deviation_csv(path: &FsPath, report: &DeviationReport, force: bool) -> IoResult<()> {
    check_overwrite(path, force)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "epsilon", "frequency", "mean", "reps"])
        .map_err(csv_err)?;
    for row in &report.rows {
        for &(eps, freq) in &row.frequencies {
            w.write_record([
                row.n.to_string(),
                crate::fmt_sig(eps),
                crate::fmt_sig(freq),
                crate::fmt_sig(row.mean),
                report.reps.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `stopping` CSV: one row per N with both estimator values.
pub fn write_stopping_csv(path: &FsPath, report: &StoppingReport, force: bool) -> IoResult<()> {
    check_overwrite(path, force)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "value_empirical", "value_adapted"])
        .map_err(csv_err)?;
    for (i, &n) in report.ns.iter().enumerate() {
        w.write_record([
            n.to_string(),
            crate::fmt_sig(report.empirical_values[i]),
            crate::fmt_sig(report.adapted_values[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Coupling dump for `--plan`: path pairs with masses plus the total cost.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanDto {
    pub value: f64,
    pub entries: Vec<PlanEntryDto>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanEntryDto {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub mass: f64,
}

pub fn plan_dto(coupling: &aw_core::adapted::PathCoupling, value: f64) -> PlanDto {
    PlanDto {
        value,
        entries: coupling
            .entries()
            .iter()
            .map(|(x, y, m)| PlanEntryDto {
                x: x.steps().map(|s| s.to_vec()).collect(),
                y: y.steps().map(|s| s.to_vec()).collect(),
                mass: *m,
            })
            .collect(),
    }
}

pub fn write_json<T: Serialize>(path: &FsPath, value: &T, force: bool) -> IoResult<()> {
    check_overwrite(path, force)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn check_overwrite(path: &FsPath, force: bool) -> IoResult<()> {
    if !force && path.exists() {
        return Err(IoError::Exists(path.display().to_string()));
    }
    Ok(())
}

/// Estimator selection labels shared by config files and flags.
pub fn parse_estimators(labels: &[String]) -> IoResult<Vec<EstimatorKind>> {
    labels
        .iter()
        .map(|l| match l.as_str() {
            "adapted" => Ok(EstimatorKind::Adapted),
            "empirical" => Ok(EstimatorKind::Empirical),
            "markov" => Ok(EstimatorKind::MarkovAdapted),
            other => Err(IoError::Parse(format!("unknown estimator {other}"))),
        })
        .collect()
}
