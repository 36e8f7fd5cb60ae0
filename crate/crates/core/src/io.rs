//! CSV and JSON artifacts. Every table carries a header row; numbers are
//! written in shortest round-trip form so rereading is lossless.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::experiment::EnvelopeRow;
use crate::fem::{Mesh, SimState};
use crate::inference::{Chain, ObservationSet};
use crate::material::{MaterialParams, Parameter};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Shortest round-trip decimal, switching to exponent form for very large or
/// small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// An in-memory CSV table of strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
        let io = |e: csv::Error| format_err(path, e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| file_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Table, IoError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => file_err(path, io),
                other => format_err(path, format!("{other:?}")),
            })?;
        let header = r
            .headers()
            .map_err(|e| format_err(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| format_err(path, e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str, path: &Path) -> Result<usize, IoError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format_err(path, format!("missing column `{name}`")))
    }

    /// Columns whose names start with `prefix` followed by 1, 2, ... in order.
    pub fn numbered_columns(&self, prefix: &str) -> Vec<usize> {
        (1..)
            .map_while(|k| self.header.iter().position(|h| *h == format!("{prefix}{k}")))
            .collect()
    }
}

fn parse_f64(s: &str, path: &Path, row: usize) -> Result<f64, IoError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format_err(path, format!("row {}: `{s}` is not a number", row + 1)))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format_err(path, format!("row {}: non-finite value", row + 1)))
    }
}

fn parse_usize(s: &str, path: &Path, row: usize) -> Result<usize, IoError> {
    s.trim()
        .parse()
        .map_err(|_| format_err(path, format!("row {}: `{s}` is not an index", row + 1)))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| file_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}{k}"))
}

/// `index,eigenvalue,energy_fraction` with the cumulative captured variance.
pub fn write_eigenvalues(path: &Path, eigenvalues: &[f64], total_variance: f64) -> Result<(), IoError> {
    let mut t = Table::new(["index", "eigenvalue", "energy_fraction"]);
    let mut acc = 0.0;
    for (i, &v) in eigenvalues.iter().enumerate() {
        acc += v;
        t.push(vec![(i + 1).to_string(), fmt_f64(v), fmt_f64(acc / total_variance)]);
    }
    t.write(path)
}

/// `element,x1,x2,psi_1..psi_M`.
pub fn write_eigenvectors(path: &Path, grid: &[[f64; 2]], vectors: &DMatrix<f64>) -> Result<(), IoError> {
    let mut t = Table::new(["element", "x1", "x2"].into_iter().map(String::from).chain(numbered("psi_", vectors.ncols())));
    for (e, x) in grid.iter().enumerate() {
        let mut row = vec![e.to_string(), fmt_f64(x[0]), fmt_f64(x[1])];
        row.extend(vectors.row(e).iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t.write(path)
}

/// `node,x1,x2,theta,phi`.
pub fn write_state(path: &Path, mesh: &Mesh, state: &SimState) -> Result<(), IoError> {
    let mut t = Table::new(["node", "x1", "x2", "theta", "phi"]);
    for (n, x) in mesh.nodes.iter().enumerate() {
        t.push(vec![
            n.to_string(),
            fmt_f64(x[0]),
            fmt_f64(x[1]),
            fmt_f64(state.theta[n]),
            fmt_f64(state.phi[n]),
        ]);
    }
    t.write(path)
}

/// `time_h,sensor,x1,x2,theta,phi` followed by `theta_clean,phi_clean` when
/// the noiseless values are given.
pub fn write_observations(path: &Path, obs: &ObservationSet, noiseless: Option<&[f64]>) -> Result<(), IoError> {
    let mut header = vec!["time_h", "sensor", "x1", "x2", "theta", "phi"];
    if noiseless.is_some() {
        header.extend(["theta_clean", "phi_clean"]);
    }
    let mut t = Table::new(header);
    for (ti, &time) in obs.times.iter().enumerate() {
        for (s, x) in obs.sensors.iter().enumerate() {
            let k = obs.index(ti, s, 0);
            let mut row = vec![
                fmt_f64(time / 3600.0),
                s.to_string(),
                fmt_f64(x[0]),
                fmt_f64(x[1]),
                fmt_f64(obs.values[k]),
                fmt_f64(obs.values[k + 1]),
            ];
            if let Some(c) = noiseless {
                row.extend([fmt_f64(c[k]), fmt_f64(c[k + 1])]);
            }
            t.push(row);
        }
    }
    t.write(path)
}

/// Square matrix as `c_1..c_n` columns.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), IoError> {
    let mut t = Table::new(numbered("c_", m.ncols()));
    for r in 0..m.nrows() {
        t.push(m.row(r).iter().map(|&v| fmt_f64(v)).collect());
    }
    t.write(path)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, IoError> {
    let t = Table::read(path)?;
    let n = t.header.len();
    if t.rows.len() != n || t.numbered_columns("c_").len() != n {
        return Err(format_err(path, format!("expected a {n}×{n} matrix with columns c_1..c_{n}")));
    }
    let mut m = DMatrix::zeros(n, n);
    for (r, row) in t.rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = parse_f64(v, path, r)?;
        }
    }
    Ok(m)
}

/// Reads `observations.csv` and the matching covariance file.
pub fn read_observations(obs_path: &Path, cov_path: &Path) -> Result<ObservationSet, IoError> {
    let t = Table::read(obs_path)?;
    let cols = ["time_h", "sensor", "x1", "x2", "theta", "phi"]
        .map(|c| t.column(c, obs_path))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut times: Vec<f64> = Vec::new();
    let mut sensors: Vec<[f64; 2]> = Vec::new();
    let mut values = Vec::with_capacity(2 * t.rows.len());
    for (r, row) in t.rows.iter().enumerate() {
        let time = parse_f64(&row[cols[0]], obs_path, r)? * 3600.0;
        let s = parse_usize(&row[cols[1]], obs_path, r)?;
        let x = [parse_f64(&row[cols[2]], obs_path, r)?, parse_f64(&row[cols[3]], obs_path, r)?];
        if times.last() != Some(&time) {
            times.push(time);
        }
        if times.len() == 1 {
            if s != sensors.len() {
                return Err(format_err(obs_path, format!("row {}: sensors must be numbered 0, 1, ...", r + 1)));
            }
            sensors.push(x);
        } else if s >= sensors.len() || sensors[s] != x {
            return Err(format_err(obs_path, format!("row {}: sensor layout differs between times", r + 1)));
        }
        values.push(parse_f64(&row[cols[4]], obs_path, r)?);
        values.push(parse_f64(&row[cols[5]], obs_path, r)?);
    }
    if values.len() != 2 * sensors.len() * times.len() {
        return Err(format_err(obs_path, "every time needs one row per sensor"));
    }
    let cov = read_matrix(cov_path)?;
    if cov.nrows() != values.len() {
        return Err(format_err(
            cov_path,
            format!("covariance is {0}×{0}, observations have {1} entries", cov.nrows(), values.len()),
        ));
    }
    Ok(ObservationSet {
        sensors,
        times,
        values,
        covariance: cov.transpose().as_slice().to_vec(),
    })
}

/// `replicate,y_1..y_n`.
pub fn write_replicates(path: &Path, replicates: &[Vec<f64>]) -> Result<(), IoError> {
    let n = replicates.first().map_or(0, Vec::len);
    let mut t = Table::new(std::iter::once("replicate".to_string()).chain(numbered("y_", n)));
    for (r, rep) in replicates.iter().enumerate() {
        let mut row = vec![r.to_string()];
        row.extend(rep.iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t.write(path)
}

/// `chain,step,accepted,logpost,xi_1..xi_L`.
pub fn write_chains(path: &Path, chains: &[Chain]) -> Result<(), IoError> {
    let dim = chains.first().map_or(0, Chain::dim);
    let mut t = Table::new(
        ["chain", "step", "accepted", "logpost"]
            .into_iter()
            .map(String::from)
            .chain(numbered("xi_", dim)),
    );
    for (c, chain) in chains.iter().enumerate() {
        for (i, x) in chain.samples.iter().enumerate() {
            let mut row = vec![
                c.to_string(),
                i.to_string(),
                u8::from(chain.accepted[i]).to_string(),
                fmt_f64(chain.logpost[i]),
            ];
            row.extend(x.iter().map(|&v| fmt_f64(v)));
            t.push(row);
        }
    }
    t.write(path)
}

/// Reads chains written by [`write_chains`]. Proposal scale and seed are not
/// part of the table and come back as NaN and the chain index.
pub fn read_chains(path: &Path) -> Result<Vec<Chain>, IoError> {
    let t = Table::read(path)?;
    let c_chain = t.column("chain", path)?;
    let c_acc = t.column("accepted", path)?;
    let c_lp = t.column("logpost", path)?;
    let xi = t.numbered_columns("xi_");
    if xi.is_empty() {
        return Err(format_err(path, "no xi_ columns"));
    }
    let mut chains: Vec<Chain> = Vec::new();
    for (r, row) in t.rows.iter().enumerate() {
        let c = parse_usize(&row[c_chain], path, r)?;
        if c == chains.len() {
            chains.push(Chain {
                samples: Vec::new(),
                logpost: Vec::new(),
                accepted: Vec::new(),
                proposal_scale: f64::NAN,
                seed: c as u64,
            });
        } else if c + 1 != chains.len() {
            return Err(format_err(path, format!("row {}: chains must be contiguous", r + 1)));
        }
        let chain = chains.last_mut().expect("pushed above");
        chain.accepted.push(match row[c_acc].trim() {
            "0" => false,
            "1" => true,
            other => return Err(format_err(path, format!("row {}: accepted = `{other}`", r + 1))),
        });
        // -inf is legitimate for a chain stuck at an inadmissible start
        chain.logpost.push(row[c_lp].trim().parse().map_err(|_| format_err(path, format!("row {}: bad logpost", r + 1)))?);
        chain.samples.push(xi.iter().map(|&k| parse_f64(&row[k], path, r)).collect::<Result<_, _>>()?);
    }
    if chains.is_empty() {
        return Err(format_err(path, "empty chain"));
    }
    Ok(chains)
}

fn parameter_header() -> impl Iterator<Item = String> {
    Parameter::ALL.iter().map(|p| p.name().to_string())
}

/// `element,x1,x2,w_f,w_80,lambda_0,b_tcs,mu,a,c_s,rho_s`.
pub fn write_fields(path: &Path, grid: &[[f64; 2]], fields: &[MaterialParams]) -> Result<(), IoError> {
    let mut t = Table::new(["element", "x1", "x2"].into_iter().map(String::from).chain(parameter_header()));
    for (e, (x, p)) in grid.iter().zip(fields).enumerate() {
        let mut row = vec![e.to_string(), fmt_f64(x[0]), fmt_f64(x[1])];
        row.extend(p.to_array().iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t.write(path)
}

/// `element,x1,x2,parameter,lower,median,upper`.
pub fn write_field_quantiles(path: &Path, grid: &[[f64; 2]], quantiles: &[Vec<[f64; 3]>]) -> Result<(), IoError> {
    let mut t = Table::new(["element", "x1", "x2", "parameter", "lower", "median", "upper"]);
    for (p, per_element) in Parameter::ALL.iter().zip(quantiles) {
        for (e, (x, q)) in grid.iter().zip(per_element).enumerate() {
            t.push(vec![
                e.to_string(),
                fmt_f64(x[0]),
                fmt_f64(x[1]),
                p.name().to_string(),
                fmt_f64(q[0]),
                fmt_f64(q[1]),
                fmt_f64(q[2]),
            ]);
        }
    }
    t.write(path)
}

/// `set,sample,e_1..e_n` with `set` one of `posterior` or `prior`.
pub fn write_field_samples(path: &Path, sets: &[(&str, &[Vec<f64>])]) -> Result<(), IoError> {
    let n = sets.iter().find_map(|s| s.1.first()).map_or(0, Vec::len);
    let mut t = Table::new(["set", "sample"].into_iter().map(String::from).chain(numbered("e_", n)));
    for (name, samples) in sets {
        for (k, s) in samples.iter().enumerate() {
            let mut row = vec![name.to_string(), k.to_string()];
            row.extend(s.iter().map(|&v| fmt_f64(v)));
            t.push(row);
        }
    }
    t.write(path)
}

/// `node,x1,x2,time_h,reference,posterior_lower,posterior_median,posterior_upper,prior_lower,prior_median,prior_upper`.
pub fn write_envelopes(path: &Path, rows: &[EnvelopeRow]) -> Result<(), IoError> {
    let mut t = Table::new([
        "node",
        "x1",
        "x2",
        "time_h",
        "reference",
        "posterior_lower",
        "posterior_median",
        "posterior_upper",
        "prior_lower",
        "prior_median",
        "prior_upper",
    ]);
    for r in rows {
        let mut row = vec![r.node.to_string(), fmt_f64(r.x[0]), fmt_f64(r.x[1]), fmt_f64(r.time_hours), fmt_f64(r.reference)];
        row.extend(r.posterior.iter().chain(&r.prior).map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t.write(path)
}

/// `node,x1,x2,d_theta,d_phi`.
pub fn write_response_difference(path: &Path, mesh: &Mesh, diff: &[[f64; 2]]) -> Result<(), IoError> {
    let mut t = Table::new(["node", "x1", "x2", "d_theta", "d_phi"]);
    for (n, (x, d)) in mesh.nodes.iter().zip(diff).enumerate() {
        t.push(vec![n.to_string(), fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(d[0]), fmt_f64(d[1])]);
    }
    t.write(path)
}
