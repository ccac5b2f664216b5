//! Projection of intensity profiles onto a fitted subspace.
//!
//! The trajectory of node `i` is `X_i(t) = U_d^T Lambda_i(t)`, where
//! `Lambda_i(t)` is row `i` of the estimated intensity matrix at time `t`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::events::EventLog;
use crate::intensity::{bin_midpoint, estimate_unchecked, slice_unchecked, EstimatorConfig};
use crate::subspace::EmbeddingModel;

/// Number of equally spaced export times used by [`default_times`].
pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Positions of one node at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub node: usize,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }
}

/// Projection of a model onto the events it was fitted on (or any log with
/// the same node set and horizon).
#[derive(Debug, Clone, Copy)]
pub struct Projector<'a> {
    model: &'a EmbeddingModel,
    log: &'a EventLog,
    extend: bool,
}

impl<'a> Projector<'a> {
    pub fn new(model: &'a EmbeddingModel, log: &'a EventLog) -> Result<Self> {
        if model.n() != log.n() {
            return Err(IppError::ShapeMismatch(format!(
                "model has {} nodes, events have {}",
                model.n(),
                log.n()
            )));
        }
        if model.horizon() != log.horizon() {
            return Err(IppError::ShapeMismatch(format!(
                "model horizon {} differs from event horizon {}",
                model.horizon(),
                log.horizon()
            )));
        }
        Ok(Projector {
            model,
            log,
            extend: false,
        })
    }

    /// Kernel models may answer `t` in `(0, T + h]`; histogram models never extend.
    pub fn allow_extension(mut self, extend: bool) -> Self {
        self.extend = extend;
        self
    }

    pub fn upper_limit(&self) -> f64 {
        match (self.extend, self.model.estimator()) {
            (true, EstimatorConfig::Kernel { bandwidth, .. }) => self.model.horizon() + bandwidth,
            _ => self.model.horizon(),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let upper = self.upper_limit();
        if t > 0.0 && t <= upper {
            Ok(())
        } else {
            Err(IppError::OutOfDomain { t, upper })
        }
    }

    /// `U_d^T Lambda_i(t)` for one node and time.
    pub fn position(&self, node: usize, t: f64) -> Result<Vec<f64>> {
        if node >= self.model.n() {
            return Err(IppError::InvalidQuery(format!(
                "unknown node {node} (n = {})",
                self.model.n()
            )));
        }
        self.check_time(t)?;
        let basis = self.model.basis();
        let horizon = self.model.horizon();
        let mut x = vec![0.0; self.model.dim()];
        for (j, times) in self.log.neighbors(node) {
            let v = estimate_unchecked(times, self.model.estimator(), t, horizon);
            if v != 0.0 {
                for (c, xc) in x.iter_mut().enumerate() {
                    *xc += v * basis[(j, c)];
                }
            }
        }
        Ok(x)
    }

    pub fn node(&self, node: usize, times: &[f64]) -> Result<Trajectory> {
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(IppError::InvalidQuery(
                "query times must be strictly increasing".into(),
            ));
        }
        let samples = times
            .iter()
            .map(|&t| {
                Ok(Sample {
                    t,
                    x: self.position(node, t)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory { node, samples })
    }

    /// `n x d` matrix whose row `i` is `X_i(t)`.
    pub fn snapshot(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        let basis = self.model.basis();
        let slice = slice_unchecked(self.log, self.model.estimator(), t);
        let mut out = DMatrix::zeros(self.model.n(), self.model.dim());
        for &(i, j, v) in slice.upper_entries() {
            for c in 0..self.model.dim() {
                out[(i, c)] += v * basis[(j, c)];
                out[(j, c)] += v * basis[(i, c)];
            }
        }
        Ok(out)
    }
}

pub fn project_node(
    model: &EmbeddingModel,
    log: &EventLog,
    node: usize,
    times: &[f64],
) -> Result<Trajectory> {
    Projector::new(model, log)?.node(node, times)
}

pub fn project_snapshot(model: &EmbeddingModel, log: &EventLog, t: f64) -> Result<DMatrix<f64>> {
    Projector::new(model, log)?.snapshot(t)
}

/// `U_d^T p` for a dense length-`n` profile.
pub fn project_out_of_sample(model: &EmbeddingModel, profile: &[f64]) -> Result<Vec<f64>> {
    if profile.len() != model.n() {
        return Err(IppError::ShapeMismatch(format!(
            "profile has length {}, model has n = {}",
            profile.len(),
            model.n()
        )));
    }
    let basis = model.basis();
    Ok((0..model.dim())
        .map(|c| {
            profile
                .iter()
                .enumerate()
                .map(|(j, &p)| p * basis[(j, c)])
                .sum()
        })
        .collect())
}

/// `U_d^T p` for a sparse profile given as `(index, value)` pairs.
pub fn project_sparse_profile(
    model: &EmbeddingModel,
    entries: &[(usize, f64)],
) -> Result<Vec<f64>> {
    let basis = model.basis();
    let mut x = vec![0.0; model.dim()];
    for &(j, v) in entries {
        if j >= model.n() {
            return Err(IppError::ShapeMismatch(format!(
                "profile index {j} out of range for n = {}",
                model.n()
            )));
        }
        for (c, xc) in x.iter_mut().enumerate() {
            *xc += v * basis[(j, c)];
        }
    }
    Ok(x)
}

/// Rescales each nonzero vector to unit Euclidean norm. The returned flags
/// mark zero vectors, which are passed through unchanged.
pub fn unit_normalize(vectors: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
    vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                (v.iter().map(|x| x / norm).collect(), false)
            } else {
                (v.clone(), true)
            }
        })
        .unzip()
}

/// Equally spaced export times `k T / count`, merged with the histogram bin
/// midpoints when the estimator is a histogram.
pub fn default_times(model: &EmbeddingModel, count: usize) -> Vec<f64> {
    let horizon = model.horizon();
    let mut times: Vec<f64> = (1..=count)
        .map(|k| k as f64 * horizon / count as f64)
        .collect();
    if let EstimatorConfig::Histogram { bins } = *model.estimator() {
        times.extend((0..bins).map(|m| bin_midpoint(m, bins, horizon)));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Writes `node,time,x1..xd` rows, using `labels` for the node column.
pub fn write_trajectories_csv<W: Write>(
    writer: W,
    labels: &[String],
    trajectories: &[Trajectory],
) -> Result<()> {
    let dim = trajectories.iter().map(Trajectory::dim).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["node".to_string(), "time".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for traj in trajectories {
        let label = labels
            .get(traj.node)
            .ok_or_else(|| IppError::ShapeMismatch(format!("no label for node {}", traj.node)))?;
        for s in &traj.samples {
            let mut row = vec![label.clone(), s.t.to_string()];
            row.extend(s.x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads trajectory CSV. Node labels are collected in order of first appearance.
pub fn read_trajectories_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Trajectory>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "node" || &header[1] != "time" {
        return Err(IppError::Parse {
            line: 1,
            message: "expected header `node,time,x1,...`".into(),
        });
    }
    let dim = header.len() - 2;
    let mut labels: Vec<String> = Vec::new();
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| IppError::Parse {
                line,
                message: format!("invalid number `{s}`"),
            })
        };
        let node = match labels.iter().position(|l| l == &record[0]) {
            Some(k) => k,
            None => {
                labels.push(record[0].to_string());
                trajectories.push(Trajectory {
                    node: labels.len() - 1,
                    samples: Vec::new(),
                });
                labels.len() - 1
            }
        };
        let t = parse(&record[1])?;
        let x = (0..dim)
            .map(|c| parse(&record[c + 2]))
            .collect::<Result<Vec<_>>>()?;
        let samples = &mut trajectories[node].samples;
        if samples.last().is_some_and(|s| s.t >= t) {
            return Err(IppError::Parse {
                line,
                message: "times must be strictly increasing per node".into(),
            });
        }
        samples.push(Sample { t, x });
    }
    Ok((labels, trajectories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use crate::intensity::KernelShape;
    use crate::subspace::{fit, FitOptions};

    fn toy() -> (EventLog, EmbeddingModel) {
        let mut events = Vec::new();
        for k in 0..60 {
            let t = (k as f64 + 0.3) / 60.0;
            events.push(Event::new(k % 4, 4 + k % 3, t));
            events.push(Event::new(k % 2, 2 + k % 5, (t * 0.97).max(1e-3)));
        }
        let log = EventLog::new(8, 1.0, events).unwrap();
        let model = fit(&log, &EstimatorConfig::histogram(6), &FitOptions::new(6, 2)).unwrap();
        (log, model)
    }

    #[test]
    fn isolated_node_sits_at_origin() {
        let (log, model) = toy();
        // node 7 has no events
        let traj = project_node(&model, &log, 7, &[0.1, 0.5, 1.0]).unwrap();
        assert!(traj.samples.iter().all(|s| s.x.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn histogram_trajectory_has_one_segment_per_bin() {
        let (log, model) = toy();
        let times = default_times(&model, 120);
        let traj = project_node(&model, &log, 0, &times).unwrap();
        let mut segments = 1;
        for w in traj.samples.windows(2) {
            if w[0].x != w[1].x {
                segments += 1;
            }
        }
        assert!(segments <= 6);
        // same bin, bit-identical positions
        let a = project_node(&model, &log, 0, &[0.01, 0.16]).unwrap();
        assert_eq!(a.samples[0].x, a.samples[1].x);
    }

    #[test]
    fn snapshot_rows_match_nodes() {
        let (log, model) = toy();
        for t in [0.05, 0.4, 0.77, 1.0] {
            let snap = project_snapshot(&model, &log, t).unwrap();
            for i in 0..log.n() {
                let x = project_node(&model, &log, i, &[t]).unwrap();
                for c in 0..model.dim() {
                    assert_eq!(snap[(i, c)], x.samples[0].x[c]);
                }
            }
        }
    }

    #[test]
    fn out_of_sample_matches_training_row() {
        let (log, model) = toy();
        let t = 0.45;
        let slice = crate::intensity::slice(&log, model.estimator(), t).unwrap();
        let dense = slice.to_dense();
        for i in 0..log.n() {
            let x = project_out_of_sample(&model, &dense[i]).unwrap();
            let y = project_node(&model, &log, i, &[t]).unwrap();
            for c in 0..model.dim() {
                assert!((x[c] - y.samples[0].x[c]).abs() <= 1e-12 * (1.0 + x[c].abs()));
            }
        }
    }

    #[test]
    fn basis_vector_projects_to_axis() {
        let (_, model) = toy();
        let s = 3.5;
        let profile: Vec<f64> = model.basis().column(0).iter().map(|v| s * v).collect();
        let x = project_out_of_sample(&model, &profile).unwrap();
        assert!((x[0] - s).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
        assert_eq!(
            project_out_of_sample(&model, &[0.0; 8]).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            project_out_of_sample(&model, &[1.0; 3]),
            Err(IppError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn errors_for_bad_queries() {
        let (log, model) = toy();
        assert!(matches!(
            project_node(&model, &log, 8, &[0.5]),
            Err(IppError::InvalidQuery(_))
        ));
        assert!(matches!(
            project_node(&model, &log, 0, &[0.0]),
            Err(IppError::OutOfDomain { .. })
        ));
        assert!(matches!(
            project_node(&model, &log, 0, &[0.5, 0.4]),
            Err(IppError::InvalidQuery(_))
        ));
        assert!(Projector::new(&model, &log)
            .unwrap()
            .allow_extension(true)
            .snapshot(1.01)
            .is_err());
    }

    #[test]
    fn kernel_models_can_extend_past_horizon() {
        let (log, _) = toy();
        let model = fit(
            &log,
            &EstimatorConfig::kernel(KernelShape::Epanechnikov, 0.1),
            &FitOptions::new(10, 2),
        )
        .unwrap();
        let p = Projector::new(&model, &log).unwrap();
        assert!(p.position(0, 1.05).is_err());
        let p = p.allow_extension(true);
        assert!(p.position(0, 1.05).is_ok());
        assert!(p.position(0, 1.11).is_err());
    }

    #[test]
    fn unit_normalize_flags_zeros() {
        let (out, flags) = unit_normalize(&[vec![3.0, 4.0], vec![0.0, 0.0]]);
        assert_eq!(out[0], vec![0.6, 0.8]);
        assert_eq!(out[1], vec![0.0, 0.0]);
        assert_eq!(flags, vec![false, true]);
    }

    #[test]
    fn trajectory_csv_roundtrip() {
        let (log, model) = toy();
        let trajs: Vec<Trajectory> = (0..3)
            .map(|i| project_node(&model, &log, i, &[0.1, 0.6, 0.9]).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, log.labels(), &trajs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node,time,x1,x2\n"));
        let (labels, back) = read_trajectories_csv(buf.as_slice()).unwrap();
        assert_eq!(labels, vec!["1", "2", "3"]);
        assert_eq!(back, trajs);
    }
}
