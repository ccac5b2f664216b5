//! Timestamped pairwise interaction events.
//!
//! An [`EventLog`] holds undirected triples `(i, j, t)` on the time domain
//! `(0, T]`. Node indices are 0-based internally; the CSV format carries the
//! original labels, and the label map travels with every downstream model.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};

/// A single undirected interaction, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub i: usize,
    pub j: usize,
    pub t: f64,
}

impl Event {
    pub fn new(i: usize, j: usize, t: f64) -> Self {
        Event { i, j, t }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PairTimes {
    i: usize,
    j: usize,
    times: Vec<f64>,
}

/// Validated, time-sorted dynamic network on `(0, horizon]`.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    n: usize,
    horizon: f64,
    events: Vec<Event>,
    labels: Vec<String>,
    pairs: Vec<PairTimes>,
    incident: Vec<Vec<usize>>,
}

impl EventLog {
    /// Builds a log from raw triples. Triples with `i > j` are swapped into
    /// canonical order; duplicates are kept.
    pub fn new(n: usize, horizon: f64, events: Vec<Event>) -> Result<Self> {
        let labels = (1..=n).map(|k| k.to_string()).collect();
        Self::with_labels(horizon, events, labels)
    }

    /// As [`EventLog::new`] with an explicit index-to-label map; `n` is the
    /// number of labels.
    pub fn with_labels(horizon: f64, mut events: Vec<Event>, labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(IppError::InvalidData("node count must be positive".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(IppError::InvalidData(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        for e in events.iter_mut() {
            if e.i == e.j {
                return Err(IppError::InvalidData(format!(
                    "self-loop on node {}",
                    labels.get(e.i).map_or("?", |s| s)
                )));
            }
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
            if e.j >= n {
                return Err(IppError::InvalidData(format!(
                    "node index {} out of range for n = {n}",
                    e.j
                )));
            }
            if !e.t.is_finite() || e.t <= 0.0 {
                return Err(IppError::InvalidData(format!(
                    "event time must be positive, got {}",
                    e.t
                )));
            }
            if e.t > horizon {
                return Err(IppError::InvalidData(format!(
                    "event time {} exceeds horizon {horizon}",
                    e.t
                )));
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));

        let mut by_pair: Vec<(usize, usize, f64)> =
            events.iter().map(|e| (e.i, e.j, e.t)).collect();
        by_pair.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        let mut pairs: Vec<PairTimes> = Vec::new();
        for (i, j, t) in by_pair {
            match pairs.last_mut() {
                Some(p) if p.i == i && p.j == j => p.times.push(t),
                _ => pairs.push(PairTimes {
                    i,
                    j,
                    times: vec![t],
                }),
            }
        }
        let mut incident = vec![Vec::new(); n];
        for (k, p) in pairs.iter().enumerate() {
            incident[p.i].push(k);
            incident[p.j].push(k);
        }

        Ok(EventLog {
            n,
            horizon,
            events,
            labels,
            pairs,
            incident,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of node pairs with at least one event.
    pub fn active_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Iterates `(i, j, times)` over every pair with events, `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, &[f64])> {
        self.pairs.iter().map(|p| (p.i, p.j, p.times.as_slice()))
    }

    /// Iterates `(neighbor, times)` for every pair incident to `node` that has events.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, &[f64])> {
        self.incident[node].iter().map(move |&k| {
            let p = &self.pairs[k];
            let other = if p.i == node { p.j } else { p.i };
            (other, p.times.as_slice())
        })
    }

    /// Sorted event times of the unordered pair `{i, j}`.
    pub fn edge_events(&self, i: usize, j: usize) -> Result<&[f64]> {
        if i == j {
            return Err(IppError::InvalidQuery(format!(
                "edge query on self-pair ({i}, {i})"
            )));
        }
        if i >= self.n || j >= self.n {
            return Err(IppError::InvalidQuery(format!(
                "node index out of range for n = {}",
                self.n
            )));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        Ok(self
            .pairs
            .binary_search_by(|p| p.i.cmp(&a).then(p.j.cmp(&b)))
            .map(|k| self.pairs[k].times.as_slice())
            .unwrap_or(&[]))
    }

    /// Writes the `src,dst,time` CSV form, using node labels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src", "dst", "time"])?;
        for e in &self.events {
            w.write_record([
                self.labels[e.i].as_str(),
                self.labels[e.j].as_str(),
                &e.t.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Overrides applied while reading an event file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Time horizon; defaults to the last event time.
    pub horizon: Option<f64>,
    /// Node count; defaults to the largest integer id, or the number of distinct labels.
    pub nodes: Option<usize>,
    /// Fixed label map (index order). Every label in the file must appear in it.
    pub labels: Option<Vec<String>>,
}

/// Loads an event CSV with header `src,dst,time`.
pub fn load_events(path: impl AsRef<Path>, options: &LoadOptions) -> Result<EventLog> {
    let file = std::fs::File::open(path)?;
    read_events(file, options)
}

pub fn read_events<R: Read>(reader: R, options: &LoadOptions) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != ["src", "dst", "time"] {
        return Err(IppError::Parse {
            line: 1,
            message: format!(
                "expected header `src,dst,time`, found `{}`",
                names.join(",")
            ),
        });
    }

    let mut raw: Vec<(String, String, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            IppError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(IppError::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let t: f64 = record[2].parse().map_err(|_| IppError::Parse {
            line,
            message: format!("invalid time `{}`", &record[2]),
        })?;
        if !t.is_finite() {
            return Err(IppError::Parse {
                line,
                message: format!("invalid time `{}`", &record[2]),
            });
        }
        if record[0] == record[1] {
            return Err(IppError::InvalidData(format!(
                "self-loop on node `{}` at line {line}",
                &record[0]
            )));
        }
        if t <= 0.0 {
            return Err(IppError::InvalidData(format!(
                "non-positive time {t} at line {line}"
            )));
        }
        raw.push((record[0].to_string(), record[1].to_string(), t));
    }

    let labels = resolve_labels(&raw, options)?;
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k))
        .collect();
    let mut events = Vec::with_capacity(raw.len());
    for (src, dst, t) in &raw {
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| IppError::InvalidData(format!("unknown node label `{s}`")))
        };
        events.push(Event::new(lookup(src)?, lookup(dst)?, *t));
    }

    let horizon = match options.horizon {
        Some(h) => h,
        None => raw
            .iter()
            .map(|r| r.2)
            .fold(None, |acc: Option<f64>, t| {
                Some(acc.map_or(t, |a| a.max(t)))
            })
            .ok_or_else(|| {
                IppError::InvalidData("empty event file requires an explicit horizon".into())
            })?,
    };
    EventLog::with_labels(horizon, events, labels)
}

fn resolve_labels(raw: &[(String, String, f64)], options: &LoadOptions) -> Result<Vec<String>> {
    if let Some(labels) = &options.labels {
        if let Some(n) = options.nodes {
            if n != labels.len() {
                return Err(IppError::InvalidData(format!(
                    "node count {n} disagrees with label map of size {}",
                    labels.len()
                )));
            }
        }
        return Ok(labels.clone());
    }

    let ids: Option<Vec<usize>> = raw
        .iter()
        .flat_map(|r| [r.0.as_str(), r.1.as_str()])
        .map(|s| s.parse::<usize>().ok().filter(|&v| v >= 1))
        .collect();
    let n = match ids {
        Some(ids) => {
            let max_id = ids.into_iter().max().unwrap_or(0);
            let n = options.nodes.unwrap_or(max_id);
            if n < max_id {
                return Err(IppError::InvalidData(format!(
                    "node id {max_id} exceeds declared node count {n}"
                )));
            }
            return match n {
                0 => Err(IppError::InvalidData(
                    "empty event file requires an explicit node count".into(),
                )),
                n => Ok((1..=n).map(|k| k.to_string()).collect()),
            };
        }
        None => options.nodes,
    };

    let mut labels: Vec<String> = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for s in raw.iter().flat_map(|r| [r.0.as_str(), r.1.as_str()]) {
        if seen.insert(s, ()).is_none() {
            labels.push(s.to_string());
        }
    }
    if let Some(n) = n {
        if n < labels.len() {
            return Err(IppError::InvalidData(format!(
                "{} distinct labels exceed declared node count {n}",
                labels.len()
            )));
        }
        for k in labels.len()..n {
            labels.push(format!("#{}", k + 1));
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(body: &str, options: &LoadOptions) -> Result<EventLog> {
        read_events(body.as_bytes(), options)
    }

    #[test]
    fn canonicalizes_and_sorts() {
        let log = parse("src,dst,time\n1,2,0.5\n2,1,0.3\n", &LoadOptions::default()).unwrap();
        assert_eq!(log.n(), 2);
        assert_eq!(log.horizon(), 0.5);
        assert_eq!(
            log.events(),
            &[Event::new(0, 1, 0.3), Event::new(0, 1, 0.5)]
        );
        assert_eq!(log.edge_events(1, 0).unwrap(), &[0.3, 0.5]);
        assert_eq!(log.edge_events(0, 1).unwrap(), &[0.3, 0.5]);
    }

    #[test]
    fn empty_body_with_explicit_sizes() {
        let opts = LoadOptions {
            horizon: Some(1.0),
            nodes: Some(3),
            labels: None,
        };
        let log = parse("src,dst,time\n", &opts).unwrap();
        assert_eq!(log.n(), 3);
        assert!(log.is_empty());
        assert_eq!(log.edge_events(0, 2).unwrap(), &[] as &[f64]);
    }

    #[test]
    fn empty_body_without_horizon() {
        let opts = LoadOptions {
            nodes: Some(3),
            ..Default::default()
        };
        assert!(matches!(
            parse("src,dst,time\n", &opts),
            Err(IppError::InvalidData(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("src,dst,time\n1,2,0.5\n1,3,abc\n", &LoadOptions::default()).unwrap_err();
        match err {
            IppError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("src,dst,time\n1,2\n", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, IppError::Parse { line: 2, .. }));
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(
            parse("a,b,c\n1,2,0.5\n", &LoadOptions::default()),
            Err(IppError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_self_loops_and_bad_times() {
        assert!(matches!(
            parse("src,dst,time\n2,2,0.5\n", &LoadOptions::default()),
            Err(IppError::InvalidData(_))
        ));
        assert!(matches!(
            parse("src,dst,time\n1,2,0\n", &LoadOptions::default()),
            Err(IppError::InvalidData(_))
        ));
        assert!(matches!(
            parse("src,dst,time\n1,2,-1.5\n", &LoadOptions::default()),
            Err(IppError::InvalidData(_))
        ));
    }

    #[test]
    fn events_after_declared_horizon_are_rejected() {
        let opts = LoadOptions {
            horizon: Some(0.4),
            ..Default::default()
        };
        assert!(matches!(
            parse("src,dst,time\n1,2,0.5\n", &opts),
            Err(IppError::InvalidData(_))
        ));
        let opts = LoadOptions {
            horizon: Some(2.0),
            ..Default::default()
        };
        assert_eq!(
            parse("src,dst,time\n1,2,0.5\n", &opts).unwrap().horizon(),
            2.0
        );
    }

    #[test]
    fn string_labels_map_to_contiguous_indices() {
        let log = parse(
            "src,dst,time\nbob,alice,1.0\ncarol,bob,2.0\n",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(log.labels(), &["bob", "alice", "carol"]);
        assert_eq!(log.edge_events(0, 1).unwrap(), &[1.0]);
        assert_eq!(log.edge_events(2, 0).unwrap(), &[2.0]);
    }

    #[test]
    fn fixed_label_map_rejects_unknown_labels() {
        let opts = LoadOptions {
            labels: Some(vec!["a".into(), "b".into()]),
            ..Default::default()
        };
        assert!(parse("src,dst,time\na,b,1\n", &opts).is_ok());
        assert!(matches!(
            parse("src,dst,time\na,c,1\n", &opts),
            Err(IppError::InvalidData(_))
        ));
    }

    #[test]
    fn duplicates_are_kept() {
        let log = parse("src,dst,time\n1,2,0.5\n2,1,0.5\n", &LoadOptions::default()).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.edge_events(0, 1).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn edge_query_errors() {
        let log = EventLog::new(3, 1.0, vec![Event::new(0, 1, 0.5)]).unwrap();
        assert!(matches!(
            log.edge_events(1, 1),
            Err(IppError::InvalidQuery(_))
        ));
        assert!(matches!(
            log.edge_events(0, 3),
            Err(IppError::InvalidQuery(_))
        ));
    }

    #[test]
    fn pair_counts_sum_to_rows() {
        let body = "src,dst,time\n1,2,0.1\n3,1,0.2\n2,3,0.3\n1,2,0.4\n4,2,0.9\n";
        let log = parse(body, &LoadOptions::default()).unwrap();
        let mut total = 0;
        for i in 0..log.n() {
            for j in (i + 1)..log.n() {
                total += log.edge_events(i, j).unwrap().len();
            }
        }
        assert_eq!(total, body.lines().count() - 1);
    }

    #[test]
    fn neighbors_cover_incident_pairs() {
        let log = EventLog::new(
            4,
            1.0,
            vec![
                Event::new(0, 1, 0.5),
                Event::new(2, 0, 0.7),
                Event::new(1, 3, 0.2),
            ],
        )
        .unwrap();
        let mut nbrs: Vec<usize> = log.neighbors(0).map(|(j, _)| j).collect();
        nbrs.sort();
        assert_eq!(nbrs, vec![1, 2]);
        assert_eq!(log.neighbors(3).count(), 1);
    }
}
