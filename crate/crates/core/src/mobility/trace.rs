use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval during which nodes `u < v` were within contact range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub t_start_h: f64,
    pub t_end_h: f64,
    pub u: usize,
    pub v: usize,
}

impl ContactEvent {
    /// Builds an event, canonicalizing the pair so that `u < v`.
    pub fn new(t_start_h: f64, t_end_h: f64, a: usize, b: usize) -> Result<Self> {
        if !(t_start_h.is_finite() && t_end_h.is_finite()) {
            return Err(Error::NonFinite("contact time"));
        }
        if a == b {
            return Err(Error::data(format!("self-contact on node {a}")));
        }
        if t_start_h < 0.0 || t_start_h >= t_end_h {
            return Err(Error::data(format!(
                "contact interval [{t_start_h}, {t_end_h}] must satisfy 0 <= start < end"
            )));
        }
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Ok(Self {
            t_start_h,
            t_end_h,
            u,
            v,
        })
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    pub fn duration_h(&self) -> f64 {
        self.t_end_h - self.t_start_h
    }

    fn order(&self, other: &Self) -> std::cmp::Ordering {
        self.t_start_h
            .total_cmp(&other.t_start_h)
            .then(self.t_end_h.total_cmp(&other.t_end_h))
            .then(self.u.cmp(&other.u))
            .then(self.v.cmp(&other.v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SyntheticRwp,
    SyntheticRd,
    Imported,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::SyntheticRwp => "synthetic-RWP",
            Provenance::SyntheticRd => "synthetic-RD",
            Provenance::Imported => "imported",
        })
    }
}

/// Time-ordered pairwise contact intervals over `[0, duration_h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactTrace {
    events: Vec<ContactEvent>,
    n_nodes: usize,
    duration_h: f64,
    provenance: Provenance,
}

impl ContactTrace {
    /// Validates and sorts `events`.
    ///
    /// Every event must lie inside `[0, duration_h]`, reference ids below
    /// `n_nodes`, and for each pair the intervals must be strictly disjoint.
    pub fn new(
        mut events: Vec<ContactEvent>,
        n_nodes: usize,
        duration_h: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if !(duration_h.is_finite() && duration_h >= 0.0) {
            return Err(Error::data(format!(
                "trace duration must be >= 0, got {duration_h}"
            )));
        }
        for e in &events {
            if e.u >= e.v {
                return Err(Error::data(format!(
                    "contact pair ({}, {}) not canonical",
                    e.u, e.v
                )));
            }
            if e.v >= n_nodes {
                return Err(Error::NodeOutOfRange { id: e.v, n_nodes });
            }
            if !(e.t_start_h >= 0.0 && e.t_start_h < e.t_end_h && e.t_end_h <= duration_h) {
                return Err(Error::data(format!(
                    "contact [{}, {}] outside trace window [0, {duration_h}]",
                    e.t_start_h, e.t_end_h
                )));
            }
        }
        events.sort_by(|a, b| a.order(b));

        let mut last_end: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &events {
            if let Some(&end) = last_end.get(&e.pair()) {
                if e.t_start_h <= end {
                    return Err(Error::data(format!(
                        "overlapping contacts for pair ({}, {}) at t={}",
                        e.u, e.v, e.t_start_h
                    )));
                }
            }
            last_end.insert(e.pair(), e.t_end_h);
        }

        Ok(Self {
            events,
            n_nodes,
            duration_h,
            provenance,
        })
    }

    pub fn empty(n_nodes: usize, duration_h: f64, provenance: Provenance) -> Result<Self> {
        Self::new(Vec::new(), n_nodes, duration_h, provenance)
    }

    /// Same events over a larger node population.
    pub fn with_n_nodes(mut self, n_nodes: usize) -> Result<Self> {
        if n_nodes < self.n_nodes {
            return Err(Error::data(format!(
                "cannot shrink trace population from {} to {n_nodes}",
                self.n_nodes
            )));
        }
        self.n_nodes = n_nodes;
        Ok(self)
    }

    pub fn events(&self) -> &[ContactEvent] {
        &self.events
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn duration_h(&self) -> f64 {
        self.duration_h
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Writes `t_start,t_end,u,v` CSV. Times use the shortest representation
    /// that parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "t_start,t_end,u,v")?;
        for e in &self.events {
            writeln!(out, "{},{},{},{}", e.t_start_h, e.t_end_h, e.u, e.v)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, None)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}
