//! Importers for external contact and social-graph data, and the dual-path
//! exposure stream built from them.
//!
//! Contact CSV: `t_start,t_end,u,v` (hours, non-negative integer ids).
//! Social CSV: `u,v` (undirected). Lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{Channel, ExposureEvent, ExposureStream};
use crate::error::{Error, Result};
use crate::mobility::{ContactEvent, ContactTrace, Provenance};

/// Undirected simple graph over `0..n_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl SocialGraph {
    /// Canonicalizes and deduplicates `edges`; rejects self-loops.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::data(format!("self-loop on node {a}")));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if v >= n_nodes {
                return Err(Error::NodeOutOfRange { id: v, n_nodes });
            }
            canon.push((u, v));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            n_nodes,
            edges: canon,
        })
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn with_n_nodes(mut self, n_nodes: usize) -> Result<Self> {
        if n_nodes < self.n_nodes {
            return Err(Error::data(format!(
                "cannot shrink graph population from {} to {n_nodes}",
                self.n_nodes
            )));
        }
        self.n_nodes = n_nodes;
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "u,v")?;
        for (u, v) in &self.edges {
            writeln!(out, "{u},{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPathConfig {
    pub p_s: f64,
    pub p_l: f64,
    /// Spacing of social attempts, and of repeated proximity attempts during
    /// one long contact.
    #[serde(default = "default_slot")]
    pub social_slot_h: f64,
    pub horizon_h: f64,
}

pub const DEFAULT_SOCIAL_SLOT_H: f64 = 0.25;

fn default_slot() -> f64 {
    DEFAULT_SOCIAL_SLOT_H
}

impl DualPathConfig {
    pub fn validate(&self) -> Result<()> {
        for (p, name) in [(self.p_s, "p_s"), (self.p_l, "p_l")] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.social_slot_h.is_finite() && self.social_slot_h > 0.0) {
            return Err(Error::config("social_slot_h must be positive"));
        }
        if !(self.horizon_h.is_finite() && self.horizon_h >= 0.0) {
            return Err(Error::config("horizon_h must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Dense renumbering of external node ids. Dense id `i` is `original(i)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    originals: Vec<u64>,
    dense: BTreeMap<u64, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    pub fn dense_id(&self, original: u64) -> Option<usize> {
        self.dense.get(&original).copied()
    }

    pub fn original(&self, dense: usize) -> Option<u64> {
        self.originals.get(dense).copied()
    }

    fn intern(&mut self, original: u64) -> usize {
        if let Some(&d) = self.dense.get(&original) {
            return d;
        }
        let d = self.originals.len();
        self.originals.push(original);
        self.dense.insert(original, d);
        d
    }

    /// Adds ids in ascending order so that the numbering does not depend on
    /// row order.
    fn extend_sorted(&mut self, mut ids: Vec<u64>) {
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            self.intern(id);
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "original_id,dense_id")?;
        for (d, o) in self.originals.iter().enumerate() {
            writeln!(out, "{o},{d}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv_reader(input);
        expect_header(&mut reader, &["original_id", "dense_id"])?;
        let mut rows = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = line_of(&row);
            let original = parse_field::<u64>(&row, 0, "original_id", line)?;
            let dense = parse_field::<usize>(&row, 1, "dense_id", line)?;
            rows.push((dense, original, line));
        }
        rows.sort_unstable();
        let mut map = IdMap::new();
        for (dense, original, line) in rows {
            if dense != map.len() || map.dense.contains_key(&original) {
                return Err(Error::Row {
                    line,
                    message: "mapping is not a dense bijection".into(),
                });
            }
            map.intern(original);
        }
        Ok(map)
    }
}

/// Result of an import with non-fatal findings.
#[derive(Debug, Clone)]
pub struct Imported<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn expect_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers()?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::Row {
            line: 1,
            message: format!(
                "expected header {}, found {}",
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

fn line_of(row: &csv::StringRecord) -> u64 {
    row.position().map_or(0, |p| p.line())
}

fn parse_field<T: std::str::FromStr>(
    row: &csv::StringRecord,
    index: usize,
    name: &str,
    line: u64,
) -> Result<T> {
    let raw = row.get(index).unwrap_or("");
    raw.parse().map_err(|_| Error::Row {
        line,
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

struct RawContact {
    t_start_h: f64,
    t_end_h: f64,
    u: u64,
    v: u64,
}

fn read_contact_rows<R: Read>(source: R) -> Result<Vec<RawContact>> {
    let mut reader = csv_reader(source);
    expect_header(&mut reader, &["t_start", "t_end", "u", "v"])?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = line_of(&row);
        let t_start_h: f64 = parse_field(&row, 0, "t_start", line)?;
        let t_end_h: f64 = parse_field(&row, 1, "t_end", line)?;
        let u: u64 = parse_field(&row, 2, "u", line)?;
        let v: u64 = parse_field(&row, 3, "v", line)?;
        let bad = |message: String| Error::Row { line, message };
        if !(t_start_h.is_finite() && t_end_h.is_finite()) {
            return Err(bad("non-finite time".into()));
        }
        if t_start_h < 0.0 {
            return Err(bad(format!("negative start time {t_start_h}")));
        }
        if t_start_h >= t_end_h {
            return Err(bad(format!("empty interval [{t_start_h}, {t_end_h}]")));
        }
        if u == v {
            return Err(bad(format!("self-contact on node {u}")));
        }
        rows.push(RawContact {
            t_start_h,
            t_end_h,
            u,
            v,
        });
    }
    Ok(rows)
}

/// Merges overlapping (or touching) intervals of the same pair.
fn merge_overlaps(mut events: Vec<ContactEvent>, warnings: &mut Vec<String>) -> Vec<ContactEvent> {
    events.sort_by(|a, b| {
        a.pair()
            .cmp(&b.pair())
            .then(a.t_start_h.total_cmp(&b.t_start_h))
    });
    let mut merged: Vec<ContactEvent> = Vec::with_capacity(events.len());
    for e in events {
        match merged.last_mut() {
            Some(last) if last.pair() == e.pair() && e.t_start_h <= last.t_end_h => {
                warnings.push(format!(
                    "merged overlapping contacts of pair ({}, {}) at t={}",
                    e.u, e.v, e.t_start_h
                ));
                last.t_end_h = last.t_end_h.max(e.t_end_h);
            }
            _ => merged.push(e),
        }
    }
    merged
}

fn finish_trace(
    events: Vec<ContactEvent>,
    n_nodes: usize,
    warnings: Vec<String>,
) -> Result<Imported<ContactTrace>> {
    let mut warnings = warnings;
    let events = merge_overlaps(events, &mut warnings);
    let duration = events.iter().map(|e| e.t_end_h).fold(0.0, f64::max);
    let trace = ContactTrace::new(events, n_nodes, duration, Provenance::Imported)?;
    Ok(Imported {
        value: trace,
        warnings,
    })
}

/// Reads a contact CSV keeping ids as given. The node count is `max id + 1`
/// unless `n_nodes` is supplied; the trace duration is the latest end time.
pub fn import_contact_csv<R: Read>(
    source: R,
    n_nodes: Option<usize>,
) -> Result<Imported<ContactTrace>> {
    let rows = read_contact_rows(source)?;
    let mut events = Vec::with_capacity(rows.len());
    let mut max_id = None;
    for r in &rows {
        let (u, v) = (to_index(r.u)?, to_index(r.v)?);
        max_id = max_id.max(Some(u.max(v)));
        events.push(ContactEvent::new(r.t_start_h, r.t_end_h, u, v)?);
    }
    let inferred = max_id.map_or(0, |m| m + 1);
    let n = match n_nodes {
        Some(n) if n < inferred => {
            return Err(Error::NodeOutOfRange {
                id: inferred - 1,
                n_nodes: n,
            });
        }
        Some(n) => n,
        None => inferred,
    };
    finish_trace(events, n, Vec::new())
}

/// Reads a contact CSV and renumbers ids densely, extending `mapping`.
pub fn import_contact_csv_remapped<R: Read>(
    source: R,
    mapping: Option<IdMap>,
) -> Result<(Imported<ContactTrace>, IdMap)> {
    let rows = read_contact_rows(source)?;
    let mut map = mapping.unwrap_or_default();
    map.extend_sorted(rows.iter().flat_map(|r| [r.u, r.v]).collect());
    let events = rows
        .iter()
        .map(|r| {
            let u = map.dense_id(r.u).expect("interned");
            let v = map.dense_id(r.v).expect("interned");
            ContactEvent::new(r.t_start_h, r.t_end_h, u, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let imported = finish_trace(events, map.len(), Vec::new())?;
    Ok((imported, map))
}

fn to_index(id: u64) -> Result<usize> {
    usize::try_from(id).map_err(|_| Error::data(format!("node id {id} too large")))
}

fn read_edge_rows<R: Read>(source: R) -> Result<Vec<(u64, u64)>> {
    let mut reader = csv_reader(source);
    expect_header(&mut reader, &["u", "v"])?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = line_of(&row);
        let u: u64 = parse_field(&row, 0, "u", line)?;
        let v: u64 = parse_field(&row, 1, "v", line)?;
        if u == v {
            return Err(Error::Row {
                line,
                message: format!("self-loop on node {u}"),
            });
        }
        rows.push((u, v));
    }
    Ok(rows)
}

pub fn import_social_csv<R: Read>(
    source: R,
    n_nodes: Option<usize>,
) -> Result<Imported<SocialGraph>> {
    let rows = read_edge_rows(source)?;
    let edges = rows
        .iter()
        .map(|&(u, v)| Ok((to_index(u)?, to_index(v)?)))
        .collect::<Result<Vec<_>>>()?;
    let inferred = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let n = n_nodes.unwrap_or(inferred);
    let graph = SocialGraph::new(n, edges.iter().copied())?;
    let duplicates = edges.len() - graph.edges().len();
    let warnings = if duplicates > 0 {
        vec![format!("dropped {duplicates} duplicate edge rows")]
    } else {
        Vec::new()
    };
    Ok(Imported {
        value: graph,
        warnings,
    })
}

pub fn import_social_csv_remapped<R: Read>(
    source: R,
    mapping: Option<IdMap>,
) -> Result<(Imported<SocialGraph>, IdMap)> {
    let rows = read_edge_rows(source)?;
    let mut map = mapping.unwrap_or_default();
    map.extend_sorted(rows.iter().flat_map(|&(u, v)| [u, v]).collect());
    let edges: Vec<_> = rows
        .iter()
        .map(|&(u, v)| {
            (
                map.dense_id(u).expect("interned"),
                map.dense_id(v).expect("interned"),
            )
        })
        .collect();
    let graph = SocialGraph::new(map.len(), edges.iter().copied())?;
    let duplicates = edges.len() - graph.edges().len();
    let warnings = if duplicates > 0 {
        vec![format!("dropped {duplicates} duplicate edge rows")]
    } else {
        Vec::new()
    };
    Ok((
        Imported {
            value: graph,
            warnings,
        },
        map,
    ))
}

const SOCIAL_TAG: u64 = 1 << 63;
const ID_BITS: u32 = 20;
const SLOT_BITS: u32 = 22;
const RETRY_BITS: u32 = 21;
const CONTACT_INDEX_BITS: u32 = 63 - RETRY_BITS - 1;

/// Key of the `retry`-th proximity opportunity of contact `index`, in
/// direction `reverse` (false: u -> v).
pub fn proximity_key(index: usize, retry: u64, reverse: bool) -> Result<u64> {
    let index = index as u64;
    if index >> CONTACT_INDEX_BITS != 0 || retry >> RETRY_BITS != 0 {
        return Err(Error::data(
            "contact trace too large for proximity event keys",
        ));
    }
    Ok((index << (RETRY_BITS + 1)) | (retry << 1) | u64::from(reverse))
}

/// Key of the social attempt `src -> dst` at the end of slot `slot`.
pub fn social_key(src: usize, dst: usize, slot: u64) -> Result<u64> {
    let limit = 1u64 << ID_BITS;
    if src as u64 >= limit || dst as u64 >= limit {
        return Err(Error::data(format!(
            "social event keys support node ids below {limit}"
        )));
    }
    if slot >> SLOT_BITS != 0 {
        return Err(Error::data("too many social slots for event keys"));
    }
    Ok(SOCIAL_TAG | ((src as u64) << (ID_BITS + SLOT_BITS)) | ((dst as u64) << SLOT_BITS) | slot)
}

/// Turns contacts and social ties into directed transmission opportunities on
/// `[0, horizon_h]`.
///
/// Each contact `[s, e]` yields attempts at `s` and at `s + k*slot` (k >= 1)
/// while inside the contact, in both directions. Each social edge yields one
/// attempt per direction at the end of every whole slot, `t = k*slot` for
/// k >= 1.
pub fn build_exposure_stream(
    trace: &ContactTrace,
    graph: &SocialGraph,
    cfg: &DualPathConfig,
) -> Result<ExposureStream> {
    cfg.validate()?;
    if trace.n_nodes() != graph.n_nodes() {
        return Err(Error::data(format!(
            "contact trace has {} nodes but social graph has {}",
            trace.n_nodes(),
            graph.n_nodes()
        )));
    }
    let slot = cfg.social_slot_h;
    let horizon = cfg.horizon_h;
    let mut events = Vec::new();

    for (index, c) in trace.events().iter().enumerate() {
        let mut retry = 0u64;
        loop {
            let t = c.t_start_h + retry as f64 * slot;
            if t > c.t_end_h || t > horizon {
                break;
            }
            for (reverse, (src, dst)) in [(false, (c.u, c.v)), (true, (c.v, c.u))] {
                events.push(ExposureEvent {
                    t_h: t,
                    src,
                    dst,
                    channel: Channel::Proximity,
                    event_key: proximity_key(index, retry, reverse)?,
                });
            }
            retry += 1;
        }
    }

    for &(u, v) in graph.edges() {
        let mut k = 1u64;
        loop {
            let t = k as f64 * slot;
            if t > horizon {
                break;
            }
            for (src, dst) in [(u, v), (v, u)] {
                events.push(ExposureEvent {
                    t_h: t,
                    src,
                    dst,
                    channel: Channel::Social,
                    event_key: social_key(src, dst, k)?,
                });
            }
            k += 1;
        }
    }

    ExposureStream::from_unsorted(events, horizon)
}
