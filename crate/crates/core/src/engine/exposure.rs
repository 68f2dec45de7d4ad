use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Proximity,
    Social,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Proximity => "proximity",
            Channel::Social => "social",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "proximity" => Ok(Channel::Proximity),
            "social" => Ok(Channel::Social),
            other => Err(Error::data(format!("unknown channel {other:?}"))),
        }
    }
}

/// One directed transmission opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureEvent {
    pub t_h: f64,
    pub src: usize,
    pub dst: usize,
    pub channel: Channel,
    /// Identifies the event's random draw; unique within a stream and stable
    /// across trials and across streams built from the same inputs.
    pub event_key: u64,
}

/// Time-sorted transmission opportunities over `[0, horizon_h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureStream {
    events: Vec<ExposureEvent>,
    horizon_h: f64,
    max_id: Option<usize>,
}

fn event_order(a: &ExposureEvent, b: &ExposureEvent) -> std::cmp::Ordering {
    a.t_h.total_cmp(&b.t_h).then(a.event_key.cmp(&b.event_key))
}

impl ExposureStream {
    /// Wraps already-sorted events. Rejects unsorted input, duplicate keys,
    /// self-loops, and events beyond the horizon. `horizon_h` may be infinite.
    pub fn new(events: Vec<ExposureEvent>, horizon_h: f64) -> Result<Self> {
        if horizon_h.is_nan() || horizon_h < 0.0 {
            return Err(Error::data(format!(
                "stream horizon must be >= 0, got {horizon_h}"
            )));
        }
        let mut keys = HashSet::with_capacity(events.len());
        let mut max_id = None;
        for (index, e) in events.iter().enumerate() {
            if !e.t_h.is_finite() || e.t_h < 0.0 {
                return Err(Error::data(format!(
                    "event {index} has invalid time {}",
                    e.t_h
                )));
            }
            if e.t_h > horizon_h {
                return Err(Error::data(format!(
                    "event {index} at t={} lies beyond horizon {horizon_h}",
                    e.t_h
                )));
            }
            if index > 0 && events[index - 1].t_h > e.t_h {
                return Err(Error::UnsortedStream { index, t_h: e.t_h });
            }
            if e.src == e.dst {
                return Err(Error::data(format!(
                    "event {index} is a self-loop on {}",
                    e.src
                )));
            }
            if !keys.insert(e.event_key) {
                return Err(Error::data(format!("duplicate event_key {}", e.event_key)));
            }
            max_id = max_id.max(Some(e.src.max(e.dst)));
        }
        Ok(Self {
            events,
            horizon_h,
            max_id,
        })
    }

    /// Sorts by `(t, event_key)` and validates.
    pub fn from_unsorted(mut events: Vec<ExposureEvent>, horizon_h: f64) -> Result<Self> {
        events.sort_by(event_order);
        Self::new(events, horizon_h)
    }

    pub fn empty(horizon_h: f64) -> Self {
        Self {
            events: Vec::new(),
            horizon_h,
            max_id: None,
        }
    }

    pub fn events(&self) -> &[ExposureEvent] {
        &self.events
    }

    pub fn horizon_h(&self) -> f64 {
        self.horizon_h
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Largest node id referenced, if any.
    pub fn max_id(&self) -> Option<usize> {
        self.max_id
    }

    /// The sub-stream on one channel; keys are preserved.
    pub fn restrict(&self, channel: Channel) -> Self {
        let events: Vec<_> = self
            .events
            .iter()
            .copied()
            .filter(|e| e.channel == channel)
            .collect();
        let max_id = events.iter().map(|e| e.src.max(e.dst)).max();
        Self {
            events,
            horizon_h: self.horizon_h,
            max_id,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "t,src,dst,channel,event_key")?;
        for e in &self.events {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.t_h, e.src, e.dst, e.channel, e.event_key
            )?;
        }
        Ok(())
    }

    /// Reads `t,src,dst,channel,event_key`; rows need not be sorted.
    pub fn read_csv<R: Read>(input: R, horizon_h: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        let expected = ["t", "src", "dst", "channel", "event_key"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::data(format!(
                "expected header {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut events = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Row { line, message };
            let field = |i: usize| row.get(i).unwrap_or("");
            let t_h: f64 = field(0)
                .parse()
                .map_err(|_| bad(format!("bad time {:?}", field(0))))?;
            let src: usize = field(1)
                .parse()
                .map_err(|_| bad(format!("bad src {:?}", field(1))))?;
            let dst: usize = field(2)
                .parse()
                .map_err(|_| bad(format!("bad dst {:?}", field(2))))?;
            let channel: Channel = field(3).parse().map_err(|e: Error| bad(e.to_string()))?;
            let event_key: u64 = field(4)
                .parse()
                .map_err(|_| bad(format!("bad event_key {:?}", field(4))))?;
            events.push(ExposureEvent {
                t_h,
                src,
                dst,
                channel,
                event_key,
            });
        }
        Self::from_unsorted(events, horizon_h)
    }
}
