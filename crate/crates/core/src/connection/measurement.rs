//! Meter readings in physical units, their per-unit aligned form, and first
//! differences.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::ops::Range;

use chrono::{DateTime, SecondsFormat, Utc};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::delta::balanced_pair_magnitude;
use crate::error::{Error, Result};
use crate::feeder::ReducedNetwork;
use crate::phase::ConnectionClass;

/// Prefix of the reserved substation ids in measurement files.
pub const SUBSTATION_PREFIX: &str = "__substation__";
/// Substation channels in storage order.
pub const SUBSTATION_CHANNELS: [&str; 6] = ["a", "b", "c", "ab", "bc", "ca"];

/// Readings as they appear in a measurement file: volts, kW and kVAr, with
/// `NaN` where a value is missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeterReadings {
    pub times: Vec<DateTime<Utc>>,
    pub load_ids: Vec<String>,
    /// `[load][time]`.
    pub v: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// `[channel][time]` in [`SUBSTATION_CHANNELS`] order.
    pub substation: [Vec<f64>; 6],
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    time: String,
    load_id: String,
    v: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
}

pub fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Measurement(format!("bad timestamp `{s}`: {e}")))
}

pub fn format_time(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

impl MeterReadings {
    pub fn empty(times: Vec<DateTime<Utc>>, load_ids: Vec<String>) -> Self {
        let t = times.len();
        let m = load_ids.len();
        let blank = || vec![vec![f64::NAN; t]; m];
        Self {
            substation: std::array::from_fn(|_| vec![f64::NAN; t]),
            v: blank(),
            p: blank(),
            q: blank(),
            times,
            load_ids,
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["time", "load_id", "v", "p", "q"];
        if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Measurement(format!(
                "expected header `time,load_id,v,p,q`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        let mut times = BTreeMap::new();
        let mut ids: Vec<String> = Vec::new();
        let mut id_index = HashMap::new();
        for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let t = parse_time(&row.time).map_err(|e| Error::Measurement(format!("row {}: {e}", line + 2)))?;
            times.insert(t, 0usize);
            if !row.load_id.starts_with(SUBSTATION_PREFIX) && !id_index.contains_key(&row.load_id) {
                id_index.insert(row.load_id.clone(), ids.len());
                ids.push(row.load_id.clone());
            }
            rows.push((t, row));
        }
        for (i, slot) in times.values_mut().enumerate() {
            *slot = i;
        }
        let mut out = Self::empty(times.keys().copied().collect(), ids);
        for (t, row) in rows {
            let ti = times[&t];
            let val = |x: Option<f64>| x.unwrap_or(f64::NAN);
            if let Some(ch) = row.load_id.strip_prefix(SUBSTATION_PREFIX) {
                let c = SUBSTATION_CHANNELS
                    .iter()
                    .position(|&n| n.eq_ignore_ascii_case(ch))
                    .ok_or_else(|| Error::Measurement(format!("unknown substation channel `{ch}`")))?;
                out.substation[c][ti] = val(row.v);
            } else {
                let m = id_index[&row.load_id];
                out.v[m][ti] = val(row.v);
                out.p[m][ti] = val(row.p);
                out.q[m][ti] = val(row.q);
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "load_id", "v", "p", "q"])?;
        let fmt = |x: f64| if x.is_finite() { format!("{x}") } else { String::new() };
        for (ti, t) in self.times.iter().enumerate() {
            let ts = format_time(t);
            for (c, ch) in SUBSTATION_CHANNELS.iter().enumerate() {
                let v = self.substation[c][ti];
                if v.is_finite() {
                    w.write_record([ts.clone(), format!("{SUBSTATION_PREFIX}{ch}"), fmt(v), String::new(), String::new()])?;
                }
            }
            for (m, id) in self.load_ids.iter().enumerate() {
                let (v, p, q) = (self.v[m][ti], self.p[m][ti], self.q[m][ti]);
                if v.is_finite() || p.is_finite() || q.is_finite() {
                    w.write_record([ts.clone(), id.clone(), fmt(v), fmt(p), fmt(q)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Times at which the network topology changes; samples on either side of
/// a change never share a difference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopologySchedule {
    pub changes: Vec<DateTime<Utc>>,
}

impl TopologySchedule {
    /// Index of the topology in force at `t`.
    pub fn topology_at(&self, t: &DateTime<Utc>) -> usize {
        self.changes.iter().filter(|c| *c <= t).count()
    }

    pub fn count(&self) -> usize {
        self.changes.len() + 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestOptions {
    /// Input powers are consumption-positive and must be negated.
    pub consumption_positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub range: Range<usize>,
    pub topology: usize,
}

/// Aligned per-unit measurements of the metered loads, branch-reduced to
/// the primary.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub times: Vec<DateTime<Utc>>,
    /// Indices into the network's loads, in network order.
    pub loads: Vec<usize>,
    pub load_ids: Vec<String>,
    pub classes: Vec<ConnectionClass>,
    /// `[load][time]`, per unit.
    pub v: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// `[channel][time]`, per unit.
    pub substation: [Vec<f64>; 6],
    /// Maximal runs of consecutive complete samples with a common topology.
    pub segments: Vec<Segment>,
    /// Samples excluded because they could not be differenced.
    pub dropped: usize,
}

fn interval_mode(times: &[DateTime<Utc>]) -> Option<chrono::TimeDelta> {
    let mut counts: BTreeMap<chrono::TimeDelta, usize> = BTreeMap::new();
    for w in times.windows(2) {
        *counts.entry(w[1] - w[0]).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, c)| c == best).map(|(d, _)| d)
}

impl MeasurementSet {
    pub fn from_readings(
        readings: &MeterReadings,
        net: &ReducedNetwork,
        schedule: &TopologySchedule,
        options: IngestOptions,
    ) -> Result<Self> {
        let mut loads = Vec::new();
        for id in &readings.load_ids {
            let idx = net
                .load_index(id)
                .ok_or_else(|| Error::Measurement(format!("load `{id}` is not in the feeder model")))?;
            loads.push((idx, id));
        }
        loads.sort();
        if loads.is_empty() {
            return Err(Error::Measurement("no load measurements".into()));
        }
        let row_of: HashMap<&str, usize> = readings
            .load_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        let vb = net.base_voltage_v;
        let sb = net.base_power_va / 1e3;
        let sign = if options.consumption_positive { -1.0 } else { 1.0 };
        let t_len = readings.times.len();

        let mut v = Vec::with_capacity(loads.len());
        let mut p = Vec::with_capacity(loads.len());
        let mut q = Vec::with_capacity(loads.len());
        for &(idx, id) in &loads {
            let r = row_of[id.as_str()];
            let load = &net.loads[idx];
            let (mut lv, mut lp, mut lq) = (vec![f64::NAN; t_len], vec![f64::NAN; t_len], vec![f64::NAN; t_len]);
            for t in 0..t_len {
                let vm = readings.v[r][t] / vb;
                let s = Complex64::new(sign * readings.p[r][t] / sb, sign * readings.q[r][t] / sb);
                if !(vm.is_finite() && s.re.is_finite() && s.im.is_finite()) {
                    continue;
                }
                let (vm, s) = match &load.reduction {
                    Some(red) => red
                        .apply(vm, s)
                        .map_err(|e| Error::Measurement(format!("load `{id}` at sample {t}: {e}")))?,
                    None => (vm, s),
                };
                lv[t] = vm;
                lp[t] = s.re;
                lq[t] = s.im;
            }
            v.push(lv);
            p.push(lp);
            q.push(lq);
        }

        let mut substation: [Vec<f64>; 6] = std::array::from_fn(|c| readings.substation[c].iter().map(|x| x / vb).collect());
        for (pair, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
            let (phases, pairs) = substation.split_at_mut(3);
            for (t, x) in pairs[pair].iter_mut().enumerate() {
                if !x.is_finite() {
                    *x = balanced_pair_magnitude(phases[i][t], phases[j][t]);
                }
            }
        }

        let complete: Vec<bool> = (0..t_len)
            .map(|t| {
                substation.iter().all(|s| s[t].is_finite())
                    && (0..loads.len()).all(|m| v[m][t].is_finite() && p[m][t].is_finite() && q[m][t].is_finite())
            })
            .collect();
        let step = interval_mode(&readings.times);
        let mut segments = Vec::new();
        let mut dropped = 0;
        let mut start: Option<usize> = None;
        let close = |start: usize, end: usize, segments: &mut Vec<Segment>, dropped: &mut usize| {
            if end - start >= 2 {
                segments.push(Segment {
                    range: start..end,
                    topology: schedule.topology_at(&readings.times[start]),
                });
            } else {
                *dropped += end - start;
            }
        };
        for (t, &ok) in complete.iter().enumerate() {
            if !ok {
                if let Some(s) = start.take() {
                    close(s, t, &mut segments, &mut dropped);
                }
                dropped += 1;
                continue;
            }
            if let Some(s) = start {
                let gap = Some(readings.times[t] - readings.times[t - 1]) != step;
                let switched = schedule.topology_at(&readings.times[t]) != schedule.topology_at(&readings.times[t - 1]);
                if gap || switched {
                    close(s, t, &mut segments, &mut dropped);
                    start = Some(t);
                }
            } else {
                start = Some(t);
            }
        }
        if let Some(s) = start {
            close(s, t_len, &mut segments, &mut dropped);
        }
        if segments.is_empty() {
            return Err(Error::Measurement(
                "no two consecutive complete samples; nothing to difference".into(),
            ));
        }

        Ok(Self {
            times: readings.times.clone(),
            classes: loads.iter().map(|&(i, _)| net.loads[i].class).collect(),
            load_ids: loads.iter().map(|(_, id)| (*id).clone()).collect(),
            loads: loads.into_iter().map(|(i, _)| i).collect(),
            v,
            p,
            q,
            substation,
            segments,
            dropped,
        })
    }

    pub fn m(&self) -> usize {
        self.loads.len()
    }

    /// Builds a set directly from per-unit series that are complete and form
    /// a single segment.
    #[allow(clippy::too_many_arguments)]
    pub fn from_series(
        times: Vec<DateTime<Utc>>,
        loads: Vec<usize>,
        load_ids: Vec<String>,
        classes: Vec<ConnectionClass>,
        v: Vec<Vec<f64>>,
        p: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        substation: [Vec<f64>; 6],
    ) -> Self {
        let t = times.len();
        Self {
            times,
            loads,
            load_ids,
            classes,
            v,
            p,
            q,
            substation,
            segments: vec![Segment { range: 0..t, topology: 0 }],
            dropped: 0,
        }
    }
}

/// First differences, concatenated over segments.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedSeries {
    pub load_ids: Vec<String>,
    pub classes: Vec<ConnectionClass>,
    /// `[load][t]`.
    pub v: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// `[channel][t]` in [`SUBSTATION_CHANNELS`] order.
    pub v_ref: [Vec<f64>; 6],
    /// Segments in differenced indexing.
    pub segments: Vec<Segment>,
}

impl DifferencedSeries {
    pub fn t(&self) -> usize {
        self.v.first().map_or(0, Vec::len)
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }

    /// Reference voltage change for load `m` on phase option `i`.
    #[inline]
    pub fn reference(&self, m: usize, i: usize, t: usize) -> f64 {
        match self.classes[m] {
            ConnectionClass::Two => self.v_ref[3 + i][t],
            _ => self.v_ref[i][t],
        }
    }

    /// Topology of each differenced sample.
    pub fn topology_of(&self, t: usize) -> usize {
        self.segments
            .iter()
            .find(|s| s.range.contains(&t))
            .map_or(0, |s| s.topology)
    }

    pub fn topologies(&self) -> usize {
        self.segments.iter().map(|s| s.topology + 1).max().unwrap_or(1)
    }

    /// Keeps only the listed loads.
    pub fn with_loads(&self, idx: &[usize]) -> Self {
        let pick = |s: &Vec<Vec<f64>>| idx.iter().map(|&i| s[i].clone()).collect();
        Self {
            load_ids: idx.iter().map(|&i| self.load_ids[i].clone()).collect(),
            classes: idx.iter().map(|&i| self.classes[i]).collect(),
            v: pick(&self.v),
            p: pick(&self.p),
            q: pick(&self.q),
            v_ref: self.v_ref.clone(),
            segments: self.segments.clone(),
        }
    }
}

pub fn difference_series(ms: &MeasurementSet) -> Result<DifferencedSeries> {
    for s in &ms.segments {
        if s.range.len() < 2 {
            return Err(Error::ShortSegment {
                start: s.range.start,
                len: s.range.len(),
            });
        }
    }
    let diff = |series: &[f64]| -> Vec<f64> {
        ms.segments
            .iter()
            .flat_map(|s| s.range.clone().skip(1).map(|t| series[t] - series[t - 1]))
            .collect()
    };
    let mut segments = Vec::with_capacity(ms.segments.len());
    let mut offset = 0;
    for s in &ms.segments {
        let len = s.range.len() - 1;
        segments.push(Segment {
            range: offset..offset + len,
            topology: s.topology,
        });
        offset += len;
    }
    Ok(DifferencedSeries {
        load_ids: ms.load_ids.clone(),
        classes: ms.classes.clone(),
        v: ms.v.iter().map(|s| diff(s)).collect(),
        p: ms.p.iter().map(|s| diff(s)).collect(),
        q: ms.q.iter().map(|s| diff(s)).collect(),
        v_ref: std::array::from_fn(|c| diff(&ms.substation[c])),
        segments,
    })
}
