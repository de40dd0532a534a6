use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Corpus, GridTrace, TracePoint};
use crate::geogrid::{CellId, GridSpec, LatLon};
use crate::{par, Error, Result};

const CORPUS_TAG: &str = "# trajsynth-corpus ";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    format_version: u32,
    grid_spec: GridSpec,
    sampling_period: i64,
}

/// What ingestion threw away.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub rows: usize,
    pub out_of_bounds: usize,
    pub duplicate_timestamps: usize,
    pub dropped_users: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Row {
    user_id: String,
    timestamp: i64,
    lat: f64,
    lon: f64,
}

/// Reads `user_id,timestamp,lat,lon` rows and regularises them onto the grid.
///
/// Per user: rows are sorted by time, duplicate timestamps keep the last row,
/// points outside the grid are dropped, and the survivors are resampled on a
/// `sampling_period` grid anchored at the first timestamp by carrying the
/// previous observation forward. Users left with fewer than two points are
/// dropped.
pub fn ingest_reader<R: Read>(
    mut reader: R,
    spec: &GridSpec,
    sampling_period: i64,
) -> Result<(Corpus, IngestStats)> {
    if sampling_period <= 0 {
        return Err(Error::Domain(format!(
            "sampling period {sampling_period} must be positive"
        )));
    }
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if let Some(header) = parse_header(&text)? {
        spec.ensure_same(&header.grid_spec)?;
    }

    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = csv.headers().map_err(|e| csv_error(&e))?.clone();
    let expected = ["user_id", "timestamp", "lat", "lon"];
    if headers.len() < 4 || headers.iter().take(4).ne(expected) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header user_id,timestamp,lat,lon, found {headers:?}"),
        });
    }

    let mut stats = IngestStats::default();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(i64, CellId)>> = HashMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        stats.rows += 1;
        if row.timestamp < 0 {
            return Err(Error::Parse {
                line,
                msg: format!("negative timestamp {}", row.timestamp),
            });
        }
        let cell = match spec.encode(LatLon::new(row.lat, row.lon)) {
            Ok(c) => c,
            Err(_) => {
                stats.out_of_bounds += 1;
                continue;
            }
        };
        groups
            .entry(row.user_id.clone())
            .or_insert_with(|| {
                order.push(row.user_id.clone());
                Vec::new()
            })
            .push((row.timestamp, cell));
    }
    if stats.out_of_bounds > 0 {
        warn!("dropped {} points outside {}", stats.out_of_bounds, spec.describe());
    }

    let grouped: Vec<(String, Vec<(i64, CellId)>)> = order
        .into_iter()
        .map(|u| {
            let pts = groups.remove(&u).unwrap_or_default();
            (u, pts)
        })
        .collect();
    let regularised = par::map_slice(&grouped, |(user, pts)| regularise(user, pts, sampling_period));

    let mut traces = Vec::with_capacity(regularised.len());
    for ((user, _), (trace, dups)) in grouped.iter().zip(regularised) {
        stats.duplicate_timestamps += dups;
        match trace {
            Some(t) => traces.push(t),
            None => {
                warn!("dropping user {user}: fewer than 2 usable points");
                stats.dropped_users.push(user.clone());
            }
        }
    }
    Ok((Corpus::new(*spec, sampling_period, traces)?, stats))
}

fn regularise(user: &str, pts: &[(i64, CellId)], period: i64) -> (Option<GridTrace>, usize) {
    let mut sorted = pts.to_vec();
    // Stable sort keeps input order among equal timestamps, so "last wins" below.
    sorted.sort_by_key(|p| p.0);
    let mut dedup: Vec<(i64, CellId)> = Vec::with_capacity(sorted.len());
    let mut dups = 0;
    for p in sorted {
        match dedup.last_mut() {
            Some(last) if last.0 == p.0 => {
                *last = p;
                dups += 1;
            }
            _ => dedup.push(p),
        }
    }
    if dedup.len() < 2 {
        return (None, dups);
    }
    let start = dedup[0].0;
    let end = dedup[dedup.len() - 1].0;
    let steps = ((end - start) / period) as usize + 1;
    let mut points = Vec::with_capacity(steps);
    let mut j = 0;
    for k in 0..steps {
        let t = start + k as i64 * period;
        while j + 1 < dedup.len() && dedup[j + 1].0 <= t {
            j += 1;
        }
        points.push(TracePoint {
            cell: dedup[j].1,
            timestamp: t,
        });
    }
    if points.len() < 2 {
        return (None, dups);
    }
    (GridTrace::new(user, points).ok(), dups)
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

fn parse_header(text: &str) -> Result<Option<CorpusHeader>> {
    let Some(first) = text.lines().next() else {
        return Ok(None);
    };
    let Some(json) = first.strip_prefix(CORPUS_TAG) else {
        return Ok(None);
    };
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("corpus header: {e}"),
    })?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "corpus header lacks format_version".into(),
        })? as u32;
    if version != CORPUS_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CORPUS_FORMAT_VERSION,
            found: version,
        });
    }
    let header = serde_json::from_value(value).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("corpus header: {e}"),
    })?;
    Ok(Some(header))
}

pub fn ingest_path(path: &Path, spec: &GridSpec, sampling_period: i64) -> Result<(Corpus, IngestStats)> {
    let file = open(path)?;
    ingest_reader(file, spec, sampling_period)
}

/// Loads a corpus file written by [`export_corpus`], taking grid and period from its header.
///
/// With `expected` set, a header on a different grid is an incompatibility error.
pub fn load_corpus(path: &Path, expected: Option<&GridSpec>) -> Result<Corpus> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    let header = parse_header(&text)?.ok_or_else(|| {
        Error::Format(format!(
            "{} has no corpus header; ingest raw CSV first",
            path.display()
        ))
    })?;
    if let Some(spec) = expected {
        spec.ensure_same(&header.grid_spec)?;
    }
    let (corpus, stats) = ingest_reader(text.as_bytes(), &header.grid_spec, header.sampling_period)?;
    if !stats.dropped_users.is_empty() || stats.out_of_bounds > 0 {
        return Err(Error::Format(format!(
            "{} is not a regular corpus file",
            path.display()
        )));
    }
    Ok(corpus)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Writes the corpus as ingestion-schema CSV preceded by a one-line header comment.
/// Cells are written as their center coordinates.
pub fn write_corpus<W: Write>(corpus: &Corpus, writer: W) -> Result<()> {
    let mut writer = std::io::BufWriter::new(writer);
    let header = CorpusHeader {
        format_version: CORPUS_FORMAT_VERSION,
        grid_spec: *corpus.spec(),
        sampling_period: corpus.sampling_period(),
    };
    writeln!(writer, "{CORPUS_TAG}{}", serde_json::to_string(&header)?)?;
    writeln!(writer, "user_id,timestamp,lat,lon")?;
    for trace in corpus.traces() {
        for p in trace.points() {
            let ll = corpus.spec().decode(p.cell)?;
            writeln!(writer, "{},{},{},{}", trace.user_id(), p.timestamp, ll.lat, ll.lon)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn export_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_corpus(corpus, fs::File::create(path)?)
}
