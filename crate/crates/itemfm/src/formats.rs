//! Text and binary file formats for every pipeline artifact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use clap::ValueEnum;
use itemfm_core::cooc::CoocMatrix;
use itemfm_core::embed::EmbeddingSet;
use itemfm_core::eval::EvalReport;
use itemfm_core::fm::FmParams;
use itemfm_core::ingest::{EventKind, PositiveInteraction, RawEvent};
use itemfm_core::Vocab;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payload encoding of parameter and embedding snapshots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    #[default]
    #[value(name = "binary-le")]
    #[serde(rename = "binary-le", alias = "binary")]
    BinaryLe,
    Text,
}

impl Encoding {
    fn tag(self) -> &'static str {
        match self {
            Encoding::BinaryLe => "binary-le",
            Encoding::Text => "text",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "binary-le" => Some(Encoding::BinaryLe),
            "text" => Some(Encoding::Text),
            _ => None,
        }
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Writes through `f` into a buffered file and flushes it.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(path: &Path, reader: impl BufRead) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((n + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn check_id(id: &str) -> std::io::Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("id {id:?} cannot be written")));
    }
    Ok(())
}

// ---------------------------------------------------------------- events

#[derive(Debug, Default)]
pub struct EventsFile {
    pub events: Vec<RawEvent>,
    /// Lines with the wrong field count or unparseable fields.
    pub unparseable: usize,
}

fn parse_event(line: &str) -> Option<RawEvent> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 6 {
        return None;
    }
    Some(RawEvent {
        user_id: f[0].to_string(),
        track_id: f[1].to_string(),
        kind: f[2].parse::<EventKind>().ok()?,
        timestamp: f[3].parse().ok()?,
        listened_duration: f[4].parse().ok()?,
        track_duration: f[5].parse().ok()?,
    })
}

/// Tab-separated events: user, track, kind, timestamp, listened, duration.
/// A first line whose timestamp field is not an integer is a header.
pub fn read_events(path: &Path) -> Result<EventsFile> {
    let mut out = EventsFile::default();
    for (k, (_, line)) in data_lines(path, open(path)?)?.into_iter().enumerate() {
        if k == 0 && is_header(&line, 3) {
            continue;
        }
        match parse_event(&line) {
            Some(e) => out.events.push(e),
            None => out.unparseable += 1,
        }
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[RawEvent]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "user_id\ttrack_id\tevent_kind\ttimestamp\tlistened_duration\ttrack_duration")?;
        for e in events {
            check_id(&e.user_id)?;
            check_id(&e.track_id)?;
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                e.user_id, e.track_id, e.kind, e.timestamp, e.listened_duration, e.track_duration
            )?;
        }
        Ok(())
    })
}

fn is_header(line: &str, ts_field: usize) -> bool {
    line.split('\t').nth(ts_field).is_some_and(|f| f.parse::<i64>().is_err())
}

// ---------------------------------------------------------- interactions

/// Tab-separated interactions: user, track, first_timestamp. An optional
/// header line is skipped. The result is sorted by (user, timestamp, track).
pub fn read_interactions(path: &Path) -> Result<Vec<PositiveInteraction>> {
    let mut out = Vec::new();
    for (k, (n, line)) in data_lines(path, open(path)?)?.into_iter().enumerate() {
        if k == 0 && is_header(&line, 2) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let ts = match f.as_slice() {
            [_, _, ts] => ts.parse::<i64>().map_err(|_| Error::format(path, n, "bad timestamp"))?,
            _ => return Err(Error::format(path, n, "expected user, track, timestamp")),
        };
        out.push(PositiveInteraction { user_id: f[0].to_string(), track_id: f[1].to_string(), first_timestamp: ts });
    }
    itemfm_core::ingest::sort_by_user_time(&mut out);
    if let Some(w) = out.windows(2).find(|w| w[0].user_id == w[1].user_id && w[0].track_id == w[1].track_id) {
        return Err(Error::Other(format!(
            "{}: duplicate interaction ({}, {})",
            path.display(),
            w[0].user_id,
            w[0].track_id
        )));
    }
    Ok(out)
}

pub fn write_interactions(path: &Path, interactions: &[PositiveInteraction]) -> Result<()> {
    write_file(path, |w| {
        for it in interactions {
            check_id(&it.user_id)?;
            check_id(&it.track_id)?;
            writeln!(w, "{}\t{}\t{}", it.user_id, it.track_id, it.first_timestamp)?;
        }
        Ok(())
    })
}

// --------------------------------------------------------- side features

/// `track_id<TAB>feature_id[<TAB>feature_id ...]` lines, flattened to pairs.
pub fn read_side_features(path: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in data_lines(path, open(path)?)? {
        let mut f = line.split('\t');
        let track = f.next().unwrap_or_default();
        let features: Vec<&str> = f.filter(|s| !s.is_empty()).collect();
        if track.is_empty() || features.is_empty() {
            return Err(Error::format(path, n, "expected a track id and at least one feature id"));
        }
        pairs.extend(features.into_iter().map(|x| (track.to_string(), x.to_string())));
    }
    Ok(pairs)
}

pub fn write_side_features(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    write_file(path, |w| {
        for (t, f) in pairs {
            check_id(t)?;
            check_id(f)?;
            writeln!(w, "{t}\t{f}")?;
        }
        Ok(())
    })
}

// ------------------------------------------------------------------ cooc

/// `#cooc v1 <tracks> <entries>`, then one `index track_id occurrences`
/// line per track, then one `i j weight` line per entry with `i < j`.
pub fn write_cooc(path: &Path, m: &CoocMatrix) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "#cooc v1 {} {}", m.num_tracks(), m.num_entries())?;
        for (i, id) in m.vocab().ids().iter().enumerate() {
            check_id(id)?;
            writeln!(w, "{i}\t{id}\t{}", m.occurrences()[i])?;
        }
        for (i, j, x) in m.entries() {
            writeln!(w, "{i}\t{j}\t{x}")?;
        }
        Ok(())
    })
}

fn header_fields<'a>(path: &Path, line: &'a str, magic: &str, count: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != count + 2 || f[0] != magic || f[1] != "v1" {
        return Err(Error::format(path, 1, format!("expected `{magic} v1` header with {count} fields")));
    }
    Ok(f[2..].to_vec())
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::format(path, line, format!("bad {what} {s:?}")))
}

pub fn read_cooc(path: &Path) -> Result<CoocMatrix> {
    let mut lines = open(path)?.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((_, Err(e))) => Err(Error::io(path, e)),
            None => Err(Error::format(path, 0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (_, header) = next("header")?;
    let h = header_fields(path, &header, "#cooc", 2)?;
    let tracks: usize = parse_num(path, 1, h[0], "track count")?;
    let entries: usize = parse_num(path, 1, h[1], "entry count")?;
    let mut vocab = Vocab::new();
    let mut occurrences = Vec::with_capacity(tracks);
    for i in 0..tracks {
        let (n, line) = next("vocabulary line")?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || parse_num::<usize>(path, n, f[0], "index")? != i {
            return Err(Error::format(path, n, format!("expected vocabulary line for index {i}")));
        }
        if vocab.intern(f[1]) as usize != i {
            return Err(Error::format(path, n, format!("duplicate track {:?}", f[1])));
        }
        occurrences.push(parse_num(path, n, f[2], "occurrence count")?);
    }
    let mut list = Vec::with_capacity(entries);
    for _ in 0..entries {
        let (n, line) = next("entry line")?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::format(path, n, "expected i, j, weight"));
        }
        list.push((parse_num(path, n, f[0], "index")?, parse_num(path, n, f[1], "index")?, parse_num(path, n, f[2], "weight")?));
    }
    Ok(CoocMatrix::from_parts(vocab, occurrences, list)?)
}

// ------------------------------------------------------------- snapshots

fn read_header_line(path: &Path, r: &mut impl BufRead, line_no: usize) -> Result<String> {
    let mut s = String::new();
    let n = r.read_line(&mut s).map_err(|e| Error::io(path, e))?;
    if n == 0 {
        return Err(Error::format(path, line_no, "unexpected end of file in header"));
    }
    Ok(s.trim_end().to_string())
}

fn read_encoding(path: &Path, r: &mut impl BufRead) -> Result<Encoding> {
    let line = read_header_line(path, r, 2)?;
    line.strip_prefix("#encoding ")
        .and_then(Encoding::from_tag)
        .ok_or_else(|| Error::format(path, 2, "expected `#encoding binary-le` or `#encoding text`"))
}

fn put_f64s(w: &mut impl Write, xs: &[f64], enc: Encoding) -> std::io::Result<()> {
    match enc {
        Encoding::BinaryLe => {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Encoding::Text => {
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    w.write_all(b"\t")?;
                }
                write!(w, "{x}")?;
            }
        }
    }
    Ok(())
}

fn get_f64s(path: &Path, r: &mut impl Read, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for x in out {
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        *x = f64::from_le_bytes(buf);
    }
    Ok(())
}

fn expect_eof(path: &Path, r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe).map_err(|e| Error::io(path, e))? {
        0 => Ok(()),
        _ => Err(Error::Other(format!("{}: trailing data after the last record", path.display()))),
    }
}

fn parse_row(path: &Path, n: usize, fields: &[&str], expect: usize) -> Result<Vec<f64>> {
    if fields.len() != expect {
        return Err(Error::format(path, n, format!("expected {expect} values, found {}", fields.len())));
    }
    fields.iter().map(|s| parse_num(path, n, s, "value")).collect()
}

/// `#fm v1 n k C F`, an `#encoding` line, then per slot its bias followed by
/// its `k` vector components.
pub fn write_fm_params(path: &Path, p: &FmParams, catalog: usize, side: usize, enc: Encoding) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "#fm v1 {} {} {catalog} {side}", p.num_slots(), p.dim())?;
        writeln!(w, "#encoding {}", enc.tag())?;
        for s in 0..p.num_slots() {
            put_f64s(w, &[p.bias(s)], enc)?;
            if enc == Encoding::Text {
                w.write_all(b"\t")?;
            }
            put_f64s(w, p.vector(s), enc)?;
            if enc == Encoding::Text {
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    })
}

#[derive(Debug)]
pub struct FmFile {
    pub params: FmParams,
    pub catalog_size: usize,
    pub side_features: usize,
}

pub fn read_fm_params(path: &Path) -> Result<FmFile> {
    let mut r = open(path)?;
    let header = read_header_line(path, &mut r, 1)?;
    let h = header_fields(path, &header, "#fm", 4)?;
    let n: usize = parse_num(path, 1, h[0], "slot count")?;
    let k: usize = parse_num(path, 1, h[1], "dimension")?;
    let catalog_size: usize = parse_num(path, 1, h[2], "catalog size")?;
    let side_features: usize = parse_num(path, 1, h[3], "side feature count")?;
    if n != 2 * catalog_size + side_features {
        return Err(Error::format(path, 1, "slot count is not 2C + F"));
    }
    let enc = read_encoding(path, &mut r)?;
    let mut w = vec![0.0; n];
    let mut v = vec![0.0; n * k];
    match enc {
        Encoding::BinaryLe => {
            for s in 0..n {
                get_f64s(path, &mut r, &mut w[s..s + 1])?;
                get_f64s(path, &mut r, &mut v[s * k..(s + 1) * k])?;
            }
            expect_eof(path, &mut r)?;
        }
        Encoding::Text => {
            let rows = data_lines(path, r)?;
            if rows.len() != n {
                return Err(Error::format(path, 0, format!("expected {n} slot lines, found {}", rows.len())));
            }
            for (s, (ln, line)) in rows.iter().enumerate() {
                let row = parse_row(path, ln + 2, &line.split('\t').collect::<Vec<_>>(), k + 1)?;
                w[s] = row[0];
                v[s * k..(s + 1) * k].copy_from_slice(&row[1..]);
            }
        }
    }
    Ok(FmFile { params: FmParams::from_raw(k, w, v)?, catalog_size, side_features })
}

/// `#emb v1 <count> <dim>`, an `#encoding` line, then per track its id and
/// vector. Binary records are a little-endian u32 id length, the id bytes
/// and `dim` f64 values.
pub fn write_embeddings(path: &Path, emb: &EmbeddingSet, enc: Encoding) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "#emb v1 {} {}", emb.len(), emb.dim())?;
        writeln!(w, "#encoding {}", enc.tag())?;
        for (t, id) in emb.vocab().ids().iter().enumerate() {
            check_id(id)?;
            match enc {
                Encoding::BinaryLe => {
                    w.write_all(&(id.len() as u32).to_le_bytes())?;
                    w.write_all(id.as_bytes())?;
                    put_f64s(w, emb.vector(t as u32), enc)?;
                }
                Encoding::Text => {
                    write!(w, "{id}\t")?;
                    put_f64s(w, emb.vector(t as u32), enc)?;
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    })
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let mut r = open(path)?;
    let header = read_header_line(path, &mut r, 1)?;
    let h = header_fields(path, &header, "#emb", 2)?;
    let count: usize = parse_num(path, 1, h[0], "count")?;
    let dim: usize = parse_num(path, 1, h[1], "dimension")?;
    let enc = read_encoding(path, &mut r)?;
    let mut emb = EmbeddingSet::new(dim);
    let mut v = vec![0.0; dim];
    match enc {
        Encoding::BinaryLe => {
            for _ in 0..count {
                let mut len = [0u8; 4];
                r.read_exact(&mut len).map_err(|e| Error::io(path, e))?;
                let mut id = vec![0u8; u32::from_le_bytes(len) as usize];
                r.read_exact(&mut id).map_err(|e| Error::io(path, e))?;
                let id = String::from_utf8(id).map_err(|_| Error::Other(format!("{}: track id is not UTF-8", path.display())))?;
                get_f64s(path, &mut r, &mut v)?;
                emb.push(&id, &v)?;
            }
            expect_eof(path, &mut r)?;
        }
        Encoding::Text => {
            let rows = data_lines(path, r)?;
            if rows.len() != count {
                return Err(Error::format(path, 0, format!("expected {count} tracks, found {}", rows.len())));
            }
            for (ln, line) in rows {
                let f: Vec<&str> = line.split('\t').collect();
                let row = parse_row(path, ln + 2, &f[1..], dim)?;
                emb.push(f[0], &row)?;
            }
        }
    }
    Ok(emb)
}

// ---------------------------------------------------------------- report

/// `bin count mpr` rows, one per bin edge, then an `avg` row with the number
/// of evaluated tracks. Empty bins show `NA`.
pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_file(path, |w| write_report_to(w, report))
}

pub fn write_report_to(w: &mut impl Write, report: &EvalReport) -> std::io::Result<()> {
    let mpr = |m: Option<f64>| m.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    writeln!(w, "bin\tcount\tmpr")?;
    for b in &report.bins {
        writeln!(w, "{}\t{}\t{}", b.edge, b.tracks, mpr(b.mpr))?;
    }
    writeln!(w, "avg\t{}\t{}", report.evaluated_tracks, mpr(report.average_mpr))
}
