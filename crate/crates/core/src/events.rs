// SPDX-License-Identifier: Apache-2.0

//! Event ingestion: syslog event typing, alphabet construction, series
//! encoding and sliding-window extraction.
//!
//! Windows carry 1-based ids and start positions so that report rows can be
//! traced straight back to line numbers of the (filtered) input stream.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};

/// Event type emitted for a syslog line whose header cannot be parsed.
pub const UNPARSED: &str = "<unparsed>";
/// Event type emitted for a description that has no qualifying word.
pub const EMPTY: &str = "<empty>";

const MAX_TYPE_WORDS: usize = 3;
const MIN_WORD_LEN: usize = 3;

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// The finite set of observable event types, coded `0..len()` in
/// first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventAlphabet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl EventAlphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an alphabet from symbols in order, ignoring repeats.
    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut alphabet = Self::new();
        for s in symbols {
            alphabet.intern(s.as_ref());
        }
        alphabet
    }

    /// Returns the code for `symbol`, assigning the next free code if unseen.
    pub fn intern(&mut self, symbol: &str) -> usize {
        if let Some(&code) = self.index.get(symbol) {
            return code;
        }
        let code = self.symbols.len();
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), code);
        code
    }

    pub fn encode(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn decode(&self, code: usize) -> Option<&str> {
        self.symbols.get(code).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// An encoded event stream `T` of length `N ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSeries {
    codes: Vec<usize>,
    alphabet: EventAlphabet,
}

impl EventSeries {
    pub fn new(codes: Vec<usize>, alphabet: EventAlphabet) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(&code) = codes.iter().find(|&&c| c >= alphabet.len()) {
            return Err(Error::CodeOutOfRange {
                code,
                size: alphabet.len(),
            });
        }
        Ok(Self { codes, alphabet })
    }

    /// Encodes a sequence of event-type strings, building the alphabet as it goes.
    pub fn from_events<I, S>(events: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut alphabet = EventAlphabet::new();
        let codes = events
            .into_iter()
            .map(|e| alphabet.intern(e.as_ref()))
            .collect();
        Self::new(codes, alphabet)
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn alphabet(&self) -> &EventAlphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// One length-`n` slice of the series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Window {
    /// 1-based window id `k`.
    pub index: usize,
    /// 1-based position in the series of the first event.
    pub start: usize,
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One event-type string per line.
    Plain,
    /// RFC 3164 style syslog lines, typed by their first three words.
    Syslog,
}

/// The parts of a syslog line that event typing looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyslogRecord<'a> {
    pub process: &'a str,
    pub pid: Option<&'a str>,
    pub description: &'a str,
}

/// Splits a syslog line into process tag and description.
///
/// Accepts the classic `Mmm dd hh:mm:ss host tag[pid]: message` header as
/// well as a single ISO-8601 timestamp in place of the first three fields.
pub fn parse_syslog_line(line: &str) -> Option<SyslogRecord<'_>> {
    let mut rest = line.trim_start();
    let (first, after) = split_token(rest)?;
    if MONTHS.contains(&first) {
        let (day, after) = split_token(after)?;
        if day.is_empty() || !day.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let (time, after) = split_token(after)?;
        if !time.contains(':') || !time.bytes().all(|b| b.is_ascii_digit() || b == b':') {
            return None;
        }
        rest = after;
    } else if first.starts_with(|c: char| c.is_ascii_digit()) && first.contains('T') {
        rest = after;
    } else {
        return None;
    }
    let (_host, after) = split_token(rest)?;
    let tag_and_msg = after.trim_start();

    let colon = tag_and_msg.find(':')?;
    let tag = &tag_and_msg[..colon];
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return None;
    }
    let description = tag_and_msg[colon + 1..]
        .strip_prefix(' ')
        .unwrap_or(&tag_and_msg[colon + 1..]);

    let (process, pid) = match tag.find('[') {
        Some(open) => {
            let pid = tag[open + 1..].strip_suffix(']')?;
            (&tag[..open], Some(pid))
        }
        None => (tag, None),
    };
    if process.is_empty() {
        return None;
    }
    Some(SyslogRecord {
        process,
        pid,
        description,
    })
}

fn split_token(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    match s.find(char::is_whitespace) {
        Some(end) => Some((&s[..end], &s[end..])),
        None => Some((s, "")),
    }
}

/// Event type of a description: the first three whitespace-separated words
/// that are at least three ASCII letters long, joined by single spaces.
pub fn event_type_of_description(description: &str) -> String {
    let words: Vec<&str> = description
        .split_whitespace()
        .filter(|w| w.len() >= MIN_WORD_LEN && w.bytes().all(|b| b.is_ascii_alphabetic()))
        .take(MAX_TYPE_WORDS)
        .collect();
    if words.is_empty() {
        EMPTY.to_owned()
    } else {
        words.join(" ")
    }
}

/// Maps a syslog line to its event type.
pub fn tokenize_syslog_line(line: &str) -> String {
    match parse_syslog_line(line) {
        Some(record) => event_type_of_description(record.description),
        None => UNPARSED.to_owned(),
    }
}

/// Reads an event stream and encodes it.
///
/// In syslog mode an `app_filter` keeps only lines whose process name (the tag
/// without any `[pid]` suffix) equals the filter; unparseable lines never match.
pub fn ingest<R: BufRead>(
    reader: R,
    format: InputFormat,
    app_filter: Option<&str>,
) -> Result<EventSeries> {
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        match format {
            InputFormat::Plain => events.push(line.to_owned()),
            InputFormat::Syslog => {
                let record = parse_syslog_line(line);
                if let Some(app) = app_filter {
                    if record.map(|r| r.process) != Some(app) {
                        continue;
                    }
                }
                events.push(match record {
                    Some(r) => event_type_of_description(r.description),
                    None => UNPARSED.to_owned(),
                });
            }
        }
    }
    EventSeries::from_events(events)
}

/// Number of complete windows, `⌊(N + shift − n) / shift⌋`.
pub fn window_count(series_len: usize, window: usize, shift: usize) -> usize {
    if window == 0 || shift == 0 || window > series_len {
        return 0;
    }
    (series_len + shift - window) / shift
}

/// Default shift: half the window size, at least 1.
pub fn default_shift(window: usize) -> usize {
    (window / 2).max(1)
}

/// Slides a window of length `window` in steps of `shift`, dropping any
/// trailing incomplete window.
pub fn extract_windows(series: &EventSeries, window: usize, shift: usize) -> Result<Vec<Window>> {
    if window == 0 {
        return Err(Error::InvalidParameter("window size must be at least 1".into()));
    }
    if shift == 0 {
        return Err(Error::InvalidParameter("shift must be at least 1".into()));
    }
    if window > series.len() {
        return Err(Error::WindowTooLong {
            window,
            series: series.len(),
        });
    }
    let count = window_count(series.len(), window, shift);
    Ok((0..count)
        .map(|k| {
            let offset = k * shift;
            Window {
                index: k + 1,
                start: offset + 1,
                codes: series.codes()[offset..offset + window].to_vec(),
            }
        })
        .collect())
}

/// Wraps pre-cut sequences as windows laid end to end.
pub fn windows_from_sequences(sequences: &[Vec<usize>]) -> Vec<Window> {
    let mut start = 1;
    sequences
        .iter()
        .enumerate()
        .map(|(k, codes)| {
            let w = Window {
                index: k + 1,
                start,
                codes: codes.clone(),
            };
            start += codes.len();
            w
        })
        .collect()
}
