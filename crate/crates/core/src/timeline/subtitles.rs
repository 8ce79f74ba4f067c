use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Interval;
use crate::{Error, Result};

/// One subtitle line covering frames `[start_frame, end_frame)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubtitleEntry {
    pub start_frame: usize,
    pub end_frame: usize,
    pub text: String,
}

/// Subtitles ordered by start frame.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleTrack {
    entries: Vec<SubtitleEntry>,
}

impl SubtitleTrack {
    /// Sorts by `(start, end, text)` so the order does not depend on input order.
    pub fn new(mut entries: Vec<SubtitleEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.start_frame >= e.end_frame) {
            return Err(Error::invalid(format!(
                "subtitle [{}, {}) is empty",
                e.start_frame, e.end_frame
            )));
        }
        entries.sort();
        Ok(SubtitleTrack { entries })
    }

    pub fn entries(&self) -> &[SubtitleEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSON Lines, one `{start_frame, end_frame, text}` object per line.
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact {
                    path: path.to_path_buf(),
                    hint: "subtitle file not found".into(),
                }
            } else {
                Error::io(path, e)
            }
        })?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
            .collect::<Result<Vec<SubtitleEntry>>>()?;
        Self::new(entries)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|err| Error::json(path, err))?;
            writeln!(w, "{line}").map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per unit, the space-joined text of every subtitle sharing at least one frame with it.
///
/// Subtitles running past `frame_count` are clamped; ones starting after it are dropped.
pub fn align_subtitles(subs: &SubtitleTrack, bounds: &[Interval], frame_count: usize) -> Result<Vec<String>> {
    super::validate_tiling(bounds, frame_count)?;
    let mut clamped = Vec::with_capacity(subs.entries.len());
    for e in &subs.entries {
        if e.end_frame > frame_count {
            log::warn!(
                "subtitle [{}, {}) extends past frame {frame_count}; clamping",
                e.start_frame,
                e.end_frame
            );
        }
        let span = Interval::new(e.start_frame, e.end_frame.min(frame_count));
        if !span.is_empty() {
            clamped.push((span, e.text.as_str()));
        }
    }
    Ok(bounds
        .iter()
        .map(|unit| {
            clamped
                .iter()
                .filter(|(span, _)| span.overlaps(unit))
                .map(|(_, text)| *text)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect())
}

fn parse_timestamp(s: &str) -> Option<u64> {
    let (hms, millis) = s.trim().split_once([',', '.'])?;
    let mut parts = hms.split(':');
    let h: u64 = parts.next()?.trim().parse().ok()?;
    let m: u64 = parts.next()?.parse().ok()?;
    let sec: u64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || m >= 60 || sec >= 60 {
        return None;
    }
    let ms: u64 = millis.trim().parse().ok()?;
    Some(((h * 60 + m) * 60 + sec) * 1000 + ms)
}

fn millis_to_frame(ms: u64, fps: f64) -> usize {
    (ms as f64 * fps / 1000.0 + 0.5).floor() as usize
}

/// Imports the common SRT subset: numbered blocks with an
/// `HH:MM:SS,mmm --> HH:MM:SS,mmm` line and one or more text lines.
/// Times convert to frames with round-half-up; multi-line text is joined
/// with spaces. Entries that round to zero length are widened to one frame.
pub fn parse_srt(input: &str, fps: f64) -> Result<SubtitleTrack> {
    if fps.is_nan() || fps <= 0.0 {
        return Err(Error::invalid("fps must be positive"));
    }
    let normalized = input.trim_start_matches('\u{feff}').replace("\r\n", "\n");
    let mut entries = Vec::new();
    for block in normalized.split("\n\n") {
        let mut lines = block.lines().map(str::trim_end).filter(|l| !l.trim().is_empty());
        let Some(mut first) = lines.next() else { continue };
        if !first.contains("-->") {
            first = lines
                .next()
                .ok_or_else(|| Error::invalid(format!("SRT block '{block}' has no timing line")))?;
        }
        let (a, b) = first
            .split_once("-->")
            .ok_or_else(|| Error::invalid(format!("bad SRT timing line '{first}'")))?;
        // Position tags such as "X1:..." may follow the end time.
        let b = b.split_whitespace().next().unwrap_or("");
        let (start, end) = match (parse_timestamp(a), parse_timestamp(b)) {
            (Some(s), Some(e)) if e >= s => (s, e),
            _ => return Err(Error::invalid(format!("bad SRT timing line '{first}'"))),
        };
        let text = lines.map(str::trim).collect::<Vec<_>>().join(" ");
        let start_frame = millis_to_frame(start, fps);
        let end_frame = millis_to_frame(end, fps).max(start_frame + 1);
        entries.push(SubtitleEntry {
            start_frame,
            end_frame,
            text,
        });
    }
    SubtitleTrack::new(entries)
}
