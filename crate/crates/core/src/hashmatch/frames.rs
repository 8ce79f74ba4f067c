//! Frame directories (`frame_%08d.pgm` / `.png`) and label-run files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GrayFrame;
use crate::timeline::LabelTrack;
use crate::{Error, Result};

/// File name of frame `index` in a frame directory, without extension.
pub fn frame_stem(index: usize) -> String {
    format!("frame_{index:08}")
}

/// Frame files of a directory in lexicographic file-name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                path: dir.to_path_buf(),
                hint: "frame directory not found".into(),
            }
        } else {
            Error::io(dir, e)
        }
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if name.starts_with("frame_") && matches!(ext.to_ascii_lowercase().as_str(), "pgm" | "png") {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Reads a binary PGM (P5, maxval <= 255) or a PNG of any 8-bit color type.
pub fn read_frame(path: &Path) -> Result<GrayFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map_err(|m| Error::invalid(format!("{}: {m}", path.display())))
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes).map_err(|m| Error::invalid(format!("{}: {m}", path.display())))
    } else {
        Err(Error::invalid(format!(
            "{}: neither a P5 PGM nor a PNG",
            path.display()
        )))
    }
}

pub fn read_frames(dir: &Path) -> Result<Vec<GrayFrame>> {
    list_frames(dir)?.iter().map(|p| read_frame(p)).collect()
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayFrame, String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("bad header field")?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let raster = bytes.get(pos..pos + w * h).ok_or("truncated raster")?;
    GrayFrame::new(w, h, raster.to_vec()).map_err(|e| e.to_string())
}

fn decode_png(bytes: &[u8]) -> std::result::Result<GrayFrame, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    let stride = info.line_size;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &data[y * stride..y * stride + w * channels];
        for px in row.chunks_exact(channels) {
            pixels.push(match channels {
                1 | 2 => px[0],
                _ => super::luma(px[0], px[1], px[2]),
            });
        }
    }
    GrayFrame::new(w, h, pixels).map_err(|e| e.to_string())
}

pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    fs::write(path, encode_pgm(frame)).map_err(|e| Error::io(path, e))
}

/// A maximal run of equal frame labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRun {
    pub start_frame: usize,
    pub end_frame_exclusive: usize,
    pub label: u8,
}

/// Run-length encodes a frame label track; runs cover every frame.
pub fn label_runs(track: &LabelTrack) -> Vec<LabelRun> {
    let labels = track.labels();
    let mut runs = Vec::new();
    let mut start = 0;
    for j in 1..=labels.len() {
        if j == labels.len() || labels[j] != labels[start] {
            runs.push(LabelRun {
                start_frame: start,
                end_frame_exclusive: j,
                label: labels[start],
            });
            start = j;
        }
    }
    runs
}

pub fn write_label_runs(path: &Path, track: &LabelTrack) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for run in label_runs(track) {
        let line = serde_json::to_string(&run).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a label-run file back into a frame track. Runs must be contiguous from frame 0.
pub fn read_label_runs(path: &Path) -> Result<LabelTrack> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: "frame labels not found; run the `labels` stage first".into(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    let mut labels = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let run: LabelRun = serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
        if run.start_frame != labels.len() || run.end_frame_exclusive <= run.start_frame || run.label > 1 {
            return Err(Error::invalid(format!(
                "{}: run {:?} is not contiguous or not binary",
                path.display(),
                run
            )));
        }
        labels.resize(run.end_frame_exclusive, run.label);
    }
    LabelTrack::frames(labels)
}
