use std::fmt::Write;

/// Text rendering of a score track against gold labels, `width` columns wide.
///
/// Row one is a 4-level score sparkline (`space . : #`), row two the gold labels
/// (`|` where any frame in the column is positive).
pub fn ascii_timeline(scores: &[f64], gold: &[u8], width: usize) -> String {
    let width = width.clamp(1, scores.len().max(1));
    let cols = columns(scores.len(), width);
    let mut line_scores = String::with_capacity(width);
    let mut line_gold = String::with_capacity(width);
    for &(s, e) in &cols {
        let mean = if e > s {
            scores[s..e].iter().sum::<f64>() / (e - s) as f64
        } else {
            0.0
        };
        line_scores.push(match mean {
            m if m >= 0.75 => '#',
            m if m >= 0.5 => ':',
            m if m >= 0.25 => '.',
            _ => ' ',
        });
        let positive = gold.get(s..e.min(gold.len())).is_some_and(|g| g.contains(&1));
        line_gold.push(if positive { '|' } else { ' ' });
    }
    format!("score [{line_scores}]\ngold  [{line_gold}]\n")
}

/// SVG with the score polyline over shaded gold-positive spans.
pub fn svg_timeline(scores: &[f64], gold: &[u8], width: usize, height: usize) -> String {
    let n = scores.len().max(1) as f64;
    let (w, h) = (width.max(1) as f64, height.max(2) as f64);
    let x = |i: usize| i as f64 / n * w;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##);
    let mut i = 0;
    while i < gold.len() {
        if gold[i] == 1 {
            let start = i;
            while i < gold.len() && gold[i] == 1 {
                i += 1;
            }
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="0" width="{:.2}" height="{h}" fill="#f4c27a"/>"##,
                x(start),
                x(i) - x(start)
            );
        } else {
            i += 1;
        }
    }
    let _ = writeln!(
        out,
        r##"<line x1="0" y1="{0:.2}" x2="{w}" y2="{0:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
        h * 0.5
    );
    let points: Vec<String> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| format!("{:.2},{:.2}", x(i), (1.0 - s) * h))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline fill="none" stroke="#1f4e9a" stroke-width="1" points="{}"/>"##,
        points.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

fn columns(len: usize, width: usize) -> Vec<(usize, usize)> {
    (0..width).map(|c| (c * len / width, (c + 1) * len / width)).collect()
}
