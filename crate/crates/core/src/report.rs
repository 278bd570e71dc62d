//! Plain CSV and SVG output helpers.

use std::fmt::Write as _;

/// Comment block placed at the top of every output file.
pub fn header_comment(command: &str, config_hash: &str) -> String {
    format!(
        "# {} {} {}\n# config_sha256 {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        command,
        config_hash
    )
}

/// One coloured cell of a heatmap, indexed from the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub ix: usize,
    pub iy: usize,
    pub color: (u8, u8, u8),
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn svg_open(s: &mut String, title: &str) {
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_labels(s: &mut String, x_label: &str, y_label: &str) {
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label)).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
}

#[allow(clippy::too_many_arguments)]
pub fn heatmap_svg(
    cells: &[HeatCell],
    nx: usize,
    ny: usize,
    x_range: (f64, f64),
    y_range: (f64, f64),
    title: &str,
    x_label: &str,
    y_label: &str,
) -> String {
    let mut s = String::new();
    svg_open(&mut s, title);
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    let (cw, ch) = (pw / nx.max(1) as f64, ph / ny.max(1) as f64);
    for c in cells {
        let x = MARGIN + c.ix as f64 * cw;
        let y = H - MARGIN - (c.iy + 1) as f64 * ch;
        let (r, g, b) = c.color;
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
            cw + 0.05,
            ch + 0.05
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for (v, x) in [(x_range.0, MARGIN), (x_range.1, W - MARGIN)] {
        writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.2}</text>"#, H - MARGIN + 16.0).unwrap();
    }
    for (v, y) in [(y_range.0, H - MARGIN), (y_range.1, MARGIN)] {
        writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.2}</text>"#, MARGIN - 6.0).unwrap();
    }
    axis_labels(&mut s, x_label, y_label);
    s.push_str("</svg>\n");
    s
}

/// Fan chart of percentile bands. `bands[i]` is the series of the i-th
/// percentile, ordered from the lowest to the highest level; bands are
/// shaded pairwise from the outside in and the middle series is drawn as a
/// line.
pub fn fan_svg(
    x: &[f64],
    bands: &[Vec<f64>],
    title: &str,
    x_label: &str,
    y_label: &str,
    reference: Option<(f64, &str)>,
) -> String {
    let mut s = String::new();
    svg_open(&mut s, title);
    let finite = |v: &f64| v.is_finite();
    let mut lo = bands.iter().flatten().copied().filter(finite).fold(f64::INFINITY, f64::min);
    let mut hi = bands.iter().flatten().copied().filter(finite).fold(f64::NEG_INFINITY, f64::max);
    if let Some((r, _)) = reference {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let (x0, x1) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * MARGIN);
    let sy = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN);
    let n = bands.len();
    for i in 0..n / 2 {
        let (a, b) = (&bands[i], &bands[n - 1 - i]);
        let mut pts = String::new();
        for (xv, yv) in x.iter().zip(a) {
            write!(pts, "{:.2},{:.2} ", sx(*xv), sy(*yv)).unwrap();
        }
        for (xv, yv) in x.iter().zip(b).rev() {
            write!(pts, "{:.2},{:.2} ", sx(*xv), sy(*yv)).unwrap();
        }
        let opacity = 0.25 + 0.3 * i as f64;
        writeln!(s, r#"<polygon points="{}" fill="rgb(40,90,200)" fill-opacity="{opacity:.2}" stroke="none"/>"#, pts.trim_end())
            .unwrap();
    }
    if n % 2 == 1 {
        let mut pts = String::new();
        for (xv, yv) in x.iter().zip(&bands[n / 2]) {
            write!(pts, "{:.2},{:.2} ", sx(*xv), sy(*yv)).unwrap();
        }
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="rgb(20,40,120)" stroke-width="1.5"/>"#, pts.trim_end())
            .unwrap();
    }
    if let Some((r, label)) = reference {
        let y = sy(r);
        writeln!(
            s,
            r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="rgb(200,40,40)" stroke-dasharray="6 4"/>"#,
            W - MARGIN
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" fill="rgb(200,40,40)">{}</text>"#, W - MARGIN - 4.0, y - 4.0, escape(label))
            .unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    )
    .unwrap();
    for (v, xx) in [(x0, MARGIN), (x1, W - MARGIN)] {
        writeln!(s, r#"<text x="{xx}" y="{}" text-anchor="middle">{v:.0}</text>"#, H - MARGIN + 16.0).unwrap();
    }
    for (v, yy) in [(lo, H - MARGIN), (hi, MARGIN)] {
        writeln!(s, r#"<text x="{}" y="{yy}" text-anchor="end">{v:.3e}</text>"#, MARGIN - 6.0).unwrap();
    }
    axis_labels(&mut s, x_label, y_label);
    s.push_str("</svg>\n");
    s
}
