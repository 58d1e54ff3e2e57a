//! Minimal static SVG charts. The CSV files are the real output; these are
//! for a quick look. Coordinates are written with fixed precision so the
//! files are reproducible apart from the optional timestamp.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Seconds since the Unix epoch, for the generated-at field.
pub fn now_stamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("unix:{secs}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            return Range { lo: lo - 0.5, hi: hi + 0.5 };
        }
        let pad = 0.05 * (hi - lo);
        Range { lo: lo - pad, hi: hi + pad }
    }

    fn join(self, o: Range) -> Range {
        Range { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }
}

/// One chart: plot area, axis ranges and the body built so far.
pub struct Chart {
    x: Range,
    y: Range,
    body: String,
    title: String,
    stamp: Option<String>,
}

impl Chart {
    fn new(title: &str, x: Range, y: Range, stamp: Option<String>) -> Chart {
        Chart { x, y, body: String::new(), title: title.to_string(), stamp }
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.lo) / (self.x.hi - self.x.lo) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.lo) / (self.y.hi - self.y.lo) * (H - TOP - BOTTOM)
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            self.px(x0),
            self.py(y0),
            self.px(x1),
            self.py(y1)
        );
    }

    fn dot(&mut self, x: f64, y: f64, color: &str, filled: bool) {
        if !(x.is_finite() && y.is_finite()) {
            return;
        }
        let fill = if filled { color } else { "none" };
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}" stroke="{color}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="11" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    fn axes(&mut self, x_label: &str, y_label: &str, y_ticks: bool) {
        let (x0, x1, y0, y1) = (self.x.lo, self.x.hi, self.y.lo, self.y.hi);
        self.line(x0, y0, x1, y0, r#"stroke="black""#);
        self.line(x0, y0, x0, y1, r#"stroke="black""#);
        for k in 0..=4 {
            let v = x0 + (x1 - x0) * f64::from(k) / 4.0;
            let label = format!("{v:.3}");
            self.text(self.px(v), H - BOTTOM + 15.0, &label, "middle");
            if y_ticks {
                let u = y0 + (y1 - y0) * f64::from(k) / 4.0;
                let label = format!("{u:.3}");
                self.text(LEFT - 5.0, self.py(u) + 4.0, &label, "end");
            }
        }
        self.text(W / 2.0, H - 10.0, x_label, "middle");
        let _ = writeln!(
            self.body,
            r#"<text x="14" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(y_label)
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (k, (name, color)) in entries.iter().enumerate() {
            let y = TOP + 12.0 + 14.0 * k as f64;
            let _ = writeln!(
                self.body,
                r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#,
                W - RIGHT - 120.0,
                y - 8.0
            );
            self.text(W - RIGHT - 108.0, y, name, "start");
        }
    }

    fn finish(self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        if let Some(stamp) = &self.stamp {
            let _ = writeln!(s, "<metadata>generated {}</metadata>", esc(stamp));
        }
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
            W / 2.0,
            esc(&self.title)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

/// Named point series drawn as dots, with an optional `y = x` reference.
pub fn scatter(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
    diagonal: bool,
    stamp: Option<String>,
) -> String {
    let pts = || series.iter().flat_map(|(_, p)| p.iter().copied());
    let mut xr = Range::of(pts().map(|p| p.0));
    let mut yr = Range::of(pts().map(|p| p.1));
    if diagonal {
        xr = xr.join(yr);
        yr = xr;
    }
    let mut c = Chart::new(title, xr, yr, stamp);
    c.axes(x_label, y_label, true);
    if diagonal {
        c.line(xr.lo, xr.lo, xr.hi, xr.hi, r##"stroke="#888" stroke-dasharray="4 3""##);
    }
    let mut legend = Vec::new();
    for (k, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for &(x, y) in points {
            c.dot(x, y, color, true);
        }
        legend.push((*name, color));
    }
    c.legend(&legend);
    c.finish()
}

/// One row per label: `values[k]` is drawn in series colour `k`. Vertical
/// reference lines are drawn at each of `refs`.
pub fn dot_rows(
    title: &str,
    x_label: &str,
    labels: &[String],
    series: &[(&str, Vec<Vec<f64>>)],
    refs: &[f64],
    stamp: Option<String>,
) -> String {
    let all = series.iter().flat_map(|(_, rows)| rows.iter().flatten().copied());
    let xr = Range::of(all.chain(refs.iter().copied()));
    let yr = Range { lo: -0.5, hi: labels.len() as f64 - 0.5 };
    let mut c = Chart::new(title, xr, yr, stamp);
    c.axes(x_label, "", false);
    for &r in refs {
        c.line(r, yr.lo, r, yr.hi, r##"stroke="#888" stroke-dasharray="4 3""##);
    }
    for (row, label) in labels.iter().enumerate() {
        let yv = row as f64;
        let py = c.py(yv) + 4.0;
        c.text(LEFT - 5.0, py, label, "end");
    }
    let mut legend = Vec::new();
    for (k, (name, rows)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (row, values) in rows.iter().enumerate() {
            for &v in values {
                c.dot(v, row as f64, color, k > 0);
            }
        }
        legend.push((*name, color));
    }
    c.legend(&legend);
    c.finish()
}

/// Point estimates with intervals, one row per label, coloured by group.
pub struct Interval {
    pub label: String,
    pub group: usize,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

pub fn intervals(
    title: &str,
    x_label: &str,
    rows: &[Interval],
    groups: &[&str],
    refs: &[f64],
    stamp: Option<String>,
) -> String {
    let xr = Range::of(rows.iter().flat_map(|r| [r.low, r.high, r.estimate]).chain(refs.iter().copied()));
    let yr = Range { lo: -0.5, hi: rows.len() as f64 - 0.5 };
    let mut c = Chart::new(title, xr, yr, stamp);
    c.axes(x_label, "", false);
    for &r in refs {
        c.line(r, yr.lo, r, yr.hi, r##"stroke="#888" stroke-dasharray="4 3""##);
    }
    for (i, r) in rows.iter().enumerate() {
        let yv = (rows.len() - 1 - i) as f64;
        let color = PALETTE[r.group % PALETTE.len()];
        if r.low.is_finite() && r.high.is_finite() {
            c.line(r.low, yv, r.high, yv, &format!(r#"stroke="{color}""#));
        }
        c.dot(r.estimate, yv, color, true);
        if rows.len() <= 40 {
            let py = c.py(yv) + 4.0;
            c.text(LEFT - 5.0, py, &r.label, "end");
        }
    }
    let legend: Vec<(&str, &str)> =
        groups.iter().enumerate().map(|(k, g)| (*g, PALETTE[k % PALETTE.len()])).collect();
    c.legend(&legend);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamp_only_when_requested() {
        let s = scatter("t", "x", "y", &[("a", vec![(0.0, 1.0), (1.0, 2.0)])], true, None);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(!s.contains("<metadata>"));
        let t = scatter("t", "x", "y", &[("a", vec![(0.0, 1.0)])], false, Some("unix:1".into()));
        assert!(t.contains("<metadata>generated unix:1</metadata>"));
    }

    #[test]
    fn labels_are_escaped() {
        let s = intervals(
            "a<b",
            "x",
            &[Interval { label: "p&q".into(), group: 0, estimate: 1.0, low: 0.0, high: 2.0 }],
            &["g"],
            &[],
            None,
        );
        assert!(s.contains("a&lt;b") && s.contains("p&amp;q"));
    }
}
