//! Bare-bones SVG charts for quick looks at run output. The CSV files are
//! the reference data; these are conveniences.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for &(a, b) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        if !(x.0 < x.1) {
            x = (x.0.min(0.0) - 0.5, x.1.max(0.0) + 0.5);
        }
        if !(y.0 < y.1) {
            y = (y.0.min(0.0) - 0.5, y.1.max(0.0) + 0.5);
        }
        Frame { x, y }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN.0 + (x - self.x.0) / (self.x.1 - self.x.0) * (W - MARGIN.0 - MARGIN.1)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN.3 - (y - self.y.0) / (self.y.1 - self.y.0) * (H - MARGIN.2 - MARGIN.3)
    }
}

fn header(s: &mut String, title: &str, f: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN.0, W - MARGIN.1, MARGIN.2, H - MARGIN.3);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            y1 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN.2 + 14.0 * i as f64 + 8.0;
        let x = W - MARGIN.1 - 150.0;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{c}"/>"#,
            y - 8.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(name));
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline chart of each series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let f = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let mut s = String::new();
    header(&mut s, title, &f, x_label, y_label);
    for (i, ser) in series.iter().enumerate() {
        let mut d = String::new();
        for (k, &(x, y)) in ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .enumerate()
        {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, f.px(x), f.py(y));
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            d.trim_end(),
            COLORS[i % COLORS.len()]
        );
    }
    legend(&mut s, &series.iter().map(|x| x.name).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Stacked areas of non-negative layers sampled at common `x`.
pub fn stacked_area(title: &str, x_label: &str, y_label: &str, x: &[f64], layers: &[(&str, Vec<f64>)]) -> String {
    let mut top = vec![0.0; x.len()];
    let mut bands = Vec::new();
    for (_, v) in layers {
        let lo = top.clone();
        for (t, y) in top.iter_mut().zip(v) {
            *t += y.max(0.0);
        }
        bands.push((lo, top.clone()));
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(&top)
        .map(|(&a, &b)| (a, b))
        .chain(x.iter().map(|&a| (a, 0.0)))
        .collect();
    let f = Frame::fit(pts.iter());
    let mut s = String::new();
    header(&mut s, title, &f, x_label, y_label);
    for (i, (lo, hi)) in bands.iter().enumerate() {
        let mut d = String::new();
        for (k, (&xv, &y)) in x.iter().zip(hi).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, f.px(xv), f.py(y));
        }
        for (&xv, &y) in x.iter().zip(lo).rev() {
            let _ = write!(d, "L{:.2},{:.2} ", f.px(xv), f.py(y));
        }
        let _ = writeln!(
            s,
            r#"<path d="{}Z" fill="{}" fill-opacity="0.8"/>"#,
            d,
            COLORS[i % COLORS.len()]
        );
    }
    legend(&mut s, &layers.iter().map(|l| l.0).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_well_formed() {
        let s = line_chart(
            "a < b",
            "t",
            "y",
            &[Series {
                name: "sin",
                points: (0..50).map(|i| (i as f64 * 0.1, (i as f64 * 0.1).sin())).collect(),
            }],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<path").count(), 2);
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let s = line_chart(
            "c",
            "x",
            "y",
            &[Series {
                name: "flat",
                points: vec![(1.0, 2.0), (1.0, 2.0)],
            }],
        );
        assert!(!s.contains("NaN"));
        let s = stacked_area(
            "s",
            "x",
            "y",
            &[0.0, 1.0],
            &[("a", vec![0.5, 0.5]), ("b", vec![0.5, 0.5])],
        );
        assert!(!s.contains("NaN"));
        assert_eq!(s.matches("fill-opacity").count(), 2);
    }
}
