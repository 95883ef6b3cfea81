//! Minimal hand-written SVG: learning curves with error bands, and heat maps.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One curve: x values, means and half-widths of the shaded band.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub band: Vec<f64>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with `±band` shading and optional dashed vertical markers.
pub fn line_chart(title: &str, y_label: &str, series: &[Series], markers: &[f64]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 60.0, 150.0, 40.0, 50.0);
    let finite = |v: f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter().copied()).filter(|&v| finite(v));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let ys = series.iter().flat_map(|s| {
        s.mean
            .iter()
            .zip(&s.band)
            .flat_map(|(m, b)| [m - b, m + b])
            .collect::<Vec<_>>()
    });
    let (mut y0, mut y1) = ys
        .filter(|&v| finite(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = if x0.is_finite() { (x0, x1.max(x0 + 1.0)) } else { (0.0, 1.0) };
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14">{}</text>"#, ml, esc(title));
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    for k in 0..=4 {
        let yv = y0 + (y1 - y0) * k as f64 / 4.0;
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{yv:.2}</text><text x="{}" y="{}" text-anchor="middle">{xv:.0}</text>"#,
            ml - 6.0,
            py(yv) + 4.0,
            px(xv),
            h - mb + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        (ml + w - mr) / 2.0,
        h - 12.0,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        esc(y_label)
    );
    for &m in markers {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{mt}" x2="{0:.2}" y2="{1}" stroke="#555" stroke-dasharray="5,4"/>"##,
            px(m),
            h - mb
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = ser
            .x
            .iter()
            .zip(&ser.mean)
            .zip(&ser.band)
            .filter(|((x, m), b)| finite(**x) && finite(**m) && finite(**b))
            .map(|((x, m), b)| (*x, *m, *b))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let upper: Vec<String> = pts.iter().map(|(x, m, b)| format!("{:.2},{:.2}", px(*x), py(m + b))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|(x, m, b)| format!("{:.2},{:.2}", px(*x), py(m - b))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts.iter().map(|(x, m, _)| format!("{:.2},{:.2}", px(*x), py(*m))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = mt + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            w - mr + 12.0,
            ly,
            w - mr + 30.0,
            ly + 10.0,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grey-scale heat map of a row-normalised table, values in `[0, 1]`.
pub fn heat_map(title: &str, rows: &[String], cols: &[String], table: &[Vec<f64>]) -> String {
    let cell = 28.0;
    let (ml, mt) = (110.0, 90.0);
    let w = ml + cell * cols.len() as f64 + 20.0;
    let h = mt + cell * rows.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, esc(title));
    for (c, name) in cols.iter().enumerate() {
        let x = ml + cell * (c as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})">{}</text>"#,
            mt - 6.0,
            mt - 6.0,
            esc(name)
        );
    }
    for (r, name) in rows.iter().enumerate() {
        let y = mt + cell * r as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            ml - 6.0,
            y + cell * 0.65,
            esc(name)
        );
        for (c, &v) in table[r].iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                s,
                r##"<rect x="{}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},{shade})" stroke="#ddd"><title>{v:.3}</title></rect>"##,
                ml + cell * c as f64
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
