use std::collections::BTreeSet;
use std::fmt::Write;

use super::Attribution;

/// `variable,contribution` rows in variable order.
pub fn attribution_csv(attr: &Attribution, names: &[String]) -> String {
    let mut out = String::from("variable,contribution\n");
    for (name, c) in names.iter().zip(&attr.contributions) {
        let _ = writeln!(out, "{},{}", csv_field(name), c);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Horizontal bar chart of the `top_k` largest-magnitude contributions.
///
/// Bars extend right for positive and left for negative values; root-cause
/// variables get a thick outline and `class="root"`.
pub fn svg_bar_chart(attr: &Attribution, names: &[String], roots: &BTreeSet<usize>, top_k: usize) -> String {
    let order: Vec<usize> = attr.ranking().into_iter().take(top_k.max(1)).collect();
    let max = order.iter().map(|&i| attr.contributions[i].abs()).fold(0.0, f64::max);
    let (label_w, half, bar_h, gap, top) = (120.0, 180.0, 18.0, 6.0, 30.0);
    let width = label_w + 2.0 * half + 20.0;
    let height = top + order.len() as f64 * (bar_h + gap) + 10.0;
    let axis = label_w + half;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-weight="bold">{}</text>"#,
        width / 2.0,
        xml_escape(&format!("{} ({})", attr.method, attr.target_functional))
    );
    let _ = writeln!(
        s,
        r##"<line x1="{axis}" y1="{top}" x2="{axis}" y2="{}" stroke="#444"/>"##,
        height - 10.0
    );
    for (row, &i) in order.iter().enumerate() {
        let c = attr.contributions[i];
        let len = if max > 0.0 { c.abs() / max * half } else { 0.0 };
        let y = top + row as f64 * (bar_h + gap);
        let x = if c >= 0.0 { axis } else { axis - len };
        let fill = if c >= 0.0 { "#d9534f" } else { "#4a78b5" };
        let is_root = roots.contains(&i);
        let name = names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            y + bar_h * 0.75,
            xml_escape(&name)
        );
        let outline = if is_root {
            r##" class="root" stroke="#000" stroke-width="3""##
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.3}" y="{y:.3}" width="{len:.3}" height="{bar_h}" fill="{fill}"{outline}><title>{}: {c:.6e}</title></rect>"#,
            xml_escape(&name)
        );
    }
    s.push_str("</svg>\n");
    s
}
