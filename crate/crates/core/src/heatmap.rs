//! SVG rendering of a transport plan as a labeled grid.

use std::fmt::Write;

use crate::ot::TransportPlan;

const CELL: usize = 24;
const LABEL_SPACE: usize = 120;

/// Shade of one cell: `round(255 * flow / max_flow)`.
pub fn intensity(flow: f64, max_flow: f64) -> u8 {
    if max_flow <= 0.0 {
        return 0;
    }
    (255.0 * (flow / max_flow).clamp(0.0, 1.0)).round() as u8
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Renders `plan` restricted to `rows` x `cols`. Darker cells carry more
/// flow; each cell records its shade in `data-intensity` and its flow in
/// `data-flow`.
pub fn render_svg(
    plan: &TransportPlan,
    rows: &[usize],
    cols: &[usize],
    label: impl Fn(usize) -> String,
) -> String {
    let max_flow = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| plan.flow(i, j)))
        .fold(0.0, f64::max);
    let width = LABEL_SPACE + CELL * cols.len();
    let height = LABEL_SPACE + CELL * rows.len();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" data-max-flow="{max_flow}">"#
    );
    let _ = writeln!(svg, r#"<g font-family="monospace" font-size="11">"#);
    for (c, &j) in cols.iter().enumerate() {
        let x = LABEL_SPACE + c * CELL + CELL / 2;
        let y = LABEL_SPACE - 6;
        let _ = writeln!(
            svg,
            r#"<text class="col-label" x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(&label(j))
        );
    }
    for (r, &i) in rows.iter().enumerate() {
        let y = LABEL_SPACE + r * CELL + CELL / 2 + 4;
        let _ = writeln!(
            svg,
            r#"<text class="row-label" x="{}" y="{y}" text-anchor="end">{}</text>"#,
            LABEL_SPACE - 6,
            escape(&label(i))
        );
    }
    let _ = writeln!(svg, "</g>");
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            let flow = plan.flow(i, j);
            let level = intensity(flow, max_flow);
            let shade = 255 - level;
            let _ = writeln!(
                svg,
                r##"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="#ccc" data-row="{r}" data-col="{c}" data-flow="{flow}" data-intensity="{level}"/>"##,
                LABEL_SPACE + c * CELL,
                LABEL_SPACE + r * CELL,
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
