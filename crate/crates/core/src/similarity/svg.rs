//! Self-contained SVG heatmaps with a fixed color ramp and per-cell numeric
//! annotations. Output is byte-stable for identical inputs.

const CELL: usize = 48;
const MARGIN: usize = 60;
const LEGEND_H: usize = 40;

// viridis anchor colors, interpolated linearly in RGB
const RAMP: [(f64, [u8; 3]); 5] = [
    (0.00, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.50, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.00, [253, 231, 37]),
];

fn ramp_color(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    for w in RAMP.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if v <= t1 {
            let f = if t1 > t0 { (v - t0) / (t1 - t0) } else { 0.0 };
            return [
                (c0[0] as f64 + f * (c1[0] as f64 - c0[0] as f64)).round() as u8,
                (c0[1] as f64 + f * (c1[1] as f64 - c0[1] as f64)).round() as u8,
                (c0[2] as f64 + f * (c1[2] as f64 - c0[2] as f64)).round() as u8,
            ];
        }
    }
    RAMP[4].1
}

fn text_color(v: f64) -> &'static str {
    if v.clamp(0.0, 1.0) > 0.6 {
        "#000000"
    } else {
        "#ffffff"
    }
}

/// Renders a matrix as an annotated heatmap. Rows are labeled as source
/// layers, columns as target layers (1-based), matching the direction
/// convention documented in the legend.
pub fn heatmap_svg(matrix: &[Vec<f64>], title: &str) -> String {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, |r| r.len());
    let width = MARGIN + cols * CELL + 20;
    let height = MARGIN + rows * CELL + LEGEND_H + 20;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        MARGIN,
        xml_escape(title)
    ));
    for (i, row) in matrix.iter().enumerate() {
        // row label: source layer l
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"end\">l={}</text>\n",
            MARGIN - 6,
            MARGIN + i * CELL + CELL / 2 + 4,
            i + 1
        ));
        for (j, v) in row.iter().enumerate() {
            let [r, g, b] = ramp_color(*v);
            let x = MARGIN + j * CELL;
            let y = MARGIN + i * CELL;
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"rgb({r},{g},{b})\"/>\n"
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" \
                 fill=\"{}\" text-anchor=\"middle\">{:.2}</text>\n",
                x + CELL / 2,
                y + CELL / 2 + 4,
                text_color(*v),
                v
            ));
        }
    }
    for j in 0..cols {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"middle\">l'={}</text>\n",
            MARGIN + j * CELL + CELL / 2,
            MARGIN - 8,
            j + 1
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">\
         rows: source layer l; columns: target layer l'; color ramp 0..1</text>\n",
        MARGIN,
        MARGIN + rows * CELL + 24
    ));
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
