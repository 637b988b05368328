//! Tiny native SVG emitters for the experiment commands. Convenience
//! output only; CSVs are the artifacts of record.

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"];

fn header(w: u32, h: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn bar_chart(
    title: &str,
    labels: &[String],
    series: &[(String, Vec<f64>)],
    width: u32,
    height: u32,
) -> String {
    let mut s = header(width, height);
    s.push_str(&format!("<text x=\"10\" y=\"16\">{title}</text>\n"));
    let max = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .fold(0.0_f64, |m, &v| m.max(v))
        .max(1e-12);
    let (x0, y0, plot_w, plot_h) = (40.0, 30.0, width as f64 - 60.0, height as f64 - 80.0);
    let group_w = plot_w / labels.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (gi, label) in labels.iter().enumerate() {
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values.get(gi).copied().unwrap_or(0.0).max(0.0);
            let h = v / max * plot_h;
            let x = x0 + gi as f64 * group_w + group_w * 0.1 + si as f64 * bar_w;
            let y = y0 + plot_h - h;
            s.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
                 fill=\"{}\"/>\n",
                PALETTE[si % PALETTE.len()]
            ));
        }
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>\n",
            x0 + (gi as f64 + 0.5) * group_w,
            y0 + plot_h + 14.0
        ));
    }
    for (si, (name, _)) in series.iter().enumerate() {
        let y = y0 + plot_h + 30.0 + 14.0 * si as f64;
        s.push_str(&format!(
            "<rect x=\"40\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"55\" y=\"{:.1}\">{name}</text>\n",
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            y
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Polyline chart; one line per series of (x, y) points.
pub fn line_chart(
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
    width: u32,
    height: u32,
) -> String {
    let mut s = header(width, height);
    s.push_str(&format!("<text x=\"10\" y=\"16\">{title}</text>\n"));
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), &(x, _)| {
        (a.min(x), b.max(x))
    });
    let (ymin, ymax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), &(_, y)| {
        (a.min(y), b.max(y))
    });
    let (xr, yr) = ((xmax - xmin).max(1e-12), (ymax - ymin).max(1e-12));
    let (x0, y0, plot_w, plot_h) = (40.0, 30.0, width as f64 - 60.0, height as f64 - 80.0);
    for (si, (name, points)) in series.iter().enumerate() {
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.1},{:.1}",
                    x0 + (x - xmin) / xr * plot_w,
                    y0 + plot_h - (y - ymin) / yr * plot_h
                )
            })
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            path.join(" "),
            PALETTE[si % PALETTE.len()]
        ));
        let y = y0 + plot_h + 30.0 + 14.0 * si as f64;
        s.push_str(&format!(
            "<rect x=\"40\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"55\" y=\"{:.1}\">{name}</text>\n",
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            y
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Grid heatmap of values in [lo, hi], blue through white to red.
pub fn grid_heatmap(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<f64>],
    lo: f64,
    hi: f64,
    width: u32,
    height: u32,
) -> String {
    let mut s = header(width, height);
    s.push_str(&format!("<text x=\"10\" y=\"16\">{title}</text>\n"));
    let (x0, y0) = (70.0, 30.0);
    let cell_w = (width as f64 - x0 - 20.0) / col_labels.len().max(1) as f64;
    let cell_h = (height as f64 - y0 - 30.0) / row_labels.len().max(1) as f64;
    for (ri, row) in values.iter().enumerate() {
        for (ci, &v) in row.iter().enumerate() {
            let t = ((v - lo) / (hi - lo).max(1e-12)).clamp(0.0, 1.0);
            let (r, g, b) = if t < 0.5 {
                let u = t * 2.0;
                ((70.0 + 185.0 * u) as u8, (110.0 + 145.0 * u) as u8, 255u8)
            } else {
                let u = (t - 0.5) * 2.0;
                (255u8, (255.0 - 168.0 * u) as u8, (255.0 - 166.0 * u) as u8)
            };
            let x = x0 + ci as f64 * cell_w;
            let y = y0 + ri as f64 * cell_h;
            s.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell_w:.1}\" height=\"{cell_h:.1}\" \
                 fill=\"rgb({r},{g},{b})\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.2}</text>\n",
                x + cell_w / 2.0,
                y + cell_h / 2.0 + 4.0
            ));
        }
    }
    for (ri, label) in row_labels.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
            x0 - 6.0,
            y0 + (ri as f64 + 0.5) * cell_h + 4.0
        ));
    }
    for (ci, label) in col_labels.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>\n",
            x0 + (ci as f64 + 0.5) * cell_w,
            y0 + row_labels.len() as f64 * cell_h + 16.0
        ));
    }
    s.push_str("</svg>\n");
    s
}
