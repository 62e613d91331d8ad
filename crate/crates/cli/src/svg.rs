//! Self-contained SVG line and bar charts with the source data embedded
//! as comments, so every figure is reproducible from the file alone.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#2f6fb1", "#d1662c", "#3b9154", "#b04a92", "#7a6ac4", "#5f5f5f",
];
const COLOR_AXIS: &str = "#333333";
const COLOR_GRID: &str = "#dddddd";

/// One plotted series; `band` is an optional (low, high) envelope per
/// point, drawn as a translucent ribbon.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64)>>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; autoscaled when `None`.
    pub y_range: Option<(f64, f64)>,
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

        let xs: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .collect();
        let mut ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .collect();
        for s in &self.series {
            if let Some(band) = &s.band {
                ys.extend(band.iter().flat_map(|&(lo, hi)| [lo, hi]));
            }
        }
        let (x_min, x_max) = min_max(&xs);
        let (y_min, y_max) = match self.y_range {
            Some(r) => r,
            None => {
                let (lo, hi) = min_max(&ys);
                let pad = ((hi - lo) * 0.05).max(1e-9);
                (lo - pad, hi + pad)
            }
        };
        let sx = move |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min).max(1e-12) * plot_w;
        let sy = move |y: f64| {
            MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min).max(1e-12) * plot_h
        };

        let mut svg = String::new();
        svg.push_str(&format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="Helvetica, Arial, sans-serif">"#
        ));
        svg.push('\n');
        for s in &self.series {
            svg.push_str(&format!("<!-- data series: {}\n", escape_xml(&s.name)));
            for (i, (x, y)) in s.points.iter().enumerate() {
                match s.band.as_ref().and_then(|b| b.get(i)) {
                    Some((lo, hi)) => svg.push_str(&format!("{x},{y},{lo},{hi}\n")),
                    None => svg.push_str(&format!("{x},{y}\n")),
                }
            }
            svg.push_str("-->\n");
        }
        svg.push_str(&format!(
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="28" text-anchor="middle" font-size="17" fill="{COLOR_AXIS}">{}</text>"#,
            WIDTH / 2.0,
            escape_xml(&self.title)
        ));

        // horizontal grid and y ticks
        for i in 0..=5 {
            let v = y_min + (y_max - y_min) * i as f64 / 5.0;
            let y = sy(v);
            svg.push_str(&format!(
                r#"<line x1="{MARGIN_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{COLOR_GRID}"/>"#,
                MARGIN_LEFT + plot_w
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="12" fill="{COLOR_AXIS}">{}</text>"#,
                MARGIN_LEFT - 8.0,
                y + 4.0,
                fmt_tick(v)
            ));
        }
        // x ticks
        for i in 0..=6 {
            let v = x_min + (x_max - x_min) * i as f64 / 6.0;
            let x = sx(v);
            svg.push_str(&format!(
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="12" fill="{COLOR_AXIS}">{}</text>"#,
                MARGIN_TOP + plot_h + 20.0,
                fmt_tick(v)
            ));
        }
        // axes
        svg.push_str(&format!(
            r#"<line x1="{MARGIN_LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{COLOR_AXIS}" stroke-width="1.5"/>"#,
            MARGIN_TOP + plot_h,
            MARGIN_LEFT + plot_w,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{:.1}" stroke="{COLOR_AXIS}" stroke-width="1.5"/>"#,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13" fill="{COLOR_AXIS}">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape_xml(&self.x_label)
        ));
        svg.push_str(&format!(
            r#"<text x="20" y="{:.1}" text-anchor="middle" font-size="13" fill="{COLOR_AXIS}" transform="rotate(-90 20 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape_xml(&self.y_label)
        ));

        // bands first, lines on top
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            if let Some(band) = &s.band {
                let mut path = String::from("M");
                for ((x, _), (lo, _)) in s.points.iter().zip(band.iter()) {
                    path.push_str(&format!(" {:.1},{:.1}", sx(*x), sy(*lo)));
                }
                for ((x, _), (_, hi)) in s.points.iter().zip(band.iter()).rev() {
                    path.push_str(&format!(" {:.1},{:.1}", sx(*x), sy(*hi)));
                }
                path.push('Z');
                svg.push_str(&format!(
                    r#"<path d="{path}" fill="{color}" opacity="0.15" stroke="none"/>"#
                ));
            }
        }
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
                .collect();
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                pts.join(" ")
            ));
            // legend
            let ly = MARGIN_TOP + 14.0 * si as f64;
            svg.push_str(&format!(
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="3" fill="{color}"/>"#,
                MARGIN_LEFT + plot_w - 150.0,
                ly
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{COLOR_AXIS}">{}</text>"#,
                MARGIN_LEFT + plot_w - 135.0,
                ly + 5.0,
                escape_xml(&s.name)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Grouped bar chart: one group per category, one bar per series.
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub categories: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
    pub y_range: (f64, f64),
}

impl BarChart {
    pub fn render(&self) -> String {
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let (y_min, y_max) = self.y_range;
        let sy =
            |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min).max(1e-12) * plot_h;

        let mut svg = String::new();
        svg.push_str(&format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="Helvetica, Arial, sans-serif">"#
        ));
        svg.push('\n');
        svg.push_str("<!-- data\n");
        for (name, vals) in &self.series {
            svg.push_str(&format!(
                "{},{}\n",
                escape_xml(name),
                vals.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ));
        }
        svg.push_str("-->\n");
        svg.push_str(&format!(
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="28" text-anchor="middle" font-size="17" fill="{COLOR_AXIS}">{}</text>"#,
            WIDTH / 2.0,
            escape_xml(&self.title)
        ));
        for i in 0..=5 {
            let v = y_min + (y_max - y_min) * i as f64 / 5.0;
            let y = sy(v);
            svg.push_str(&format!(
                r#"<line x1="{MARGIN_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{COLOR_GRID}"/>"#,
                MARGIN_LEFT + plot_w
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="12" fill="{COLOR_AXIS}">{}</text>"#,
                MARGIN_LEFT - 8.0,
                y + 4.0,
                fmt_tick(v)
            ));
        }
        let n_cat = self.categories.len().max(1);
        let n_ser = self.series.len().max(1);
        let group_w = plot_w / n_cat as f64;
        let bar_w = (group_w * 0.8) / n_ser as f64;
        for (ci, cat) in self.categories.iter().enumerate() {
            let gx = MARGIN_LEFT + group_w * ci as f64 + group_w * 0.1;
            for (si, (_, vals)) in self.series.iter().enumerate() {
                let v = vals.get(ci).copied().unwrap_or(0.0);
                let x = gx + bar_w * si as f64;
                let y = sy(v);
                let color = PALETTE[si % PALETTE.len()];
                svg.push_str(&format!(
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
                    bar_w * 0.92,
                    (MARGIN_TOP + plot_h - y).max(0.0)
                ));
            }
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" fill="{COLOR_AXIS}">{}</text>"#,
                gx + group_w * 0.4,
                MARGIN_TOP + plot_h + 18.0,
                escape_xml(cat)
            ));
        }
        for (si, (name, _)) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let ly = MARGIN_TOP + 14.0 * si as f64;
            svg.push_str(&format!(
                r#"<rect x="{:.1}" y="{ly:.1}" width="10" height="10" fill="{color}"/>"#,
                MARGIN_LEFT + plot_w - 150.0
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{COLOR_AXIS}">{}</text>"#,
                MARGIN_LEFT + plot_w - 135.0,
                ly + 9.0,
                escape_xml(name)
            ));
        }
        svg.push_str(&format!(
            r#"<text x="20" y="{:.1}" text-anchor="middle" font-size="13" fill="{COLOR_AXIS}" transform="rotate(-90 20 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape_xml(&self.y_label)
        ));
        svg.push_str("</svg>\n");
        svg
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        if x.is_finite() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_embeds_data_and_is_wellformed() {
        let chart = LineChart {
            title: "accuracy <test>".into(),
            x_label: "timestep".into(),
            y_label: "accuracy".into(),
            series: vec![Series {
                name: "model".into(),
                points: vec![(1.0, 0.1), (2.0, 0.5), (3.0, 0.9)],
                band: Some(vec![(0.05, 0.15), (0.45, 0.55), (0.85, 0.95)]),
            }],
            y_range: Some((0.0, 1.0)),
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("<!-- data series: model"));
        assert!(svg.contains("2,0.5,0.45,0.55"));
        assert!(svg.contains("accuracy &lt;test&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn bar_chart_renders_all_groups() {
        let chart = BarChart {
            title: "decoding".into(),
            y_label: "accuracy".into(),
            categories: vec!["embed".into(), "gru1".into()],
            series: vec![("label".into(), vec![0.9, 0.8]), ("pos".into(), vec![0.5, 1.0])],
            y_range: (0.0, 1.0),
        };
        let svg = chart.render();
        assert_eq!(svg.matches("<rect").count(), 1 + 4 + 2); // bg + bars + legend
        assert!(svg.contains("gru1"));
    }
}
