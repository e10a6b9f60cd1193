//! Minimal deterministic SVG charts: multi-series line plots (linear or
//! log y) and grouped bar charts. No timestamps, no randomness — identical
//! inputs give identical bytes.

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    } * mag;
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    log_y: bool,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log_y {
            (v.max(1e-300).log10(), self.y_lo, self.y_hi)
        } else {
            (v, self.y_lo, self.y_hi)
        };
        HEIGHT - MARGIN_B - (v - lo) / (hi - lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn chart_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut out = String::new();
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for t in nice_ticks(frame.x_lo, frame.x_hi, 8) {
        let x = frame.x(t);
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y0}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n\
             <text x=\"{x:.2}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y1,
            y0 + 16.0,
            fmt(t)
        ));
    }
    if frame.log_y {
        let lo = frame.y_lo.floor() as i64;
        let hi = frame.y_hi.ceil() as i64;
        for d in lo..=hi {
            let v = 10f64.powi(d as i32);
            let y = frame.y(v);
            if y < y1 - 1.0 || y > y0 + 1.0 {
                continue;
            }
            out.push_str(&format!(
                "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{x1}\" y2=\"{y:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{d}</text>\n",
                x0 - 6.0,
                y + 4.0
            ));
        }
    } else {
        for t in nice_ticks(frame.y_lo, frame.y_hi, 6) {
            let y = frame.y(t);
            out.push_str(&format!(
                "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{x1}\" y2=\"{y:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n\
                 <text x=\"{:.1}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                x0 - 6.0,
                fmt(t)
            ));
        }
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
    out
}

fn legend(labels: &[&str]) -> String {
    let mut out = String::new();
    for (k, label) in labels.iter().enumerate() {
        let x = MARGIN_L + 14.0 + 130.0 * k as f64;
        let y = MARGIN_T + 6.0;
        out.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"18\" height=\"4\" fill=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            PALETTE[k % PALETTE.len()],
            x + 24.0,
            y + 6.0,
            escape(label)
        ));
    }
    out
}

/// Min–max decimation preserving the envelope, deterministic.
fn decimate(points: &[(f64, f64)], max_points: usize) -> Vec<(f64, f64)> {
    if points.len() <= max_points {
        return points.to_vec();
    }
    let buckets = max_points / 2;
    let per = points.len() as f64 / buckets as f64;
    let mut out = Vec::with_capacity(max_points);
    for b in 0..buckets {
        let start = (b as f64 * per) as usize;
        let end = (((b + 1) as f64 * per) as usize).min(points.len());
        if start >= end {
            continue;
        }
        let slice = &points[start..end];
        let mut min = slice[0];
        let mut max = slice[0];
        for &p in slice {
            if p.1 < min.1 {
                min = p;
            }
            if p.1 > max.1 {
                max = p;
            }
        }
        if min.0 <= max.0 {
            out.push(min);
            if max != min {
                out.push(max);
            }
        } else {
            out.push(max);
            out.push(min);
        }
    }
    out
}

/// Multi-series line chart.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
) -> String {
    let decimated: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| decimate(s.points, 4000))
        .collect();
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for pts in &decimated {
        for &(x, y) in pts {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            if !log_y || y > 0.0 {
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
    }
    if !x_lo.is_finite() {
        x_lo = 0.0;
        x_hi = 1.0;
    }
    if !y_lo.is_finite() {
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if y_hi == y_lo {
        y_hi = y_lo + 1.0;
    }
    let frame = if log_y {
        Frame {
            x_lo,
            x_hi,
            y_lo: y_lo.max(1e-300).log10().floor(),
            y_hi: y_hi.log10().ceil(),
            log_y,
        }
    } else {
        let pad = 0.05 * (y_hi - y_lo);
        Frame {
            x_lo,
            x_hi,
            y_lo: y_lo - pad,
            y_hi: y_hi + pad,
            log_y,
        }
    };

    let mut out = chart_header(title);
    out.push_str(&axes(&frame, x_label, y_label));
    for (k, pts) in decimated.iter().enumerate() {
        let mut path = String::from("M");
        for (i, &(x, y)) in pts.iter().enumerate() {
            if log_y && y <= 0.0 {
                continue;
            }
            if i > 0 {
                path.push('L');
            }
            path.push_str(&format!("{:.2} {:.2}", frame.x(x), frame.y(y)));
        }
        out.push_str(&format!(
            "<path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n",
            PALETTE[k % PALETTE.len()]
        ));
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label).collect();
    out.push_str(&legend(&labels));
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group per bin, one bar per series.
pub struct BarSeries<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

pub fn grouped_bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    bin_centers: &[f64],
    series: &[BarSeries],
) -> String {
    let y_hi = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let x_lo = bin_centers.first().copied().unwrap_or(0.0);
    let x_hi = bin_centers.last().copied().unwrap_or(1.0);
    let spacing = if bin_centers.len() > 1 {
        bin_centers[1] - bin_centers[0]
    } else {
        1.0
    };
    let frame = Frame {
        x_lo: x_lo - spacing / 2.0,
        x_hi: x_hi + spacing / 2.0,
        y_lo: 0.0,
        y_hi: y_hi * 1.05,
        log_y: false,
    };
    let mut out = chart_header(title);
    out.push_str(&axes(&frame, x_label, y_label));
    let n_series = series.len().max(1) as f64;
    for (k, s) in series.iter().enumerate() {
        for (i, &v) in s.values.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let center = bin_centers[i];
            let group_w = frame.x(center + spacing / 2.0) - frame.x(center - spacing / 2.0);
            let bar_w = (group_w * 0.9 / n_series).max(0.5);
            let x = frame.x(center - spacing / 2.0) + group_w * 0.05 + bar_w * k as f64;
            let y = frame.y(v);
            let h = frame.y(0.0) - y;
            out.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
                PALETTE[k % PALETTE.len()]
            ));
        }
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label).collect();
    out.push_str(&legend(&labels));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_deterministic() {
        let pts: Vec<(f64, f64)> = (0..10_000)
            .map(|i| (i as f64, (i as f64 * 0.01).sin()))
            .collect();
        let series = [Series {
            label: "signal",
            points: &pts,
        }];
        let a = line_chart("t", "x", "y", &series, false);
        let b = line_chart("t", "x", "y", &series, false);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        // Decimation keeps the chart bounded.
        assert!(a.len() < 400_000);
    }

    #[test]
    fn log_axis_handles_decades() {
        let pts: Vec<(f64, f64)> = (1..1000).map(|i| (i as f64, 1.0 / i as f64)).collect();
        let svg = line_chart("spec", "f", "a", &[Series { label: "s", points: &pts }], true);
        assert!(svg.contains("1e-3"));
        assert!(svg.contains("1e0"));
    }

    #[test]
    fn bars_render_groups() {
        let centers = [0.0, 1.0, 2.0];
        let svg = grouped_bar_chart(
            "h",
            "x",
            "count",
            &centers,
            &[
                BarSeries { label: "A", values: &[1.0, 5.0, 2.0] },
                BarSeries { label: "B", values: &[2.0, 1.0, 4.0] },
            ],
        );
        assert!(svg.matches("<rect").count() >= 6);
    }
}
