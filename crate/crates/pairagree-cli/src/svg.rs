//! Hand-emitted SVG plots: the Bland-Altman diagram and the power curve.
//! Coordinates are written with fixed precision so equal inputs always
//! produce byte-identical files.

use pairagree::agreement::BASummary;
use pairagree::sim::PowerPoint;
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 25.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    /// Expands both ranges by 5% so no marker sits on the border.
    fn padded(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Frame {
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).max(1e-9);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x_min, x_max) = pad(x_min, x_max);
        let (y_min, y_max) = pad(y_min, y_max);
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn tick_values(lo: f64, hi: f64) -> Vec<f64> {
    let n = 5;
    (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect()
}

fn open_svg(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>"
    );
    for v in tick_values(frame.x_min, frame.x_max) {
        let px = frame.px(v);
        let _ = writeln!(
            out,
            "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{v:.3}</text>",
            y0 + 18.0
        );
    }
    for v in tick_values(frame.y_min, frame.y_max) {
        let py = frame.py(v);
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>",
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn hline(out: &mut String, frame: &Frame, y: f64, dash: &str, label: &str) {
    let py = frame.py(y);
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.1}\" y1=\"{py:.1}\" x2=\"{x1:.1}\" y2=\"{py:.1}\" stroke=\"black\" stroke-dasharray=\"{dash}\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{label} {y:.3}</text>",
        x1 - 4.0,
        py - 4.0
    );
}

/// Bland-Altman diagram: one marker per subject, dashed mean-difference line
/// and dotted limits of agreement.
pub fn ba_svg(ba: &BASummary) -> String {
    let mut out = String::new();
    let avgs: Vec<f64> = ba.points.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = ba.points.iter().map(|p| p.2).collect();
    let fold = |acc: (f64, f64), v: &f64| (acc.0.min(*v), acc.1.max(*v));
    let (x_min, x_max) = avgs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), fold);
    let (mut y_min, mut y_max) = diffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), fold);
    y_min = y_min.min(ba.loa_low);
    y_max = y_max.max(ba.loa_high);
    let frame = Frame::padded(x_min, x_max, y_min, y_max);

    open_svg(&mut out);
    axes(
        &mut out,
        &frame,
        &format!("average ({} scale)", ba.scale.label()),
        "difference (method 1 - method 2)",
    );
    hline(&mut out, &frame, ba.mean_diff, "6 4", "mean");
    hline(&mut out, &frame, ba.loa_low, "2 3", "LoA");
    hline(&mut out, &frame, ba.loa_high, "2 3", "LoA");
    for p in &ba.points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"none\" stroke=\"#1f6fb4\"/>",
            frame.px(p.1),
            frame.py(p.2)
        );
    }
    out.push_str("</svg>\n");
    out
}

const SERIES_COLORS: [&str; 4] = ["#1f6fb4", "#c23b22", "#2a8f4e", "#7d4fa8"];

/// Rejection-rate curves over the method-1 effect grid, one polyline per
/// model spec, with a dashed reference line at the nominal level.
pub fn power_svg(points: &[PowerPoint], alpha: f64) -> String {
    let mut out = String::new();
    let (x_min, x_max) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.beta_1), a.1.max(p.beta_1))
    });
    let frame = Frame::padded(x_min, x_max, 0.0, 1.0);

    open_svg(&mut out);
    axes(&mut out, &frame, "method 1 effect", "rejection rate");
    hline(&mut out, &frame, alpha, "6 4", "level");

    let mut labels: Vec<&str> = Vec::new();
    for p in points {
        if !labels.contains(&p.spec_label.as_str()) {
            labels.push(&p.spec_label);
        }
    }
    for (si, label) in labels.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let mut series: Vec<&PowerPoint> = points
            .iter()
            .filter(|p| p.spec_label == *label)
            .collect();
        series.sort_by(|a, b| a.beta_1.partial_cmp(&b.beta_1).unwrap());
        let path: Vec<String> = series
            .iter()
            .map(|p| format!("{:.1},{:.1}", frame.px(p.beta_1), frame.py(p.rejection_rate)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        );
        for p in &series {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\"/>",
                frame.px(p.beta_1),
                frame.py(p.rejection_rate)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\">{label}</text>",
            MARGIN_LEFT + 10.0,
            MARGIN_TOP + 14.0 * (si as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}
