//! Self-contained SVG plots.
//!
//! Output is a pure function of the numeric input: fixed canvas, fixed
//! palette, coordinates rounded to 1/100 px, and stride-based
//! downsampling. No external assets; the only font reference is the
//! generic `sans-serif` family.

use std::fmt::Write;

use raceway_core::hydro::FlowField;
use raceway_core::LayerField;

const WIDTH: f64 = 900.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 26.0;
const MARGIN_BOTTOM: f64 = 54.0;
/// Longest polyline kept after downsampling; keeps files diffable.
const MAX_POINTS: usize = 1200;

const COLOR_SURFACE: &str = "#1f77b4";
const COLOR_BOTTOM: &str = "#8c510a";
const COLOR_LAYER: &str = "#b0b0b0";
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One labeled point series for [`sweep`].
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, top: f64, bottom: f64) -> Self {
        let (x0, x1) = pad_range(x0, x1, 0.0);
        let (y0, y1) = pad_range(y0, y1, 0.05);
        Self { x0, x1, y0, y1, top, bottom }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
    }
}

/// Widens a degenerate range and applies symmetric padding.
fn pad_range(lo: f64, hi: f64, frac: f64) -> (f64, f64) {
    let span = hi - lo;
    if span <= 0.0 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo - frac * span, hi + frac * span)
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

/// Short axis-tick label: plain decimal in a mid magnitude range,
/// scientific outside it.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".to_string() } else { s.to_string() }
    } else {
        format!("{v:.2e}")
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str, width: f64) {
    let _ = write!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\""
    );
    let stride = pts.len().div_ceil(MAX_POINTS).max(1);
    let mut k = 0;
    while k < pts.len() {
        let (x, y) = pts[k];
        let _ = write!(out, "{},{} ", fmt_px(frame.px(x)), fmt_px(frame.py(y)));
        if k + stride >= pts.len() && k + 1 != pts.len() {
            k = pts.len() - 1;
        } else {
            k += stride;
        }
    }
    out.push_str("\"/>\n");
}

fn circle(out: &mut String, frame: &Frame, x: f64, y: f64, color: &str) {
    let _ = write!(
        out,
        "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
        fmt_px(frame.px(x)),
        fmt_px(frame.py(y))
    );
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, size: u32, content: &str, extra: &str) {
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" \
         font-size=\"{size}\"{extra}>{}</text>\n",
        fmt_px(x),
        fmt_px(y),
        escape_text(content)
    );
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, frame: &Frame, x_ticks: &[f64], y_label: &str) {
    let _ = write!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000\"/>\n",
        fmt_px(MARGIN_LEFT),
        fmt_px(frame.top),
        fmt_px(WIDTH - MARGIN_LEFT - MARGIN_RIGHT),
        fmt_px(frame.bottom - frame.top)
    );
    for &tx in x_ticks {
        let px = frame.px(tx);
        let _ = write!(
            out,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000\"/>\n",
            fmt_px(px),
            fmt_px(frame.bottom),
            fmt_px(frame.bottom + 5.0)
        );
        text(out, px, frame.bottom + 18.0, "middle", 12, &fmt_tick(tx), "");
    }
    for k in 0..=4 {
        let ty = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
        let py = frame.py(ty);
        let _ = write!(
            out,
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#000\"/>\n",
            fmt_px(py),
            fmt_px(MARGIN_LEFT - 5.0),
            fmt_px(MARGIN_LEFT)
        );
        text(out, MARGIN_LEFT - 9.0, py + 4.0, "end", 12, &fmt_tick(ty), "");
    }
    let mid = (frame.top + frame.bottom) / 2.0;
    let extra = format!(" transform=\"rotate(-90 16 {})\"", fmt_px(mid));
    text(out, 16.0, mid, "middle", 13, y_label, &extra);
}

fn evenly_spaced_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}

fn header(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"{w}\" \
         height=\"{h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n",
        w = WIDTH,
        h = height
    )
}

/// Side view of the pond: bottom elevation, free surface, and the depth
/// trajectory of every layer against the along-pond coordinate.
pub fn topography(xs: &[f64], flow: &FlowField, layers: &LayerField) -> String {
    let height = 600.0;
    let y_min = flow.zb.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = flow.eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new(
        xs[0],
        xs[xs.len() - 1],
        y_min,
        y_max,
        MARGIN_TOP,
        height - MARGIN_BOTTOM,
    );

    let mut out = header(height);
    for n in 0..layers.rows() {
        let pts: Vec<(f64, f64)> =
            xs.iter().copied().zip(layers.row(n).iter().copied()).collect();
        polyline(&mut out, &frame, &pts, COLOR_LAYER, 0.8);
    }
    let zb_pts: Vec<(f64, f64)> = xs.iter().copied().zip(flow.zb.iter().copied()).collect();
    let eta_pts: Vec<(f64, f64)> = xs.iter().copied().zip(flow.eta.iter().copied()).collect();
    polyline(&mut out, &frame, &zb_pts, COLOR_BOTTOM, 2.0);
    polyline(&mut out, &frame, &eta_pts, COLOR_SURFACE, 2.0);

    axes(&mut out, &frame, &evenly_spaced_ticks(frame.x0, frame.x1, 5), "elevation [m]");
    text(&mut out, (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0, height - 14.0, "middle", 13, "x [m]", "");

    let legend = [
        (COLOR_SURFACE, "free surface"),
        (COLOR_BOTTOM, "bottom"),
        (COLOR_LAYER, "layer paths"),
    ];
    for (k, (color, label)) in legend.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 + 18.0 * k as f64;
        let _ = write!(
            out,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt_px(WIDTH - 190.0),
            fmt_px(y),
            fmt_px(WIDTH - 160.0)
        );
        text(&mut out, WIDTH - 152.0, y + 4.0, "start", 12, label, "");
    }
    out.push_str("</svg>\n");
    out
}

/// Two stacked panels sharing the x axis: the objective on top, the
/// gain ratios below. The x axis switches to a log10 scale when the
/// values span more than a factor of 20, which suits length sweeps over
/// decades.
pub fn sweep(x_label: &str, top: &Series, bottom: &[Series]) -> String {
    let height = 640.0;
    let all_x: Vec<f64> = top
        .points
        .iter()
        .chain(bottom.iter().flat_map(|s| s.points.iter()))
        .map(|p| p.0)
        .collect();
    let x_min = all_x.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = all_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_x = x_min > 0.0 && x_max / x_min >= 20.0;
    let tx = |x: f64| if log_x { x.log10() } else { x };

    let mut out = header(height);
    let panel = |out: &mut String, series: &[&Series], top_px: f64, bottom_px: f64| {
        let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
        let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let frame = Frame::new(tx(x_min), tx(x_max), y_min, y_max, top_px, bottom_px);
        for (k, s) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| (tx(x), y)).collect();
            polyline(out, &frame, &pts, color, 1.6);
            for &(x, y) in &pts {
                circle(out, &frame, x, y, color);
            }
            let y = top_px + 16.0 + 16.0 * k as f64;
            text(out, WIDTH - MARGIN_RIGHT - 8.0, y, "end", 12, &s.label, &format!(" fill=\"{color}\""));
        }
        // Ticks sit at the sample positions when the sweep is short.
        let mut tick_vals: Vec<f64> = all_x.clone();
        tick_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        tick_vals.dedup();
        if tick_vals.len() > 8 {
            tick_vals = evenly_spaced_ticks(x_min, x_max, 5);
        }
        for &v in &tick_vals {
            let px = frame.px(tx(v));
            let _ = write!(
                out,
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000\"/>\n",
                fmt_px(px),
                fmt_px(frame.bottom),
                fmt_px(frame.bottom + 5.0)
            );
            text(out, px, frame.bottom + 18.0, "middle", 12, &fmt_tick(v), "");
        }
        for k in 0..=3 {
            let tyv = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 3.0;
            let py = frame.py(tyv);
            let _ = write!(
                out,
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#000\"/>\n",
                fmt_px(py),
                fmt_px(MARGIN_LEFT - 5.0),
                fmt_px(MARGIN_LEFT)
            );
            text(out, MARGIN_LEFT - 9.0, py + 4.0, "end", 12, &fmt_tick(tyv), "");
        }
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000\"/>\n",
            fmt_px(MARGIN_LEFT),
            fmt_px(top_px),
            fmt_px(WIDTH - MARGIN_LEFT - MARGIN_RIGHT),
            fmt_px(bottom_px - top_px)
        );
    };

    panel(&mut out, &[top], MARGIN_TOP, 300.0);
    let refs: Vec<&Series> = bottom.iter().collect();
    panel(&mut out, &refs, 352.0, height - MARGIN_BOTTOM);
    text(&mut out, (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0, height - 14.0, "middle", 13, x_label, "");
    out.push_str("</svg>\n");
    out
}
