//! Minimal SVG renderers for outer-product heatmaps and wavelet
//! spectrograms. Static documents, no styling dependencies.

use ces_core::spectral::{CrossSpectrum, WaveletSpectrum};
use ces_core::tensor::LabeledMatrix;
use ndarray::Array2;
use std::fmt::Write;

fn color_ramp(t: f64) -> String {
    // dark blue -> teal -> yellow
    let anchors = [(13, 8, 135), (33, 145, 140), (253, 231, 37)];
    let t = t.clamp(0.0, 1.0) * (anchors.len() - 1) as f64;
    let i = (t.floor() as usize).min(anchors.len() - 2);
    let frac = t - i as f64;
    let lerp = |a: i32, b: i32| (a as f64 + frac * (b - a) as f64).round() as i32;
    let (r, g, b) = (
        lerp(anchors[i].0, anchors[i + 1].0),
        lerp(anchors[i].1, anchors[i + 1].1),
        lerp(anchors[i].2, anchors[i + 1].2),
    );
    format!("rgb({r},{g},{b})")
}

fn diverging_ramp(t: f64) -> String {
    // blue -> white -> red over [-1, 1]
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let f = 1.0 + t;
        (
            (33.0 + f * (255.0 - 33.0)) as i32,
            (102.0 + f * (255.0 - 102.0)) as i32,
            (172.0 + f * (255.0 - 172.0)) as i32,
        )
    } else {
        let f = 1.0 - t;
        (
            (178.0 + f * (255.0 - 178.0)) as i32,
            (24.0 + f * (255.0 - 24.0)) as i32,
            (43.0 + f * (255.0 - 43.0)) as i32,
        )
    };
    format!("rgb({r},{g},{b})")
}

/// Heatmap of a labeled matrix on a diverging scale centered at zero.
pub fn heatmap(matrix: &LabeledMatrix, title: &str) -> String {
    let cell = 28.0;
    let left = 170.0;
    let top = 60.0;
    let rows = matrix.row_labels.len();
    let cols = matrix.col_labels.len();
    let width = left + cols as f64 * cell + 20.0;
    let height = top + rows as f64 * cell + 120.0;
    let max_abs = matrix
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(
        svg,
        r#"<text x="{left}" y="24" font-size="15">{title}</text>"#
    );
    for (i, value) in matrix.values.indexed_iter() {
        let (r, c) = i;
        let x = left + c as f64 * cell;
        let y = top + r as f64 * cell;
        let color = diverging_ramp(*value / max_abs);
        let _ = write!(
            svg,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{color}" stroke="white" stroke-width="0.5"><title>{} x {}: {value:.6}</title></rect>"#,
            matrix.row_labels[r], matrix.col_labels[c]
        );
    }
    for (r, label) in matrix.row_labels.iter().enumerate() {
        let y = top + r as f64 * cell + cell * 0.65;
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{label}</text>"#,
            left - 6.0
        );
    }
    for (c, label) in matrix.col_labels.iter().enumerate() {
        let x = left + c as f64 * cell + cell * 0.65;
        let y = top + rows as f64 * cell + 6.0;
        let _ = write!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" transform="rotate(60 {x:.1} {y:.1})">{label}</text>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}

struct Grid {
    left: f64,
    top: f64,
    plot_w: f64,
    plot_h: f64,
    num_times: usize,
    num_scales: usize,
}

impl Grid {
    fn x(&self, t: usize) -> f64 {
        self.left + self.plot_w * t as f64 / self.num_times as f64
    }
    fn y(&self, j: usize) -> f64 {
        self.top + self.plot_h * j as f64 / self.num_scales as f64
    }
    fn cell_w(&self) -> f64 {
        self.plot_w / self.num_times as f64
    }
    fn cell_h(&self) -> f64 {
        self.plot_h / self.num_scales as f64
    }
}

fn spectrogram_body(
    svg: &mut String,
    grid: &Grid,
    power: &Array2<f64>,
    significant: &Array2<bool>,
    periods: &[f64],
    coi: &[f64],
    start: chrono::NaiveDate,
) {
    let max_power = power.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    // log-scaled power colors; cells as rects (periods ascend downward)
    for j in 0..grid.num_scales {
        for t in 0..grid.num_times {
            let p = power[[j, t]];
            let scale = ((p / max_power).max(1e-6).log10() + 6.0) / 6.0;
            let color = color_ramp(scale);
            let _ = write!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.3}" height="{:.3}" fill="{color}"/>"#,
                grid.x(t),
                grid.y(j),
                grid.cell_w() + 0.05,
                grid.cell_h() + 0.05,
            );
        }
    }
    // significance contours: outline significant cells (white)
    for j in 0..grid.num_scales {
        for t in 0..grid.num_times {
            if significant[[j, t]] {
                let on_edge = |jj: isize, tt: isize| -> bool {
                    jj < 0
                        || tt < 0
                        || jj as usize >= grid.num_scales
                        || tt as usize >= grid.num_times
                        || !significant[[jj as usize, tt as usize]]
                };
                let (j, t) = (j as isize, t as isize);
                if on_edge(j - 1, t) || on_edge(j + 1, t) || on_edge(j, t - 1) || on_edge(j, t + 1)
                {
                    let _ = write!(
                        svg,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.3}" height="{:.3}" fill="none" stroke="white" stroke-width="0.8"/>"#,
                        grid.x(t as usize),
                        grid.y(j as usize),
                        grid.cell_w(),
                        grid.cell_h(),
                    );
                }
            }
        }
    }
    // cone of influence: connect the largest reliable period per time
    let mut path = String::from("M");
    for t in 0..grid.num_times {
        let boundary = periods.iter().position(|&p| p > coi[t]).unwrap_or(grid.num_scales);
        let y = grid.top + grid.plot_h * boundary as f64 / grid.num_scales as f64;
        let _ = write!(path, " {:.1},{:.1}", grid.x(t), y);
    }
    let _ = write!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="4 3" stroke-width="1.2"/>"#,
        path.trim_start_matches('M').trim()
    );
    // axes: period labels on powers of two, a few date ticks
    for (j, period) in periods.iter().enumerate() {
        let rounded = period.log2().round();
        if (period.log2() - rounded).abs() < 1e-9 || j == 0 || j == grid.num_scales - 1 {
            let _ = write!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{period:.0}d</text>"#,
                grid.left - 4.0,
                grid.y(j) + grid.cell_h()
            );
        }
    }
    let ticks = 6usize;
    for k in 0..=ticks {
        let t = (grid.num_times - 1) * k / ticks;
        let date = start + chrono::Days::new(t as u64);
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{date}</text>"#,
            grid.x(t),
            grid.top + grid.plot_h + 16.0
        );
    }
}

/// Power spectrogram with significance contours and the cone of influence.
pub fn spectrogram(spectrum: &WaveletSpectrum, alpha: f64, title: &str) -> String {
    let grid = Grid {
        left: 60.0,
        top: 40.0,
        plot_w: 760.0,
        plot_h: 360.0,
        num_times: spectrum.num_times(),
        num_scales: spectrum.num_scales(),
    };
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="860" height="460" font-family="sans-serif">"#
    );
    let _ = write!(svg, r#"<text x="60" y="24" font-size="15">{title}</text>"#);
    spectrogram_body(
        &mut svg,
        &grid,
        &spectrum.power(),
        &spectrum.significance(alpha),
        &spectrum.periods,
        &spectrum.coi,
        spectrum.start,
    );
    svg.push_str("</svg>\n");
    svg
}

/// Cross spectrogram: coherence colors, significance contours, COI, and
/// down-sampled phase arrows (right-pointing = in phase).
pub fn cross_spectrogram(cross: &CrossSpectrum, title: &str) -> String {
    let grid = Grid {
        left: 60.0,
        top: 40.0,
        plot_w: 760.0,
        plot_h: 360.0,
        num_times: cross.num_times(),
        num_scales: cross.num_scales(),
    };
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="860" height="460" font-family="sans-serif">"#
    );
    let _ = write!(svg, r#"<text x="60" y="24" font-size="15">{title}</text>"#);
    spectrogram_body(
        &mut svg,
        &grid,
        &cross.coherence,
        &cross.significance,
        &cross.periods,
        &cross.coi,
        cross.start,
    );
    // phase arrows on a sparse lattice, only inside the cone
    let step_t = (grid.num_times / 24).max(1);
    let step_j = (grid.num_scales / 12).max(1);
    let arm = 7.0;
    for j in (0..grid.num_scales).step_by(step_j) {
        for t in (0..grid.num_times).step_by(step_t) {
            let phase = cross.phase[[j, t]];
            if !cross.in_coi(j, t) || !phase.is_finite() {
                continue;
            }
            let cx = grid.x(t) + grid.cell_w() / 2.0;
            let cy = grid.y(j) + grid.cell_h() / 2.0;
            // screen y grows downward; positive phase points up-right
            let (dx, dy) = (phase.cos() * arm, -phase.sin() * arm);
            let _ = write!(
                svg,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="1" marker-end="url(#arrow)"/>"#,
                cx - dx,
                cy - dy,
                cx + dx,
                cy + dy
            );
        }
    }
    svg.push_str(
        r#"<defs><marker id="arrow" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="black"/></marker></defs>"#,
    );
    svg.push_str("</svg>\n");
    svg
}
