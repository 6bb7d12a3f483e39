//! Minimal static SVG histogram emission for the analyze reports.

/// Renders a histogram of `values` into an SVG document.
pub fn histogram_svg(values: &[f64], bins: usize, title: &str, x_label: &str) -> String {
    let (width, height, margin) = (640.0, 400.0, 50.0);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    ));

    if values.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
             text-anchor=\"middle\">no data</text>\n",
            width / 2.0,
            height / 2.0
        ));
        svg.push_str("</svg>\n");
        return svg;
    }

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if (hi - lo).abs() < 1e-12 { 1.0 } else { hi - lo };
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut idx = ((v - lo) / span * bins as f64) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    let peak = *counts.iter().max().unwrap() as f64;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let bar_w = plot_w / bins as f64;
    for (i, &count) in counts.iter().enumerate() {
        let bar_h = plot_h * count as f64 / peak;
        let x = margin + i as f64 * bar_w;
        let y = height - margin - bar_h;
        svg.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{bar_h:.2}\" \
             fill=\"#4878a8\"/>\n",
            bar_w * 0.92
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - margin,
        width - margin,
        height - margin
    ));
    svg.push_str(&format!(
        "<text x=\"{margin}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{lo:.3}</text>\n",
        height - margin + 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"end\">{hi:.3}</text>\n",
        width - margin,
        height - margin + 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        width / 2.0,
        height - 12.0
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_is_deterministic_svg() {
        let values = vec![1.0, 2.0, 2.5, 3.0, 3.0, 4.0];
        let a = histogram_svg(&values, 8, "demo", "value");
        let b = histogram_svg(&values, 8, "demo", "value");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("rect"));
    }

    #[test]
    fn empty_input_yields_placeholder() {
        let svg = histogram_svg(&[], 8, "empty", "value");
        assert!(svg.contains("no data"));
    }
}
