//! Self-contained SVG rendering of sweep curves. The renderer is a pure
//! function of the CSV text it is given, so identical input bytes always
//! produce identical output bytes.

use anyhow::{bail, Context, Result};

struct ParsedSweep {
    points: Vec<(f64, f64)>,
    lambda_u: f64,
}

fn parse_sweep_csv(csv_text: &str) -> Result<ParsedSweep> {
    let mut lines = csv_text.lines();
    let header = lines.next().context("empty CSV: no header")?;
    if header.trim() != "phi,lambda,converged,lambda_u" {
        bail!("unexpected CSV header: {header}");
    }
    let mut points = Vec::new();
    let mut lambda_u = None;
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("row {} has {} fields, expected 4", idx + 2, fields.len());
        }
        let phi: f64 = fields[0]
            .trim()
            .parse()
            .with_context(|| format!("row {}: bad phi", idx + 2))?;
        let lambda: f64 = fields[1]
            .trim()
            .parse()
            .with_context(|| format!("row {}: bad lambda", idx + 2))?;
        let converged = fields[2].trim() == "1";
        let reference: f64 = fields[3]
            .trim()
            .parse()
            .with_context(|| format!("row {}: bad reference value", idx + 2))?;
        lambda_u.get_or_insert(reference);
        if converged && lambda.is_finite() {
            points.push((phi, lambda));
        }
    }
    let lambda_u = lambda_u.context("CSV has no data rows")?;
    Ok(ParsedSweep { points, lambda_u })
}

/// Render the sweep curve with a horizontal reference line. Fails (writing
/// nothing) unless at least two converged rows are present.
pub fn render_sweep_svg(csv_text: &str) -> Result<String> {
    let sweep = parse_sweep_csv(csv_text)?;
    if sweep.points.len() < 2 {
        bail!(
            "need at least 2 converged rows to draw a curve, got {}",
            sweep.points.len()
        );
    }

    const WIDTH: f64 = 800.0;
    const HEIGHT: f64 = 500.0;
    const LEFT: f64 = 85.0;
    const RIGHT: f64 = 780.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 440.0;

    let x_min = sweep.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = sweep
        .points
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut y_min = sweep
        .points
        .iter()
        .map(|p| p.1)
        .fold(sweep.lambda_u, f64::min);
    let mut y_max = sweep
        .points
        .iter()
        .map(|p| p.1)
        .fold(sweep.lambda_u, f64::max);
    let y_pad = ((y_max - y_min) * 0.08).max(1e-6 + 0.02 * y_max.abs().max(y_min.abs()));
    y_min -= y_pad;
    y_max += y_pad;
    let x_span = (x_max - x_min).max(1e-12);
    let y_span = y_max - y_min;

    let to_x = |v: f64| LEFT + (v - x_min) / x_span * (RIGHT - LEFT);
    let to_y = |v: f64| BOTTOM - (v - y_min) / y_span * (BOTTOM - TOP);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{LEFT:.3}\" y1=\"{BOTTOM:.3}\" x2=\"{RIGHT:.3}\" y2=\"{BOTTOM:.3}\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{LEFT:.3}\" y1=\"{TOP:.3}\" x2=\"{LEFT:.3}\" y2=\"{BOTTOM:.3}\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n"
    ));

    // Ticks and labels.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let v = x_min + frac * x_span;
        let x = to_x(v);
        svg.push_str(&format!(
            "<line x1=\"{x:.3}\" y1=\"{BOTTOM:.3}\" x2=\"{x:.3}\" y2=\"{:.3}\" \
             stroke=\"#333333\" stroke-width=\"1\"/>\n",
            BOTTOM + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"13\" \
             fill=\"#333333\" text-anchor=\"middle\">{v:.3}</text>\n",
            BOTTOM + 22.0
        ));
    }
    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let v = y_min + frac * y_span;
        let y = to_y(v);
        svg.push_str(&format!(
            "<line x1=\"{:.3}\" y1=\"{y:.3}\" x2=\"{LEFT:.3}\" y2=\"{y:.3}\" \
             stroke=\"#333333\" stroke-width=\"1\"/>\n",
            LEFT - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"13\" \
             fill=\"#333333\" text-anchor=\"end\">{v:.4}</text>\n",
            LEFT - 9.0,
            y + 4.5
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"15\" \
         fill=\"#333333\" text-anchor=\"middle\">phase shift</text>\n",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"15\" fill=\"#333333\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.3})\">growth rate</text>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    ));

    // Reference line for uniform delivery.
    let y_ref = to_y(sweep.lambda_u);
    svg.push_str(&format!(
        "<line x1=\"{LEFT:.3}\" y1=\"{y_ref:.3}\" x2=\"{RIGHT:.3}\" y2=\"{y_ref:.3}\" \
         stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"7 5\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.3}\" y=\"{:.3}\" font-family=\"sans-serif\" font-size=\"13\" \
         fill=\"#c0392b\" text-anchor=\"end\">uniform: {:.6}</text>\n",
        RIGHT - 4.0,
        y_ref - 6.0,
        sweep.lambda_u
    ));

    // The curve itself.
    let mut path = String::new();
    for (i, (phi, lambda)) in sweep.points.iter().enumerate() {
        if i > 0 {
            path.push(' ');
        }
        path.push_str(&format!("{:.3},{:.3}", to_x(*phi), to_y(*lambda)));
    }
    svg.push_str(&format!(
        "<polyline points=\"{path}\" fill=\"none\" stroke=\"#2b6cb0\" stroke-width=\"2\"/>\n"
    ));
    for (phi, lambda) in &sweep.points {
        svg.push_str(&format!(
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2.6\" fill=\"#2b6cb0\"/>\n",
            to_x(*phi),
            to_y(*lambda)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_csv() -> String {
        let mut csv = String::from("phi,lambda,converged,lambda_u\n");
        csv.push_str("0.0,0.5,1,0.5\n");
        csv.push_str("0.5,0.5,1,0.5\n");
        csv
    }

    #[test]
    fn flat_two_point_sweep_renders_line_on_reference() {
        let svg = render_sweep_svg(&flat_csv()).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("stroke-dasharray"));
        // Flat curve at the reference: the polyline's y must equal the
        // reference line's y.
        let y_ref = svg
            .split("stroke-dasharray")
            .next()
            .unwrap()
            .rsplit("y1=\"")
            .next()
            .unwrap();
        let y_ref: f64 = y_ref.split('"').next().unwrap().parse().unwrap();
        let points = svg.split("points=\"").nth(1).unwrap();
        let first_y: f64 = points
            .split(' ')
            .next()
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert!((first_y - y_ref).abs() < 1e-6);
    }

    #[test]
    fn empty_csv_is_an_error() {
        assert!(render_sweep_svg("").is_err());
        assert!(render_sweep_svg("phi,lambda,converged,lambda_u\n").is_err());
    }

    #[test]
    fn single_point_is_an_error() {
        let csv = "phi,lambda,converged,lambda_u\n0.0,0.5,1,0.5\n";
        assert!(render_sweep_svg(csv).is_err());
    }

    #[test]
    fn non_converged_rows_are_skipped() {
        let mut csv = flat_csv();
        csv.push_str("0.75,NaN,0,0.5\n");
        let svg = render_sweep_svg(&csv).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn identical_input_gives_identical_output() {
        let a = render_sweep_svg(&flat_csv()).unwrap();
        let b = render_sweep_svg(&flat_csv()).unwrap();
        assert_eq!(a, b);
    }
}
