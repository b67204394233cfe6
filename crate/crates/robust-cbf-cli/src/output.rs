//! Trajectory serialization: versioned CSV and a minimal hand-emitted SVG
//! line chart.

use std::fmt::Write as _;

use robust_cbf::sim::TrajectoryLog;

/// Schema version line written before the column header.
pub const CSV_VERSION_HEADER: &str = "# robust-cbf-traj v1";

fn field(value: f64) -> String {
    // Missing values are empty fields, never NaN text.
    if value.is_finite() {
        format!("{value}")
    } else {
        String::new()
    }
}

/// Render the fixed-schema trajectory CSV.
pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let first = log.records.first();
    let n = first.map_or(0, |r| r.xa.len());
    let m = first.map_or(0, |r| r.u.len());
    let p = first.map_or(0, |r| r.theta_hat.len());

    let mut out = String::new();
    out.push_str(CSV_VERSION_HEADER);
    out.push('\n');
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend((1..=n).map(|i| format!("xA_{i}")));
    cols.extend((1..=n).map(|i| format!("xR_{i}")));
    cols.extend((1..=m).map(|i| format!("u_{i}")));
    cols.extend(["h", "hdot", "margin", "lambda", "status", "eta"].map(String::from));
    cols.extend((1..=p).map(|i| format!("theta_hat_{i}")));
    cols.push("slack".into());
    out.push_str(&cols.join(","));
    out.push('\n');

    for r in &log.records {
        let mut row: Vec<String> = vec![field(r.time)];
        row.extend(r.xa.iter().map(|&v| field(v)));
        row.extend(r.xr.iter().map(|&v| field(v)));
        row.extend(r.u.iter().map(|&v| field(v)));
        row.push(field(r.h));
        row.push(field(r.hdot));
        row.push(field(r.margin));
        row.push(r.lambda.map(field).unwrap_or_default());
        row.push(r.status.to_string());
        row.push(field(r.eta));
        row.extend(r.theta_hat.iter().map(|&v| field(v)));
        row.push(r.slack.map(field).unwrap_or_default());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A minimal line chart of h(t) and η(t): axes, two polylines, labels.
pub fn trajectory_svg(log: &TrajectoryLog) -> String {
    const W: f64 = 800.0;
    const H: f64 = 420.0;
    const ML: f64 = 60.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 20.0;
    const MB: f64 = 50.0;

    let ts: Vec<f64> = log.records.iter().map(|r| r.time).collect();
    let hs: Vec<f64> = log.records.iter().map(|r| r.h).collect();
    let etas: Vec<f64> = log.records.iter().map(|r| r.eta).collect();
    let t_max = ts.last().copied().unwrap_or(1.0).max(1e-9);
    let y_min = hs
        .iter()
        .chain(etas.iter())
        .fold(0.0f64, |a, &v| a.min(v));
    let y_max = hs
        .iter()
        .chain(etas.iter())
        .fold(1e-9f64, |a, &v| a.max(v));
    let span = (y_max - y_min).max(1e-9);

    let sx = |t: f64| ML + (t / t_max) * (W - ML - MR);
    let sy = |v: f64| H - MB - ((v - y_min) / span) * (H - MT - MB);

    let polyline = |vals: &[f64]| -> String {
        ts.iter()
            .zip(vals)
            .map(|(&t, &v)| format!("{:.2},{:.2}", sx(t), sy(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    // axes
    let _ = write!(
        svg,
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB,
        H - MB
    );
    // zero line when visible
    if y_min < 0.0 {
        let _ = write!(
            svg,
            "<line x1=\"{ML}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"gray\" \
             stroke-dasharray=\"4 4\"/>\n",
            sy(0.0),
            W - MR
        );
    }
    let _ = write!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
        polyline(&hs)
    );
    let _ = write!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.5\"/>\n",
        polyline(&etas)
    );
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\">t [s] (0 to {t_max:.2})</text>\n\
         <text x=\"8\" y=\"{}\" font-size=\"13\" transform=\"rotate(-90 14 {})\">value</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#1f77b4\">h(t)</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#ff7f0e\">eta(t)</text>\n",
        W / 2.0 - 40.0,
        H - 14.0,
        H / 2.0,
        H / 2.0,
        W - 110.0,
        MT + 16.0,
        W - 110.0,
        MT + 34.0,
    );
    svg.push_str("</svg>\n");
    svg
}
