//! Minimal SVG curves of loss and accuracy per epoch.

use std::fmt::Write as _;

use hybrid_trainer::EpochRecord;

const W: f64 = 640.0;
const H: f64 = 240.0;
const PAD: f64 = 40.0;

fn polyline(points: &[(f64, f64)], x_max: f64, y_max: f64, top: f64, color: &str) -> String {
    let pts: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let px = PAD + (W - 2.0 * PAD) * x / x_max.max(1.0);
            let py = top + (H - 2.0 * PAD) * (1.0 - y / y_max.max(1e-12));
            format!("{px:.1},{py:.1}")
        })
        .collect();
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", pts.join(" "))
}

/// Two stacked panels: training losses, then evaluation accuracy.
pub fn svg(title: &str, epochs: &[EpochRecord]) -> String {
    let x_max = epochs.last().map_or(1, |e| e.epoch) as f64;
    let trained: Vec<&EpochRecord> = epochs.iter().filter(|e| e.epoch > 0).collect();
    let loss_max = trained.iter().map(|e| e.losses.l_grad.max(e.losses.l_total).abs()).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">", 2.0 * H);
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (i, (label, top)) in [("loss", 0.0), ("eval accuracy", H)].iter().enumerate() {
        let _ = writeln!(s, "<text x=\"{PAD}\" y=\"{}\">{}{}</text>", top + 20.0, if i == 0 { format!("{title}: ") } else { String::new() }, label);
        let _ = writeln!(s, "<rect x=\"{PAD}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>", top + PAD, W - 2.0 * PAD, H - 2.0 * PAD);
    }
    let pts = |f: fn(&EpochRecord) -> f64| trained.iter().map(|e| (e.epoch as f64, f(e))).collect::<Vec<_>>();
    s.push_str(&polyline(&pts(|e| e.losses.l_grad), x_max, loss_max, PAD, "#1f77b4"));
    s.push_str(&polyline(&pts(|e| e.losses.l_total), x_max, loss_max, PAD, "#ff7f0e"));
    let acc: Vec<(f64, f64)> = epochs.iter().map(|e| (e.epoch as f64, e.eval.accuracy)).collect();
    s.push_str(&polyline(&acc, x_max, 1.0, H + PAD, "#2ca02c"));
    let agree: Vec<(f64, f64)> = epochs.iter().filter_map(|e| e.eval.oracle_agreement.map(|a| (e.epoch as f64, a))).collect();
    if !agree.is_empty() {
        s.push_str(&polyline(&agree, x_max, 1.0, H + PAD, "#d62728"));
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"#1f77b4\">L_grad</text>", W - 120.0, PAD + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"#ff7f0e\">L_total</text>", W - 120.0, PAD + 28.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"#2ca02c\">accuracy</text>", W - 120.0, H + PAD + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"#d62728\">oracle agreement</text>", W - 120.0, H + PAD + 28.0);
    s.push_str("</svg>\n");
    s
}
