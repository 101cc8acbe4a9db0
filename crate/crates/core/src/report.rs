//! Report directory rendering: CSV tables, SVG charts and a markdown summary.

use std::fmt::Write as _;
use std::path::Path;

use crate::alignment::SurprisalTable;
use crate::experiment::{AnalysisKind, Experiment};
use crate::pipeline::{write_file, AnalysisOutcome, DifferenceProfile, PipelineError, RunManifest};
use crate::stats::{self, CiSet};

pub const CONDITION_MEANS_HEADER: &str = "analysis,condition,mean_bits,ci_half_width,method";
pub const REGION_MEANS_HEADER: &str = "condition,region,mean_bits,ci_half_width";
pub const PROFILES_HEADER: &str = "analysis,region,difference_bits,ci_half_width";

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Number formatting shared by CSVs and chart labels.
pub fn fmt6(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn figure_name(analysis: &str) -> String {
    let safe: String = analysis
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("figures/{safe}.svg")
}

pub fn condition_means_csv(outcomes: &[AnalysisOutcome]) -> String {
    let mut out = format!("{CONDITION_MEANS_HEADER}\n");
    for o in outcomes {
        if let Some(ci) = &o.means {
            for (j, c) in ci.conditions.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&o.spec.name),
                    csv_field(c),
                    fmt6(ci.means[j]),
                    fmt6(ci.half_widths[j]),
                    ci.method
                );
            }
        }
    }
    out
}

pub fn profiles_csv(outcomes: &[AnalysisOutcome]) -> String {
    let mut out = format!("{PROFILES_HEADER}\n");
    for o in outcomes {
        if let Some(p) = &o.profile {
            for pt in &p.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    csv_field(&o.spec.name),
                    csv_field(&pt.region),
                    fmt6(pt.difference),
                    fmt6(pt.ci_half_width)
                );
            }
        }
    }
    out
}

/// Per-region condition means with within-item intervals over all conditions.
pub fn region_means(table: &SurprisalTable, exp: &Experiment) -> Result<Vec<(String, CiSet)>, PipelineError> {
    let conditions: Vec<String> = exp.enumerate_cells().iter().map(|k| k.canonical()).collect();
    exp.region_names()
        .into_iter()
        .map(|region| {
            let values = stats::item_condition_matrix(table, exp, &conditions, std::slice::from_ref(&region))?;
            Ok((region, stats::masson_loftus_ci(&conditions, &values)?))
        })
        .collect()
}

pub fn region_means_csv(means: &[(String, CiSet)]) -> String {
    let mut out = format!("{REGION_MEANS_HEADER}\n");
    if let Some((_, first)) = means.first() {
        for (j, c) in first.conditions.iter().enumerate() {
            for (region, ci) in means {
                let _ = writeln!(out, "{},{},{},{}", csv_field(c), csv_field(region), fmt6(ci.means[j]), fmt6(ci.half_widths[j]));
            }
        }
    }
    out
}

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn new(values: impl Iterator<Item = f64>) -> Frame {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-9 {
            hi = lo + 1.0;
        }
        let pad = (hi - lo) * 0.08;
        Frame {
            width: 640.0,
            height: 360.0,
            left: 70.0,
            right: 20.0,
            top: 40.0,
            bottom: 90.0,
            lo: if lo < 0.0 { lo - pad } else { lo },
            hi: hi + pad,
        }
    }

    fn y(&self, v: f64) -> f64 {
        let span = self.height - self.top - self.bottom;
        self.top + (self.hi - v) / (self.hi - self.lo) * span
    }

    fn plot_width(&self) -> f64 {
        self.width - self.left - self.right
    }

    fn open(&self, title: &str, axis: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n",
            w = self.width,
            h = self.height
        );
        let _ = writeln!(s, "<title>{}</title>", xml(title));
        let _ = writeln!(s, "<text x=\"{}\" y=\"20\" font-size=\"14\">{}</text>", self.left, xml(title));
        let x0 = self.left;
        let x1 = self.width - self.right;
        let zero = self.y(0.0);
        let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{:.2}\" x2=\"{x0}\" y2=\"{:.2}\" stroke=\"black\"/>", self.top, self.height - self.bottom);
        let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{zero:.2}\" x2=\"{x1}\" y2=\"{zero:.2}\" stroke=\"black\"/>");
        for k in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
            let _ = writeln!(s, "<text class=\"tick\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.2}</text>", x0 - 6.0, self.y(v) + 4.0);
        }
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{:.2}\" transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">{}</text>",
            self.height / 2.0,
            self.height / 2.0,
            xml(axis)
        );
        s
    }
}

fn whisker(s: &mut String, x: f64, frame: &Frame, mean: f64, half: f64) {
    if !half.is_finite() {
        return;
    }
    let (y0, y1) = (frame.y(mean - half), frame.y(mean + half));
    let _ = writeln!(s, "<line class=\"whisker\" x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>");
    for y in [y0, y1] {
        let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>", x - 5.0, x + 5.0);
    }
}

/// One bar per condition with within-item whiskers.
pub fn bar_chart_svg(title: &str, ci: &CiSet) -> String {
    let frame = Frame::new(ci.means.iter().zip(&ci.half_widths).flat_map(|(m, h)| [m + h, m - h]));
    let mut s = frame.open(title, "surprisal (bits)");
    let n = ci.conditions.len().max(1) as f64;
    let slot = frame.plot_width() / n;
    for (j, cond) in ci.conditions.iter().enumerate() {
        let mean = ci.means[j];
        let x = frame.left + slot * (j as f64 + 0.5);
        let (ya, yb) = (frame.y(mean), frame.y(0.0));
        let _ = writeln!(
            s,
            "<rect class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            x - slot * 0.35,
            ya.min(yb),
            slot * 0.7,
            (ya - yb).abs(),
            PALETTE[j % PALETTE.len()]
        );
        whisker(&mut s, x, &frame, mean, ci.half_widths[j]);
        let _ = writeln!(s, "<text class=\"value\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", frame.y(mean.max(0.0) + ci.half_widths[j].max(0.0)) - 4.0, fmt6(mean));
        let _ = writeln!(
            s,
            "<text class=\"label\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            frame.height - frame.bottom + 16.0,
            xml(cond)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Per-region difference line with whiskers.
pub fn profile_svg(title: &str, profile: &DifferenceProfile) -> String {
    let frame = Frame::new(profile.points.iter().flat_map(|p| [p.difference + p.ci_half_width, p.difference - p.ci_half_width]));
    let axis = format!("{} minus {} (bits)", profile.pair.0, profile.pair.1);
    let mut s = frame.open(title, &axis);
    let n = profile.points.len().max(1) as f64;
    let slot = frame.plot_width() / n;
    let xs: Vec<f64> = (0..profile.points.len()).map(|j| frame.left + slot * (j as f64 + 0.5)).collect();
    let path: Vec<String> = profile.points.iter().zip(&xs).map(|(p, x)| format!("{x:.2},{:.2}", frame.y(p.difference))).collect();
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>", path.join(" "), PALETTE[0]);
    for (pt, &x) in profile.points.iter().zip(&xs) {
        let _ = writeln!(s, "<circle class=\"point\" cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\"/>", frame.y(pt.difference), PALETTE[0]);
        whisker(&mut s, x, &frame, pt.difference, pt.ci_half_width);
        let _ = writeln!(
            s,
            "<text class=\"value\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            frame.y(pt.difference + pt.ci_half_width.max(0.0)) - 4.0,
            fmt6(pt.difference)
        );
        let _ = writeln!(
            s,
            "<text class=\"label\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"end\" transform=\"rotate(-30 {x:.2} {:.2})\">{}</text>",
            frame.height - frame.bottom + 16.0,
            frame.height - frame.bottom + 16.0,
            xml(&pt.region)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Lines of condition means across regions.
pub fn regions_svg(title: &str, means: &[(String, CiSet)]) -> String {
    let frame = Frame::new(means.iter().flat_map(|(_, ci)| ci.means.iter().zip(&ci.half_widths).flat_map(|(m, h)| [m + h, m - h]).collect::<Vec<_>>()));
    let mut s = frame.open(title, "surprisal (bits)");
    let n = means.len().max(1) as f64;
    let slot = frame.plot_width() / n;
    let xs: Vec<f64> = (0..means.len()).map(|j| frame.left + slot * (j as f64 + 0.5)).collect();
    let conditions = means.first().map(|(_, ci)| ci.conditions.clone()).unwrap_or_default();
    for (c, cond) in conditions.iter().enumerate() {
        let colour = PALETTE[c % PALETTE.len()];
        let path: Vec<String> = means.iter().zip(&xs).map(|((_, ci), x)| format!("{x:.2},{:.2}", frame.y(ci.means[c]))).collect();
        let _ = writeln!(s, "<polyline class=\"condition\" points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"/>", path.join(" "));
        for ((_, ci), &x) in means.iter().zip(&xs) {
            whisker(&mut s, x + (c as f64 - conditions.len() as f64 / 2.0) * 3.0, &frame, ci.means[c], ci.half_widths[c]);
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{colour}\">{}</text>",
            frame.width - frame.right - 150.0,
            frame.top + 14.0 * c as f64,
            xml(cond)
        );
    }
    for ((region, _), &x) in means.iter().zip(&xs) {
        let y = frame.height - frame.bottom + 16.0;
        let _ = writeln!(s, "<text class=\"label\" x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"end\" transform=\"rotate(-30 {x:.2} {y:.2})\">{}</text>", xml(region));
    }
    s.push_str("</svg>\n");
    s
}

fn conventions() -> &'static str {
    "## Conventions\n\n\
- Surprisal is in bits. A region's value is the sum over the tokens whose first character lies in it; a token starting on a joining space belongs to the following region; empty regions sum to 0.\n\
- Factors are sum coded: the first declared level is +1 and the second -1. Main-effect coefficients are half the difference between levels; interaction coefficients are a quarter of the difference of differences.\n\
- Regressions are linear mixed models with by-item random intercepts, fit by REML. t tests use df = n - p - (m - 1) for n observations, p fixed effects and m items.\n\
- Contrast analyses regress on the contrast weights using only the conditions with nonzero weight.\n\
- Error bars are 95% within-item (Masson-Loftus) intervals: item means are subtracted before the condition-by-item interaction mean square is computed. No Morey correction is applied.\n\
- Difference profiles report the mean by-item difference per region, a paired t test (df = m - 1) and the within-item half-width for the two conditions.\n"
}

fn means_markdown(ci: &CiSet) -> String {
    let mut out = String::from("| condition | mean (bits) | 95% half-width |\n|---|---|---|\n");
    for (j, c) in ci.conditions.iter().enumerate() {
        let _ = writeln!(out, "| {c} | {} | {} |", fmt6(ci.means[j]), fmt6(ci.half_widths[j]));
    }
    out
}

pub fn report_markdown(exp: &Experiment, outcomes: &[AnalysisOutcome], manifest: Option<&RunManifest>) -> String {
    let mut out = format!("# {}\n\n", exp.name);
    let _ = writeln!(
        out,
        "{} items, {} conditions, {} regions, {} mode.\n",
        exp.items.len(),
        exp.enumerate_cells().len(),
        exp.regions.len(),
        exp.mode
    );
    if let Some(m) = manifest {
        let _ = writeln!(out, "## Run\n");
        let _ = writeln!(out, "- backend: {} ({}, {} mode)", m.backend_id, m.backend_kind, m.mode);
        let _ = writeln!(out, "- seed: {}", m.seed);
        let _ = writeln!(out, "- flags: {}", m.flags.join(", "));
        let _ = writeln!(out, "- input hash: `{}`\n", m.input_hash);
    }
    out.push_str(conventions());
    out.push_str("\nRegion means for every condition: `region_means.csv`, chart `figures/regions.svg`.\n\n");
    if outcomes.is_empty() {
        out.push_str("## Analyses\n\nNo analyses are declared for this experiment.\n");
        return out;
    }
    out.push_str("## Analyses\n");
    for o in outcomes {
        let _ = writeln!(out, "\n### {}\n", o.spec.name);
        let target = if o.spec.regions.is_empty() { "all regions".to_string() } else { o.spec.regions.join(" + ") };
        let what = match &o.spec.kind {
            AnalysisKind::MainEffect { factor } => format!("main effect of {factor}"),
            AnalysisKind::Interaction { factors } => format!("{} x {} interaction", factors[0], factors[1]),
            AnalysisKind::Contrast { weights } => {
                let w: Vec<String> = weights.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                format!("contrast ({})", w.join(", "))
            }
            AnalysisKind::DifferenceProfile { pair } => format!("difference profile {} minus {}", pair.0, pair.1),
        };
        let _ = writeln!(out, "{what}, over {target}.\n");
        out.push_str(&stats::results_markdown(&o.rows));
        if let Some(ci) = &o.means {
            out.push('\n');
            out.push_str(&means_markdown(ci));
        }
        let _ = writeln!(out, "\n![{}]({})", o.spec.name, figure_name(&o.spec.name));
    }
    out
}

/// Writes every report artifact into `dir`.
pub fn write_report(
    dir: &Path,
    exp: &Experiment,
    table: &SurprisalTable,
    outcomes: &[AnalysisOutcome],
    manifest: Option<&RunManifest>,
) -> Result<(), PipelineError> {
    let rows: Vec<stats::ResultRow> = outcomes.iter().flat_map(|o| o.rows.clone()).collect();
    let regions = region_means(table, exp)?;
    write_file(dir, "surprisals.csv", &table.to_csv())?;
    if !table.details().is_empty() {
        write_file(dir, "surprisal_tokens.tsv", &table.details_tsv())?;
    }
    write_file(dir, "results.csv", &stats::results_csv(&rows))?;
    write_file(dir, "condition_means.csv", &condition_means_csv(outcomes))?;
    write_file(dir, "region_means.csv", &region_means_csv(&regions))?;
    write_file(dir, "profiles.csv", &profiles_csv(outcomes))?;
    write_file(dir, "figures/regions.svg", &regions_svg(&format!("{}: surprisal by region", exp.name), &regions))?;
    for o in outcomes {
        let svg = match (&o.means, &o.profile) {
            (_, Some(p)) => profile_svg(&o.spec.name, p),
            (Some(ci), None) => bar_chart_svg(&o.spec.name, ci),
            (None, None) => continue,
        };
        write_file(dir, &figure_name(&o.spec.name), &svg)?;
    }
    write_file(dir, "report.md", &report_markdown(exp, outcomes, manifest))?;
    if let Some(m) = manifest {
        write_file(dir, "manifest.json", &m.to_json())?;
    }
    Ok(())
}
