//! Run artifacts: CSV tables, SVG line plots and the summary file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::timeseries::SimTrace;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the run that produced an artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub scale_factor: f64,
}

impl Provenance {
    fn header(&self) -> String {
        format!(
            "# noiselock {VERSION}\n# experiment = {}\n# config_hash = {}\n# seed = {}\n# scale_factor = {:?}\n",
            self.experiment, self.config_hash, self.seed, self.scale_factor
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut s = prov.header();
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// A line plot drawn from table columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
    pub log_x: bool,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl Plot {
    pub fn to_svg(&self) -> String {
        let (w, h) = (720.0, 440.0);
        let (left, right, top, bottom) = (80.0, 170.0, 40.0, 60.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|(_, p)| p.iter().copied())
            .filter(|&(x, y)| tx(x).is_finite() && y.is_finite())
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &pts {
            x0 = x0.min(tx(x));
            x1 = x1.max(tx(x));
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let pw = w - left - right;
        let ph = h - top - bottom;
        let sx = |x: f64| left + (tx(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            h - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let label_x = if self.log_x { 10f64.powf(xv) } else { xv };
            let px = left + f * pw;
            let py = top + (1.0 - f) * ph;
            let _ = writeln!(
                s,
                r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
                top + ph + 18.0,
                tick(label_x)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 6.0,
                py + 4.0,
                tick(yv)
            );
        }
        for (i, (label, p)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = p
                .iter()
                .filter(|&&(x, y)| tx(x).is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
            let ly = top + 16.0 + 18.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                w - right + 10.0,
                w - right + 30.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                w - right + 36.0,
                ly + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One verdict against a declared tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// The bound `measured` was compared with.
    pub bound: f64,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            measured,
            bound,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub provenance: Provenance,
    pub metrics: Vec<(String, f64)>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            provenance,
            metrics: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// `key = value` text in the configuration format.
    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let mut s = format!("# noiselock {VERSION} run summary\n");
        let _ = writeln!(s, "experiment = {}", p.experiment);
        let _ = writeln!(s, "config_hash = {}", p.config_hash);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "scale_factor = {:?}", p.scale_factor);
        let _ = writeln!(s, "verdict = {}", if self.passed() { "pass" } else { "fail" });
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        s.push_str("\n[metrics]\n");
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        s.push_str("\n[checks]\n");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} = {} measured={:?} bound={:?}  # {}",
                c.name,
                if c.passed { "pass" } else { "fail" },
                c.measured,
                c.bound,
                c.detail
            );
        }
        s
    }
}

/// Everything an experiment produced, before it is written out.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: Summary,
    pub tables: Vec<Table>,
    pub traces: Vec<(String, SimTrace)>,
    pub plots: Vec<Plot>,
}

impl Outcome {
    pub fn new(summary: Summary) -> Self {
        Self {
            summary,
            tables: Vec::new(),
            traces: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `config.txt`, `summary.txt`, one CSV per table and trace, and
    /// one SVG per plot into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, config_text: &str) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let prov = &self.summary.provenance;
        let mut written = Vec::new();
        let mut put = |name: String, body: &[u8]| -> Result<()> {
            fs::write(dir.join(&name), body)?;
            written.push(name);
            Ok(())
        };
        put("config.txt".into(), config_text.as_bytes())?;
        for t in &self.tables {
            put(format!("{}.csv", t.name), t.to_csv(prov).as_bytes())?;
        }
        for (name, trace) in &self.traces {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf, VERSION)?;
            put(format!("{name}.csv"), &buf)?;
        }
        for p in &self.plots {
            put(format!("{}.svg", p.name), p.to_svg().as_bytes())?;
        }
        put("summary.txt".into(), self.summary.to_text().as_bytes())?;
        Ok(written)
    }
}

/// Reads a table written by [`Table::to_csv`], skipping `#` lines.
pub fn read_table(name: &str, text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Input("empty CSV".into()))?;
    let mut t = Table {
        name: name.into(),
        columns: header.split(',').map(String::from).collect(),
        rows: Vec::new(),
    };
    for (i, l) in lines.enumerate() {
        let row = l
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Input(format!("CSV row {} is not numeric", i + 1)))?;
        if row.len() != t.columns.len() {
            return Err(Error::Input(format!("CSV row {} has {} fields", i + 1, row.len())));
        }
        t.rows.push(row);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            experiment: "sweep_theta".into(),
            config_hash: "ab".repeat(32),
            seed: 7,
            scale_factor: 0.01,
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let mut t = Table::new("curve", &["theta", "error"]);
        t.push(vec![0.0, -1.5e-7]);
        t.push(vec![0.1, f64::NAN]);
        let text = t.to_csv(&prov());
        assert!(text.starts_with("# noiselock "));
        assert!(text.contains("# config_hash = abab"));
        assert!(text.contains("# seed = 7"));
        let back = read_table("curve", &text).unwrap();
        assert_eq!(back.rows[0], t.rows[0]);
        assert!(back.rows[1][1].is_nan());
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let p = Plot {
            name: "p".into(),
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                ("one".into(), vec![(1.0, 1.0), (10.0, 2.0)]),
                ("two".into(), vec![(1.0, 0.5), (100.0, f64::NAN)]),
            ],
            log_x: true,
        };
        let svg = p.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn summary_verdict_follows_checks() {
        let mut s = Summary::new(prov());
        s.metric("a", 1.0);
        s.check(Check::new("ok", true, 1.0, 2.0, "below"));
        assert!(s.to_text().contains("verdict = pass"));
        s.check(Check::new("bad", false, 3.0, 2.0, "above"));
        let text = s.to_text();
        assert!(text.contains("verdict = fail"));
        assert!(text.contains("scale_factor = 0.01"));
        assert_eq!(s.get("a"), Some(1.0));
    }
}
