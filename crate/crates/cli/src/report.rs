//! Human-readable rendering of an artifact directory, plus two-column data
//! files for gnuplot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::output::{read_manifest, Manifest, RESULTS};

/// A parsed `results.csv`.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, String> {
        let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let header = r
            .headers()
            .map_err(|e| format!("{}: {e}", path.display()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn get<'a>(&self, row: &'a [String], name: &str) -> &'a str {
        self.col(name).and_then(|i| row.get(i)).map_or("", String::as_str)
    }
}

/// Compact rendering of a 17-digit float field.
fn short(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x != 0.0 && (x.abs() >= 1e6 || x.abs() < 1e-4) => format!("{x:.4e}"),
        Ok(x) if x.is_finite() => format!("{x:.6}"),
        _ => s.to_string(),
    }
}

fn inputs(field: &str) -> BTreeMap<String, String> {
    field
        .split(';')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn render_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{}", width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

fn write_dat(dir: &Path, name: &str, comment: &str, points: &[(String, String)]) -> Result<(), String> {
    let mut s = format!("# {comment}\n");
    for (x, y) in points {
        let _ = writeln!(s, "{x} {y}");
    }
    fs::write(dir.join(name), s).map_err(|e| format!("{name}: {e}"))
}

fn task_of(m: &Manifest) -> String {
    m.config
        .get("task")
        .and_then(|t| t.as_object())
        .and_then(|o| o.keys().next().cloned())
        .unwrap_or_else(|| m.command.clone())
}

/// Renders the directory's results; errors mean a missing or corrupt
/// manifest or results file.
pub fn render_report(dir: &Path) -> Result<String, String> {
    let m = read_manifest(dir)?;
    let mut out = String::new();
    if m.partial {
        let _ = writeln!(out, "PARTIAL: some workers did not finish; results are incomplete");
    }
    let task = task_of(&m);
    let _ = writeln!(out, "opplab {} report ({task}), seed {}, status {}", m.version, m.seed, m.status);
    if let Some(v) = &m.verdict {
        let _ = writeln!(out, "verdict: {v}");
    }
    if let Some(e) = &m.error {
        let _ = writeln!(out, "error: {e}");
    }
    let results = dir.join(RESULTS);
    if !results.exists() {
        let _ = writeln!(out, "(no results file)");
        return Ok(out);
    }
    let t = Table::read(&results)?;
    let _ = writeln!(out);
    match task.as_str() {
        "verify" => render_verify(dir, &t, &mut out)?,
        "law" => render_law(dir, &t, &mut out)?,
        "sample" => render_sample(dir, &t, &mut out)?,
        _ => {
            let rows: Vec<Vec<String>> = t.rows.iter().take(50).cloned().collect();
            let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
            render_table(&mut out, &header, &rows);
            if t.rows.len() > 50 {
                let _ = writeln!(out, "... {} more rows", t.rows.len() - 50);
            }
        }
    }
    fs::write(dir.join("report.txt"), &out).map_err(|e| format!("report.txt: {e}"))?;
    Ok(out)
}

fn render_verify(dir: &Path, t: &Table, out: &mut String) -> Result<(), String> {
    let lemma = t.rows.first().map(|r| t.get(r, "lemma_id").to_string()).unwrap_or_default();
    if lemma == "dominance" {
        let mut rows = Vec::new();
        let mut pts = Vec::new();
        for r in t.rows.iter().filter(|r| t.get(r, "kind") == "upper") {
            let x = inputs(t.get(r, "inputs")).get("x").cloned().unwrap_or_default();
            rows.push(vec![
                short(&x),
                short(t.get(r, "lhs")),
                short(t.get(r, "rhs")),
                short(t.get(r, "margin")),
            ]);
            pts.push((x, t.get(r, "lhs").to_string()));
        }
        render_table(out, &["x", "p_hat", "upper", "margin"], &rows);
        write_dat(dir, "dominance.dat", "x p_hat", &pts)?;
        return Ok(());
    }
    let mut rows = Vec::new();
    let mut by_kind: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for r in &t.rows {
        let inp = t.get(r, "inputs");
        rows.push(vec![
            t.get(r, "kind").to_string(),
            inp.replace(';', " "),
            short(t.get(r, "lhs")),
            short(t.get(r, "rhs")),
            short(t.get(r, "margin")),
            short(t.get(r, "se")),
            if t.get(r, "judged") == "true" { t.get(r, "pass").to_string() } else { "-".into() },
        ]);
        let first = inputs(inp).into_iter().next().map(|(_, v)| v).unwrap_or_default();
        by_kind.entry(t.get(r, "kind").to_string()).or_default().push((first, t.get(r, "lhs").to_string()));
    }
    let shown = rows.len().min(200);
    render_table(out, &["kind", "inputs", "lhs", "rhs", "margin", "se", "pass"], &rows[..shown]);
    if rows.len() > shown {
        let _ = writeln!(out, "... {} more rows", rows.len() - shown);
    }
    for (kind, pts) in by_kind {
        write_dat(dir, &format!("{lemma}_{kind}.dat"), "first-input lhs", &pts)?;
    }
    Ok(())
}

fn render_law(dir: &Path, t: &Table, out: &mut String) -> Result<(), String> {
    if t.col("p_hat").is_none() {
        // weight-condition trends only
        let rows: Vec<Vec<String>> = t
            .rows
            .iter()
            .map(|r| vec![t.get(r, "condition").to_string(), t.get(r, "n").to_string(), short(t.get(r, "value"))])
            .collect();
        render_table(out, &["condition", "n", "value"], &rows);
        return Ok(());
    }
    let mut by_eps: BTreeMap<String, Vec<&Vec<String>>> = BTreeMap::new();
    for r in &t.rows {
        by_eps.entry(t.get(r, "eps").to_string()).or_default().push(r);
    }
    for (i, (eps, rows)) in by_eps.iter().enumerate() {
        let diag = rows.first().map(|r| t.get(r, "diagnostic")).unwrap_or("");
        let _ = writeln!(out, "eps = {} ({diag})", short(eps));
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    t.get(r, "n").to_string(),
                    short(t.get(r, "p_hat")),
                    short(t.get(r, "ci_lo")),
                    short(t.get(r, "ci_hi")),
                    t.get(r, "exceed").to_string(),
                ]
            })
            .collect();
        render_table(out, &["n", "p_hat", "ci_lo", "ci_hi", "exceed"], &table);
        let _ = writeln!(out);
        let pts: Vec<(String, String)> =
            rows.iter().map(|r| (t.get(r, "n").to_string(), t.get(r, "p_hat").to_string())).collect();
        write_dat(dir, &format!("phat_{i}.dat"), &format!("n p_hat, eps = {eps}"), &pts)?;
    }
    Ok(())
}

fn render_sample(dir: &Path, t: &Table, out: &mut String) -> Result<(), String> {
    let streams: std::collections::BTreeSet<&str> = t.rows.iter().map(|r| t.get(r, "stream_id")).collect();
    let _ = writeln!(out, "{} streams, {} rows", streams.len(), t.rows.len());
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .take(20)
        .map(|r| {
            vec![
                t.get(r, "stream_id").to_string(),
                t.get(r, "j").to_string(),
                t.get(r, "B_j").to_string(),
                short(t.get(r, "R_j")),
            ]
        })
        .collect();
    render_table(out, &["stream_id", "j", "B_j", "R_j"], &rows);
    let pts: Vec<(String, String)> = t
        .rows
        .iter()
        .filter(|r| !t.get(r, "R_j").is_empty() && t.get(r, "R_j").parse::<f64>().is_ok())
        .map(|r| (t.get(r, "j").to_string(), t.get(r, "R_j").to_string()))
        .collect();
    write_dat(dir, "ratios.dat", "j R_j", &pts)
}
