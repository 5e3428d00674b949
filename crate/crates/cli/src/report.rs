//! Report emission: CSV tables, a markdown summary and the manifest itself.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::manifest::{Check, Manifest, Table};
use crate::CliError;

fn write_csv(dir: &Path, table: &Table) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

fn checks_markdown(out: &mut String, checks: &[Check]) {
    if checks.is_empty() {
        out.push_str("No checks recorded.\n\n");
        return;
    }
    out.push_str("| check | status | detail |\n|---|---|---|\n");
    for c in checks {
        let _ = writeln!(out, "| {} | {} | {} |", c.name, c.status.label(), c.detail.replace('|', "\\|"));
    }
    out.push('\n');
}

fn table_markdown(out: &mut String, table: &Table) {
    if table.rows.is_empty() {
        return;
    }
    let _ = writeln!(out, "| {} |", table.header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(table.header.len()));
    for row in &table.rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

/// Markdown summary of a manifest. An empty manifest gives a valid, short report.
pub fn render_markdown(manifest: &Manifest) -> String {
    let mut out = String::new();
    let suite = if manifest.suite.is_empty() { "(none)" } else { &manifest.suite };
    let _ = writeln!(out, "# anyon-mf report: {suite}\n");
    let _ = writeln!(out, "- seed: {}", manifest.seed);
    if let Some(p) = &manifest.provenance {
        let _ = writeln!(out, "- config: `{}` (sha256 `{}`)", p.path, p.sha256);
    }
    let verdict = if manifest.passed() { "pass" } else { "fail" };
    let _ = writeln!(out, "- overall: {verdict}\n");
    out.push_str("## Checks\n\n");
    checks_markdown(&mut out, &manifest.checks);
    for report in &manifest.reports {
        let _ = writeln!(out, "## {} (`{}`)\n", report.title, report.id);
        let _ = writeln!(out, "Empirical constant: {}\n", report.empirical_constant);
        checks_markdown(&mut out, &report.checks);
        table_markdown(&mut out, &report.table);
    }
    for table in &manifest.tables {
        let _ = writeln!(out, "## {}\n", table.name);
        table_markdown(&mut out, table);
    }
    out
}

/// Writes every table as CSV, `report.md` and `manifest.json` into `dir`.
pub fn emit_report(manifest: &mut Manifest, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in manifest.tables.iter().chain(manifest.reports.iter().map(|r| &r.table)) {
        written.push(write_csv(dir, table)?);
    }
    let md = dir.join("report.md");
    fs::write(&md, render_markdown(manifest))?;
    written.push(md);
    let json = dir.join("manifest.json");
    written.push(json.clone());
    for p in &written {
        let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if !manifest.files.contains(&name) {
            manifest.files.push(name);
        }
    }
    fs::write(&json, serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_gives_valid_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::default();
        let files = emit_report(&mut m, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains("No checks recorded."));
        let back: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back.exit_code(), 0);
    }

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("rstudy", &["R", "E_af_R", "diff", "slope_fit"]);
        t.push(vec!["0.5".into(), "2.5".into(), "0.1".into(), "".into()]);
        let mut m = Manifest { tables: vec![t], ..Manifest::default() };
        emit_report(&mut m, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rstudy.csv")).unwrap();
        assert_eq!(text, "R,E_af_R,diff,slope_fit\n0.5,2.5,0.1,\n");
    }
}
