use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use crate::manifest::{sha256_hex, RunManifest, MANIFEST_FILE};

pub const REPORT_FILE: &str = "report.html";

/// JSON artifacts shown verbatim, in this order, when present.
const JSON_SECTIONS: [&str; 5] = ["recommended.json", "calibration.json", "audit.json", "search.json", "front.json"];

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Artifact directory written by `discover`, `calibrate` or `audit`.
    pub dir: PathBuf,
    /// Output file; defaults to `report.html` inside the directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn csv_table(text: &str) -> String {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut html = String::from("<table>\n<tr>");
    if let Ok(h) = rdr.headers() {
        for c in h {
            let _ = write!(html, "<th>{}</th>", escape(c));
        }
    }
    html.push_str("</tr>\n");
    for rec in rdr.records().flatten() {
        html.push_str("<tr>");
        for c in &rec {
            let _ = write!(html, "<td>{}</td>", escape(c));
        }
        html.push_str("</tr>\n");
    }
    html.push_str("</table>\n");
    html
}

/// Renders the bundle; `tampered` lists artifacts whose hash no longer matches.
pub fn render(manifest: &RunManifest, files: &[(String, String)], tampered: &[String]) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n");
    let _ = writeln!(h, "<title>hyperlaw {} report</title>", escape(&manifest.command));
    h.push_str(
        "<style>body{font-family:sans-serif;max-width:960px;margin:auto}table{border-collapse:collapse}\
         td,th{border:1px solid #ccc;padding:2px 6px;font-size:12px}pre{background:#f6f6f6;padding:8px;overflow-x:auto}\
         .warning{background:#fde2e1;border:2px solid #d62728;padding:8px}</style>\n</head><body>\n",
    );
    let _ = writeln!(h, "<h1>hyperlaw {}</h1>", escape(&manifest.command));
    if !tampered.is_empty() {
        let _ = writeln!(
            h,
            "<div class=\"warning\" id=\"integrity-warning\"><strong>Warning:</strong> these artifacts do not match the hashes recorded in the manifest: {}</div>",
            escape(&tampered.join(", "))
        );
    }
    let _ = writeln!(
        h,
        "<p>version {} | seed {} | config hash <code>{}</code></p>",
        escape(&manifest.version),
        manifest.rng_seed.map_or("n/a".into(), |s| s.to_string()),
        escape(&manifest.config_hash)
    );
    for (name, text) in files {
        if name == "front.csv" || name == "forensic.csv" {
            let _ = writeln!(h, "<h2>{}</h2>", escape(name));
            h.push_str(&csv_table(text));
        }
    }
    for (name, text) in files {
        if name.ends_with(".svg") {
            let _ = writeln!(h, "<h2>{}</h2>\n<figure id=\"{}\">", escape(name), escape(name));
            if text.trim_start().starts_with("<svg") {
                h.push_str(text);
            } else {
                h.push_str("<p>not an SVG document</p>\n");
            }
            h.push_str("</figure>\n");
        }
    }
    for section in JSON_SECTIONS {
        if let Some((name, text)) = files.iter().find(|(n, _)| n == section) {
            let _ = writeln!(h, "<h2>{}</h2>\n<pre>{}</pre>", escape(name), escape(text));
        }
    }
    let manifest_json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    let _ = writeln!(h, "<h2>manifest.json</h2>\n<pre>{}</pre>", escape(&manifest_json));
    let _ = writeln!(
        h,
        "<script type=\"application/json\" id=\"manifest\">{}</script>",
        manifest_json.replace("</", "<\\/")
    );
    h.push_str("</body></html>\n");
    h
}

pub fn run(args: &ReportArgs) -> Result<u8> {
    let dir = &args.dir;
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    if !dir.join(MANIFEST_FILE).exists() {
        bail!("{} has no {MANIFEST_FILE}; not an artifact directory", dir.display());
    }
    let manifest = RunManifest::load(dir)?;
    let mut files = Vec::new();
    let mut tampered = Vec::new();
    for (rel, hash) in &manifest.artifacts {
        let bytes = fs::read(dir.join(rel)).with_context(|| format!("artifact {rel} listed in the manifest is missing"))?;
        if sha256_hex(&bytes) != *hash {
            tampered.push(rel.clone());
        }
        files.push((rel.clone(), String::from_utf8_lossy(&bytes).into_owned()));
    }
    if !tampered.is_empty() {
        eprintln!("warning: hash mismatch for {}", tampered.join(", "));
    }
    let html = render(&manifest, &files, &tampered);
    let out = args.out.clone().unwrap_or_else(|| dir.join(REPORT_FILE));
    fs::write(&out, html).with_context(|| format!("writing {}", out.display()))?;
    println!("report written to {}", out.display());
    Ok(0)
}
