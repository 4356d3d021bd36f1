//! Output files. CSVs open with `#` comment lines holding the resolved
//! configuration and seed; JSON files carry them as fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::config::ResolvedConfig;

pub type CsvOut = csv::Writer<BufWriter<File>>;

/// Creates `path` with a provenance header and the given column names.
pub fn csv_with_header(path: &Path, config: &ResolvedConfig, seeds: &[u64], columns: &[&str]) -> anyhow::Result<CsvOut> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "# config: {}", serde_json::to_string(config)?)?;
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    writeln!(buf, "# seed: {}", seeds.join(","))?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(columns)?;
    Ok(w)
}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    config: &'a ResolvedConfig,
    seeds: &'a [u64],
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, config: &ResolvedConfig, seeds: &[u64], body: &T) -> anyhow::Result<()> {
    let doc = Provenance { config, seeds, body };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Formats a float so it reads back bit-for-bit.
pub fn num(v: f64) -> String {
    // `+ 0.0` folds negative zero
    format!("{:e}", v + 0.0)
}
