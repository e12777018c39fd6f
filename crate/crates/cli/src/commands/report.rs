use std::path::Path;

use spkemb::report::write_table;
use walkdir::WalkDir;

use crate::config::ReportParams;
use crate::error::{CliError, Result};

pub const SUMMARY_FILE: &str = "summary.csv";

/// Every record of every CSV under the inputs, in path order, as
/// `source,line,record` where `record` is the original line.
pub fn report(p: &ReportParams, out: &Path) -> Result<()> {
    if p.inputs.is_empty() {
        return Err(CliError::Missing("inputs"));
    }
    let own = out.join(SUMMARY_FILE);
    let mut rows = Vec::new();
    for input in &p.inputs {
        if !input.is_dir() {
            return Err(CliError::Invalid(format!(
                "{} is not a directory",
                input.display()
            )));
        }
        for entry in WalkDir::new(input).sort_by_file_name() {
            let entry = entry?;
            let path = entry.path();
            if !entry.file_type().is_file()
                || path.extension().is_none_or(|e| e != "csv")
                || same_file(path, &own)
            {
                continue;
            }
            let text = std::fs::read_to_string(path)?;
            let source = path.display().to_string();
            for (i, line) in text.lines().enumerate() {
                rows.push(vec![source.clone(), (i + 1).to_string(), line.to_string()]);
            }
        }
    }
    write_table(&own, &["source", "line", "record"], &rows)?;
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}
