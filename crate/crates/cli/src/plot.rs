//! Plot-ready data files: a `#` header naming the columns, then one
//! whitespace-separated row per point.

use std::fmt::Write as _;
use std::path::Path;

use hierlat::Result;

pub fn write_columns(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = format!("# {}\n", columns.join(" "));
    for row in rows {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}
