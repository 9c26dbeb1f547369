//! CSV tables, the JSON summary and the optional plot script.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

/// A column-oriented table; the header names carry the SI unit.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: Vec<&'static str>, columns: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(header.len(), columns.len());
        debug_assert!(columns.windows(2).all(|w| w[0].len() == w[1].len()));
        Self {
            file: file.into(),
            header,
            columns,
        }
    }

    /// Header row, then one row per sample in `{:.12e}` notation.
    pub fn to_csv(&self) -> String {
        let rows = self.columns.first().map_or(0, Vec::len);
        let mut out = self.header.join(",");
        out.push('\n');
        for r in 0..rows {
            for (c, col) in self.columns.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{:.12e}", col[r]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub results: serde_json::Value,
    pub convergence: Option<serde_json::Value>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    /// Every setting used, defaults included, in SI units.
    pub config: RunConfig,
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<PathBuf, CliError> {
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(summary).expect("summary is serializable");
    text.push('\n');
    write_file(&path, &text)?;
    Ok(path)
}

/// Matplotlib script that draws every table against its first column.
pub fn plot_script(tables: &[Table]) -> String {
    let mut s = String::from(
        "import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\nimport numpy as np\n\n",
    );
    for t in tables {
        let stem = t.file.trim_end_matches(".csv");
        writeln!(s, "data = np.loadtxt(\"{}\", delimiter=\",\", skiprows=1, ndmin=2)", t.file).unwrap();
        s.push_str("fig, ax = plt.subplots()\n");
        for (i, name) in t.header.iter().enumerate().skip(1) {
            writeln!(s, "ax.plot(data[:, 0], data[:, {i}], label=\"{name}\")").unwrap();
        }
        writeln!(s, "ax.set_xlabel(\"{}\")", t.header[0]).unwrap();
        s.push_str("ax.legend()\n");
        writeln!(s, "fig.savefig(\"{stem}.png\", dpi=150)\nplt.close(fig)\n").unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_fixed_scientific_notation() {
        let t = Table::new("a.csv", vec!["t_seconds", "density_per_second"], vec![vec![0.0, 1.5e-3], vec![2.0, -1.0]]);
        assert_eq!(
            t.to_csv(),
            "t_seconds,density_per_second\n0.000000000000e0,2.000000000000e0\n1.500000000000e-3,-1.000000000000e0\n"
        );
    }

    #[test]
    fn plot_script_references_each_table() {
        let t = Table::new("passage.csv", vec!["x", "y"], vec![vec![1.0], vec![2.0]]);
        let s = plot_script(&[t]);
        assert!(s.contains("np.loadtxt(\"passage.csv\"") && s.contains("passage.png"));
    }
}
