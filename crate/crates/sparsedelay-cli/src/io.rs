//! Artifact file formats: plain-text matrices with a `rows cols` header
//! line, the design bundle, deterministic CSV writing, and the run manifest.

use sha2::{Digest, Sha256};
use sparsedelay::model::Topology;
use sparsedelay::{Error, Matrix, Result};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

/// Fixed float formatting for byte-reproducible outputs.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".into() // avoid the -0 wobble
    } else {
        format!("{v:.12e}")
    }
}

/// Serializes a matrix as a header line `rows cols` followed by row-major
/// lines of whitespace-separated entries.
pub fn matrix_to_text(m: &Matrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Parses the [`matrix_to_text`] format starting at `lines[*pos]`.
pub fn matrix_from_lines(lines: &[&str], pos: &mut usize) -> Result<Matrix> {
    let header = lines
        .get(*pos)
        .ok_or_else(|| Error::Config("matrix header line missing".into()))?;
    let mut it = header.split_whitespace();
    let nr: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Config(format!("bad matrix header `{header}`")))?;
    let nc: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Config(format!("bad matrix header `{header}`")))?;
    *pos += 1;
    let mut m = Matrix::zeros(nr, nc);
    for i in 0..nr {
        let line = lines
            .get(*pos)
            .ok_or_else(|| Error::Config(format!("matrix row {i} missing")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("matrix row {i}: {e}")))?;
        if vals.len() != nc {
            return Err(Error::Config(format!(
                "matrix row {i} has {} entries, expected {nc}",
                vals.len()
            )));
        }
        for j in 0..nc {
            m[(i, j)] = vals[j];
        }
        *pos += 1;
    }
    Ok(m)
}

/// A designed controller bundle: gain, delays, and the topology it rides on.
#[derive(Debug, Clone)]
pub struct DesignFile {
    pub k: Matrix,
    pub tau_o: f64,
    pub c: f64,
    pub topology: Topology<f64>,
}

fn usize_list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_usize_list(line: &str, what: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Config(format!("{what}: {e}"))))
        .collect()
}

impl DesignFile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# sparsedelay design v1\n");
        s.push_str("gain\n");
        s.push_str(&matrix_to_text(&self.k));
        let _ = writeln!(s, "tau_o {}", fmt_f64(self.tau_o));
        let _ = writeln!(s, "c {}", fmt_f64(self.c));
        let _ = writeln!(s, "x_order {}", usize_list(self.topology.x_order()));
        let _ = writeln!(s, "u_order {}", usize_list(self.topology.u_order()));
        let _ = writeln!(s, "n_sizes {}", usize_list(self.topology.n_sizes()));
        let _ = writeln!(s, "m_sizes {}", usize_list(self.topology.m_sizes()));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> =
            text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect();
        let mut pos = 0usize;
        if lines.get(pos).copied() != Some("gain") {
            return Err(Error::Config("design file must start with a `gain` block".into()));
        }
        pos += 1;
        let k = matrix_from_lines(&lines, &mut pos)?;
        let mut tau_o = None;
        let mut c = None;
        let mut x_order = None;
        let mut u_order = None;
        let mut n_sizes = None;
        let mut m_sizes = None;
        while pos < lines.len() {
            let line = lines[pos];
            pos += 1;
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "tau_o" => tau_o = Some(rest.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()))?),
                "c" => c = Some(rest.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()))?),
                "x_order" => x_order = Some(parse_usize_list(rest, "x_order")?),
                "u_order" => u_order = Some(parse_usize_list(rest, "u_order")?),
                "n_sizes" => n_sizes = Some(parse_usize_list(rest, "n_sizes")?),
                "m_sizes" => m_sizes = Some(parse_usize_list(rest, "m_sizes")?),
                other => return Err(Error::Config(format!("unknown design key `{other}`"))),
            }
        }
        let topology = Topology::new(
            x_order.ok_or_else(|| Error::Config("design file missing x_order".into()))?,
            u_order.ok_or_else(|| Error::Config("design file missing u_order".into()))?,
            n_sizes.ok_or_else(|| Error::Config("design file missing n_sizes".into()))?,
            m_sizes.ok_or_else(|| Error::Config("design file missing m_sizes".into()))?,
        )?;
        Ok(Self {
            k,
            tau_o: tau_o.ok_or_else(|| Error::Config("design file missing tau_o".into()))?,
            c: c.ok_or_else(|| Error::Config("design file missing c".into()))?,
            topology,
        })
    }
}

/// Minimal deterministic CSV writer: fixed header, fixed float format.
pub struct CsvWriter {
    content: String,
    columns: usize,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        Self { content: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "CSV row width mismatch");
        self.content.push_str(&cells.join(","));
        self.content.push('\n');
    }

    pub fn finish(self) -> String {
        self.content
    }
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Run manifest: mode, seed, config hash, and library version. Two runs
/// with identical manifests produce identical CSV bytes.
pub fn manifest(mode: &str, seed: u64, canonical_config: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_config.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!(
        "mode {mode}\nseed {seed}\nconfig_sha256 {hex}\nversion {}\n",
        env!("CARGO_PKG_VERSION")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 / 7.0);
        let text = matrix_to_text(&m);
        assert!(text.starts_with("2 3\n"));
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let m2 = matrix_from_lines(&lines, &mut pos).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn design_file_round_trip() {
        let design = DesignFile {
            k: Matrix::from_fn(2, 2, |i, j| if i == j { 1.5 } else { 0.0 }),
            tau_o: 0.125,
            c: 0.4,
            topology: Topology::singletons(2).unwrap(),
        };
        let text = design.to_text();
        let back = DesignFile::from_text(&text).unwrap();
        assert_eq!(back.k, design.k);
        assert_eq!(back.tau_o, design.tau_o);
        assert_eq!(back.topology.x_order(), design.topology.x_order());
        // byte determinism
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn manifest_is_stable() {
        let a = manifest("algorithm1", 3, "mode = \"algorithm1\"");
        let b = manifest("algorithm1", 3, "mode = \"algorithm1\"");
        assert_eq!(a, b);
        let c = manifest("algorithm1", 4, "mode = \"algorithm1\"");
        assert_ne!(a, c);
    }
}
