//! CSV artifacts with embedded provenance.
//!
//! Every file starts with two comment lines, `# seed: N` and
//! `# config: {...}`, followed by a header row and data rows. Floats are
//! written through `Display`, which prints the shortest decimal form
//! that parses back to the same f64, so artifacts are exact as well as
//! readable.

use std::io;
use std::path::{Path, PathBuf};

/// An output file under construction. Rows are buffered and written in
/// one shot by [`Artifact::finish`].
pub struct Artifact {
    path: PathBuf,
    buf: String,
}

impl Artifact {
    pub fn new(dir: &Path, name: &str, seed: u64, config_json: &str) -> Artifact {
        let mut buf = String::new();
        buf.push_str(&format!("# seed: {seed}\n"));
        buf.push_str(&format!("# config: {config_json}\n"));
        Artifact { path: dir.join(name), buf }
    }

    /// Appends one comma-joined row; used for the header and data alike.
    pub fn row<S: AsRef<str>>(&mut self, fields: impl IntoIterator<Item = S>) {
        let mut first = true;
        for field in fields {
            if !first {
                self.buf.push(',');
            }
            self.buf.push_str(field.as_ref());
            first = false;
        }
        self.buf.push('\n');
    }

    /// Appends a raw block, used for non-CSV payloads like saved
    /// expansions.
    pub fn raw(&mut self, text: &str) {
        self.buf.push_str(text);
    }

    /// Creates the parent directory if needed and writes the file.
    pub fn finish(self) -> io::Result<PathBuf> {
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(&self.path, self.buf)?;
        Ok(self.path)
    }
}

/// Column labels `prefix_1 .. prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Shortest exact decimal form of a float.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_layout_is_provenance_then_header_then_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifact::new(dir.path(), "out.csv", 42, "{\"seed\":42}");
        a.row(["x", "y"]);
        a.row([fmt(0.1), fmt(2.0)]);
        let path = a.finish().unwrap();

        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed: 42");
        assert_eq!(lines[1], "# config: {\"seed\":42}");
        assert_eq!(lines[2], "x,y");
        assert_eq!(lines[3], "0.1,2");
    }

    #[test]
    fn fmt_round_trips_awkward_floats() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-300, f64::MAX] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn numbered_labels_are_one_based() {
        assert_eq!(numbered("d", 2), vec!["d_1", "d_2"]);
    }
}
