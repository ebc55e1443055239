use std::path::{Path, PathBuf};

use anyhow::Context;

/// Shortest round-trip decimal form.
pub fn f(x: f64) -> String {
    format!("{x:?}")
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    footer: Vec<String>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), footer: Vec::new() }
    }

    pub fn row(&mut self, r: Vec<String>) {
        debug_assert_eq!(r.len(), self.header.len());
        self.rows.push(r);
    }

    /// `# ` comment line after the data.
    pub fn note(&mut self, s: String) {
        self.footer.push(s);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let mut bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        for s in &self.footer {
            bytes.extend_from_slice(format!("# {s}\n").as_bytes());
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

/// Creates `<out>/<name>` and returns it.
pub fn run_dir(out: &Path, name: &str) -> anyhow::Result<PathBuf> {
    let d = out.join(name);
    std::fs::create_dir_all(&d).map_err(|e| pgl3::Error::Config(format!("cannot create {}: {e}", d.display())))?;
    Ok(d)
}

pub fn text(path: &Path, s: &str) -> anyhow::Result<()> {
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
