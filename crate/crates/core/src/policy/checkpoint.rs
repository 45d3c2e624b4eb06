//! Text container for named parameter groups.
//!
//! ```text
//! pgmcts-checkpoint 1
//! group <name> <n_rows> <n_cols>
//! <row key> <value> ... <value>
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so reading a file back
//! restores every parameter bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const MAGIC: &str = "pgmcts-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub name: String,
    pub cols: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Group {
    pub fn new(name: &str, cols: usize) -> Self {
        Group {
            name: name.to_string(),
            cols,
            rows: Vec::new(),
        }
    }

    /// A dense matrix with rows keyed by index.
    pub fn dense(name: &str, cols: usize, data: &[f64]) -> Self {
        let mut g = Group::new(name, cols);
        for (i, row) in data.chunks(cols.max(1)).enumerate() {
            g.rows.push((i.to_string(), row.to_vec()));
        }
        g
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|(_, r)| r.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub groups: Vec<Group>,
}

impl Checkpoint {
    pub fn group(&self, name: &str) -> Result<&Group> {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint has no group `{name}`")))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        for g in &self.groups {
            writeln!(w, "group {} {} {}", g.name, g.rows.len(), g.cols)?;
            for (key, values) in &g.rows {
                write!(w, "{key}")?;
                for v in values {
                    write!(w, " {v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, message: String| Error::Parse { line, message };
        match lines.next() {
            Some((_, Ok(l))) if l.trim() == MAGIC => {}
            _ => return Err(bad(1, "not a checkpoint file".into())),
        }
        let mut out = Checkpoint::default();
        while let Some((i, line)) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let head: Vec<&str> = line.split_whitespace().collect();
            if head.len() != 4 || head[0] != "group" {
                return Err(bad(i + 1, format!("expected a group header, got `{line}`")));
            }
            let n_rows: usize = head[2].parse().map_err(|_| bad(i + 1, "bad row count".into()))?;
            let cols: usize = head[3].parse().map_err(|_| bad(i + 1, "bad column count".into()))?;
            let mut g = Group::new(head[1], cols);
            for _ in 0..n_rows {
                let (j, row) = lines
                    .next()
                    .ok_or_else(|| bad(i + 1, format!("group `{}` is truncated", g.name)))?;
                let row = row?;
                let mut fields = row.split_whitespace();
                let key = fields
                    .next()
                    .ok_or_else(|| bad(j + 1, "empty row".into()))?
                    .to_string();
                let values = fields
                    .map(|f| f.parse::<f64>().map_err(|e| bad(j + 1, e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                if values.len() != cols {
                    return Err(bad(
                        j + 1,
                        format!("expected {cols} values, found {}", values.len()),
                    ));
                }
                g.rows.push((key, values));
            }
            out.groups.push(g);
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }
}
