//! Report rendering: an aligned text table or newline-delimited
//! `key=value` lines.

use std::fmt::{Display, Write};

enum Entry {
    Pair(String, String),
    Row(String, Vec<(String, String)>),
}

pub struct Report {
    title: String,
    preamble: Option<String>,
    entries: Vec<Entry>,
}

/// Shortest round-trip form; sentinels spelled `inf`, `-inf`, `nan`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self {
            title: title.into(),
            preamble: None,
            entries: Vec::new(),
        }
    }

    /// Free text shown above the table (omitted in key=value mode).
    pub fn preamble(&mut self, text: String) {
        self.preamble = Some(text);
    }

    pub fn kv(&mut self, key: &str, value: impl Display) {
        self.entries.push(Entry::Pair(key.into(), value.to_string()));
    }

    /// A named row of columns, e.g. one layer of a simulation.
    pub fn row(&mut self, name: &str, cols: &[(&str, String)]) {
        self.entries
            .push(Entry::Row(name.into(), cols.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()));
    }

    pub fn render(&self, kv: bool) -> String {
        if kv {
            self.render_kv()
        } else {
            self.render_table()
        }
    }

    fn render_kv(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            match e {
                Entry::Pair(k, v) => {
                    let _ = writeln!(s, "{k}={v}");
                }
                Entry::Row(name, cols) => {
                    for (k, v) in cols {
                        let _ = writeln!(s, "layer.{name}.{k}={v}");
                    }
                }
            }
        }
        s
    }

    fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {} ==", self.title);
        if let Some(p) = &self.preamble {
            s.push_str(p);
            s.push('\n');
        }
        let mut header: Option<&Vec<(String, String)>> = None;
        let mut body = Vec::new();
        for e in &self.entries {
            if let Entry::Row(name, cols) = e {
                header.get_or_insert(cols);
                body.push((name, cols));
            }
        }
        if let Some(h) = header {
            let name_w = body.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
            let widths: Vec<usize> = h
                .iter()
                .enumerate()
                .map(|(i, (k, _))| body.iter().map(|(_, c)| c[i].1.len()).max().unwrap_or(0).max(k.len()))
                .collect();
            let _ = write!(s, "{:<name_w$}", "layer");
            for ((k, _), w) in h.iter().zip(&widths) {
                let _ = write!(s, "  {k:>w$}");
            }
            s.push('\n');
            for (name, cols) in &body {
                let _ = write!(s, "{name:<name_w$}");
                for ((_, v), w) in cols.iter().zip(&widths) {
                    let _ = write!(s, "  {v:>w$}");
                }
                s.push('\n');
            }
            s.push('\n');
        }
        let key_w = self
            .entries
            .iter()
            .filter_map(|e| match e {
                Entry::Pair(k, _) => Some(k.len()),
                Entry::Row(..) => None,
            })
            .max()
            .unwrap_or(0);
        for e in &self.entries {
            if let Entry::Pair(k, v) = e {
                let _ = writeln!(s, "{k:<key_w$}  {v}");
            }
        }
        s
    }
}
