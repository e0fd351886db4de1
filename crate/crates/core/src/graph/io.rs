//! Plain-text edge lists: one `u v` pair per line, `#` starts a comment,
//! ids are 0-based. A `# nodes: N` header (written by [`write_edge_list`])
//! preserves trailing isolated nodes.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Edge, EdgeSet, Graph};
use crate::error::{Error, Result};

const NODES_HEADER: &str = "# nodes:";

pub fn parse_edge_list(text: &str, origin: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut n = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix(NODES_HEADER) {
            n = n.max(parse_id(rest.trim(), origin, idx + 1)?);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: format!("expected `u v`, found {line:?}"),
            });
        };
        let u = parse_id(a, origin, idx + 1)?;
        let v = parse_id(b, origin, idx + 1)?;
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v));
    }
    Graph::from_edges(n, edges)
}

fn parse_id(tok: &str, origin: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::Parse {
        path: origin.to_string(),
        line,
        msg: if tok.starts_with('-') {
            format!("negative node id {tok}")
        } else {
            format!("invalid node id {tok:?}")
        },
    })
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, &path.display().to_string())
}

/// Reads an edge list as a bare edge set (no node-count bookkeeping).
pub fn read_edge_set(path: impl AsRef<Path>) -> Result<EdgeSet> {
    Ok(read_edge_list(path)?.edge_set())
}

/// Optional `node_id,label` CSV; a header row is skipped if non-numeric.
pub fn read_labels(path: impl AsRef<Path>, n: usize) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = vec![0usize; n];
    let mut seen = vec![false; n];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: origin,
                line: idx + 1,
                msg: "expected `node_id,label`".into(),
            });
        };
        if idx == 0 && a.parse::<usize>().is_err() {
            continue;
        }
        let v = parse_id(a, &origin, idx + 1)?;
        let l = parse_id(b, &origin, idx + 1)?;
        if v >= n {
            return Err(Error::Parse {
                path: origin,
                line: idx + 1,
                msg: format!("node {v} out of range for {n} nodes"),
            });
        }
        labels[v] = l;
        seen[v] = true;
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::Missing(format!("{origin}: no label for node {v}")));
    }
    Ok(labels)
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn render_edges<'a>(n: usize, edges: impl Iterator<Item = &'a Edge>) -> String {
    let mut out = format!("{NODES_HEADER} {n}\n");
    for e in edges {
        out.push_str(&format!("{} {}\n", e.0, e.1));
    }
    out
}

pub fn write_edge_list(path: impl AsRef<Path>, g: &Graph) -> Result<()> {
    let edges: Vec<Edge> = g.edges().collect();
    write_atomic(path, render_edges(g.n(), edges.iter()).as_bytes())
}

pub fn write_edge_set(path: impl AsRef<Path>, n: usize, edges: &EdgeSet) -> Result<()> {
    write_atomic(path, render_edges(n, edges.iter()).as_bytes())
}
