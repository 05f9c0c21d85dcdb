use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::{info, warn};

use super::{Graph, GraphError};
use crate::tensor::Matrix;

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
}

/// Loads a `.content` / `.cites` pair.
///
/// Content rows are `<id> <feature>* <label>`, cites rows are
/// `<target-id> <source-id>`; fields are separated by tabs or spaces.
/// Feature rows are L1-normalised (all-zero rows stay zero), classes are
/// numbered in order of first appearance and citations naming unknown ids
/// are skipped.
pub fn load_citation_dataset(content_path: &Path, cites_path: &Path) -> Result<Graph, GraphError> {
    let content = read(content_path)?;
    let parse_err =
        |line: usize, message: String| GraphError::Parse { path: content_path.to_path_buf(), line, message };

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;

    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 {
            return Err(parse_err(lineno, "expected an id and a label".into()));
        }
        let d = fields.len() - 2;
        match width {
            None => width = Some(d),
            Some(w) if w != d => return Err(parse_err(lineno, format!("{d} features, expected {w}"))),
            _ => {}
        }
        let id = fields[0].to_string();
        if index.contains_key(&id) {
            return Err(parse_err(lineno, format!("duplicate id {id}")));
        }
        let start = data.len();
        for raw in &fields[1..fields.len() - 1] {
            let v: f64 = raw.parse().map_err(|_| parse_err(lineno, format!("bad feature value {raw:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite feature value {raw:?}")));
            }
            data.push(v);
        }
        let norm: f64 = data[start..].iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            data[start..].iter_mut().for_each(|v| *v /= norm);
        }
        let label = fields[fields.len() - 1];
        let class = *class_index.entry(label.to_string()).or_insert_with(|| {
            class_names.push(label.to_string());
            class_names.len() - 1
        });
        labels.push(class);
        index.insert(id.clone(), ids.len());
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(GraphError::EmptyDataset { path: content_path.to_path_buf() });
    }
    let features = Matrix::from_vec(ids.len(), width.unwrap_or(0), data).expect("row widths checked");

    let cites = read(cites_path)?;
    let mut edges = Vec::new();
    let mut skipped = 0usize;
    let mut records = 0usize;
    for (lineno, line) in cites.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(GraphError::Parse {
                path: cites_path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 2 ids, found {}", fields.len()),
            });
        }
        records += 1;
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&a), Some(&b)) => edges.push((b, a)),
            _ => skipped += 1,
        }
    }
    if records == 0 {
        return Err(GraphError::EmptyDataset { path: cites_path.to_path_buf() });
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} citations with unknown ids", cites_path.display());
    }
    let graph = Graph::new(ids, features, labels, class_names, &edges)?;
    info!(
        "loaded {} nodes, {} edges, {} features, {} classes",
        graph.node_count(),
        graph.edge_count(),
        graph.feature_dim(),
        graph.class_count()
    );
    Ok(graph)
}
