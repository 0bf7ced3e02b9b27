//! Plain-text dataset formats.
//!
//! * edge file: `source<TAB>target` per line, optional `#nodes N` header
//! * feature file: `id<TAB>v1,v2,...,vd`
//! * label file: `id<TAB>class` (classification) or `graph_id<TAB>value`
//! * graph-set manifest: `graph_id<TAB>edges_file[<TAB>target[<TAB>features_file]]`,
//!   paths relative to the manifest
//!
//! Blank lines and other `#` lines are ignored. Any run of whitespace is
//! accepted as the column separator in edge and label files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use agnn_core::data::{structural_features, DatasetBundle, GraphSample, GraphSet};
use agnn_core::graph::DirectedGraph;
use agnn_core::loss::LabelSet;
use agnn_core::Tensor;

use crate::{file_error, Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(file_error(path))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_id(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{field}`")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    /// Node count from a `#nodes N` header.
    pub declared_nodes: Option<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    /// `N` from the header, else `1 + max id`.
    pub fn node_count(&self) -> usize {
        self.declared_nodes.unwrap_or_else(|| {
            self.edges
                .iter()
                .map(|&(s, t)| s.max(t) + 1)
                .max()
                .unwrap_or(0)
        })
    }
}

pub fn parse_edges(text: &str, path: &Path) -> Result<EdgeList> {
    let mut declared_nodes = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("#nodes") {
            let n = rest.trim();
            declared_nodes = Some(parse_id(path, i + 1, n, "node count")?);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected `source<TAB>target`, got `{line}`"),
            ));
        }
        edges.push((
            parse_id(path, i + 1, fields[0], "source id")?,
            parse_id(path, i + 1, fields[1], "target id")?,
        ));
    }
    let list = EdgeList {
        declared_nodes,
        edges,
    };
    if let Some(n) = declared_nodes {
        if let Some(&(s, t)) = list.edges.iter().find(|&&(s, t)| s >= n || t >= n) {
            return Err(Error::Input(format!(
                "{}: edge {s} -> {t} exceeds the declared {n} nodes",
                path.display()
            )));
        }
    }
    Ok(list)
}

pub fn read_edges(path: &Path) -> Result<EdgeList> {
    parse_edges(&read(path)?, path)
}

pub fn parse_features(text: &str, path: &Path) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut rows = BTreeMap::new();
    let mut width = None;
    for (line, l) in content_lines(text) {
        let (id, values) = l
            .split_once('\t')
            .or_else(|| l.split_once(char::is_whitespace))
            .ok_or_else(|| parse_err(path, line, "expected `id<TAB>v1,v2,...`"))?;
        let id = parse_id(path, line, id.trim(), "node id")?;
        let values = values
            .trim()
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("invalid feature value `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {w} values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        if rows.insert(id, values).is_some() {
            return Err(parse_err(path, line, format!("duplicate node id {id}")));
        }
    }
    Ok(rows)
}

/// Class labels; classes must be non-negative integers.
pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected `id<TAB>class`, got `{l}`"),
            ));
        }
        pairs.push((
            parse_id(path, line, fields[0], "node id")?,
            parse_id(path, line, fields[1], "class")?,
        ));
    }
    Ok(pairs)
}

/// Real-valued targets keyed by graph id.
pub fn parse_targets(text: &str, path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut targets = BTreeMap::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected `graph_id<TAB>value`, got `{l}`"),
            ));
        }
        let v = fields[1]
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| parse_err(path, line, format!("invalid target `{}`", fields[1])))?;
        if targets.insert(fields[0].to_string(), v).is_some() {
            return Err(parse_err(
                path,
                line,
                format!("duplicate graph id `{}`", fields[0]),
            ));
        }
    }
    Ok(targets)
}

/// Loads a node-classification dataset. Without a feature file the bundle
/// uses one-hot features. Ids in the label or feature file beyond the edge
/// file's node range are rejected.
pub fn load_edge_list_dataset(
    edges: &Path,
    features: Option<&Path>,
    labels: &Path,
) -> Result<DatasetBundle> {
    let list = read_edges(edges)?;
    let n = list.node_count();
    if n == 0 {
        return Err(Error::Input(format!("{}: no nodes", edges.display())));
    }
    let graph = DirectedGraph::from_edge_list(n, &list.edges)?;

    let pairs = parse_labels(&read(labels)?, labels)?;
    if pairs.is_empty() {
        return Err(Error::Input(format!("{}: no labels", labels.display())));
    }
    if let Some(&(id, _)) = pairs.iter().find(|&&(id, _)| id >= n) {
        return Err(Error::Input(format!(
            "{}: node {id} does not exist in a {n}-node graph",
            labels.display()
        )));
    }
    let label_set = LabelSet::from_pairs(&pairs)?;

    let features = match features {
        None => None,
        Some(path) => {
            let rows = parse_features(&read(path)?, path)?;
            if let Some((&id, _)) = rows.range(n..).next() {
                return Err(Error::Input(format!(
                    "{}: node {id} does not exist in a {n}-node graph",
                    path.display()
                )));
            }
            if rows.len() != n {
                let missing = (0..n).find(|i| !rows.contains_key(i)).unwrap_or(0);
                return Err(Error::Input(format!(
                    "{}: no features for node {missing}",
                    path.display()
                )));
            }
            let width = rows.values().next().map_or(0, Vec::len);
            let data: Vec<f64> = rows.into_values().flatten().collect();
            Some(Tensor::new(n, width, data)?)
        }
    };
    let name = edges
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(DatasetBundle::new(name, graph, features, label_set)?)
}

/// One row of a graph-set manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub edges: PathBuf,
    pub target: Option<f64>,
    pub features: Option<PathBuf>,
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut entries = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        if !(2..=4).contains(&fields.len()) {
            return Err(parse_err(
                path,
                line,
                "expected `graph_id<TAB>edges_file[<TAB>target[<TAB>features_file]]`",
            ));
        }
        let target = match fields.get(2) {
            None | Some(&"") => None,
            Some(t) => Some(
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("invalid target `{t}`")))?,
            ),
        };
        entries.push(ManifestEntry {
            id: fields[0].to_string(),
            edges: base.join(fields[1]),
            target,
            features: fields
                .get(3)
                .filter(|f| !f.is_empty())
                .map(|f| base.join(f)),
        });
    }
    Ok(entries)
}

/// Loads a graph set. Targets come from `targets` when given, else from the
/// manifest. Graphs without a feature file get structural features.
pub fn load_graph_set(
    manifest: &Path,
    targets: Option<&Path>,
    train_fraction: f64,
    seed: u64,
) -> Result<GraphSet> {
    let entries = parse_manifest(&read(manifest)?, manifest)?;
    if entries.is_empty() {
        return Err(Error::Input(format!("{}: no graphs", manifest.display())));
    }
    let external = match targets {
        Some(p) => Some(parse_targets(&read(p)?, p)?),
        None => None,
    };
    let mut graphs = Vec::with_capacity(entries.len());
    for e in &entries {
        let list = read_edges(&e.edges)?;
        let n = list.node_count();
        if n == 0 {
            return Err(Error::Input(format!("graph `{}` has no nodes", e.id)));
        }
        let graph = DirectedGraph::from_edge_list(n, &list.edges)?;
        let target = match &external {
            Some(map) => map.get(&e.id).copied(),
            None => e.target,
        }
        .ok_or_else(|| Error::Input(format!("graph `{}` has no target", e.id)))?;
        let features = match &e.features {
            None => structural_features(&graph),
            Some(p) => {
                let rows = parse_features(&read(p)?, p)?;
                if rows.len() != n || rows.keys().next_back() != Some(&(n - 1)) {
                    return Err(Error::Input(format!(
                        "{}: need one feature row per node",
                        p.display()
                    )));
                }
                let width = rows.values().next().map_or(0, Vec::len);
                Tensor::new(n, width, rows.into_values().flatten().collect())?
            }
        };
        graphs.push(GraphSample {
            graph,
            features,
            target,
        });
    }
    let width = graphs[0].features.cols();
    if graphs.iter().any(|g| g.features.cols() != width) {
        return Err(Error::Input("graphs have different feature widths".into()));
    }
    let name = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graphs".into());
    Ok(GraphSet::split(name, graphs, train_fraction, seed)?)
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_error(dir))?;
    }
    Ok(std::io::BufWriter::new(
        fs::File::create(path).map_err(file_error(path))?,
    ))
}

/// Writes an edge file with a `#nodes` header so isolated nodes survive.
pub fn write_edges(path: &Path, graph: &DirectedGraph) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::File {
        path: path.to_path_buf(),
        source: e,
    };
    writeln!(w, "#nodes {}", graph.node_count()).map_err(io)?;
    for &(s, t) in graph.edges() {
        writeln!(w, "{s}\t{t}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::File {
        path: path.to_path_buf(),
        source: e,
    };
    for (id, class) in labels.pairs() {
        writeln!(w, "{id}\t{class}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Feature rows are written with shortest round-trip formatting.
pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::File {
        path: path.to_path_buf(),
        source: e,
    };
    for i in 0..features.rows() {
        let row: Vec<String> = features.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{i}\t{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `manifest.tsv` plus one edge file per graph under `dir/graphs`.
/// Returns the manifest path.
pub fn write_graph_set(dir: &Path, set: &GraphSet) -> Result<PathBuf> {
    let manifest = dir.join("manifest.tsv");
    let mut lines = String::new();
    for (i, g) in set.graphs.iter().enumerate() {
        let rel = format!("graphs/g{i:05}.tsv");
        write_edges(&dir.join(&rel), &g.graph)?;
        lines.push_str(&format!("g{i:05}\t{rel}\t{:?}\n", g.target));
    }
    let mut w = create(&manifest)?;
    w.write_all(lines.as_bytes())
        .and_then(|_| w.flush())
        .map_err(file_error(&manifest))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.tsv")
    }

    #[test]
    fn edges_infer_node_count() {
        let list = parse_edges("0\t1\n1\t2\n", p()).unwrap();
        assert_eq!(list.node_count(), 3);
        assert_eq!(list.edges, vec![(0, 1), (1, 2)]);
        let list = parse_edges("#nodes 5\n# comment\n\n0 1\n", p()).unwrap();
        assert_eq!(list.node_count(), 5);
    }

    #[test]
    fn edge_errors_carry_line_numbers() {
        let err = parse_edges("0\t1\n1\tx\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edges("0\t1\t2\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(matches!(
            parse_edges("#nodes 2\n0\t2\n", p()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn features_and_labels() {
        let f = parse_features("1\t0.5,2\n0\t1e-3,-4\n", p()).unwrap();
        assert_eq!(f[&0], vec![1e-3, -4.0]);
        assert!(matches!(
            parse_features("0\t1,2\n1\t3\n", p()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_features("0\t1,nan\n", p()).is_err());
        assert!(parse_features("0\t1\n0\t2\n", p()).is_err());
        assert_eq!(
            parse_labels("0\t2\n3 1\n", p()).unwrap(),
            vec![(0, 2), (3, 1)]
        );
        assert!(matches!(
            parse_labels("0\t-1\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
        let t = parse_targets("a\t0.25\nb\t1\n", p()).unwrap();
        assert_eq!(t["a"], 0.25);
    }

    #[test]
    fn manifest_paths_are_relative() {
        let m = parse_manifest(
            "g0\tgraphs/a.tsv\t0.5\ng1\tb.tsv\n",
            Path::new("/data/set/manifest.tsv"),
        )
        .unwrap();
        assert_eq!(m[0].edges, PathBuf::from("/data/set/graphs/a.tsv"));
        assert_eq!(m[0].target, Some(0.5));
        assert_eq!(m[1].target, None);
        assert!(parse_manifest("g0\n", p()).is_err());
    }
}
