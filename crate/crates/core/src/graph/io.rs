//! On-disk formats.
//!
//! * topology: `src<TAB>dst[<TAB>weight]`, `#` comment lines
//! * features: `GFEA` magic, `u64` rows, `u64` cols (little-endian), then
//!   row-major `f32`; comma-separated text is accepted as a fallback
//! * labels: `node<TAB>class` or `node<TAB>bitstring` for multilabel
//! * splits: `node<TAB>{train|val|test}` or
//!   `src<TAB>dst<TAB>label<TAB>split` for edge tasks
//! * kinds (optional): `node<TAB>kind`; a `# homogeneous` line lifts the
//!   bipartite check

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{
    Edge, Features, Graph, GraphError, LabeledEdge, Labels, NodeKinds, Split,
};

pub const FEATURE_MAGIC: &[u8; 4] = b"GFEA";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphPaths {
    pub topology: PathBuf,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub kinds: Option<PathBuf>,
}

impl GraphPaths {
    /// Canonical file names inside one directory, as written by
    /// [`write_graph`].
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            topology: dir.join("topology.tsv"),
            features: dir.join("features.bin"),
            labels: opt("labels.tsv"),
            splits: opt("splits.tsv"),
            kinds: opt("kinds.tsv"),
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>, GraphError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push((i + 1, t.to_string()));
    }
    Ok(out)
}

fn comment_lines(path: &Path) -> Result<Vec<String>, GraphError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        if let Some(c) = line.trim().strip_prefix('#') {
            out.push(c.trim().to_lowercase());
        }
    }
    Ok(out)
}

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == '\t' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_index(path: &Path, line: usize, tok: &str, n: usize) -> Result<usize, GraphError> {
    let index: usize = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("expected node index, got {tok:?}")))?;
    if index >= n {
        return Err(GraphError::IndexOutOfRange {
            path: path.to_path_buf(),
            line,
            index,
            num_nodes: n,
        });
    }
    Ok(index)
}

pub fn read_topology(path: &Path, num_nodes: usize) -> Result<Vec<Edge>, GraphError> {
    let mut edges = Vec::new();
    for (line, text) in data_lines(path)? {
        let f = fields(&text);
        if f.len() != 2 && f.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 or 3 fields, found {}", f.len()),
            ));
        }
        let src = parse_index(path, line, f[0], num_nodes)?;
        let dst = parse_index(path, line, f[1], num_nodes)?;
        let weight = match f.get(2) {
            Some(w) => w
                .parse::<f32>()
                .ok()
                .filter(|w| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| parse_err(path, line, format!("invalid weight {w:?}")))?,
            None => 1.0,
        };
        edges.push(Edge { src, dst, weight });
    }
    Ok(edges)
}

pub fn read_features(path: &Path) -> Result<Features, GraphError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        if bytes.len() < 20 {
            return Err(parse_err(path, 1, "truncated feature header"));
        }
        let rows = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let cols = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() != rows * cols * 4 {
            return Err(GraphError::RowCount {
                path: path.to_path_buf(),
                expected: rows,
                found: body.len() / 4 / cols.max(1),
            });
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        return Features::new(rows, cols, data);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| parse_err(path, 1, "neither GFEA binary nor UTF-8 CSV"))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f32>, _> = t.split(',').map(|s| s.trim().parse::<f32>()).collect();
        let vals = vals.map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {c} columns, found {}", vals.len()),
                ))
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    Features::new(rows, cols.unwrap_or(0), data)
}

pub fn write_features(path: &Path, rows: usize, cols: usize, data: &[f32]) -> Result<(), GraphError> {
    assert_eq!(data.len(), rows * cols);
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut write = || -> std::io::Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&(rows as u64).to_le_bytes())?;
        w.write_all(&(cols as u64).to_le_bytes())?;
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// Label file flavor. `Auto` treats the file as multilabel when every label
/// is a 0/1 string of one common length of at least two; a `# multilabel`
/// or `# single` comment overrides the guess.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LabelFormat {
    #[default]
    Auto,
    Single,
    Multi,
}

pub fn read_labels(path: &Path, num_nodes: usize, format: LabelFormat) -> Result<Labels, GraphError> {
    let lines = data_lines(path)?;
    let mut rows = Vec::with_capacity(lines.len());
    for (line, text) in &lines {
        let f = fields(text);
        if f.len() != 2 {
            return Err(parse_err(path, *line, format!("expected 2 fields, found {}", f.len())));
        }
        let node = parse_index(path, *line, f[0], num_nodes)?;
        rows.push((*line, node, f[1].to_string()));
    }
    let mut format = format;
    if format == LabelFormat::Auto {
        let comments = comment_lines(path)?;
        if comments.iter().any(|c| c == "multilabel") {
            format = LabelFormat::Multi;
        } else if comments.iter().any(|c| c == "single") {
            format = LabelFormat::Single;
        } else {
            let len = rows.first().map_or(0, |r| r.2.len());
            let bitstrings = len >= 2
                && rows
                    .iter()
                    .all(|r| r.2.len() == len && r.2.bytes().all(|b| b == b'0' || b == b'1'));
            format = if bitstrings {
                LabelFormat::Multi
            } else {
                LabelFormat::Single
            };
        }
    }
    if format == LabelFormat::Multi {
        let num_classes = rows.first().map_or(0, |r| r.2.len());
        let mut values = vec![None; num_nodes];
        for (line, node, s) in rows {
            if s.len() != num_classes || !s.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(parse_err(path, line, format!("bad bitstring {s:?}")));
            }
            values[node] = Some(s.bytes().map(|b| b == b'1').collect());
        }
        return Ok(Labels::Multi {
            num_classes,
            values,
        });
    }
    let mut values = vec![None; num_nodes];
    let mut num_classes = 0;
    for (line, node, s) in rows {
        let c: usize = s
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad class label {s:?}")))?;
        num_classes = num_classes.max(c + 1);
        values[node] = Some(c);
    }
    Ok(Labels::Single {
        num_classes,
        values,
    })
}

pub enum SplitFile {
    Nodes(Vec<Option<Split>>),
    Edges(Vec<LabeledEdge>),
}

pub fn read_splits(path: &Path, num_nodes: usize) -> Result<SplitFile, GraphError> {
    let lines = data_lines(path)?;
    let edge_mode = lines.first().is_some_and(|(_, t)| fields(t).len() == 4);
    let split_of = |line: usize, tok: &str| -> Result<Split, GraphError> {
        tok.parse().map_err(|e: String| parse_err(path, line, e))
    };
    if edge_mode {
        let mut edges = Vec::with_capacity(lines.len());
        for (line, text) in lines {
            let f = fields(&text);
            if f.len() != 4 {
                return Err(parse_err(path, line, format!("expected 4 fields, found {}", f.len())));
            }
            let label = match f[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(parse_err(path, line, format!("edge label must be 0/1, got {other:?}"))),
            };
            edges.push(LabeledEdge {
                src: parse_index(path, line, f[0], num_nodes)?,
                dst: parse_index(path, line, f[1], num_nodes)?,
                label,
                split: split_of(line, f[3])?,
            });
        }
        return Ok(SplitFile::Edges(edges));
    }
    let mut splits = vec![None; num_nodes];
    for (line, text) in lines {
        let f = fields(&text);
        if f.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", f.len())));
        }
        let v = parse_index(path, line, f[0], num_nodes)?;
        splits[v] = Some(split_of(line, f[1])?);
    }
    Ok(SplitFile::Nodes(splits))
}

pub fn read_kinds(path: &Path, num_nodes: usize) -> Result<NodeKinds, GraphError> {
    let homogeneous = comment_lines(path)?.iter().any(|c| c == "homogeneous");
    let mut names: Vec<String> = Vec::new();
    let mut of_node = vec![u16::MAX; num_nodes];
    for (line, text) in data_lines(path)? {
        let f = fields(&text);
        if f.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", f.len())));
        }
        let v = parse_index(path, line, f[0], num_nodes)?;
        let k = match names.iter().position(|n| n == f[1]) {
            Some(k) => k,
            None => {
                names.push(f[1].to_string());
                names.len() - 1
            }
        };
        of_node[v] = k as u16;
    }
    if let Some(v) = of_node.iter().position(|&k| k == u16::MAX) {
        return Err(GraphError::RowCount {
            path: path.to_path_buf(),
            expected: num_nodes,
            found: v,
        });
    }
    Ok(NodeKinds {
        names,
        of_node,
        homogeneous,
    })
}

/// Loads and validates a graph. The feature file fixes the node count.
pub fn load_graph(paths: &GraphPaths) -> Result<Graph, GraphError> {
    let features = read_features(&paths.features)?;
    let n = features.rows();
    let edges = read_topology(&paths.topology, n)?;
    let mut g = Graph::from_edges(n, &edges, features)?;
    if let Some(p) = &paths.labels {
        g = g.with_labels(read_labels(p, n, LabelFormat::Auto)?)?;
    }
    if let Some(p) = &paths.kinds {
        g = g.with_kinds(read_kinds(p, n)?)?;
    }
    if let Some(p) = &paths.splits {
        g = match read_splits(p, n)? {
            SplitFile::Nodes(s) => g.with_node_splits(s)?,
            SplitFile::Edges(e) => g.with_edges(e)?,
        };
    }
    Ok(g)
}

fn create(path: &Path) -> Result<BufWriter<File>, GraphError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Writes the canonical file set into `dir` (created if missing) and returns
/// the paths.
pub fn write_graph(g: &Graph, dir: &Path) -> Result<GraphPaths, GraphError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = GraphPaths {
        topology: dir.join("topology.tsv"),
        features: dir.join("features.bin"),
        labels: g.labels().map(|_| dir.join("labels.tsv")),
        splits: Some(dir.join("splits.tsv")),
        kinds: g.kinds().map(|_| dir.join("kinds.tsv")),
    };
    let tp = &paths.topology;
    let mut w = create(tp)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# src\tdst\tweight")?;
        for v in 0..g.num_nodes() {
            let (nb, wt) = g.neighbors(v);
            for (&u, &x) in nb.iter().zip(wt) {
                if u as usize >= v {
                    writeln!(w, "{v}\t{u}\t{x}")?;
                }
            }
        }
        w.flush()
    };
    body().map_err(io_err(tp))?;

    let f = g.features();
    write_features(&paths.features, f.rows(), f.cols(), f.data())?;

    if let (Some(labels), Some(lp)) = (g.labels(), &paths.labels) {
        let mut w = create(lp)?;
        let mut body = || -> std::io::Result<()> {
            match labels {
                Labels::Single { values, .. } => {
                    writeln!(w, "# single")?;
                    for (v, c) in values.iter().enumerate() {
                        if let Some(c) = c {
                            writeln!(w, "{v}\t{c}")?;
                        }
                    }
                }
                Labels::Multi { values, .. } => {
                    writeln!(w, "# multilabel")?;
                    for (v, bits) in values.iter().enumerate() {
                        if let Some(bits) = bits {
                            let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
                            writeln!(w, "{v}\t{s}")?;
                        }
                    }
                }
            }
            w.flush()
        };
        body().map_err(io_err(lp))?;
    }

    let sp = paths.splits.as_ref().expect("splits path");
    let mut w = create(sp)?;
    let mut body = || -> std::io::Result<()> {
        if g.labeled_edges().is_empty() {
            for v in 0..g.num_nodes() {
                if let Some(s) = g.node_split(v) {
                    writeln!(w, "{v}\t{s}")?;
                }
            }
        } else {
            for e in g.labeled_edges() {
                writeln!(w, "{}\t{}\t{}\t{}", e.src, e.dst, e.label, e.split)?;
            }
        }
        w.flush()
    };
    body().map_err(io_err(sp))?;

    if let (Some(kinds), Some(kp)) = (g.kinds(), &paths.kinds) {
        let mut w = create(kp)?;
        let mut body = || -> std::io::Result<()> {
            if kinds.homogeneous {
                writeln!(w, "# homogeneous")?;
            }
            for (v, &k) in kinds.of_node.iter().enumerate() {
                writeln!(w, "{v}\t{}", kinds.names[k as usize])?;
            }
            w.flush()
        };
        body().map_err(io_err(kp))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn base(dir: &Path) -> GraphPaths {
        GraphPaths {
            topology: write(dir, "t.tsv", "# path\n0\t1\n1\t2\n"),
            features: write(dir, "f.csv", "1,0\n0,1\n1,1\n"),
            labels: Some(write(dir, "l.tsv", "0\t0\n1\t2\n2\t1\n")),
            splits: Some(write(dir, "s.tsv", "0\ttrain\n1\tval\n2\ttest\n")),
            kinds: None,
        }
    }

    #[test]
    fn loads_text_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_graph(&base(dir.path())).unwrap();
        assert_eq!(g.offsets(), &[0, 1, 3, 4]);
        assert_eq!(g.feature_dim(), 2);
        assert_eq!(g.labels().unwrap().num_classes(), 3);
        assert_eq!(g.split_counts(), [1, 1, 1]);
    }

    #[test]
    fn errors_carry_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = base(dir.path());
        p.topology = write(dir.path(), "bad.tsv", "0\t1\n1\tx\n");
        let err = load_graph(&p).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }), "{err}");
        p.topology = write(dir.path(), "oob.tsv", "0\t1\n\n2\t7\n");
        let err = load_graph(&p).unwrap_err();
        assert!(
            matches!(err, GraphError::IndexOutOfRange { line: 3, index: 7, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("oob.tsv:3"));
    }

    #[test]
    fn ragged_csv_features_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "1,2\n3\n");
        assert!(matches!(read_features(&p), Err(GraphError::Parse { line: 2, .. })));
    }

    #[test]
    fn truncated_binary_features_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_features(&p, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_features(&p), Err(GraphError::RowCount { .. })));
    }

    #[test]
    fn multilabel_bitstrings() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "l.tsv", "0\t101\n2\t010\n");
        let l = read_labels(&p, 3, LabelFormat::Auto).unwrap();
        assert!(l.is_multilabel());
        assert_eq!(l.num_classes(), 3);
        assert_eq!(l.target(0), Some(vec![1.0, 0.0, 1.0]));
        assert_eq!(l.target(1), None);
        let forced = write(dir.path(), "s.tsv", "# single\n0\t10\n1\t11\n");
        assert_eq!(read_labels(&forced, 3, LabelFormat::Auto).unwrap().num_classes(), 12);
    }

    #[test]
    fn edge_splits_and_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = base(dir.path());
        p.labels = None;
        p.splits = Some(write(dir.path(), "e.tsv", "0\t1\t1\ttrain\n1\t2\t0\ttest\n"));
        p.kinds = Some(write(dir.path(), "k.tsv", "0\tuser\n1\tnews\n2\tuser\n"));
        let g = load_graph(&p).unwrap();
        assert_eq!(g.labeled_edges().len(), 2);
        assert_eq!(g.edges_in(Split::Test)[0].label, 0);
        assert_eq!(g.kinds().unwrap().names, vec!["user", "news"]);
    }

    #[test]
    fn write_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_graph(&base(dir.path())).unwrap();
        let out = dir.path().join("canon");
        let paths = write_graph(&g, &out).unwrap();
        let g2 = load_graph(&paths).unwrap();
        assert_eq!(g, g2);
        let g3 = load_graph(&GraphPaths::in_dir(&out)).unwrap();
        assert_eq!(g2, g3);
    }
}
