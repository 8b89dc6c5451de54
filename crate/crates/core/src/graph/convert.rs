//! Converters from public dataset layouts to [`Graph`].
//!
//! * `pubmed`: the LINQS Pubmed-Diabetes tab files
//!   (`Pubmed-Diabetes.NODE.paper.tab`, `Pubmed-Diabetes.DIRECTED.cites.tab`)
//! * `ppi`: per-split `{train,valid,test}_{graph.json,feats.npy,labels.npy,graph_id.npy}`
//!   as distributed with PyTorch Geometric; the 24 graphs become one
//!   disconnected graph with node splits

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::io::{io_err, parse_err};
use super::{Edge, Features, Graph, GraphError, Labels, Split};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Pubmed,
    Ppi,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pubmed" => Ok(Format::Pubmed),
            "ppi" => Ok(Format::Ppi),
            other => Err(format!("unknown dataset format {other:?} (expected pubmed|ppi)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Pubmed => "pubmed",
            Format::Ppi => "ppi",
        })
    }
}

/// Train/val/test sizes of the commonly used Pubmed split; train takes
/// every node outside val and test.
pub const PUBMED_VAL: usize = 500;
pub const PUBMED_TEST: usize = 1000;

#[derive(Clone, Debug, Default)]
pub struct ConvertOptions {
    /// `paper_id<TAB>split` lines overriding the seeded Pubmed split.
    pub split_file: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvertReport {
    pub format: String,
    pub nodes: usize,
    /// Distinct undirected edges, self-loops dropped.
    pub edges: usize,
    /// Edge records read from the raw files.
    pub raw_edges: usize,
    pub self_loops: usize,
    pub classes: usize,
    pub features: usize,
    pub graphs: usize,
    /// Train, val, test.
    pub splits: [usize; 3],
}

pub fn convert(dir: &Path, format: Format, opts: &ConvertOptions) -> Result<(Graph, ConvertReport), GraphError> {
    match format {
        Format::Pubmed => pubmed(dir, opts),
        Format::Ppi => ppi(dir),
    }
}

fn find(dir: &Path, name: &str) -> Result<PathBuf, GraphError> {
    for p in [dir.join(name), dir.join("data").join(name), dir.join("raw").join(name)] {
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(GraphError::Io {
        path: dir.join(name),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
    })
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String, GraphError>)> + '_, GraphError> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(BufReader::new(f)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(io_err(path)))))
}

/// Undirected, deduplicated, self-loops dropped.
struct EdgeSet {
    pairs: BTreeSet<(usize, usize)>,
    raw: usize,
    self_loops: usize,
}

impl EdgeSet {
    fn new() -> Self {
        Self {
            pairs: BTreeSet::new(),
            raw: 0,
            self_loops: 0,
        }
    }

    fn add(&mut self, a: usize, b: usize) {
        self.raw += 1;
        if a == b {
            self.self_loops += 1;
        } else {
            self.pairs.insert((a.min(b), a.max(b)));
        }
    }

    fn edges(&self) -> Vec<Edge> {
        self.pairs.iter().map(|&(a, b)| Edge::new(a, b)).collect()
    }
}

fn pubmed(dir: &Path, opts: &ConvertOptions) -> Result<(Graph, ConvertReport), GraphError> {
    let node_path = find(dir, "Pubmed-Diabetes.NODE.paper.tab")?;
    let cite_path = find(dir, "Pubmed-Diabetes.DIRECTED.cites.tab")?;

    let mut feature_index: HashMap<String, usize> = HashMap::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<(usize, f32)>> = Vec::new();
    let mut classes: Vec<usize> = Vec::new();
    let mut class_ids: BTreeSet<usize> = BTreeSet::new();
    for (line, text) in lines(&node_path)? {
        let text = text?;
        let text = text.trim_end();
        match line {
            1 => continue,
            // `cat=1,2,3:label  numeric:w-rat:0.0  …  string:summary`
            2 => {
                for field in text.split('\t').skip(1) {
                    let mut parts = field.split(':');
                    if parts.next() == Some("numeric") {
                        let name = parts
                            .next()
                            .ok_or_else(|| parse_err(&node_path, line, format!("bad feature column {field:?}")))?;
                        let k = feature_index.len();
                        feature_index.insert(name.to_string(), k);
                    }
                }
                continue;
            }
            _ => {}
        }
        if text.is_empty() {
            continue;
        }
        let mut fields = text.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let mut label = None;
        let mut row = Vec::new();
        for field in fields {
            let Some((key, value)) = field.split_once('=') else {
                return Err(parse_err(&node_path, line, format!("expected key=value, found {field:?}")));
            };
            match key {
                "label" => {
                    let c: usize = value
                        .parse()
                        .map_err(|_| parse_err(&node_path, line, format!("bad label {value:?}")))?;
                    label = Some(c);
                }
                "summary" => {}
                name => {
                    let k = *feature_index
                        .get(name)
                        .ok_or_else(|| parse_err(&node_path, line, format!("undeclared feature {name:?}")))?;
                    let x: f32 = value
                        .parse()
                        .map_err(|_| parse_err(&node_path, line, format!("bad value {value:?}")))?;
                    row.push((k, x));
                }
            }
        }
        let label = label.ok_or_else(|| parse_err(&node_path, line, "missing label"))?;
        if ids.insert(id.clone(), rows.len()).is_some() {
            return Err(parse_err(&node_path, line, format!("duplicate paper id {id}")));
        }
        class_ids.insert(label);
        classes.push(label);
        rows.push(row);
    }
    let n = rows.len();
    let dim = feature_index.len();
    if n == 0 || dim == 0 {
        return Err(GraphError::Invalid(format!("{}: no nodes or no feature columns", node_path.display())));
    }
    let mut data = vec![0f32; n * dim];
    for (v, row) in rows.iter().enumerate() {
        for &(k, x) in row {
            data[v * dim + k] = x;
        }
    }
    // raw classes are arbitrary integers (1..=3 upstream); compact them
    let class_of: HashMap<usize, usize> = class_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut edges = EdgeSet::new();
    for (line, text) in lines(&cite_path)? {
        let text = text?;
        if line <= 2 || text.trim().is_empty() {
            continue;
        }
        // `id  paper:SRC  |  paper:DST`
        let f: Vec<&str> = text.split('\t').collect();
        if f.len() != 4 || f[2] != "|" {
            return Err(parse_err(&cite_path, line, "expected `id<TAB>paper:src<TAB>|<TAB>paper:dst`"));
        }
        let node = |s: &str| {
            let key = s.strip_prefix("paper:").unwrap_or(s);
            ids.get(key)
                .copied()
                .ok_or_else(|| parse_err(&cite_path, line, format!("unknown paper {key}")))
        };
        edges.add(node(f[1])?, node(f[3])?);
    }

    let splits = match &opts.split_file {
        Some(p) => split_file(p, &ids)?,
        None => {
            if n <= PUBMED_VAL + PUBMED_TEST {
                return Err(GraphError::Invalid(format!(
                    "{n} nodes cannot hold a {PUBMED_VAL}/{PUBMED_TEST} val/test split"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(opts.seed, "pubmed.split", 0, 0));
            let mut s = vec![Some(Split::Train); n];
            for &v in &order[..PUBMED_TEST] {
                s[v] = Some(Split::Test);
            }
            for &v in &order[PUBMED_TEST..PUBMED_TEST + PUBMED_VAL] {
                s[v] = Some(Split::Val);
            }
            s
        }
    };

    let g = Graph::from_edges(n, &edges.edges(), Features::new(n, dim, data)?)?
        .with_labels(Labels::Single {
            num_classes: class_of.len(),
            values: classes.iter().map(|c| Some(class_of[c])).collect(),
        })?
        .with_node_splits(splits)?;
    let report = ConvertReport {
        format: Format::Pubmed.to_string(),
        nodes: n,
        edges: g.num_undirected_edges(),
        raw_edges: edges.raw,
        self_loops: edges.self_loops,
        classes: class_of.len(),
        features: dim,
        graphs: 1,
        splits: g.split_counts(),
    };
    Ok((g, report))
}

fn split_file(path: &Path, ids: &HashMap<String, usize>) -> Result<Vec<Option<Split>>, GraphError> {
    let mut out = vec![None; ids.len()];
    for (line, text) in lines(path)? {
        let text = text?;
        let t = text.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (id, split) = t
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(path, line, "expected `paper_id<TAB>split`"))?;
        let v = *ids
            .get(id)
            .ok_or_else(|| parse_err(path, line, format!("unknown paper {id}")))?;
        out[v] = Some(split.trim().parse().map_err(|e: String| parse_err(path, line, e))?);
    }
    Ok(out)
}

/// Row-major values of a 1-D or 2-D `.npy` array of any numeric dtype.
pub fn read_npy(path: &Path) -> Result<(Vec<usize>, Vec<f64>), GraphError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let npy = npyz::NpyFile::new(&bytes[..]).map_err(io_err(path))?;
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let fortran = npy.order() == npyz::Order::Fortran;
    // try each supported dtype in turn; `try_data` hands the file back on mismatch
    macro_rules! read_as {
        ($npy:expr, $($t:ty),+) => {{
            let npy = $npy;
            $(
                let npy = match npy.try_data::<$t>() {
                    Ok(d) => {
                        let v: Result<Vec<f64>, _> = d.map(|x| x.map(|x| x as f64)).collect();
                        return finish(path, shape, fortran, v.map_err(io_err(path))?);
                    }
                    Err(npy) => npy,
                };
            )+
            npy
        }};
    }
    let npy = read_as!(npy, f64, f32, i64, i32, u8);
    let npy = match npy.try_data::<bool>() {
        Ok(d) => {
            let v: Result<Vec<f64>, _> = d.map(|x| x.map(|b| b as u8 as f64)).collect();
            return finish(path, shape, fortran, v.map_err(io_err(path))?);
        }
        Err(npy) => npy,
    };
    Err(GraphError::Invalid(format!(
        "{}: unsupported dtype {}",
        path.display(),
        npy.dtype().descr()
    )))
}

fn finish(path: &Path, shape: Vec<usize>, fortran: bool, values: Vec<f64>) -> Result<(Vec<usize>, Vec<f64>), GraphError> {
    if shape.len() > 2 {
        return Err(GraphError::Invalid(format!("{}: expected 1-D or 2-D array", path.display())));
    }
    if fortran && shape.len() == 2 {
        let (r, c) = (shape[0], shape[1]);
        let mut t = vec![0.0; values.len()];
        for i in 0..r {
            for j in 0..c {
                t[i * c + j] = values[j * r + i];
            }
        }
        return Ok((shape, t));
    }
    Ok((shape, values))
}

#[derive(serde::Deserialize)]
struct NodeLink {
    nodes: Vec<serde_json::Value>,
    links: Vec<Link>,
}

#[derive(serde::Deserialize)]
struct Link {
    source: usize,
    target: usize,
}

fn ppi(dir: &Path) -> Result<(Graph, ConvertReport), GraphError> {
    let mut edges = EdgeSet::new();
    let mut features: Vec<f32> = Vec::new();
    let mut labels: Vec<Option<Vec<bool>>> = Vec::new();
    let mut splits = Vec::new();
    let (mut dim, mut classes, mut graphs) = (None, None, 0);
    for (prefix, split) in [("train", Split::Train), ("valid", Split::Val), ("test", Split::Test)] {
        let offset = labels.len();
        let gpath = find(dir, &format!("{prefix}_graph.json"))?;
        let text = std::fs::read_to_string(&gpath).map_err(io_err(&gpath))?;
        let nl: NodeLink = serde_json::from_str(&text)
            .map_err(|e| parse_err(&gpath, e.line(), e.to_string()))?;
        let n = nl.nodes.len();

        let fpath = find(dir, &format!("{prefix}_feats.npy"))?;
        let (fs, fv) = read_npy(&fpath)?;
        let lpath = find(dir, &format!("{prefix}_labels.npy"))?;
        let (ls, lv) = read_npy(&lpath)?;
        let ipath = find(dir, &format!("{prefix}_graph_id.npy"))?;
        let (is, iv) = read_npy(&ipath)?;
        for (p, s) in [(&fpath, &fs), (&lpath, &ls)] {
            if s.len() != 2 || s[0] != n {
                return Err(GraphError::RowCount {
                    path: p.clone(),
                    expected: n,
                    found: s.first().copied().unwrap_or(0),
                });
            }
        }
        if is.len() != 1 || is[0] != n {
            return Err(GraphError::RowCount {
                path: ipath,
                expected: n,
                found: is.first().copied().unwrap_or(0),
            });
        }
        for (known, found, p) in [(&mut dim, fs[1], &fpath), (&mut classes, ls[1], &lpath)] {
            match *known {
                None => *known = Some(found),
                Some(k) if k != found => {
                    return Err(GraphError::Invalid(format!("{}: {found} columns, expected {k}", p.display())))
                }
                Some(_) => {}
            }
        }
        graphs += iv.iter().map(|&x| x as i64).collect::<BTreeSet<_>>().len();

        for l in &nl.links {
            if l.source >= n || l.target >= n {
                return Err(GraphError::Invalid(format!(
                    "{}: link ({}, {}) outside {n} nodes",
                    gpath.display(),
                    l.source,
                    l.target
                )));
            }
            edges.add(offset + l.source, offset + l.target);
        }
        features.extend(fv.iter().map(|&x| x as f32));
        let c = ls[1];
        for r in 0..n {
            labels.push(Some(lv[r * c..(r + 1) * c].iter().map(|&x| x != 0.0).collect()));
        }
        splits.extend(std::iter::repeat_n(Some(split), n));
    }
    let n = labels.len();
    let dim = dim.unwrap_or(0);
    let classes = classes.unwrap_or(0);
    let g = Graph::from_edges(n, &edges.edges(), Features::new(n, dim, features)?)?
        .with_labels(Labels::Multi {
            num_classes: classes,
            values: labels,
        })?
        .with_node_splits(splits)?;
    let report = ConvertReport {
        format: Format::Ppi.to_string(),
        nodes: n,
        edges: g.num_undirected_edges(),
        raw_edges: edges.raw,
        self_loops: edges.self_loops,
        classes,
        features: dim,
        graphs,
        splits: g.split_counts(),
    };
    Ok((g, report))
}

#[cfg(test)]
mod tests;
