use std::fmt::Write as _;
use std::path::Path;

use super::*;
use crate::graph::io::{load_graph, write_graph, GraphPaths};

const NODE_HEADER: &str = "NODE\tpaper:\ncat=1,2,3:label\tnumeric:w-rat:0.0\tnumeric:w-insulin:0.0\tnumeric:w-cell:0.0\tstring:summary\n";

fn write_pubmed(dir: &Path, nodes: &[(&str, usize, &[(&str, f32)])], cites: &[(&str, &str)]) {
    let mut node = NODE_HEADER.to_string();
    for (id, label, feats) in nodes {
        write!(node, "{id}\tlabel={label}").unwrap();
        for (k, v) in *feats {
            write!(node, "\t{k}={v}").unwrap();
        }
        let words: Vec<&str> = feats.iter().map(|(k, _)| *k).collect();
        writeln!(node, "\tsummary={}", words.join(",")).unwrap();
    }
    std::fs::write(dir.join("Pubmed-Diabetes.NODE.paper.tab"), node).unwrap();
    let mut cite = "DIRECTED\tcites\nNO_FEATURES\n".to_string();
    for (i, (a, b)) in cites.iter().enumerate() {
        writeln!(cite, "{i}\tpaper:{a}\t|\tpaper:{b}").unwrap();
    }
    std::fs::write(dir.join("Pubmed-Diabetes.DIRECTED.cites.tab"), cite).unwrap();
}

#[test]
fn pubmed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    write_pubmed(
        dir.path(),
        &[
            ("101", 1, &[("w-rat", 0.5), ("w-cell", 0.25)]),
            ("205", 3, &[("w-insulin", 1.0)]),
            ("309", 2, &[]),
            ("412", 1, &[("w-rat", 0.125)]),
        ],
        // a reciprocal pair and a self-citation collapse
        &[("101", "205"), ("205", "101"), ("309", "412"), ("412", "412"), ("101", "309")],
    );
    std::fs::write(dir.path().join("split.tsv"), "101\ttrain\n205\ttrain\n309\tval\n412\ttest\n").unwrap();
    let opts = ConvertOptions {
        split_file: Some(dir.path().join("split.tsv")),
        seed: 0,
    };
    let (g, rep) = convert(dir.path(), Format::Pubmed, &opts).unwrap();
    assert_eq!(
        (rep.nodes, rep.edges, rep.raw_edges, rep.self_loops, rep.classes, rep.features),
        (4, 3, 5, 1, 3, 3)
    );
    assert_eq!(rep.splits, [2, 1, 1]);
    assert_eq!(g.features().row(0), &[0.5, 0.0, 0.25]);
    assert_eq!(g.features().row(1), &[0.0, 1.0, 0.0]);
    assert_eq!(g.features().row(2), &[0.0, 0.0, 0.0]);
    let labels = g.labels().unwrap();
    let classes: Vec<usize> = (0..4).map(|v| labels.target(v).unwrap().iter().position(|&x| x == 1.0).unwrap()).collect();
    assert_eq!(classes, vec![0, 2, 1, 0]);
    assert_eq!(g.neighbors(0).0, &[1, 2]);
    assert_eq!(g.neighbors(0).1, &[1.0, 1.0]);
    assert_eq!(g.degree(3), 1);

    // convert → write → load keeps everything
    let out = dir.path().join("canon");
    std::fs::create_dir(&out).unwrap();
    write_graph(&g, &out).unwrap();
    let back = load_graph(&GraphPaths::in_dir(&out)).unwrap();
    assert_eq!(back, g);
}

#[test]
fn pubmed_seeded_split_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..1600).map(|i| format!("{}", 9000 + i)).collect();
    let nodes: Vec<(&str, usize, &[(&str, f32)])> =
        ids.iter().enumerate().map(|(i, s)| (s.as_str(), 1 + i % 3, &[("w-rat", 1.0)][..])).collect();
    let cites: Vec<(&str, &str)> = ids.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
    write_pubmed(dir.path(), &nodes, &cites);
    let opts = ConvertOptions { split_file: None, seed: 4 };
    let (g, rep) = convert(dir.path(), Format::Pubmed, &opts).unwrap();
    assert_eq!(rep.splits, [100, PUBMED_VAL, PUBMED_TEST]);
    let (g2, _) = convert(dir.path(), Format::Pubmed, &opts).unwrap();
    assert_eq!(g, g2);
    let (g3, _) = convert(dir.path(), Format::Pubmed, &ConvertOptions { seed: 5, ..opts }).unwrap();
    assert_ne!(g.labeled_nodes(Split::Test), g3.labeled_nodes(Split::Test));
}

#[test]
fn pubmed_errors_carry_location() {
    let dir = tempfile::tempdir().unwrap();
    write_pubmed(dir.path(), &[("1", 1, &[("w-bogus", 1.0)])], &[]);
    let err = convert(dir.path(), Format::Pubmed, &ConvertOptions::default()).unwrap_err();
    assert!(err.to_string().contains("NODE.paper.tab:3"), "{err}");

    write_pubmed(dir.path(), &[("1", 1, &[]), ("2", 2, &[])], &[("1", "7")]);
    let err = convert(dir.path(), Format::Pubmed, &ConvertOptions::default()).unwrap_err();
    assert!(err.to_string().contains("cites.tab:3") && err.to_string().contains("unknown paper 7"), "{err}");

    assert!("citeseer".parse::<Format>().is_err());
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        convert(empty.path(), Format::Ppi, &ConvertOptions::default()),
        Err(GraphError::Io { .. })
    ));
}

/// Minimal `.npy` v1.0 writer, independent of the reader under test.
fn npy(path: &Path, descr: &str, shape: &[usize], body: Vec<u8>) {
    let shape = match shape {
        [n] => format!("({n},)"),
        [r, c] => format!("({r}, {c})"),
        _ => unreachable!(),
    };
    let mut header = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}");
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend((header.len() as u16).to_le_bytes());
    out.extend(header.as_bytes());
    out.extend(body);
    std::fs::write(path, out).unwrap();
}

fn f32s(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn i64s(v: &[i64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn write_ppi_split(dir: &Path, prefix: &str, n: usize, links: &[(usize, usize)], graph_ids: &[i64], first: f32) {
    let nodes: Vec<String> = (0..n).map(|i| format!("{{\"id\": {i}, \"test\": false}}")).collect();
    let links: Vec<String> = links.iter().map(|(s, t)| format!("{{\"source\": {s}, \"target\": {t}}}")).collect();
    let json = format!(
        "{{\"directed\": false, \"multigraph\": false, \"graph\": {{}}, \"nodes\": [{}], \"links\": [{}]}}",
        nodes.join(", "),
        links.join(", ")
    );
    std::fs::write(dir.join(format!("{prefix}_graph.json")), json).unwrap();
    let feats: Vec<f32> = (0..n * 2).map(|i| first + i as f32).collect();
    npy(&dir.join(format!("{prefix}_feats.npy")), "<f4", &[n, 2], f32s(&feats));
    let labels: Vec<f32> = (0..n * 3).map(|i| (i % 2) as f32).collect();
    npy(&dir.join(format!("{prefix}_labels.npy")), "<f4", &[n, 3], f32s(&labels));
    npy(&dir.join(format!("{prefix}_graph_id.npy")), "<i8", &[n], i64s(graph_ids));
}

#[test]
fn ppi_fixture() {
    let dir = tempfile::tempdir().unwrap();
    write_ppi_split(dir.path(), "train", 4, &[(0, 1), (1, 0), (2, 3)], &[1, 1, 2, 2], 0.0);
    write_ppi_split(dir.path(), "valid", 2, &[(0, 1)], &[3, 3], 100.0);
    write_ppi_split(dir.path(), "test", 3, &[(0, 1), (1, 2), (2, 2)], &[4, 4, 5], 200.0);
    let (g, rep) = convert(dir.path(), Format::Ppi, &ConvertOptions::default()).unwrap();
    assert_eq!(
        (rep.nodes, rep.edges, rep.self_loops, rep.classes, rep.features, rep.graphs),
        (9, 5, 1, 3, 2, 5)
    );
    assert_eq!(rep.splits, [4, 2, 3]);
    // split blocks are offset and never connected to each other
    assert_eq!(g.neighbors(4).0, &[5]);
    assert_eq!(g.neighbors(7).0, &[6, 8]);
    assert_eq!(g.features().row(4), &[100.0, 101.0]);
    assert_eq!(g.labels().unwrap().target(0).unwrap(), vec![0.0, 1.0, 0.0]);
    assert!(g.labels().unwrap().is_multilabel());
    assert_eq!(g.node_split(5), Some(Split::Val));
    assert_eq!(g.node_split(6), Some(Split::Test));
}

#[test]
fn npy_dtypes_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.npy");
    npy(&p, "<f8", &[2, 2], [1.5f64, 2.0, 3.0, 4.0].iter().flat_map(|x| x.to_le_bytes()).collect());
    assert_eq!(read_npy(&p).unwrap(), (vec![2, 2], vec![1.5, 2.0, 3.0, 4.0]));
    npy(&p, "|u1", &[3], vec![0, 1, 7]);
    assert_eq!(read_npy(&p).unwrap(), (vec![3], vec![0.0, 1.0, 7.0]));
    // column-major storage is returned row-major
    let mut header = "{'descr': '<i4', 'fortran_order': True, 'shape': (2, 3), }".to_string();
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend((header.len() as u16).to_le_bytes());
    out.extend(header.as_bytes());
    out.extend([1i32, 4, 2, 5, 3, 6].iter().flat_map(|x| x.to_le_bytes()));
    std::fs::write(&p, out).unwrap();
    assert_eq!(read_npy(&p).unwrap(), (vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    npy(&p, "<c16", &[1], vec![0; 16]);
    assert!(read_npy(&p).is_err());
}
