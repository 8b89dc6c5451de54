//! Seeded block-model generators for desk-scale experiments.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Edge, Features, Graph, GraphError, LabeledEdge, Labels, NodeKinds, Split};
use crate::rng::{self, Rng};

/// Stochastic block model with class-mean + Gaussian-noise features. Blocks
/// occupy contiguous index ranges; block `c` is class `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockModel {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Scale of the per-class mean vectors.
    pub signal: f64,
    /// Standard deviation of per-node noise.
    pub noise: f64,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for BlockModel {
    fn default() -> Self {
        Self {
            block_sizes: vec![100; 5],
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 32,
            signal: 1.0,
            noise: 1.0,
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GraphError::Invalid(format!("{name} = {p} is not a probability")))
    }
}

/// Indices in `0..len` kept by independent Bernoulli(p) trials, found by
/// geometric skipping so sparse rows cost O(kept).
fn bernoulli_run(rng: &mut Rng, len: usize, p: f64, mut keep: impl FnMut(usize)) {
    if p <= 0.0 || len == 0 {
        return;
    }
    if p >= 1.0 {
        (0..len).for_each(keep);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut pos = 0usize;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (len - pos) as f64 {
            return;
        }
        pos += skip as usize;
        keep(pos);
        pos += 1;
        if pos >= len {
            return;
        }
    }
}

fn block_of(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect()
}

fn class_features(rng: &mut Rng, class: &[usize], k: usize, dim: usize, signal: f64, noise: f64) -> Features {
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| signal * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut data = Vec::with_capacity(class.len() * dim);
    for &c in class {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            data.push((means[c][j] + noise * z) as f32);
        }
    }
    Features::new(class.len(), dim, data).expect("generated shape")
}

fn random_splits(rng: &mut Rng, n: usize, train: f64, val: f64) -> Vec<Option<Split>> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_train = (n as f64 * train).round() as usize;
    let n_val = ((n as f64 * val).round() as usize).min(n - n_train.min(n));
    let mut out = vec![Some(Split::Test); n];
    for (rank, &v) in order.iter().enumerate() {
        if rank < n_train {
            out[v] = Some(Split::Train);
        } else if rank < n_train + n_val {
            out[v] = Some(Split::Val);
        }
    }
    out
}

impl BlockModel {
    pub fn validate(&self) -> Result<(), GraphError> {
        check_prob("p_in", self.p_in)?;
        check_prob("p_out", self.p_out)?;
        check_prob("train_frac", self.train_frac)?;
        check_prob("val_frac", self.val_frac)?;
        if self.train_frac + self.val_frac > 1.0 {
            return Err(GraphError::Invalid("train_frac + val_frac exceeds 1".into()));
        }
        if self.block_sizes.is_empty() {
            return Err(GraphError::Invalid("block model needs at least one block".into()));
        }
        if !(self.signal.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return Err(GraphError::Invalid("signal/noise must be finite, noise >= 0".into()));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Sampled undirected edges `(i, j)` with `i < j`.
    pub fn sample_edges(&self, seed: u64) -> Result<Vec<Edge>, GraphError> {
        self.validate()?;
        let mut rng = rng::stream(seed, "synthetic.edges", 0, 0);
        let n = self.num_nodes();
        let mut starts = vec![0usize];
        for &s in &self.block_sizes {
            starts.push(starts.last().unwrap() + s);
        }
        let mut edges = Vec::new();
        for w in starts.windows(2) {
            for i in w[0]..w[1] {
                // own block tail, then the remaining blocks
                let lo = i + 1;
                bernoulli_run(&mut rng, w[1] - lo, self.p_in, |k| edges.push(Edge::new(i, lo + k)));
                bernoulli_run(&mut rng, n - w[1], self.p_out, |k| {
                    edges.push(Edge::new(i, w[1] + k))
                });
            }
        }
        Ok(edges)
    }

    /// Single-label node-classification graph with node splits.
    pub fn generate(&self, seed: u64) -> Result<Graph, GraphError> {
        let edges = self.sample_edges(seed)?;
        let class = block_of(&self.block_sizes);
        let k = self.block_sizes.len();
        let mut rng = rng::stream(seed, "synthetic.features", 0, 0);
        let features = class_features(&mut rng, &class, k, self.feature_dim, self.signal, self.noise);
        let mut rng = rng::stream(seed, "synthetic.splits", 0, 0);
        let splits = random_splits(&mut rng, class.len(), self.train_frac, self.val_frac);
        Graph::from_edges(class.len(), &edges, features)?
            .with_labels(Labels::Single {
                num_classes: k,
                values: class.into_iter().map(Some).collect(),
            })?
            .with_node_splits(splits)
    }
}

/// Bipartite user/item graph for edge classification. Users and items carry
/// one of `groups` latent tastes; observed edges and labels follow
/// same-group affinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BipartiteModel {
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub signal: f64,
    pub noise: f64,
    /// Labeled user-item pairs to draw.
    pub labeled_edges: usize,
    /// Probability a labeled pair's label is flipped.
    pub label_noise: f64,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for BipartiteModel {
    fn default() -> Self {
        Self {
            users: 200,
            items: 100,
            groups: 4,
            p_in: 0.08,
            p_out: 0.01,
            feature_dim: 16,
            signal: 1.0,
            noise: 1.0,
            labeled_edges: 2000,
            label_noise: 0.05,
            train_frac: 0.7,
            val_frac: 0.1,
        }
    }
}

impl BipartiteModel {
    pub fn generate(&self, seed: u64) -> Result<Graph, GraphError> {
        check_prob("p_in", self.p_in)?;
        check_prob("p_out", self.p_out)?;
        check_prob("label_noise", self.label_noise)?;
        check_prob("train_frac", self.train_frac)?;
        check_prob("val_frac", self.val_frac)?;
        if self.groups == 0 || self.users == 0 || self.items == 0 {
            return Err(GraphError::Invalid("bipartite model needs users, items and groups".into()));
        }
        let n = self.users + self.items;
        let group: Vec<usize> = (0..n).map(|v| v % self.groups).collect();
        let mut rng = rng::stream(seed, "synthetic.edges", 0, 0);
        let mut edges = Vec::new();
        for u in 0..self.users {
            for i in self.users..n {
                let p = if group[u] == group[i] { self.p_in } else { self.p_out };
                if rng.random::<f64>() < p {
                    edges.push(Edge::new(u, i));
                }
            }
        }
        let mut rng = rng::stream(seed, "synthetic.features", 0, 0);
        let features = class_features(&mut rng, &group, self.groups, self.feature_dim, self.signal, self.noise);
        let mut rng = rng::stream(seed, "synthetic.labels", 0, 0);
        let mut labeled = Vec::with_capacity(self.labeled_edges);
        for _ in 0..self.labeled_edges {
            let src = rng.random_range(0..self.users);
            let dst = rng.random_range(self.users..n);
            let mut label = (group[src] == group[dst]) as u8;
            if rng.random::<f64>() < self.label_noise {
                label ^= 1;
            }
            let r: f64 = rng.random();
            let split = if r < self.train_frac {
                Split::Train
            } else if r < self.train_frac + self.val_frac {
                Split::Val
            } else {
                Split::Test
            };
            labeled.push(LabeledEdge { src, dst, label, split });
        }
        let kinds = NodeKinds {
            names: vec!["user".into(), "item".into()],
            of_node: (0..n).map(|v| (v >= self.users) as u16).collect(),
            homogeneous: false,
        };
        Graph::from_edges(n, &edges, features)?
            .with_kinds(kinds)?
            .with_edges(labeled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blocks(p_in: f64, p_out: f64) -> BlockModel {
        BlockModel {
            block_sizes: vec![50, 50],
            p_in,
            p_out,
            feature_dim: 4,
            ..BlockModel::default()
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let m = two_blocks(0.2, 0.01);
        assert_eq!(m.sample_edges(7).unwrap(), m.sample_edges(7).unwrap());
        assert_eq!(m.generate(7).unwrap(), m.generate(7).unwrap());
        assert_ne!(m.sample_edges(7).unwrap(), m.sample_edges(8).unwrap());
    }

    #[test]
    fn forced_topology_gives_two_cliques() {
        let g = two_blocks(1.0, 0.0).generate(3).unwrap();
        for v in 0..100 {
            let (nb, _) = g.neighbors(v);
            assert_eq!(nb.len(), 49);
            assert!(nb.iter().all(|&u| (u as usize / 50) == v / 50 && u as usize != v));
        }
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(two_blocks(1.5, 0.0).generate(0).is_err());
        assert!(two_blocks(0.5, -0.1).sample_edges(0).is_err());
    }

    #[test]
    fn edge_count_matches_binomial_expectation() {
        let m = two_blocks(0.2, 0.01);
        let pairs_in: f64 = 2.0 * (50.0 * 49.0 / 2.0);
        let pairs_out: f64 = 50.0 * 50.0;
        let mean = pairs_in * 0.2 + pairs_out * 0.01;
        let sd = (pairs_in * 0.2 * 0.8 + pairs_out * 0.01 * 0.99).sqrt();
        let mut total = 0.0;
        for seed in 0..100 {
            let count = m.sample_edges(seed).unwrap().len() as f64;
            assert!((count - mean).abs() <= 4.0 * sd, "seed {seed}: {count} vs {mean}");
            total += count;
        }
        // average of 100 draws: sd shrinks by 10
        assert!((total / 100.0 - mean).abs() <= 3.0 * sd / 10.0);
    }

    #[test]
    fn inter_block_rate_is_unbiased() {
        let m = two_blocks(0.0, 0.3);
        let mut total = 0usize;
        for seed in 0..50 {
            total += m.sample_edges(seed).unwrap().len();
        }
        let rate = total as f64 / (50.0 * 2500.0);
        assert!((rate - 0.3).abs() < 0.005, "{rate}");
    }

    #[test]
    fn splits_cover_every_node() {
        let g = BlockModel::default().generate(1).unwrap();
        assert_eq!(g.split_counts(), [300, 100, 100]);
    }

    #[test]
    fn bipartite_respects_kinds() {
        let g = BipartiteModel::default().generate(5).unwrap();
        let kinds = g.kinds().unwrap();
        for v in 0..g.num_nodes() {
            for &u in g.neighbors(v).0 {
                assert_ne!(kinds.of_node[v], kinds.of_node[u as usize]);
            }
        }
        let pos = g.labeled_edges().iter().filter(|e| e.label == 1).count();
        assert!(pos > 0 && pos < g.labeled_edges().len());
    }
}
