//! Dataset loading, writing, split generation and synthetic graphs.
//!
//! A dataset is a directory of TSV files:
//!
//! * `manifest.tsv`: one line `n<TAB>D<TAB>C`.
//! * `edges.tsv`: one `u<TAB>v` pair per line, 0-indexed.
//! * `features.tsv`: line `i` holds `D` tab-separated floats for node `i`.
//! * `labels.tsv`: line `i` holds the integer class of node `i`.
//! * `splits.tsv` (optional): line `i` is one of `train`, `val`, `test`,
//!   `none`.
//!
//! Floats are written with Rust's shortest exact decimal form, so a write
//! followed by a load reproduces every value bit for bit.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

/// Boolean node masks for the three evaluation roles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    /// Checks equal lengths against `n`, pairwise disjointness and a
    /// nonempty train mask.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::Validation(format!(
                "mask lengths ({}, {}, {}) do not match {n} nodes",
                self.train.len(),
                self.val.len(),
                self.test.len()
            )));
        }
        for i in 0..n {
            let overlaps = (self.train[i] && self.val[i])
                || (self.train[i] && self.test[i])
                || (self.val[i] && self.test[i]);
            if overlaps {
                return Err(Error::Validation(format!(
                    "node {i} appears in more than one split"
                )));
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }
}

/// A loaded node-classification problem.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    /// Dense `n x D` feature rows.
    pub features: Matrix,
    /// Class of each node, all `< num_classes`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Present when the source directory pinned splits.
    pub masks: Option<Masks>,
    /// Edge lines in the source (before symmetrization and dedup).
    pub raw_edge_count: usize,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn make_splits(&self, policy: &SplitPolicy, rng: &mut ChaCha8Rng) -> Result<Masks> {
        make_splits(&self.labels, self.num_classes, policy, rng)
    }
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.into(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(dir: &Path, file: &str) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join(file))
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", dir.join(file).display())))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect())
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Vec<String> = read_lines(dir, "manifest.tsv")?
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect();
    if manifest.len() != 1 {
        return Err(parse_err(
            "manifest.tsv",
            1,
            format!("expected exactly one line, found {}", manifest.len()),
        ));
    }
    let fields: Vec<&str> = manifest[0].split('\t').collect();
    if fields.len() != 3 {
        return Err(parse_err(
            "manifest.tsv",
            1,
            format!("expected n<TAB>D<TAB>C, found {} fields", fields.len()),
        ));
    }
    let parse_count = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| parse_err("manifest.tsv", 1, format!("bad {what} count {s:?}")))
    };
    let n = parse_count(fields[0], "node")?;
    let d = parse_count(fields[1], "feature")?;
    let c = parse_count(fields[2], "class")?;
    if n == 0 || d == 0 || c == 0 {
        return Err(Error::Validation(format!(
            "manifest declares a degenerate dataset: n={n}, D={d}, C={c}"
        )));
    }

    let mut raw_edges = Vec::new();
    for (idx, line) in read_lines(dir, "edges.tsv")?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 2 {
            return Err(parse_err(
                "edges.tsv",
                lineno,
                format!("expected u<TAB>v, found {} fields", parts.len()),
            ));
        }
        let mut pair = [0usize; 2];
        for (slot, part) in pair.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| parse_err("edges.tsv", lineno, format!("bad node index {part:?}")))?;
        }
        let (u, v) = (pair[0], pair[1]);
        if u >= n || v >= n {
            return Err(parse_err(
                "edges.tsv",
                lineno,
                format!("node index out of range for n={n}: {u} {v}"),
            ));
        }
        raw_edges.push((u, v));
    }
    let raw_edge_count = raw_edges.len();
    let graph = Graph::build(n, &raw_edges)?;

    let feature_lines: Vec<String> = read_lines(dir, "features.tsv")?
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect();
    if feature_lines.len() != n {
        return Err(Error::Validation(format!(
            "features.tsv has {} rows, manifest declares n={n}",
            feature_lines.len()
        )));
    }
    let mut features = Matrix::zeros(n, d);
    for (i, line) in feature_lines.iter().enumerate() {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != d {
            return Err(parse_err(
                "features.tsv",
                i + 1,
                format!("expected {d} values, found {}", parts.len()),
            ));
        }
        for (j, part) in parts.iter().enumerate() {
            let v: f64 = part
                .parse()
                .map_err(|_| parse_err("features.tsv", i + 1, format!("bad float {part:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    "features.tsv",
                    i + 1,
                    format!("non-finite feature value {part:?}"),
                ));
            }
            features.set(i, j, v);
        }
    }

    let label_lines: Vec<String> = read_lines(dir, "labels.tsv")?
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect();
    if label_lines.len() != n {
        return Err(Error::Validation(format!(
            "labels.tsv has {} rows, manifest declares n={n}",
            label_lines.len()
        )));
    }
    let mut labels = Vec::with_capacity(n);
    for (i, line) in label_lines.iter().enumerate() {
        let label: usize = line
            .parse()
            .map_err(|_| parse_err("labels.tsv", i + 1, format!("bad label {line:?}")))?;
        if label >= c {
            return Err(parse_err(
                "labels.tsv",
                i + 1,
                format!("label {label} out of range for C={c}"),
            ));
        }
        labels.push(label);
    }

    let masks = if dir.join("splits.tsv").exists() {
        let split_lines: Vec<String> = read_lines(dir, "splits.tsv")?
            .into_iter()
            .filter(|l| !l.is_empty())
            .collect();
        if split_lines.len() != n {
            return Err(Error::Validation(format!(
                "splits.tsv has {} rows, manifest declares n={n}",
                split_lines.len()
            )));
        }
        let mut masks = Masks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        };
        for (i, line) in split_lines.iter().enumerate() {
            match line.as_str() {
                "train" => masks.train[i] = true,
                "val" => masks.val[i] = true,
                "test" => masks.test[i] = true,
                "none" => {}
                other => {
                    return Err(parse_err(
                        "splits.tsv",
                        i + 1,
                        format!("unknown split {other:?}, expected train, val, test or none"),
                    ))
                }
            }
        }
        masks.validate(n)?;
        Some(masks)
    } else {
        None
    };

    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset {
        name,
        graph,
        features,
        labels,
        num_classes: c,
        masks,
        raw_edge_count,
    })
}

/// Writes a dataset as the TSV directory format. Edges come out as unique
/// undirected pairs without self-loops; loading the result reproduces the
/// same graph, features and labels exactly.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = ds.num_nodes();

    let mut manifest = fs::File::create(dir.join("manifest.tsv"))?;
    writeln!(manifest, "{n}\t{}\t{}", ds.num_features(), ds.num_classes)?;

    let mut edges = fs::File::create(dir.join("edges.tsv"))?;
    for e in 0..ds.graph.num_directed_edges() {
        let (u, v) = (ds.graph.src()[e], ds.graph.dst()[e]);
        if u < v {
            writeln!(edges, "{u}\t{v}")?;
        }
    }

    let mut features = fs::File::create(dir.join("features.tsv"))?;
    for i in 0..n {
        let row: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(features, "{}", row.join("\t"))?;
    }

    let mut labels = fs::File::create(dir.join("labels.tsv"))?;
    for &l in &ds.labels {
        writeln!(labels, "{l}")?;
    }

    if let Some(masks) = &ds.masks {
        let mut splits = fs::File::create(dir.join("splits.tsv"))?;
        for i in 0..n {
            let token = if masks.train[i] {
                "train"
            } else if masks.val[i] {
                "val"
            } else if masks.test[i] {
                "test"
            } else {
                "none"
            };
            writeln!(splits, "{token}")?;
        }
    }
    Ok(())
}

/// How many nodes the train mask takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainBudget {
    /// Split a fixed total as evenly as possible across classes; the first
    /// `total mod C` classes receive one extra.
    Total(usize),
    PerClass(usize),
}

/// Split-generation policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Fixed class-balanced train budget, then `val` and `test` nodes drawn
    /// disjointly from the remaining pool.
    Planetoid {
        train: TrainBudget,
        val: usize,
        test: usize,
    },
    /// Stratified 60/20/20 over every class.
    Fractional,
}

/// Where a run's masks come from, recorded in checkpoints so evaluation can
/// rebuild them exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitSource {
    /// The dataset directory pinned its own `splits.tsv`.
    Pinned,
    /// Masks are drawn from the policy with the run seed.
    Policy(SplitPolicy),
}

/// Produces the masks described by `source`: the dataset's pinned masks, or
/// a fresh seeded draw under the policy.
pub fn resolve_masks(ds: &Dataset, source: SplitSource, seed: u64) -> Result<Masks> {
    match source {
        SplitSource::Pinned => ds
            .masks
            .clone()
            .ok_or_else(|| Error::Config(format!("dataset {} has no pinned splits.tsv", ds.name))),
        SplitSource::Policy(policy) => {
            let mut rng = crate::rng::seeded_rng(seed, crate::rng::Domain::Splits);
            make_splits(&ds.labels, ds.num_classes, &policy, &mut rng)
        }
    }
}

/// Draws train/val/test masks for `labels` under `policy`.
pub fn make_splits(
    labels: &[usize],
    num_classes: usize,
    policy: &SplitPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Masks> {
    let n = labels.len();
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Validation(format!(
            "label {bad} out of range for C={num_classes}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut masks = Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    match *policy {
        SplitPolicy::Planetoid { train, val, test } => {
            let quota = |class: usize| -> usize {
                match train {
                    TrainBudget::Total(t) => t / num_classes + usize::from(class < t % num_classes),
                    TrainBudget::PerClass(p) => p,
                }
            };
            for (class, members) in by_class.iter_mut().enumerate() {
                let q = quota(class);
                if members.len() < q {
                    return Err(Error::Config(format!(
                        "class {class} has {} nodes, cannot take {q} for training",
                        members.len()
                    )));
                }
                members.shuffle(rng);
                for &i in members.iter().take(q) {
                    masks.train[i] = true;
                }
            }
            let mut pool: Vec<usize> = (0..n).filter(|&i| !masks.train[i]).collect();
            if pool.len() < val + test {
                return Err(Error::Config(format!(
                    "{} nodes left after training split, need {val} + {test}",
                    pool.len()
                )));
            }
            pool.shuffle(rng);
            for &i in pool.iter().take(val) {
                masks.val[i] = true;
            }
            for &i in pool.iter().skip(val).take(test) {
                masks.test[i] = true;
            }
        }
        SplitPolicy::Fractional => {
            for members in by_class.iter_mut() {
                members.shuffle(rng);
                let m = members.len();
                let n_train = (m as f64 * 0.6).round() as usize;
                let n_val = ((m as f64 * 0.2).round() as usize).min(m - n_train);
                for (pos, &i) in members.iter().enumerate() {
                    if pos < n_train {
                        masks.train[i] = true;
                    } else if pos < n_train + n_val {
                        masks.val[i] = true;
                    } else {
                        masks.test[i] = true;
                    }
                }
            }
        }
    }
    masks.validate(n)?;
    Ok(masks)
}

/// Parameters of the synthetic generator.
#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    /// Probability that a drawn edge connects same-class nodes.
    pub homophily: f64,
    /// Edge draws per node (before symmetrization and dedup).
    pub avg_degree: usize,
}

/// Word tokens drawn per node when building feature rows.
const TOKENS_PER_NODE: usize = 40;
/// Weight of the per-node noise profile mixed into its class profile.
const PROFILE_NOISE: f64 = 0.2;

/// Unit-rate exponential draws normalized to a probability vector, the
/// standard flat-Dirichlet construction.
fn random_profile(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p: Vec<f64> = (0..len)
        .map(|_| rng.sample::<f64, _>(rand_distr::Exp1))
        .collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// Generates a labeled graph with controlled edge homophily.
///
/// Labels are balanced over the classes. Each node draws `avg_degree`
/// partners: with probability `homophily` a uniform same-class node,
/// otherwise a uniform node from a uniformly chosen other class. Feature
/// rows are word frequencies: token counts drawn from a per-class word
/// profile blended with per-node noise, normalized by the tokens drawn.
pub fn synthesize_graph(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if cfg.nodes == 0 || cfg.classes == 0 || cfg.features == 0 || cfg.avg_degree == 0 {
        return Err(Error::Config(format!(
            "synthesis parameters must be positive, got n={}, C={}, D={}, avg_degree={}",
            cfg.nodes, cfg.classes, cfg.features, cfg.avg_degree
        )));
    }
    if !(cfg.homophily >= 0.0 && cfg.homophily <= 1.0) {
        return Err(Error::Config(format!(
            "homophily must lie in [0, 1], got {}",
            cfg.homophily
        )));
    }
    if cfg.homophily > 0.0 && cfg.nodes < 2 * cfg.classes {
        return Err(Error::Config(format!(
            "same-class edges need at least 2 nodes per class: n={} with C={}",
            cfg.nodes, cfg.classes
        )));
    }
    if cfg.homophily < 1.0 && cfg.classes < 2 {
        return Err(Error::Config(
            "cross-class edges need at least 2 classes".into(),
        ));
    }

    let (n, c, d) = (cfg.nodes, cfg.classes, cfg.features);
    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(rng);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }

    let class_profiles: Vec<Vec<f64>> = (0..c).map(|_| random_profile(d, rng)).collect();
    let mut features = Matrix::zeros(n, d);
    for i in 0..n {
        let noise = random_profile(d, rng);
        let class = &class_profiles[labels[i]];
        let mix: Vec<f64> = class
            .iter()
            .zip(&noise)
            .map(|(&p, &q)| (1.0 - PROFILE_NOISE) * p + PROFILE_NOISE * q)
            .collect();
        let words = WeightedIndex::new(&mix)
            .map_err(|e| Error::Config(format!("degenerate word profile: {e}")))?;
        for _ in 0..TOKENS_PER_NODE {
            let w = words.sample(rng);
            features.set(i, w, features.at(i, w) + 1.0);
        }
        for j in 0..d {
            features.set(i, j, features.at(i, j) / TOKENS_PER_NODE as f64);
        }
    }

    let mut raw_edges = Vec::with_capacity(n * cfg.avg_degree);
    for i in 0..n {
        for _ in 0..cfg.avg_degree {
            let same_class = rng.random::<f64>() < cfg.homophily;
            let partner = if same_class {
                let members = &by_class[labels[i]];
                // Uniform over the class minus node i with a single draw.
                let j = rng.random_range(0..members.len() - 1);
                if members[j] == i {
                    members[members.len() - 1]
                } else {
                    members[j]
                }
            } else {
                let shift = rng.random_range(1..c);
                let other = &by_class[(labels[i] + shift) % c];
                other[rng.random_range(0..other.len())]
            };
            raw_edges.push((i, partner));
        }
    }
    let raw_edge_count = raw_edges.len();
    let graph = Graph::build(n, &raw_edges)?;

    Ok(Dataset {
        name: "synthetic".into(),
        graph,
        features,
        labels,
        num_classes: c,
        masks: None,
        raw_edge_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_rng, Domain};

    fn write_fixture(dir: &Path, files: &[(&str, &str)]) {
        for (name, body) in files {
            let mut f = fs::File::create(dir.join(name)).unwrap();
            f.write_all(body.as_bytes()).unwrap();
        }
    }

    fn minimal_fixture(dir: &Path) {
        write_fixture(
            dir,
            &[
                ("manifest.tsv", "2\t3\t2\n"),
                ("edges.tsv", "0\t1\n"),
                ("features.tsv", "1\t0\t2\n0\t0.5\t0\n"),
                ("labels.tsv", "0\n1\n"),
            ],
        );
    }

    #[test]
    fn minimal_fixture_loads_with_symmetrized_self_looped_graph() {
        let dir = tempfile::tempdir().unwrap();
        minimal_fixture(dir.path());
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.num_nodes(), 2);
        assert_eq!(ds.num_features(), 3);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.graph.num_directed_edges(), 4);
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.features.at(1, 1), 0.5);
        assert_eq!(ds.raw_edge_count, 1);
        assert!(ds.masks.is_none());
    }

    #[test]
    fn loader_reports_file_and_line_for_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        minimal_fixture(dir.path());
        write_fixture(dir.path(), &[("features.tsv", "1\t0\t2\n0\tbogus\t0\n")]);
        let err = load_dataset(dir.path()).unwrap_err();
        match err {
            Error::Parse { file, line, .. } => {
                assert_eq!(file, "features.tsv");
                assert_eq!(line, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_out_of_range_node_and_label() {
        let dir = tempfile::tempdir().unwrap();
        minimal_fixture(dir.path());
        write_fixture(dir.path(), &[("edges.tsv", "0\t5\n")]);
        let msg = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("edges.tsv"), "{msg}");
        assert!(msg.contains("out of range"), "{msg}");

        minimal_fixture(dir.path());
        write_fixture(dir.path(), &[("labels.tsv", "0\n2\n")]);
        match load_dataset(dir.path()).unwrap_err() {
            Error::Parse { file, line, msg } => {
                assert_eq!(file, "labels.tsv");
                assert_eq!(line, 2);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        minimal_fixture(dir.path());
        write_fixture(dir.path(), &[("labels.tsv", "0\n")]);
        match load_dataset(dir.path()).unwrap_err() {
            Error::Validation(msg) => assert!(msg.contains("labels.tsv"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn loader_accepts_pinned_splits() {
        let dir = tempfile::tempdir().unwrap();
        minimal_fixture(dir.path());
        write_fixture(dir.path(), &[("splits.tsv", "train\ntest\n")]);
        let ds = load_dataset(dir.path()).unwrap();
        let masks = ds.masks.unwrap();
        assert_eq!(masks.counts(), (1, 0, 1));
        assert!(masks.train[0] && masks.test[1]);
    }

    #[test]
    fn loader_rejects_unknown_split_token() {
        let dir = tempfile::tempdir().unwrap();
        minimal_fixture(dir.path());
        write_fixture(dir.path(), &[("splits.tsv", "train\tester\n")]);
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn write_then_load_round_trips_bit_exactly() {
        let mut rng = seeded_rng(7, Domain::Synthesis);
        let ds = synthesize_graph(
            &SynthConfig {
                nodes: 60,
                classes: 3,
                features: 12,
                homophily: 0.6,
                avg_degree: 4,
            },
            &mut rng,
        )
        .unwrap();
        let mut ds = ds;
        ds.masks = Some(
            make_splits(
                &ds.labels,
                ds.num_classes,
                &SplitPolicy::Fractional,
                &mut rng,
            )
            .unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.graph.src(), ds.graph.src());
        assert_eq!(back.graph.dst(), ds.graph.dst());
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.num_classes, ds.num_classes);
        assert_eq!(back.masks.as_ref(), ds.masks.as_ref());
    }

    #[test]
    fn fractional_floats_round_trip_through_text() {
        let mut ds = Dataset {
            name: "tiny".into(),
            graph: Graph::build(2, &[(0, 1)]).unwrap(),
            features: Matrix::from_rows(&[
                vec![0.1, 1.0 / 3.0, std::f64::consts::PI],
                vec![f64::MIN_POSITIVE, 1e300, -2.5e-17],
            ])
            .unwrap(),
            labels: vec![0, 1],
            num_classes: 2,
            masks: None,
            raw_edge_count: 1,
        };
        ds.features.set(0, 0, 0.1f64.next_up());
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.features, ds.features);
    }

    #[test]
    fn planetoid_split_hits_requested_counts() {
        let mut rng = seeded_rng(0, Domain::Synthesis);
        let ds = synthesize_graph(
            &SynthConfig {
                nodes: 2000,
                classes: 7,
                features: 10,
                homophily: 0.8,
                avg_degree: 3,
            },
            &mut rng,
        )
        .unwrap();
        let mut split_rng = seeded_rng(1, Domain::Splits);
        let masks = ds
            .make_splits(
                &SplitPolicy::Planetoid {
                    train: TrainBudget::Total(140),
                    val: 500,
                    test: 1000,
                },
                &mut split_rng,
            )
            .unwrap();
        assert_eq!(masks.counts(), (140, 500, 1000));
        // 140 over 7 classes: exactly 20 per class.
        for class in 0..7 {
            let got = ds
                .labels
                .iter()
                .zip(&masks.train)
                .filter(|&(&l, &t)| t && l == class)
                .count();
            assert_eq!(got, 20);
        }
    }

    #[test]
    fn planetoid_total_spreads_remainder_over_first_classes() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let mut rng = seeded_rng(2, Domain::Splits);
        let masks = make_splits(
            &labels,
            3,
            &SplitPolicy::Planetoid {
                train: TrainBudget::Total(7),
                val: 5,
                test: 5,
            },
            &mut rng,
        )
        .unwrap();
        let per_class: Vec<usize> = (0..3)
            .map(|c| {
                labels
                    .iter()
                    .zip(&masks.train)
                    .filter(|&(&l, &t)| t && l == c)
                    .count()
            })
            .collect();
        assert_eq!(per_class, vec![3, 2, 2]);
    }

    #[test]
    fn infeasible_split_requests_are_config_errors() {
        let labels = vec![0, 0, 1];
        let mut rng = seeded_rng(3, Domain::Splits);
        let err = make_splits(
            &labels,
            2,
            &SplitPolicy::Planetoid {
                train: TrainBudget::PerClass(2),
                val: 1,
                test: 1,
            },
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let err = make_splits(
            &labels,
            2,
            &SplitPolicy::Planetoid {
                train: TrainBudget::Total(2),
                val: 1,
                test: 1,
            },
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn fractional_split_preserves_class_balance() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let mut rng = seeded_rng(4, Domain::Splits);
        let masks = make_splits(&labels, 2, &SplitPolicy::Fractional, &mut rng).unwrap();
        assert_eq!(masks.counts(), (60, 20, 20));
        for class in 0..2 {
            let in_train = labels
                .iter()
                .zip(&masks.train)
                .filter(|&(&l, &t)| t && l == class)
                .count();
            assert!((in_train as i64 - 30).abs() <= 1);
        }
    }

    #[test]
    fn splits_stay_disjoint_and_exhaustive_over_many_seeds() {
        let mut rng = seeded_rng(5, Domain::Synthesis);
        let labels: Vec<usize> = (0..173).map(|_| rng.random_range(0..4)).collect();
        for seed in 0..100 {
            let mut split_rng = seeded_rng(seed, Domain::Splits);
            let masks = make_splits(
                &labels,
                4,
                &SplitPolicy::Planetoid {
                    train: TrainBudget::PerClass(5),
                    val: 40,
                    test: 60,
                },
                &mut split_rng,
            )
            .unwrap();
            masks.validate(labels.len()).unwrap();
            assert_eq!(masks.counts(), (20, 40, 60));

            let mut frac_rng = seeded_rng(seed, Domain::Splits);
            let masks = make_splits(&labels, 4, &SplitPolicy::Fractional, &mut frac_rng).unwrap();
            masks.validate(labels.len()).unwrap();
            let (tr, va, te) = masks.counts();
            assert_eq!(tr + va + te, labels.len());
        }
    }

    #[test]
    fn extreme_homophily_is_exact() {
        let mut rng = seeded_rng(6, Domain::Synthesis);
        let pure = synthesize_graph(
            &SynthConfig {
                nodes: 120,
                classes: 4,
                features: 8,
                homophily: 1.0,
                avg_degree: 5,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(pure.graph.edge_homophily(&pure.labels), 1.0);

        let mixed = synthesize_graph(
            &SynthConfig {
                nodes: 120,
                classes: 4,
                features: 8,
                homophily: 0.0,
                avg_degree: 5,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(mixed.graph.edge_homophily(&mixed.labels), 0.0);
    }

    #[test]
    fn measured_homophily_tracks_the_request() {
        let mut rng = seeded_rng(8, Domain::Synthesis);
        for h in [0.1, 0.5, 0.9] {
            let ds = synthesize_graph(
                &SynthConfig {
                    nodes: 2000,
                    classes: 5,
                    features: 20,
                    homophily: h,
                    avg_degree: 10,
                },
                &mut rng,
            )
            .unwrap();
            let measured = ds.graph.edge_homophily(&ds.labels);
            assert!(
                (measured - h).abs() <= 0.03,
                "requested {h}, measured {measured}"
            );
        }
    }

    #[test]
    fn synthetic_features_are_word_frequencies() {
        let mut rng = seeded_rng(9, Domain::Synthesis);
        let ds = synthesize_graph(
            &SynthConfig {
                nodes: 30,
                classes: 3,
                features: 15,
                homophily: 0.7,
                avg_degree: 3,
            },
            &mut rng,
        )
        .unwrap();
        for i in 0..30 {
            let row = ds.features.row(i);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let nonzero = row.iter().filter(|&&v| v > 0.0).count();
            assert!(nonzero <= TOKENS_PER_NODE);
        }
        // Balanced labels: every class holds n/C nodes.
        for class in 0..3 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == class).count(), 10);
        }
    }

    #[test]
    fn degenerate_synthesis_parameters_are_rejected() {
        let mut rng = seeded_rng(10, Domain::Synthesis);
        let base = SynthConfig {
            nodes: 50,
            classes: 5,
            features: 10,
            homophily: 0.5,
            avg_degree: 4,
        };
        for bad in [
            SynthConfig { nodes: 0, ..base },
            SynthConfig { classes: 0, ..base },
            SynthConfig {
                features: 0,
                ..base
            },
            SynthConfig {
                avg_degree: 0,
                ..base
            },
            SynthConfig {
                homophily: -0.1,
                ..base
            },
            SynthConfig {
                homophily: 1.5,
                ..base
            },
            SynthConfig {
                homophily: f64::NAN,
                ..base
            },
            SynthConfig {
                classes: 1,
                homophily: 0.5,
                ..base
            },
            SynthConfig {
                nodes: 8,
                classes: 5,
                ..base
            },
        ] {
            assert!(synthesize_graph(&bad, &mut rng).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let cfg = SynthConfig {
            nodes: 80,
            classes: 4,
            features: 10,
            homophily: 0.4,
            avg_degree: 5,
        };
        let a = synthesize_graph(&cfg, &mut seeded_rng(11, Domain::Synthesis)).unwrap();
        let b = synthesize_graph(&cfg, &mut seeded_rng(11, Domain::Synthesis)).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.graph.src(), b.graph.src());
        assert_eq!(a.graph.dst(), b.graph.dst());
    }
}
