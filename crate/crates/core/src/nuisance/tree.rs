//! Greedy squared-error regression trees, optionally honest.
//!
//! Split search is exhaustive over the candidate features. Thresholds sit at
//! midpoints between consecutive distinct sorted values and rows with
//! `x <= threshold` go left. Among equal gains the lowest feature index wins,
//! then the lowest threshold.
//!
//! An honest tree grows on one half of its rows and takes leaf values from the
//! other half. A split is admissible only when each child keeps at least
//! `min_leaf` rows of both halves.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::{stable_mean, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: T,
        /// Estimation rows routed here (training rows for non-honest trees).
        n_estimation: usize,
        /// The leaf had no estimation rows and inherited its parent's mean.
        fallback: bool,
    },
}

/// Fitted tree. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
    min_leaf: usize,
    n_features: usize,
    candidate_features: Vec<usize>,
    training_groups: Vec<usize>,
    estimation_groups: Vec<usize>,
}

/// Rows and groups a tree is grown from.
pub(crate) struct GrowSpec<'a, T> {
    pub x: &'a FeatureMatrix<T>,
    pub y: &'a [T],
    pub train: &'a [usize],
    /// `None` grows a plain (non-honest) tree.
    pub estimation: Option<&'a [usize]>,
    pub features: &'a [usize],
    pub min_leaf: usize,
}

struct Candidate<T> {
    gain: T,
    feature: usize,
    threshold: T,
}

struct Pending {
    node: usize,
    /// Training rows sorted by each candidate feature (parallel to `features`).
    train_sorted: Vec<Vec<usize>>,
    est_sorted: Vec<Vec<usize>>,
    parent_est_mean: Option<usize>,
}

impl<T: Scalar> RegressionTree<T> {
    /// Honest tree on `rows`: groups present in `rows` are shuffled and split
    /// in half; the first half grows the tree and the second populates leaves.
    pub fn fit_honest<R: Rng>(
        x: &FeatureMatrix<T>,
        y: &[T],
        groups: &[usize],
        rows: &[usize],
        features: &[usize],
        min_leaf: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_inputs(x, y, groups)?;
        let mut uniq: Vec<usize> = rows.iter().map(|&r| groups[r]).collect();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() < 2 {
            return Err(Error::InsufficientData("honest tree needs at least 2 clusters".into()));
        }
        uniq.shuffle(rng);
        let n_train = uniq.len() / 2;
        let training_groups = uniq[..n_train].to_vec();
        let estimation_groups = uniq[n_train..].to_vec();
        Self::fit_honest_split(
            x,
            y,
            groups,
            rows,
            &training_groups,
            &estimation_groups,
            features,
            min_leaf,
        )
    }

    /// Honest tree with a given split of groups: rows of `training_groups`
    /// grow the tree, rows of `estimation_groups` populate its leaves. Rows of
    /// other groups are ignored.
    #[allow(clippy::too_many_arguments)]
    pub fn fit_honest_split(
        x: &FeatureMatrix<T>,
        y: &[T],
        groups: &[usize],
        rows: &[usize],
        training_groups: &[usize],
        estimation_groups: &[usize],
        features: &[usize],
        min_leaf: usize,
    ) -> Result<Self> {
        check_inputs(x, y, groups)?;
        let mut training_groups = training_groups.to_vec();
        let mut estimation_groups = estimation_groups.to_vec();
        training_groups.sort_unstable();
        estimation_groups.sort_unstable();
        if training_groups
            .iter()
            .any(|g| estimation_groups.binary_search(g).is_ok())
        {
            return Err(Error::Config("training and estimation groups overlap".into()));
        }
        let train: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| training_groups.binary_search(&groups[r]).is_ok())
            .collect();
        let est: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| estimation_groups.binary_search(&groups[r]).is_ok())
            .collect();
        let nodes = grow(&GrowSpec {
            x,
            y,
            train: &train,
            estimation: Some(&est),
            features,
            min_leaf,
        });
        Ok(Self {
            nodes,
            min_leaf,
            n_features: x.n_cols(),
            candidate_features: features.to_vec(),
            training_groups,
            estimation_groups,
        })
    }

    /// Plain CART tree whose leaves hold training means.
    pub fn fit_plain(
        x: &FeatureMatrix<T>,
        y: &[T],
        rows: &[usize],
        features: &[usize],
        min_leaf: usize,
    ) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        let nodes = grow(&GrowSpec {
            x,
            y,
            train: rows,
            estimation: None,
            features,
            min_leaf,
        });
        Ok(Self {
            nodes,
            min_leaf,
            n_features: x.n_cols(),
            candidate_features: features.to_vec(),
            training_groups: Vec::new(),
            estimation_groups: Vec::new(),
        })
    }

    /// Single leaf holding `value`, estimated on `estimation_groups`.
    pub fn constant(
        value: T,
        n: usize,
        n_features: usize,
        training_groups: Vec<usize>,
        estimation_groups: Vec<usize>,
    ) -> Self {
        Self {
            nodes: vec![Node::Leaf {
                value,
                n_estimation: n,
                fallback: false,
            }],
            min_leaf: n,
            n_features,
            candidate_features: Vec::new(),
            training_groups,
            estimation_groups,
        }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Features the split search was allowed to use.
    pub fn candidate_features(&self) -> &[usize] {
        &self.candidate_features
    }

    /// Groups whose rows chose the splits.
    pub fn training_groups(&self) -> &[usize] {
        &self.training_groups
    }

    /// Groups whose rows populated the leaves (empty for plain trees).
    pub fn estimation_groups(&self) -> &[usize] {
        &self.estimation_groups
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Index of the leaf node reached by `row`.
    pub fn leaf_of(&self, row: &[T]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        match self.nodes[self.leaf_of(row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Shape(format!(
                "tree trained on {} features, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok((0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Indented text dump, one node per line.
    pub fn render(&self, feature_names: &[String]) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize, String::from("root"))];
        while let Some((i, depth, label)) = stack.pop() {
            let pad = "  ".repeat(depth);
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let name = feature_names
                        .get(*feature)
                        .cloned()
                        .unwrap_or_else(|| format!("x{feature}"));
                    let _ = writeln!(out, "{pad}{label}: split {name} <= {threshold}");
                    stack.push((*right, depth + 1, format!("{name} > {threshold}")));
                    stack.push((*left, depth + 1, format!("{name} <= {threshold}")));
                }
                Node::Leaf {
                    value,
                    n_estimation,
                    fallback,
                } => {
                    let fb = if *fallback { " (parent fallback)" } else { "" };
                    let _ = writeln!(out, "{pad}{label}: leaf value={value} n={n_estimation}{fb}");
                }
            }
        }
        out
    }
}

fn check_inputs<T: Scalar>(x: &FeatureMatrix<T>, y: &[T], groups: &[usize]) -> Result<()> {
    if x.n_rows() != y.len() || y.len() != groups.len() {
        return Err(Error::Shape(format!(
            "{} feature rows, {} targets, {} cluster keys",
            x.n_rows(),
            y.len(),
            groups.len()
        )));
    }
    Ok(())
}

fn sorted_by_feature<T: Scalar>(x: &FeatureMatrix<T>, rows: &[usize], f: usize) -> Vec<usize> {
    let mut v = rows.to_vec();
    v.sort_by(|&a, &b| {
        x.get(a, f)
            .partial_cmp(&x.get(b, f))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    v
}

/// Grows the tree breadth-agnostically with an explicit work stack.
pub(crate) fn grow<T: Scalar>(spec: &GrowSpec<'_, T>) -> Vec<Node<T>> {
    let x = spec.x;
    let y = spec.y;
    let min_leaf = spec.min_leaf.max(1);
    let honest = spec.estimation.is_some();
    let est_rows: &[usize] = spec.estimation.unwrap_or(&[]);

    let mut features = spec.features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut nodes: Vec<Node<T>> = vec![Node::Leaf {
        value: T::zero(),
        n_estimation: 0,
        fallback: false,
    }];
    // means of estimation rows per node, used as the empty-leaf fallback
    let mut est_means: Vec<Option<T>> = vec![None];

    let root = Pending {
        node: 0,
        train_sorted: features.iter().map(|&f| sorted_by_feature(x, spec.train, f)).collect(),
        est_sorted: features.iter().map(|&f| sorted_by_feature(x, est_rows, f)).collect(),
        parent_est_mean: None,
    };
    let mut stack = vec![root];
    let mut goes_left = vec![false; x.n_rows()];

    while let Some(p) = stack.pop() {
        let train: &[usize] = p.train_sorted.first().map_or(spec.train, Vec::as_slice);
        let est: &[usize] = p.est_sorted.first().map_or(est_rows, Vec::as_slice);
        let train_mean = stable_mean(train.iter().map(|&r| y[r]));
        let est_mean = stable_mean(est.iter().map(|&r| y[r]));
        est_means[p.node] = est_mean;

        let best = if features.is_empty() {
            None
        } else {
            best_split(x, y, &features, &p, train_mean, honest, min_leaf)
        };

        match best {
            Some(c) => {
                let fpos = features.binary_search(&c.feature).expect("candidate feature");
                for &r in &p.train_sorted[fpos] {
                    goes_left[r] = x.get(r, c.feature) <= c.threshold;
                }
                for &r in &p.est_sorted[fpos] {
                    goes_left[r] = x.get(r, c.feature) <= c.threshold;
                }
                let split_lists = |lists: &[Vec<usize>]| {
                    let mut l = Vec::with_capacity(lists.len());
                    let mut rr = Vec::with_capacity(lists.len());
                    for list in lists {
                        let (a, b): (Vec<usize>, Vec<usize>) = list.iter().partition(|&&r| goes_left[r]);
                        l.push(a);
                        rr.push(b);
                    }
                    (l, rr)
                };
                let (tl, tr) = split_lists(&p.train_sorted);
                let (el, er) = split_lists(&p.est_sorted);
                let left = nodes.len();
                let right = left + 1;
                for _ in 0..2 {
                    nodes.push(Node::Leaf {
                        value: T::zero(),
                        n_estimation: 0,
                        fallback: false,
                    });
                    est_means.push(None);
                }
                nodes[p.node] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                // push right first so the left subtree is numbered first
                stack.push(Pending {
                    node: right,
                    train_sorted: tr,
                    est_sorted: er,
                    parent_est_mean: Some(p.node),
                });
                stack.push(Pending {
                    node: left,
                    train_sorted: tl,
                    est_sorted: el,
                    parent_est_mean: Some(p.node),
                });
            }
            None => {
                let leaf = if !honest {
                    Node::Leaf {
                        value: train_mean.unwrap_or_else(T::zero),
                        n_estimation: train.len(),
                        fallback: false,
                    }
                } else if let Some(m) = est_mean {
                    Node::Leaf {
                        value: m,
                        n_estimation: est.len(),
                        fallback: false,
                    }
                } else {
                    // nearest ancestor with estimation rows, else the training mean
                    let mut anc = p.parent_est_mean;
                    let mut value = None;
                    while let Some(a) = anc {
                        if let Some(m) = est_means[a] {
                            value = Some(m);
                            break;
                        }
                        anc = parent_of(&nodes, a);
                    }
                    Node::Leaf {
                        value: value.or(train_mean).unwrap_or_else(T::zero),
                        n_estimation: 0,
                        fallback: true,
                    }
                };
                nodes[p.node] = leaf;
            }
        }
    }
    nodes
}

fn parent_of<T>(nodes: &[Node<T>], child: usize) -> Option<usize> {
    nodes.iter().position(|n| match n {
        Node::Split { left, right, .. } => *left == child || *right == child,
        Node::Leaf { .. } => false,
    })
}

fn best_split<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[T],
    features: &[usize],
    p: &Pending,
    train_mean: Option<T>,
    honest: bool,
    min_leaf: usize,
) -> Option<Candidate<T>> {
    let n = p.train_sorted[0].len();
    let n_est = p.est_sorted[0].len();
    if n < 2 * min_leaf || (honest && n_est < 2 * min_leaf) {
        return None;
    }
    let mean = train_mean?;
    let half = T::lit(0.5);
    let mut best: Option<Candidate<T>> = None;
    for (fpos, &f) in features.iter().enumerate() {
        let sorted = &p.train_sorted[fpos];
        let est = &p.est_sorted[fpos];
        let mut left_sum = T::zero();
        let mut est_ptr = 0usize;
        for k in 0..n - 1 {
            let r = sorted[k];
            left_sum += y[r] - mean;
            let n_left = k + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            let a = x.get(r, f);
            let b = x.get(sorted[k + 1], f);
            if a >= b {
                continue;
            }
            let mut threshold = a * half + b * half;
            if threshold >= b || threshold < a {
                threshold = a;
            }
            if honest {
                while est_ptr < n_est && x.get(est[est_ptr], f) <= threshold {
                    est_ptr += 1;
                }
                if est_ptr < min_leaf || n_est - est_ptr < min_leaf {
                    continue;
                }
            }
            let nl = T::from_count(n_left);
            let nr = T::from_count(n - n_left);
            let gain = left_sum * left_sum * (T::one() / nl + T::one() / nr);
            if gain > T::zero() && best.as_ref().is_none_or(|c| gain > c.gain) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn xy(n: usize) -> (FeatureMatrix<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y = xs.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        (FeatureMatrix::column(&xs), y)
    }

    #[test]
    fn plain_tree_finds_step() {
        let (x, y) = xy(100);
        let rows: Vec<usize> = (0..100).collect();
        let t = RegressionTree::fit_plain(&x, &y, &rows, &[0], 5).unwrap();
        match t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.505).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict_row(&[0.9]), 1.0);
        assert_eq!(t.predict_row(&[0.1]), 0.0);
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let (x, _) = xy(50);
        let y = vec![0.1; 50];
        let rows: Vec<usize> = (0..50).collect();
        let t = RegressionTree::fit_plain(&x, &y, &rows, &[0], 1).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict_row(&[0.3]), 0.1);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // two identical columns: equal gains everywhere
        let rows_x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let x = FeatureMatrix::from_rows(&rows_x).unwrap();
        let y: Vec<f64> = (0..20).map(|i| if i >= 10 { 3.0 } else { 0.0 }).collect();
        let rows: Vec<usize> = (0..20).collect();
        let t = RegressionTree::fit_plain(&x, &y, &rows, &[1, 0], 2).unwrap();
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn honest_leaves_hold_estimation_means() {
        let n = 400;
        let (x, y) = xy(n);
        let groups: Vec<usize> = (0..n).collect();
        let rows: Vec<usize> = (0..n).collect();
        let mut rng = stream(3, "t", 0);
        let t = RegressionTree::fit_honest(&x, &y, &groups, &rows, &[0], 10, &mut rng).unwrap();
        let est: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|r| t.estimation_groups().binary_search(&groups[*r]).is_ok())
            .collect();
        for (i, node) in t.nodes().iter().enumerate() {
            if let Node::Leaf {
                value,
                n_estimation,
                fallback,
            } = node
            {
                let routed: Vec<f64> = est
                    .iter()
                    .filter(|&&r| t.leaf_of(x.row(r)) == i)
                    .map(|&r| y[r])
                    .collect();
                assert!(!fallback);
                assert_eq!(routed.len(), *n_estimation);
                assert!(*n_estimation >= 10);
                assert_eq!(Some(*value), stable_mean(routed));
            }
        }
        // training and estimation groups partition the clusters
        assert_eq!(t.training_groups().len() + t.estimation_groups().len(), n);
    }

    #[test]
    fn empty_estimation_half_falls_back() {
        // all rows belong to one of two clusters; estimation rows exist but
        // a single-row training set cannot split, so the root is a leaf
        let x = FeatureMatrix::column(&[0.0, 1.0]);
        let y = vec![2.0, 4.0];
        let t = RegressionTree::fit_honest(&x, &y, &[0, 1], &[0, 1], &[0], 1, &mut stream(1, "t", 0)).unwrap();
        assert_eq!(t.n_leaves(), 1);
        let est_value = if t.estimation_groups() == [0] { 2.0 } else { 4.0 };
        assert_eq!(t.predict_row(&[0.5]), est_value);
    }

    #[test]
    fn predict_checks_width() {
        let (x, y) = xy(10);
        let t = RegressionTree::fit_plain(&x, &y, &(0..10).collect::<Vec<_>>(), &[0], 1).unwrap();
        let wide = FeatureMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(t.predict(&wide).is_err());
    }

    #[test]
    fn render_lists_every_node() {
        let (x, y) = xy(40);
        let t = RegressionTree::fit_plain(&x, &y, &(0..40).collect::<Vec<_>>(), &[0], 5).unwrap();
        let text = t.render(&["earn".into()]);
        assert_eq!(text.lines().count(), t.nodes().len());
        assert!(text.contains("split earn <="));
    }
}
