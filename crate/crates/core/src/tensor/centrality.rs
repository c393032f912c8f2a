use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::tensor::{CooccurrenceTensor, CountMatrix};

/// Weighted degree per figure and week (`N×T`): row sums of `Y_t`.
pub fn degree_centrality(tensor: &CooccurrenceTensor) -> DMatrix<f64> {
    let n = tensor.n();
    let mut out = DMatrix::zeros(n, tensor.t());
    for (t, y) in tensor.layers().iter().enumerate() {
        for i in 0..n {
            out[(i, t)] = (0..n).filter(|&j| j != i).map(|j| y[(i, j)] as f64).sum();
        }
    }
    out
}

/// Unnormalized shortest-path betweenness per figure and week (`N×T`) on the
/// graph with an edge wherever `Y_t[i, j] > 0`.
pub fn betweenness_centrality(tensor: &CooccurrenceTensor) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(tensor.n(), tensor.t());
    for (t, y) in tensor.layers().iter().enumerate() {
        for (i, b) in layer_betweenness(y).into_iter().enumerate() {
            out[(i, t)] = b;
        }
    }
    out
}

/// Brandes' algorithm on one binarized undirected layer; each unordered pair
/// of endpoints contributes once.
pub fn layer_betweenness(y: &CountMatrix) -> Vec<f64> {
    let n = y.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && y[(i, j)] > 0).collect())
        .collect();

    let mut centrality = vec![0.0; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        stack.clear();
        preds.iter_mut().for_each(Vec::clear);
        sigma.fill(0.0);
        dist.fill(-1);
        delta.fill(0.0);
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    // every pair was visited from both ends
    centrality.iter_mut().for_each(|c| *c /= 2.0);
    centrality
}
