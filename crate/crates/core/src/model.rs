//! Forward network: per-view hypergraph convolution, attention fusion over
//! views and the user/item scoring head.
//!
//! Every view keeps the global vertex index space; its incidence is the
//! parent incidence restricted to the hyperedges the walk traversed, so a
//! vertex outside the view only passes through the residual path.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroHypergraph, VertexId, VertexKind, VertexLayout};
use crate::sampling::SubHypergraphView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width, shared by every layer.
    pub dim: usize,
    /// Number of convolution layers.
    pub layers: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 64, layers: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub w_edge: Array2<f64>,
    pub w_node: Array2<f64>,
}

/// All learnable tensors. The same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layout: VertexLayout,
    /// Initial vertex embeddings, one row per global vertex.
    pub embeddings: Array2<f64>,
    pub layers: Vec<ConvLayer>,
    /// Attention weights over `[query || vertex embedding]`, length `2d`.
    pub w_att: Array1<f64>,
    pub b_att: f64,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub user_bias: Array1<f64>,
    pub item_bias: Array1<f64>,
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl ModelParams {
    /// Scaled-uniform initialization: entries drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(layout: VertexLayout, cfg: &ModelConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
        }
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = 1.0 / (d as f64).sqrt();
        let embeddings = uniform_matrix(layout.total(), d, bound, &mut rng);
        let layers = (0..cfg.layers)
            .map(|_| ConvLayer {
                w_edge: uniform_matrix(d, d, bound, &mut rng),
                w_node: uniform_matrix(d, d, bound, &mut rng),
            })
            .collect();
        let w_att = uniform_matrix(1, 2 * d, 1.0 / ((2 * d) as f64).sqrt(), &mut rng).remove_axis(Axis(0));
        let w_out = uniform_matrix(d, d, bound, &mut rng);
        Ok(ModelParams {
            layout,
            embeddings,
            layers,
            w_att,
            b_att: 0.0,
            w_out,
            b_out: Array1::zeros(d),
            user_bias: Array1::zeros(layout.n_users),
            item_bias: Array1::zeros(layout.n_items),
        })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("embeddings".into(), self.embeddings.as_slice().expect("standard layout"))];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_edge"), layer.w_edge.as_slice().expect("standard layout")));
            out.push((format!("layer{l}.w_node"), layer.w_node.as_slice().expect("standard layout")));
        }
        out.push(("w_att".into(), self.w_att.as_slice().expect("standard layout")));
        out.push(("b_att".into(), std::slice::from_ref(&self.b_att)));
        out.push(("w_out".into(), self.w_out.as_slice().expect("standard layout")));
        out.push(("b_out".into(), self.b_out.as_slice().expect("standard layout")));
        out.push(("user_bias".into(), self.user_bias.as_slice().expect("standard layout")));
        out.push(("item_bias".into(), self.item_bias.as_slice().expect("standard layout")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> =
            vec![("embeddings".into(), self.embeddings.as_slice_mut().expect("standard layout"))];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w_edge"), layer.w_edge.as_slice_mut().expect("standard layout")));
            out.push((format!("layer{l}.w_node"), layer.w_node.as_slice_mut().expect("standard layout")));
        }
        out.push(("w_att".into(), self.w_att.as_slice_mut().expect("standard layout")));
        out.push(("b_att".into(), std::slice::from_mut(&mut self.b_att)));
        out.push(("w_out".into(), self.w_out.as_slice_mut().expect("standard layout")));
        out.push(("b_out".into(), self.b_out.as_slice_mut().expect("standard layout")));
        out.push(("user_bias".into(), self.user_bias.as_slice_mut().expect("standard layout")));
        out.push(("item_bias".into(), self.item_bias.as_slice_mut().expect("standard layout")));
        out
    }

    /// Shape of each tensor in [`Self::tensors`] order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.dim();
        let mut out = vec![("embeddings".to_string(), vec![self.layout.total(), d])];
        for l in 0..self.layers.len() {
            out.push((format!("layer{l}.w_edge"), vec![d, d]));
            out.push((format!("layer{l}.w_node"), vec![d, d]));
        }
        out.push(("w_att".into(), vec![2 * d]));
        out.push(("b_att".into(), vec![1]));
        out.push(("w_out".into(), vec![d, d]));
        out.push(("b_out".into(), vec![d]));
        out.push(("user_bias".into(), vec![self.layout.n_users]));
        out.push(("item_bias".into(), vec![self.layout.n_items]));
        out
    }

    /// Sum of squares over every tensor.
    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, t)| t.iter()).map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn query_weights(&self) -> ndarray::ArrayView1<'_, f64> {
        self.w_att.slice(ndarray::s![..self.dim()])
    }

    fn vertex_weights(&self) -> ndarray::ArrayView1<'_, f64> {
        self.w_att.slice(ndarray::s![self.dim()..])
    }
}

/// Incidence of one view: member lists of its hyperedges over the global
/// vertex space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewIncidence {
    n_vertices: usize,
    edges: Vec<Vec<usize>>,
}

impl ViewIncidence {
    pub fn new(hh: &HeteroHypergraph, view: &SubHypergraphView) -> Result<Self> {
        let mut edges = Vec::with_capacity(view.hyperedges.len());
        for &e in &view.hyperedges {
            if e >= hh.n_hyperedges() {
                return Err(Error::Shape(format!("view references hyperedge {e} of {}", hh.n_hyperedges())));
            }
            edges.push(hh.members(e).to_vec());
        }
        Ok(ViewIncidence { n_vertices: hh.n_vertices(), edges })
    }

    pub fn from_members(n_vertices: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        if edges.iter().flatten().any(|&v| v >= n_vertices) {
            return Err(Error::Shape(format!("member outside {n_vertices} vertices")));
        }
        Ok(ViewIncidence { n_vertices, edges })
    }

    /// Incidence over every hyperedge of `hh`.
    pub fn full(hh: &HeteroHypergraph) -> Self {
        ViewIncidence {
            n_vertices: hh.n_vertices(),
            edges: (0..hh.n_hyperedges()).map(|e| hh.members(e).to_vec()).collect(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    /// `H^T X`: per-hyperedge sum of member rows.
    pub fn gather(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.edges.len(), x.ncols()));
        for (e, members) in self.edges.iter().enumerate() {
            let mut row = out.row_mut(e);
            for &v in members {
                row += &x.row(v);
            }
        }
        out
    }

    /// `H B`: adds each hyperedge row to all of its members.
    pub fn scatter(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_vertices, b.ncols()));
        for (e, members) in self.edges.iter().enumerate() {
            let src = b.row(e);
            for &v in members {
                let mut row = out.row_mut(v);
                row += &src;
            }
        }
        out
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Intermediates of one convolution layer.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Array2<f64>,
    /// `H^T X`
    pub gathered: Array2<f64>,
    /// `H^T X W_edge`, before the activation
    pub edge_pre: Array2<f64>,
    /// `X W_node + H relu(edge_pre)`, before the activation
    pub node_pre: Array2<f64>,
}

fn check_layer(x: &Array2<f64>, inc: &ViewIncidence, layer: &ConvLayer) -> Result<()> {
    let d = x.ncols();
    if x.nrows() != inc.n_vertices {
        return Err(Error::Shape(format!("{} feature rows for {} vertices", x.nrows(), inc.n_vertices)));
    }
    if layer.w_edge.dim() != (d, d) || layer.w_node.dim() != (d, d) {
        return Err(Error::Shape(format!(
            "layer weights {:?}/{:?} for width {d}",
            layer.w_edge.dim(),
            layer.w_node.dim()
        )));
    }
    Ok(())
}

fn conv_forward(x: &Array2<f64>, inc: &ViewIncidence, layer: &ConvLayer) -> Result<(Array2<f64>, LayerCache)> {
    check_layer(x, inc, layer)?;
    let gathered = inc.gather(x.view());
    let edge_pre = gathered.dot(&layer.w_edge);
    let neighbourhood = inc.scatter(relu(&edge_pre).view());
    let node_pre = x.dot(&layer.w_node) + neighbourhood;
    let out = relu(&node_pre);
    Ok((out, LayerCache { input: x.clone(), gathered, edge_pre, node_pre }))
}

/// `ReLU(X W_node + H ReLU(H^T X W_edge))`.
pub fn conv_layer(x: &Array2<f64>, inc: &ViewIncidence, layer: &ConvLayer) -> Result<Array2<f64>> {
    conv_forward(x, inc, layer).map(|(out, _)| out)
}

fn encode_cached(inc: &ViewIncidence, p: &ModelParams) -> Result<(Array2<f64>, Vec<LayerCache>)> {
    let mut x = p.embeddings.clone();
    let mut caches = Vec::with_capacity(p.layers.len());
    for layer in &p.layers {
        let (next, cache) = conv_forward(&x, inc, layer)?;
        caches.push(cache);
        x = next;
    }
    Ok((x, caches))
}

/// Applies the convolution stack to the initial embeddings under one view.
pub fn encode_view(inc: &ViewIncidence, p: &ModelParams) -> Result<Array2<f64>> {
    encode_cached(inc, p).map(|(z, _)| z)
}

/// Sums a handful of terms in ascending order so the result does not depend
/// on the order views were supplied in.
fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

/// Result of fusing view embeddings.
#[derive(Debug, Clone)]
pub struct Fusion {
    /// Mean row of each view, `m x d`.
    pub queries: Array2<f64>,
    /// Attention logits, `m x n`.
    pub scores: Array2<f64>,
    /// Softmax over views per vertex, `m x n`.
    pub alpha: Array2<f64>,
    pub fused: Array2<f64>,
    pub out: Array2<f64>,
}

/// Per-vertex softmax attention across views followed by the output
/// transform `Z_out = Z_fused W_out^T + b_out`.
pub fn attention_fuse(views: &[Array2<f64>], p: &ModelParams) -> Result<Fusion> {
    let m = views.len();
    if m == 0 {
        return Err(Error::InvalidArgument("attention fusion needs at least one view".into()));
    }
    let (n, d) = views[0].dim();
    if d != p.dim() || views.iter().any(|z| z.dim() != (n, d)) {
        return Err(Error::Shape("view embeddings disagree in shape".into()));
    }
    let mut queries = Array2::zeros((m, d));
    let mut scores = Array2::zeros((m, n));
    let wq = p.query_weights();
    let wz = p.vertex_weights();
    for (i, z) in views.iter().enumerate() {
        let q = z.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
        let base = wq.dot(&q) + p.b_att;
        scores.row_mut(i).assign(&(z.dot(&wz) + base));
        queries.row_mut(i).assign(&q);
    }

    let mut alpha = Array2::zeros((m, n));
    let mut fused = Array2::zeros((n, d));
    let mut buf = vec![0.0; m];
    for v in 0..n {
        let col = scores.column(v);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (b, s) in buf.iter_mut().zip(col.iter()) {
            *b = (s - max).exp();
        }
        let denom = ordered_sum(&mut buf.clone());
        for i in 0..m {
            alpha[[i, v]] = buf[i] / denom;
        }
        for f in 0..d {
            for i in 0..m {
                buf[i] = alpha[[i, v]] * views[i][[v, f]];
            }
            fused[[v, f]] = ordered_sum(&mut buf);
        }
    }
    let out = fused.dot(&p.w_out.t()) + &p.b_out;
    Ok(Fusion { queries, scores, alpha, fused, out })
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<Vec<LayerCache>>,
    pub views: Vec<Array2<f64>>,
    pub fusion: Fusion,
}

impl ForwardCache {
    pub fn out(&self) -> &Array2<f64> {
        &self.fusion.out
    }
}

/// Encodes every view (in parallel, collected in view order) and fuses them.
pub fn forward(p: &ModelParams, views: &[ViewIncidence]) -> Result<ForwardCache> {
    let encoded: Vec<(Array2<f64>, Vec<LayerCache>)> =
        views.par_iter().map(|inc| encode_cached(inc, p)).collect::<Result<_>>()?;
    let (zs, layers): (Vec<_>, Vec<_>) = encoded.into_iter().unzip();
    let fusion = attention_fuse(&zs, p)?;
    Ok(ForwardCache { layers, views: zs, fusion })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `z_u . z_i + b_u + b_i` for user ordinal `u` and item ordinal `i`.
pub fn logit(out: &Array2<f64>, p: &ModelParams, u: usize, i: usize) -> f64 {
    let l = p.layout;
    out.row(l.user(u)).dot(&out.row(l.item(i))) + p.user_bias[u] + p.item_bias[i]
}

/// Preference score `sigmoid(z_u . z_i + b_u + b_i)`.
pub fn predict(out: &Array2<f64>, p: &ModelParams, u: VertexId, i: VertexId) -> Result<f64> {
    if u.kind != VertexKind::User {
        return Err(Error::KindMismatch { expected: "user", got: u.kind.as_str() });
    }
    if i.kind != VertexKind::Item {
        return Err(Error::KindMismatch { expected: "item", got: i.kind.as_str() });
    }
    if !p.layout.contains(u) || !p.layout.contains(i) {
        return Err(Error::InvalidArgument(format!("{u:?} or {i:?} outside the model layout")));
    }
    Ok(sigmoid(logit(out, p, u.index, i.index)))
}

/// Gradient of the fusion and convolution stack for an upstream gradient on
/// `Z_out`. Bias gradients for users/items are left at zero.
pub fn backward_from_output(
    p: &ModelParams,
    views: &[ViewIncidence],
    cache: &ForwardCache,
    d_out: &Array2<f64>,
) -> Result<ModelParams> {
    let m = cache.views.len();
    if m == 0 || cache.layers.len() != m || views.len() != m {
        return Err(Error::InvalidArgument("forward cache does not match the view list".into()));
    }
    if d_out.dim() != cache.fusion.out.dim() {
        return Err(Error::Shape("output gradient shape".into()));
    }
    let mut grads = p.zeros_like();
    let fusion = &cache.fusion;
    let (n, d) = fusion.fused.dim();

    grads.w_out = d_out.t().dot(&fusion.fused);
    grads.b_out = d_out.sum_axis(Axis(0));
    let d_fused = d_out.dot(&p.w_out);

    // d alpha_i[v] = <dF[v], Z_i[v]>
    let mut d_alpha = Array2::zeros((m, n));
    for (i, z) in cache.views.iter().enumerate() {
        Zip::from(d_alpha.row_mut(i)).and(z.rows()).and(d_fused.rows()).for_each(|a, zr, gr| *a = zr.dot(&gr));
    }
    let mut d_scores = Array2::zeros((m, n));
    for v in 0..n {
        let weighted: f64 = (0..m).map(|j| fusion.alpha[[j, v]] * d_alpha[[j, v]]).sum();
        for i in 0..m {
            d_scores[[i, v]] = fusion.alpha[[i, v]] * (d_alpha[[i, v]] - weighted);
        }
    }

    let wq = p.query_weights().to_owned();
    let wz = p.vertex_weights().to_owned();
    let mut d_wq = Array1::<f64>::zeros(d);
    let mut d_wz = Array1::<f64>::zeros(d);
    let mut d_views = Vec::with_capacity(m);
    for (i, z) in cache.views.iter().enumerate() {
        let ds = d_scores.row(i);
        let ds_total = ds.sum();
        grads.b_att += ds_total;
        d_wz += &z.t().dot(&ds);
        d_wq.scaled_add(ds_total, &fusion.queries.row(i));

        let alpha_i = fusion.alpha.row(i);
        let mut dz = &d_fused * &alpha_i.insert_axis(Axis(1));
        dz += &(ds.insert_axis(Axis(1)).to_owned() * &wz.view().insert_axis(Axis(0)));
        let from_query = &wq * (ds_total / n as f64);
        dz += &from_query.insert_axis(Axis(0));
        d_views.push(dz);
    }
    grads.w_att.slice_mut(ndarray::s![..d]).assign(&d_wq);
    grads.w_att.slice_mut(ndarray::s![d..]).assign(&d_wz);

    let per_view: Vec<(Array2<f64>, Vec<(Array2<f64>, Array2<f64>)>)> = d_views
        .into_par_iter()
        .zip(views.par_iter())
        .zip(cache.layers.par_iter())
        .map(|((dz, inc), caches)| backward_view(p, inc, caches, dz))
        .collect();
    for (d_x0, layer_grads) in per_view {
        grads.embeddings += &d_x0;
        for (g, (d_edge, d_node)) in grads.layers.iter_mut().zip(layer_grads) {
            g.w_edge += &d_edge;
            g.w_node += &d_node;
        }
    }
    Ok(grads)
}

fn backward_view(
    p: &ModelParams,
    inc: &ViewIncidence,
    caches: &[LayerCache],
    mut d_x: Array2<f64>,
) -> (Array2<f64>, Vec<(Array2<f64>, Array2<f64>)>) {
    let mut layer_grads = vec![(Array2::zeros((0, 0)), Array2::zeros((0, 0))); caches.len()];
    for (l, cache) in caches.iter().enumerate().rev() {
        let layer = &p.layers[l];
        let mut d_node_pre = d_x;
        Zip::from(&mut d_node_pre).and(&cache.node_pre).for_each(|g, &s| {
            if s <= 0.0 {
                *g = 0.0;
            }
        });
        let d_w_node = cache.input.t().dot(&d_node_pre);
        let mut d_input = d_node_pre.dot(&layer.w_node.t());

        let mut d_edge_pre = inc.gather(d_node_pre.view());
        Zip::from(&mut d_edge_pre).and(&cache.edge_pre).for_each(|g, &s| {
            if s <= 0.0 {
                *g = 0.0;
            }
        });
        let d_w_edge = cache.gathered.t().dot(&d_edge_pre);
        let d_gathered = d_edge_pre.dot(&layer.w_edge.t());
        d_input += &inc.scatter(d_gathered.view());

        layer_grads[l] = (d_w_edge, d_w_node);
        d_x = d_input;
    }
    (d_x, layer_grads)
}
