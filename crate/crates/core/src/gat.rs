//! Two-layer graph attention network with a softmax readout over cells.
//!
//! Every op here records onto a [`Graph`], so the same code path serves
//! inference (parameters bound as constants) and training (parameters bound
//! as trainable leaves).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::baselines::{argmax_first, HardAssociation};
use crate::error::{Error, Result};
use crate::scenario::GraphInstance;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatConfig {
    /// Width of both attention layers.
    pub hidden: usize,
    /// LeakyReLU slope of the attention scores.
    pub negative_slope: f64,
    /// Only a single head is implemented.
    pub heads: usize,
    /// Nonlinearity after each attention layer.
    pub activation: Activation,
    /// Nonlinearity on the readout logits before the softmax.
    pub readout_activation: Activation,
    pub init_seed: u64,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            negative_slope: 0.2,
            heads: 1,
            activation: Activation::Relu,
            readout_activation: Activation::Relu,
            init_seed: 0,
        }
    }
}

impl GatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("gat.hidden must be positive".into()));
        }
        if self.heads != 1 {
            return Err(Error::Config(format!(
                "gat.heads = {} unsupported; only single-head attention is implemented",
                self.heads
            )));
        }
        if !self.negative_slope.is_finite() || self.negative_slope < 0.0 {
            return Err(Error::Config("gat.negative_slope must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One attention layer: `w` is `d_out x d_in`, `a` is `2 d_out x 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    pub w: Tensor,
    pub a: Tensor,
    pub negative_slope: f64,
}

impl GatLayerParams {
    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    fn glorot(d_in: usize, d_out: usize, negative_slope: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: glorot(d_out, d_in, rng),
            a: glorot(2 * d_out, 1, rng),
            negative_slope,
        }
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

pub const PARAM_NAMES: [&str; 6] = ["gat1.W", "gat1.a", "gat2.W", "gat2.a", "readout.Q", "readout.B"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatModel {
    pub config: GatConfig,
    pub n_cells: usize,
    pub layer1: GatLayerParams,
    pub layer2: GatLayerParams,
    /// `hidden x N`.
    pub readout_q: Tensor,
    /// Length `N`, shared by every UE row.
    pub readout_b: Tensor,
}

impl GatModel {
    /// Fresh model for `n_cells` cells, i.e. `3 * n_cells` input features.
    pub fn new(config: GatConfig, n_cells: usize) -> Result<Self> {
        config.validate()?;
        if n_cells == 0 {
            return Err(Error::Config("model needs at least one cell".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let d = config.hidden;
        let layer1 = GatLayerParams::glorot(3 * n_cells, d, config.negative_slope, &mut rng);
        let layer2 = GatLayerParams::glorot(d, d, config.negative_slope, &mut rng);
        let readout_q = glorot(d, n_cells, &mut rng);
        Ok(Self {
            config,
            n_cells,
            layer1,
            layer2,
            readout_q,
            readout_b: Tensor::zeros(&[n_cells]),
        })
    }

    pub fn params(&self) -> [(&'static str, &Tensor); 6] {
        [
            (PARAM_NAMES[0], &self.layer1.w),
            (PARAM_NAMES[1], &self.layer1.a),
            (PARAM_NAMES[2], &self.layer2.w),
            (PARAM_NAMES[3], &self.layer2.a),
            (PARAM_NAMES[4], &self.readout_q),
            (PARAM_NAMES[5], &self.readout_b),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.layer1.w,
            &mut self.layer1.a,
            &mut self.layer2.w,
            &mut self.layer2.a,
            &mut self.readout_q,
            &mut self.readout_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Puts the parameters on `g`, trainable or frozen.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ModelVars {
        let [w1, a1, w2, a2, q, b] = self.params().map(|(_, t)| g.leaf(t.clone(), trainable));
        ModelVars {
            layer1: LayerVars { w: w1, a: a1 },
            layer2: LayerVars { w: w2, a: a2 },
            q,
            b,
        }
    }

    pub fn forward(&self, g: &mut Graph, vars: &ModelVars, inst: &GraphInstance) -> Result<Var> {
        if inst.n_cells() != self.n_cells {
            return Err(Error::Contract(format!(
                "model trained for {} cells, instance has {}",
                self.n_cells,
                inst.n_cells()
            )));
        }
        let x = g.constant(inst.features.clone());
        forward(g, vars, &self.config, x, inst.mask())
    }

    /// Frozen forward pass.
    pub fn infer(&self, inst: &GraphInstance) -> Result<AssociationMatrix> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let s = self.forward(&mut g, &vars, inst)?;
        AssociationMatrix::new(g.value(s).clone())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, t)| t.is_finite())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w: Var,
    pub a: Var,
}

/// Graph handles for the six parameter tensors, in [`PARAM_NAMES`] order.
#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub layer1: LayerVars,
    pub layer2: LayerVars,
    pub q: Var,
    pub b: Var,
}

impl ModelVars {
    pub fn as_array(&self) -> [Var; 6] {
        [
            self.layer1.w,
            self.layer1.a,
            self.layer2.w,
            self.layer2.a,
            self.q,
            self.b,
        ]
    }

    pub fn from_slice(v: &[Var]) -> Result<Self> {
        match *v {
            [w1, a1, w2, a2, q, b] => Ok(Self {
                layer1: LayerVars { w: w1, a: a1 },
                layer2: LayerVars { w: w2, a: a2 },
                q,
                b,
            }),
            _ => Err(Error::Argument(format!("expected 6 parameter vars, got {}", v.len()))),
        }
    }
}

/// `(Z, rho)` with `Z = H W^T` and `rho[u,v] = leaky(a^T [Z_u || Z_v])`.
///
/// Scores are dense; non-edges are excluded by the masked softmax downstream.
pub fn attention_scores(g: &mut Graph, h: Var, layer: LayerVars, negative_slope: f64) -> Result<(Var, Var)> {
    let wt = g.transpose(layer.w)?;
    let z = g.matmul(h, wt)?;
    let d_out = g.value(layer.w).rows();
    if g.value(layer.a).shape() != [2 * d_out, 1] {
        return Err(Error::Shape {
            op: "attention_scores",
            lhs: g.value(layer.a).shape().to_vec(),
            rhs: vec![2 * d_out, 1],
        });
    }
    let a_src = g.slice_rows(layer.a, 0, d_out)?;
    let a_dst = g.slice_rows(layer.a, d_out, 2 * d_out)?;
    let src = g.matmul(z, a_src)?;
    let dst = g.matmul(z, a_dst)?;
    let raw = g.outer_add(src, dst)?;
    Ok((z, g.leaky_relu(raw, negative_slope)))
}

/// Attention weights of one layer: masked row softmax of the scores.
pub fn attention(
    g: &mut Graph,
    h: Var,
    mask: Arc<[bool]>,
    layer: LayerVars,
    negative_slope: f64,
) -> Result<(Var, Var)> {
    let (z, rho) = attention_scores(g, h, layer, negative_slope)?;
    let alpha = g.row_softmax_masked(rho, mask)?;
    Ok((z, alpha))
}

/// `h'_u = act(sum_v alpha[u,v] W h_v)` over the closed neighbourhood of `u`.
pub fn gat_layer(
    g: &mut Graph,
    h: Var,
    mask: Arc<[bool]>,
    layer: LayerVars,
    negative_slope: f64,
    activation: Activation,
) -> Result<Var> {
    let (z, alpha) = attention(g, h, mask, layer, negative_slope)?;
    let mixed = g.matmul(alpha, z)?;
    Ok(activation.apply(g, mixed))
}

/// `S = softmax_rows(act(H Q + B))`.
pub fn readout(g: &mut Graph, h: Var, q: Var, b: Var, activation: Activation) -> Result<Var> {
    let hq = g.matmul(h, q)?;
    let logits = g.add_row(hq, b)?;
    let logits = activation.apply(g, logits);
    g.row_softmax(logits)
}

pub fn forward(g: &mut Graph, vars: &ModelVars, cfg: &GatConfig, x: Var, mask: Arc<[bool]>) -> Result<Var> {
    let h1 = gat_layer(g, x, mask.clone(), vars.layer1, cfg.negative_slope, cfg.activation)?;
    let h2 = gat_layer(g, h1, mask, vars.layer2, cfg.negative_slope, cfg.activation)?;
    readout(g, h2, vars.q, vars.b, cfg.readout_activation)
}

/// Row-stochastic `K x N` soft association.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub s: Tensor,
}

impl AssociationMatrix {
    pub fn new(s: Tensor) -> Result<Self> {
        let (k, _) = s.require_matrix("AssociationMatrix")?;
        for i in 0..k {
            let row = s.row(i);
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract(format!(
                    "association row {i} is not on the simplex (sum {total})"
                )));
            }
        }
        Ok(Self { s })
    }

    pub fn harden(&self) -> HardAssociation {
        harden(&self.s)
    }
}

/// Per-row argmax, ties to the lowest cell index.
pub fn harden(s: &Tensor) -> HardAssociation {
    let assignment = (0..s.rows()).map(|k| argmax_first(s.row(k).iter().copied())).collect();
    HardAssociation {
        assignment,
        n_cells: s.cols(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::check_gradients;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn leaky(x: f64, d: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            d * x
        }
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_mask(k: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let mut m = vec![false; k * k];
        for i in 0..k {
            m[i * k + i] = true;
            for j in 0..i {
                let e = rng.random_bool(p);
                m[i * k + j] = e;
                m[j * k + i] = e;
            }
        }
        m
    }

    fn layer_vars(g: &mut Graph, p: &GatLayerParams) -> LayerVars {
        LayerVars {
            w: g.constant(p.w.clone()),
            a: g.constant(p.a.clone()),
        }
    }

    /// Per-node loops, no matrix ops.
    fn naive_layer(h: &Tensor, mask: &[bool], p: &GatLayerParams, relu: bool) -> Vec<Vec<f64>> {
        let (k, d_in, d_out) = (h.rows(), p.d_in(), p.d_out());
        let wh: Vec<Vec<f64>> = (0..k)
            .map(|v| {
                (0..d_out)
                    .map(|o| (0..d_in).map(|i| p.w.at(o, i) * h.at(v, i)).sum())
                    .collect()
            })
            .collect();
        let a = p.a.data();
        let mut out = vec![vec![0.0; d_out]; k];
        for u in 0..k {
            let nbrs: Vec<usize> = (0..k).filter(|&v| mask[u * k + v]).collect();
            let scores: Vec<f64> = nbrs
                .iter()
                .map(|&v| {
                    let e: f64 = (0..d_out).map(|o| a[o] * wh[u][o] + a[d_out + o] * wh[v][o]).sum();
                    leaky(e, p.negative_slope)
                })
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for (idx, &v) in nbrs.iter().enumerate() {
                let alpha = (scores[idx] - m).exp() / z;
                for o in 0..d_out {
                    out[u][o] += alpha * wh[v][o];
                }
            }
            if relu {
                out[u].iter_mut().for_each(|x| *x = x.max(0.0));
            }
        }
        out
    }

    fn instance(k: usize, n: usize, mask: Vec<bool>, rng: &mut ChaCha8Rng) -> GraphInstance {
        GraphInstance {
            features: random(k, 3 * n, rng),
            adjacency: mask,
            prb_matrix: Tensor::full(&[k, n], 1.0),
            n_prb_total: 51,
            scenario_seed: 0,
        }
    }

    fn small_model(n: usize, hidden: usize, seed: u64) -> GatModel {
        let cfg = GatConfig {
            hidden,
            init_seed: seed,
            ..GatConfig::default()
        };
        GatModel::new(cfg, n).unwrap()
    }

    #[test]
    fn default_model_has_paper_widths() {
        let m = GatModel::new(GatConfig::default(), 7).unwrap();
        assert_eq!(m.layer1.w.shape(), [512, 21]);
        assert_eq!(m.layer1.a.shape(), [1024, 1]);
        assert_eq!(m.layer2.w.shape(), [512, 512]);
        assert_eq!(m.readout_q.shape(), [512, 7]);
        assert_eq!(m.readout_b.shape(), [7]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inst = instance(9, 7, random_mask(9, 0.4, &mut rng), &mut rng);
        assert_eq!(m.infer(&inst).unwrap().s.shape(), [9, 7]);
    }

    #[test]
    fn init_respects_glorot_bounds_and_seed() {
        let m = small_model(3, 16, 4);
        let bound = (6.0f64 / (16.0 + 9.0)).sqrt();
        assert!(m.layer1.w.data().iter().all(|v| v.abs() < bound));
        assert_eq!(m, small_model(3, 16, 4));
        assert_ne!(m, small_model(3, 16, 5));
    }

    #[test]
    fn rejects_multi_head_and_zero_width() {
        let multi = GatConfig {
            heads: 2,
            ..GatConfig::default()
        };
        assert!(matches!(GatModel::new(multi, 3), Err(Error::Config(_))));
        let zero = GatConfig {
            hidden: 0,
            ..GatConfig::default()
        };
        assert!(GatModel::new(zero, 3).is_err());
    }

    #[test]
    fn zero_attention_vector_gives_uniform_neighbourhood() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 6;
        let mask = random_mask(k, 0.5, &mut rng);
        let p = GatLayerParams {
            w: random(4, 3, &mut rng),
            a: Tensor::zeros(&[8, 1]),
            negative_slope: 0.2,
        };
        let mut g = Graph::new();
        let h = g.constant(random(k, 3, &mut rng));
        let lv = layer_vars(&mut g, &p);
        let (_, rho) = attention_scores(&mut g, h, lv, 0.2).unwrap();
        assert!(g.value(rho).data().iter().all(|&v| v == 0.0));
        let (_, alpha) = attention(&mut g, h, mask.clone().into(), lv, 0.2).unwrap();
        for u in 0..k {
            let deg = (0..k).filter(|&v| mask[u * k + v]).count() as f64;
            for v in 0..k {
                let want = if mask[u * k + v] { 1.0 / deg } else { 0.0 };
                assert!((g.value(alpha).at(u, v) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn singleton_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GatLayerParams::glorot(3, 5, 0.2, &mut rng);
        let mut g = Graph::new();
        let h = g.constant(random(1, 3, &mut rng));
        let lv = layer_vars(&mut g, &p);
        let (_, alpha) = attention(&mut g, h, Arc::from([true]), lv, 0.2).unwrap();
        assert_eq!(g.value(alpha).data(), [1.0]);
    }

    #[test]
    fn two_node_scores_by_hand() {
        let p = GatLayerParams {
            w: Tensor::matrix(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap(),
            a: Tensor::matrix(4, 1, vec![0.3, -0.7, 1.1, 0.2]).unwrap(),
            negative_slope: 0.2,
        };
        let h = Tensor::matrix(2, 2, vec![0.4, -0.3, 1.0, 2.0]).unwrap();
        let z0 = [0.4 - 0.6, -0.4 - 0.15];
        let z1 = [1.0 + 4.0, -1.0 + 1.0];
        let e = |zu: [f64; 2], zv: [f64; 2]| leaky(0.3 * zu[0] - 0.7 * zu[1] + 1.1 * zv[0] + 0.2 * zv[1], 0.2);
        let want = [e(z0, z0), e(z0, z1), e(z1, z0), e(z1, z1)];

        let mut g = Graph::new();
        let hv = g.constant(h);
        let lv = layer_vars(&mut g, &p);
        let (_, rho) = attention_scores(&mut g, hv, lv, 0.2).unwrap();
        for (got, want) in g.value(rho).data().iter().zip(want) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn uniform_attention_averages_projections() {
        let p = GatLayerParams {
            w: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            a: Tensor::zeros(&[4, 1]),
            negative_slope: 0.2,
        };
        let mut g = Graph::new();
        let h = g.constant(Tensor::matrix(2, 2, vec![1.0, 3.0, 5.0, -7.0]).unwrap());
        let lv = layer_vars(&mut g, &p);
        let out = gat_layer(&mut g, h, Arc::from([true; 4]), lv, 0.2, Activation::Relu).unwrap();
        assert_eq!(g.value(out).data(), [3.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn layer_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let k = 5;
            let mask = random_mask(k, 0.4, &mut rng);
            let p = GatLayerParams::glorot(6, 4, 0.2, &mut rng);
            let h = random(k, 6, &mut rng);
            let relu = trial % 2 == 0;
            let act = if relu { Activation::Relu } else { Activation::Identity };
            let mut g = Graph::new();
            let hv = g.constant(h.clone());
            let lv = layer_vars(&mut g, &p);
            let out = gat_layer(&mut g, hv, mask.clone().into(), lv, 0.2, act).unwrap();
            let want = naive_layer(&h, &mask, &p, relu);
            for u in 0..k {
                for o in 0..4 {
                    assert!((g.value(out).at(u, o) - want[u][o]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn readout_examples() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::full(&[3, 4], 0.7));
        let q = g.constant(Tensor::zeros(&[4, 5]));
        let b = g.constant(Tensor::zeros(&[5]));
        let s = readout(&mut g, h, q, b, Activation::Relu).unwrap();
        assert!(g.value(s).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));

        let h = g.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let q = g.constant(Tensor::matrix(1, 3, vec![10.0, 0.0, 0.0]).unwrap());
        let b = g.constant(Tensor::zeros(&[3]));
        let s = readout(&mut g, h, q, b, Activation::Relu).unwrap();
        assert!(g.value(s).at(0, 0) > 0.9999);
    }

    #[test]
    fn forward_is_composition_of_public_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = small_model(3, 8, 9);
        let inst = instance(4, 3, random_mask(4, 0.5, &mut rng), &mut rng);
        let s = m.infer(&inst).unwrap();

        let mut g = Graph::new();
        let v = m.bind(&mut g, false);
        let x = g.constant(inst.features.clone());
        let h1 = gat_layer(&mut g, x, inst.mask(), v.layer1, 0.2, Activation::Relu).unwrap();
        let h2 = gat_layer(&mut g, h1, inst.mask(), v.layer2, 0.2, Activation::Relu).unwrap();
        let manual = readout(&mut g, h2, v.q, v.b, Activation::Relu).unwrap();
        for (a, b) in s.s.data().iter().zip(g.value(manual).data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_rejects_cell_count_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = instance(3, 4, random_mask(3, 0.5, &mut rng), &mut rng);
        assert!(matches!(small_model(3, 4, 0).infer(&inst), Err(Error::Contract(_))));
    }

    #[test]
    fn harden_examples() {
        let s = Tensor::matrix(2, 3, vec![0.2, 0.5, 0.3, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(harden(&s).assignment, vec![1, 0]);
    }

    #[test]
    fn association_matrix_checks_simplex() {
        assert!(AssociationMatrix::new(Tensor::matrix(1, 2, vec![0.6, 0.6]).unwrap()).is_err());
        assert!(AssociationMatrix::new(Tensor::matrix(1, 2, vec![1.5, -0.5]).unwrap()).is_err());
        assert!(AssociationMatrix::new(Tensor::matrix(1, 2, vec![0.25, 0.75]).unwrap()).is_ok());
    }

    #[test]
    fn end_to_end_gradient_of_mean_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..5 {
            let m = GatModel::new(
                GatConfig {
                    hidden: 5,
                    init_seed: seed,
                    readout_activation: Activation::Identity,
                    ..GatConfig::default()
                },
                2,
            )
            .unwrap();
            let inst = instance(4, 2, random_mask(4, 0.5, &mut rng), &mut rng);
            // Weight the entries so the mean of S (constant 1/N) is not trivial.
            let weights = random(4, 2, &mut rng);
            let inputs: Vec<Tensor> = m.params().iter().map(|(_, t)| (*t).clone()).collect();
            let cfg = m.config.clone();
            let report = check_gradients(
                &inputs,
                &|g: &mut Graph, v: &[Var]| {
                    let vars = ModelVars::from_slice(v)?;
                    let x = g.constant(inst.features.clone());
                    let s = forward(g, &vars, &cfg, x, inst.mask())?;
                    let w = g.constant(weights.clone());
                    let ws = g.mul(s, w)?;
                    let total = g.sum(ws);
                    Ok(g.scale(total, 1.0 / 8.0))
                },
                1e-4,
                1e-6,
            )
            .unwrap();
            assert!(report.passed(), "{report:?}");
        }
    }

    proptest! {
        #[test]
        fn harden_invariant_under_monotone_maps(
            row in proptest::collection::vec(0.0f64..1.0, 1..8),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let n = row.len();
            let s = Tensor::matrix(1, n, row.clone()).unwrap();
            let mapped = Tensor::matrix(
                1,
                n,
                row.iter().map(|v| (scale * v + shift).exp() + v.powi(3)).collect(),
            )
            .unwrap();
            prop_assert_eq!(harden(&s), harden(&mapped));
        }
    }
}
