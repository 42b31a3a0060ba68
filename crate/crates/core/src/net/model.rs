use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use super::features::{aggregation_weights, iou_matrix, AggregationMode, GcnConfig};
use super::mlp::{mlp_on_tape, Mlp, MlpVars};
use super::tape::{Tape, Var};
use super::{NetError, Result};
use crate::geometry::BBox;
use crate::matching::{complete_edges, incidence_matrices, FrameGraph, MatchConfig, MatchResult};
use crate::qp::SolverOptions;

/// Appearance encoder plus the GCN update MLP, shared by both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchNet {
    pub encoder: Mlp,
    pub gcn_mlp: Mlp,
    pub gcn: GcnConfig,
    pub aggregation: AggregationMode,
}

pub const PARAM_NAMES: [&str; 8] = [
    "encoder.w1",
    "encoder.b1",
    "encoder.w2",
    "encoder.b2",
    "gcn.w1",
    "gcn.b1",
    "gcn.w2",
    "gcn.b2",
];

impl MatchNet {
    pub fn init(rng: &mut ChaCha8Rng, d_in: usize, hidden: usize, d_out: usize, gcn: GcnConfig) -> Self {
        Self {
            encoder: Mlp::init(rng, d_in, hidden, d_out),
            gcn_mlp: Mlp::init(rng, d_out, hidden, d_out),
            gcn,
            aggregation: AggregationMode::Mean,
        }
    }

    /// Both MLPs are exact identities; with `num_layers = 0` the network
    /// passes raw features straight to the matcher.
    pub fn identity(d: usize, gcn: GcnConfig) -> Self {
        Self {
            encoder: Mlp::identity(d),
            gcn_mlp: Mlp::identity(d),
            gcn,
            aggregation: AggregationMode::Mean,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        &PARAM_NAMES
    }

    pub fn tensors(&self) -> Vec<DMatrix<f64>> {
        self.encoder
            .tensors()
            .into_iter()
            .chain(self.gcn_mlp.tensors())
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let [a, b, c, d] = self.encoder.tensors_mut();
        let [e, f, g, h] = self.gcn_mlp.tensors_mut();
        vec![a, b, c, d, e, f, g, h]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.gcn_mlp.is_finite()
    }

    /// Encoded unit feature of one raw detection feature.
    pub fn encode(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        super::encode_appearance(raw, &self.encoder)
    }

    /// Encoder plus GCN on already finalized graphs, then matching.
    pub fn associate(&self, det: &FrameGraph, trk: &FrameGraph, cfg: &MatchConfig) -> Result<MatchResult> {
        let (d, t) = super::gcn_update(det, trk, &self.gcn_mlp, &self.gcn)?;
        Ok(crate::matching::match_graphs(&d, &t, cfg)?)
    }

    /// Records the whole loss computation on `tape`.
    pub fn forward(&self, tape: &mut Tape, sample: &TrainSample, opts: &ForwardOptions) -> Result<ForwardVars> {
        sample.check(self.input_dim())?;
        let (nd, nt) = (sample.n_det(), sample.n_trk());
        let enc = self.encoder.register(tape);
        let gcn = self.gcn_mlp.register(tape);
        let det_input = tape.leaf(sample.det_features.clone());
        let trk_input = tape.leaf(sample.trk_history.clone());

        let hd = unit_columns(tape, &enc, det_input)?;
        let hist = unit_columns(tape, &enc, trk_input)?;
        let weights = tape.leaf(sample.aggregation_matrix(self.aggregation));
        let agg = tape.matmul(hist, weights);
        let mut hd = hd;
        let mut ht = checked_normalize(tape, agg)?;

        if self.gcn.num_layers > 0 {
            let iou = tape.leaf(iou_matrix(&sample.det_boxes, &sample.trk_boxes));
            for _ in 0..self.gcn.num_layers {
                (hd, ht) = gcn_layer_on_tape(tape, &gcn, hd, ht, iou, self.gcn.use_geometry);
            }
            hd = checked_normalize(tape, hd)?;
            ht = checked_normalize(tape, ht)?;
        }

        let hd_t = tape.transpose(hd);
        let vertex = tape.matmul(hd_t, ht);
        let ed = edge_features(tape, hd, nd);
        let et = edge_features(tape, ht, nt);
        let ed_t = tape.transpose(ed);
        let edge = tape.matmul(ed_t, et);
        let quadratic = tape.expand(edge, complete_edges(nd), complete_edges(nt), nd, nt);
        let x = tape.match_qp(vertex, quadratic, &opts.solver, opts.detach_qp)?;
        let scores = tape.reshape(x, nd, nt);
        let sharpened = tape.row_softmax(scores, opts.tau);
        let loss = tape.weighted_bce(sharpened, sample.target.clone(), nt.saturating_sub(1) as f64)?;
        let mut params = enc.all().to_vec();
        params.extend(gcn.all());
        Ok(ForwardVars {
            params,
            det_input,
            trk_input,
            scores,
            sharpened,
            loss,
        })
    }

    pub fn loss(&self, sample: &TrainSample, opts: &ForwardOptions) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.forward(&mut tape, sample, opts)?;
        Ok(tape.value(vars.loss)[(0, 0)])
    }

    pub fn loss_and_gradients(&self, sample: &TrainSample, opts: &ForwardOptions) -> Result<(f64, NetGradients)> {
        let mut tape = Tape::new();
        let vars = self.forward(&mut tape, sample, opts)?;
        let grads = tape.backward(vars.loss)?;
        let out = NetGradients {
            params: vars.params.iter().map(|v| grads.get(&tape, *v)).collect(),
            det_input: grads.get(&tape, vars.det_input),
            trk_input: grads.get(&tape, vars.trk_input),
        };
        for (name, g) in PARAM_NAMES.iter().zip(&out.params) {
            if !g.iter().all(|v| v.is_finite()) {
                return Err(NetError::NonFiniteGradient((*name).into()));
            }
        }
        Ok((tape.value(vars.loss)[(0, 0)], out))
    }
}

fn checked_normalize(tape: &mut Tape, v: Var) -> Result<Var> {
    if tape.value(v).column_iter().any(|c| c.norm() == 0.0) {
        return Err(NetError::ZeroVector);
    }
    Ok(tape.normalize_columns(v))
}

fn unit_columns(tape: &mut Tape, mlp: &MlpVars, x: Var) -> Result<Var> {
    let y = mlp_on_tape(tape, mlp, x);
    checked_normalize(tape, y)
}

fn edge_features(tape: &mut Tape, h: Var, n: usize) -> Var {
    let (s, t) = incidence_matrices(n);
    let s = tape.leaf(s);
    let t = tape.leaf(t);
    let start = tape.matmul(h, s);
    let end = tape.matmul(h, t);
    let cat = tape.vstack(start, end);
    tape.normalize_columns(cat)
}

fn gcn_layer_on_tape(tape: &mut Tape, mlp: &MlpVars, hd: Var, ht: Var, iou: Var, geometry: bool) -> (Var, Var) {
    let hdn = tape.normalize_columns(hd);
    let htn = tape.normalize_columns(ht);
    let hdn_t = tape.transpose(hdn);
    let mut w = tape.matmul(hdn_t, htn);
    if geometry {
        w = tape.add(w, iou);
    }
    let w_t = tape.transpose(w);
    let m_det = tape.matmul(ht, w_t);
    let m_trk = tape.matmul(hd, w);
    let pre_det = add_message(tape, hd, m_det);
    let pre_trk = add_message(tape, ht, m_trk);
    (mlp_on_tape(tape, mlp, pre_det), mlp_on_tape(tape, mlp, pre_trk))
}

fn add_message(tape: &mut Tape, h: Var, m: Var) -> Var {
    let mn = tape.normalize_columns(m);
    let hn = tape.column_norms(h);
    let scaled = tape.scale_columns(mn, hn);
    tape.add(h, scaled)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub tau: f64,
    pub solver: SolverOptions,
    /// Treat the QP output as a constant during backward.
    pub detach_qp: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            solver: SolverOptions::default(),
            detach_qp: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// Leaves in [`PARAM_NAMES`] order.
    pub params: Vec<Var>,
    pub det_input: Var,
    pub trk_input: Var,
    pub scores: Var,
    pub sharpened: Var,
    pub loss: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub params: Vec<DMatrix<f64>>,
    pub det_input: DMatrix<f64>,
    pub trk_input: DMatrix<f64>,
}

/// One consecutive frame pair with ground-truth correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    /// Raw detection features as columns (d_in × n_d).
    pub det_features: DMatrix<f64>,
    pub det_boxes: Vec<BBox>,
    /// Raw features of every tracklet history entry, tracklets consecutive
    /// and oldest first (d_in × Σ len).
    pub trk_history: DMatrix<f64>,
    pub trk_lengths: Vec<usize>,
    pub trk_boxes: Vec<BBox>,
    /// `y[i, j] = 1` when detection `i` continues tracklet `j`.
    pub target: DMatrix<f64>,
}

impl TrainSample {
    pub fn new(
        det_features: &[DVector<f64>],
        det_boxes: Vec<BBox>,
        trk_histories: &[Vec<DVector<f64>>],
        trk_boxes: Vec<BBox>,
        target: DMatrix<f64>,
    ) -> Result<Self> {
        let d = det_features.first().map(|f| f.len()).unwrap_or(0);
        let cols = |fs: &[DVector<f64>]| -> Result<DMatrix<f64>> {
            if fs.iter().any(|f| f.len() != d) {
                return Err(NetError::ShapeMismatch("feature widths differ".into()));
            }
            Ok(DMatrix::from_fn(d, fs.len(), |r, c| fs[c][r]))
        };
        if trk_histories.iter().any(|h| h.is_empty()) {
            return Err(NetError::EmptyHistory);
        }
        let flat: Vec<DVector<f64>> = trk_histories.iter().flatten().cloned().collect();
        let s = Self {
            det_features: cols(det_features)?,
            det_boxes,
            trk_history: cols(&flat)?,
            trk_lengths: trk_histories.iter().map(|h| h.len()).collect(),
            trk_boxes,
            target,
        };
        s.check(d)?;
        Ok(s)
    }

    pub fn n_det(&self) -> usize {
        self.det_features.ncols()
    }

    pub fn n_trk(&self) -> usize {
        self.trk_lengths.len()
    }

    fn check(&self, d_in: usize) -> Result<()> {
        let (nd, nt) = (self.n_det(), self.n_trk());
        if nd == 0 || nt == 0 {
            return Err(NetError::ShapeMismatch("sample needs detections and tracklets".into()));
        }
        if self.det_features.nrows() != d_in || self.trk_history.nrows() != d_in {
            return Err(NetError::ShapeMismatch(format!("features must have width {d_in}")));
        }
        if self.det_boxes.len() != nd
            || self.trk_boxes.len() != nt
            || self.target.shape() != (nd, nt)
            || self.trk_lengths.iter().sum::<usize>() != self.trk_history.ncols()
        {
            return Err(NetError::ShapeMismatch("sample parts disagree in size".into()));
        }
        if !self.target.iter().all(|y| *y == 0.0 || *y == 1.0) {
            return Err(NetError::ShapeMismatch("target must be binary".into()));
        }
        Ok(())
    }

    /// Constant (Σ len × n_t) matrix mapping history columns to tracklet
    /// aggregates before normalization.
    pub fn aggregation_matrix(&self, mode: AggregationMode) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.trk_history.ncols(), self.n_trk());
        let mut offset = 0;
        for (j, &len) in self.trk_lengths.iter().enumerate() {
            for (k, a) in aggregation_weights(len, mode).into_iter().enumerate() {
                w[(offset + k, j)] = a;
            }
            offset += len;
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub tau: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            tau: 1e-3,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.into()));
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning rate must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return bad("weight decay must be nonnegative and eps positive");
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(net: &MatchNet) -> Self {
        let zeros: Vec<Vec<f64>> = net.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, net: &mut MatchNet, grads: &[DMatrix<f64>], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (k, p) in net.tensors_mut().into_iter().enumerate() {
            // Parameter slices and gradients share nalgebra's column-major order.
            let g = grads[k].as_slice();
            for i in 0..p.len() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g[i];
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = *m / c1;
                let vhat = *v / c2;
                p[i] -= cfg.learning_rate * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * p[i]);
            }
        }
    }
}

/// Forward, backward and one optimizer update; returns the loss before the
/// update.
pub fn train_step(net: &mut MatchNet, opt: &mut AdamW, sample: &TrainSample, cfg: &TrainConfig) -> Result<f64> {
    cfg.validate()?;
    let opts = ForwardOptions {
        tau: cfg.tau,
        ..ForwardOptions::default()
    };
    let (loss, grads) = net.loss_and_gradients(sample, &opts)?;
    opt.update(net, &grads.params, cfg);
    if !net.is_finite() {
        return Err(NetError::NonFiniteGradient("parameters after update".into()));
    }
    Ok(loss)
}

/// `cfg.epochs` passes over `samples`, each in an order shuffled from
/// `cfg.seed`. Returns the loss of every step.
pub fn train(net: &mut MatchNet, samples: &[TrainSample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(net);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs * samples.len());
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for &k in &order {
            losses.push(train_step(net, &mut opt, &samples[k], cfg)?);
        }
    }
    Ok(losses)
}
