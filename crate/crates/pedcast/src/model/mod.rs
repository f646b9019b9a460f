//! The recurrent velocity-sequence predictor: three affine-tanh input
//! encoders, one LSTM cell, and an affine decoder emitting the whole
//! prediction horizon in one step. Forward pass and exact reverse-mode
//! gradients through a truncated window are implemented directly on flat
//! `f64` parameter storage.

pub mod checkpoint;

use crate::dataset::ExampleSequence;
use crate::error::{Error, Result};
use crate::features::ModelInput;
use crate::math::Vec2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Architecture description. All shapes derive from this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Occupancy patch side length (`G`); the encoder consumes `G*G` bits.
    pub patch_cells: usize,
    pub n_social: usize,
    pub enc_vel: usize,
    pub enc_occ: usize,
    pub enc_soc: usize,
    pub hidden: usize,
    /// Number of predicted velocity steps.
    pub pred_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch_cells: 32,
            n_social: 5,
            enc_vel: 16,
            enc_occ: 32,
            enc_soc: 32,
            hidden: 64,
            pred_steps: 15,
        }
    }
}

impl ModelConfig {
    /// Small architecture for gradient checks and fast unit tests.
    pub fn tiny() -> Self {
        ModelConfig {
            patch_cells: 4,
            n_social: 2,
            enc_vel: 4,
            enc_occ: 6,
            enc_soc: 6,
            hidden: 8,
            pred_steps: 3,
        }
    }

    pub fn occ_inputs(&self) -> usize {
        self.patch_cells * self.patch_cells
    }

    pub fn soc_inputs(&self) -> usize {
        4 * self.n_social
    }

    pub fn feature_dim(&self) -> usize {
        self.enc_vel + self.enc_occ + self.enc_soc
    }

    pub fn output_dim(&self) -> usize {
        2 * self.pred_steps
    }
}

/// Offsets of each named tensor inside the flat parameter array.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub ev_w: usize,
    pub ev_b: usize,
    pub eo_w: usize,
    pub eo_b: usize,
    pub es_w: usize,
    pub es_b: usize,
    pub ih: usize,
    pub hh: usize,
    pub rb: usize,
    pub dw: usize,
    pub db: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let mut offset = 0;
        let mut take = |n: usize| {
            let at = offset;
            offset += n;
            at
        };
        let h4 = 4 * cfg.hidden;
        Layout {
            ev_w: take(cfg.enc_vel * 2),
            ev_b: take(cfg.enc_vel),
            eo_w: take(cfg.enc_occ * cfg.occ_inputs()),
            eo_b: take(cfg.enc_occ),
            es_w: take(cfg.enc_soc * cfg.soc_inputs()),
            es_b: take(cfg.enc_soc),
            ih: take(h4 * cfg.feature_dim()),
            hh: take(h4 * cfg.hidden),
            rb: take(h4),
            dw: take(cfg.output_dim() * cfg.hidden),
            db: take(cfg.output_dim()),
            total: offset,
        }
    }
}

/// Description of one named tensor, used by the checkpoint format.
#[derive(Debug, Clone)]
pub struct TensorInfo {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

/// Flat named-tensor parameter set. Gradients and importance values reuse the
/// same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    cfg: ModelConfig,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(cfg: ModelConfig) -> ParamVector {
        let layout = Layout::new(&cfg);
        ParamVector {
            cfg,
            data: vec![0.0; layout.total],
        }
    }

    /// Seeded initialization: uniform within `1/sqrt(fan_in)` per weight
    /// tensor, zero biases, forget-gate bias raised to 1.
    pub fn random(cfg: ModelConfig, rng: &mut impl Rng) -> ParamVector {
        let layout = Layout::new(&cfg);
        let mut p = ParamVector::zeros(cfg);
        let spans = [
            (layout.ev_w, cfg.enc_vel * 2, 2.0),
            (layout.eo_w, cfg.enc_occ * cfg.occ_inputs(), cfg.occ_inputs() as f64),
            (layout.es_w, cfg.enc_soc * cfg.soc_inputs(), cfg.soc_inputs() as f64),
            (layout.ih, 4 * cfg.hidden * cfg.feature_dim(), cfg.feature_dim() as f64),
            (layout.hh, 4 * cfg.hidden * cfg.hidden, cfg.hidden as f64),
            (layout.dw, cfg.output_dim() * cfg.hidden, cfg.hidden as f64),
        ];
        for (offset, len, fan_in) in spans {
            let scale = 1.0 / fan_in.sqrt();
            for v in &mut p.data[offset..offset + len] {
                *v = rng.gen_range(-scale..=scale);
            }
        }
        for v in &mut p.data[layout.rb + cfg.hidden..layout.rb + 2 * cfg.hidden] {
            *v = 1.0;
        }
        p
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_data(cfg: ModelConfig, data: Vec<f64>) -> Result<ParamVector> {
        let layout = Layout::new(&cfg);
        if data.len() != layout.total {
            return Err(Error::ShapeMismatch {
                context: "parameter vector",
                expected: layout.total,
                actual: data.len(),
            });
        }
        Ok(ParamVector { cfg, data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// In-place `self += other * scale`; shapes must match.
    pub fn axpy(&mut self, other: &ParamVector, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * scale;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn tensors(&self) -> Vec<TensorInfo> {
        let cfg = &self.cfg;
        let layout = Layout::new(cfg);
        vec![
            TensorInfo { name: "enc_vel.w", rows: cfg.enc_vel, cols: 2, offset: layout.ev_w },
            TensorInfo { name: "enc_vel.b", rows: cfg.enc_vel, cols: 1, offset: layout.ev_b },
            TensorInfo { name: "enc_occ.w", rows: cfg.enc_occ, cols: cfg.occ_inputs(), offset: layout.eo_w },
            TensorInfo { name: "enc_occ.b", rows: cfg.enc_occ, cols: 1, offset: layout.eo_b },
            TensorInfo { name: "enc_soc.w", rows: cfg.enc_soc, cols: cfg.soc_inputs(), offset: layout.es_w },
            TensorInfo { name: "enc_soc.b", rows: cfg.enc_soc, cols: 1, offset: layout.es_b },
            TensorInfo { name: "rnn.w_ih", rows: 4 * cfg.hidden, cols: cfg.feature_dim(), offset: layout.ih },
            TensorInfo { name: "rnn.w_hh", rows: 4 * cfg.hidden, cols: cfg.hidden, offset: layout.hh },
            TensorInfo { name: "rnn.b", rows: 4 * cfg.hidden, cols: 1, offset: layout.rb },
            TensorInfo { name: "dec.w", rows: cfg.output_dim(), cols: cfg.hidden, offset: layout.dw },
            TensorInfo { name: "dec.b", rows: cfg.output_dim(), cols: 1, offset: layout.db },
        ]
    }
}

/// Per-agent LSTM state. Reset on track loss / respawn.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(cfg: &ModelConfig) -> RecurrentState {
        RecurrentState {
            h: vec![0.0; cfg.hidden],
            c: vec![0.0; cfg.hidden],
        }
    }
}

/// A predicted velocity sequence over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub velocities: Vec<Vec2>,
}

fn check_finite(values: &[f64], layer: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

/// Raw input views extracted from a `ModelInput`, validated against the
/// architecture.
struct RawInput {
    vel: [f64; 2],
    /// Indices of occupied patch cells; the occupancy stream is binary so the
    /// encoder only touches active columns.
    occ_active: Vec<u32>,
    soc: Vec<f64>,
}

fn raw_input(cfg: &ModelConfig, input: &ModelInput) -> Result<RawInput> {
    if input.occ_patch.cells.len() != cfg.occ_inputs() {
        return Err(Error::ShapeMismatch {
            context: "occupancy patch",
            expected: cfg.occ_inputs(),
            actual: input.occ_patch.cells.len(),
        });
    }
    if input.social.entries.len() != cfg.n_social {
        return Err(Error::ShapeMismatch {
            context: "social vector",
            expected: cfg.n_social,
            actual: input.social.entries.len(),
        });
    }
    let occ_active = input
        .occ_patch
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i as u32))
        .collect();
    let mut soc = Vec::with_capacity(cfg.soc_inputs());
    for e in &input.social.entries {
        soc.extend_from_slice(&[e.rel_p.x, e.rel_p.y, e.rel_v.x, e.rel_v.y]);
    }
    Ok(RawInput {
        vel: [input.ego_velocity.x, input.ego_velocity.y],
        occ_active,
        soc,
    })
}

/// Affine layer followed by tanh. Finiteness is checked on the
/// pre-activations, since tanh itself maps infinities to +/-1.
fn affine_tanh(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64], layer: &'static str) -> Result<()> {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
    check_finite(out, layer)?;
    for o in out.iter_mut() {
        *o = o.tanh();
    }
    Ok(())
}

fn affine_tanh_sparse(
    w: &[f64],
    b: &[f64],
    cols: usize,
    active: &[u32],
    out: &mut [f64],
    layer: &'static str,
) -> Result<()> {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for &idx in active {
            acc += row[idx as usize];
        }
        *o = acc;
    }
    check_finite(out, layer)?;
    for o in out.iter_mut() {
        *o = o.tanh();
    }
    Ok(())
}

/// One forward step of the full network. Caches are populated when `cache`
/// is provided so the backward pass can reuse them.
struct StepCache {
    raw: RawInput,
    a_vel: Vec<f64>,
    a_occ: Vec<f64>,
    a_soc: Vec<f64>,
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_o: Vec<f64>,
    gate_g: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    y: Vec<f64>,
}

fn forward_step(
    theta: &ParamVector,
    layout: &Layout,
    raw: RawInput,
    state: &mut RecurrentState,
) -> Result<StepCache> {
    let cfg = &theta.cfg;
    let d = theta.data();
    let h_dim = cfg.hidden;

    let mut a_vel = vec![0.0; cfg.enc_vel];
    affine_tanh(&d[layout.ev_w..], &d[layout.ev_b..], &raw.vel, &mut a_vel, "enc_vel")?;

    let mut a_occ = vec![0.0; cfg.enc_occ];
    affine_tanh_sparse(
        &d[layout.eo_w..],
        &d[layout.eo_b..],
        cfg.occ_inputs(),
        &raw.occ_active,
        &mut a_occ,
        "enc_occ",
    )?;

    let mut a_soc = vec![0.0; cfg.enc_soc];
    affine_tanh(&d[layout.es_w..], &d[layout.es_b..], &raw.soc, &mut a_soc, "enc_soc")?;

    // Gate pre-activations: W_ih x + W_hh h + b, blocks [i, f, o, g].
    let feat = cfg.feature_dim();
    let h4 = 4 * h_dim;
    let mut z = vec![0.0; h4];
    let w_ih = &d[layout.ih..layout.ih + h4 * feat];
    let w_hh = &d[layout.hh..layout.hh + h4 * h_dim];
    let bias = &d[layout.rb..layout.rb + h4];
    for r in 0..h4 {
        let mut acc = bias[r];
        let row = &w_ih[r * feat..(r + 1) * feat];
        let (rv, rest) = row.split_at(cfg.enc_vel);
        let (ro, rs) = rest.split_at(cfg.enc_occ);
        for (wv, xv) in rv.iter().zip(&a_vel) {
            acc += wv * xv;
        }
        for (wv, xv) in ro.iter().zip(&a_occ) {
            acc += wv * xv;
        }
        for (wv, xv) in rs.iter().zip(&a_soc) {
            acc += wv * xv;
        }
        let hrow = &w_hh[r * h_dim..(r + 1) * h_dim];
        for (wv, hv) in hrow.iter().zip(&state.h) {
            acc += wv * hv;
        }
        z[r] = acc;
    }
    check_finite(&z, "rnn")?;

    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut gate_i = vec![0.0; h_dim];
    let mut gate_f = vec![0.0; h_dim];
    let mut gate_o = vec![0.0; h_dim];
    let mut gate_g = vec![0.0; h_dim];
    for k in 0..h_dim {
        gate_i[k] = sigmoid(z[k]);
        gate_f[k] = sigmoid(z[h_dim + k]);
        gate_o[k] = sigmoid(z[2 * h_dim + k]);
        gate_g[k] = z[3 * h_dim + k].tanh();
    }

    let c_prev = state.c.clone();
    let h_prev = state.h.clone();
    let mut c = vec![0.0; h_dim];
    let mut tanh_c = vec![0.0; h_dim];
    let mut h = vec![0.0; h_dim];
    for k in 0..h_dim {
        c[k] = gate_f[k] * c_prev[k] + gate_i[k] * gate_g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = gate_o[k] * tanh_c[k];
    }
    check_finite(&h, "rnn")?;

    let out_dim = cfg.output_dim();
    let mut y = vec![0.0; out_dim];
    let dw = &d[layout.dw..layout.dw + out_dim * h_dim];
    let db = &d[layout.db..layout.db + out_dim];
    for (r, yv) in y.iter_mut().enumerate() {
        let row = &dw[r * h_dim..(r + 1) * h_dim];
        let mut acc = db[r];
        for (wv, hv) in row.iter().zip(&h) {
            acc += wv * hv;
        }
        *yv = acc;
    }
    check_finite(&y, "dec")?;

    state.h.copy_from_slice(&h);
    state.c.copy_from_slice(&c);
    Ok(StepCache {
        raw,
        a_vel,
        a_occ,
        a_soc,
        gate_i,
        gate_f,
        gate_o,
        gate_g,
        c_prev,
        h_prev,
        tanh_c,
        h,
        y,
    })
}

/// Run the network one tick: encode the three input streams, advance the
/// recurrent cell, decode the velocity horizon. Pure in `(theta, input,
/// state)`.
pub fn forward(
    theta: &ParamVector,
    input: &ModelInput,
    state: &RecurrentState,
) -> Result<(Prediction, RecurrentState)> {
    let layout = Layout::new(&theta.cfg);
    let raw = raw_input(&theta.cfg, input)?;
    let mut next = state.clone();
    let cache = forward_step(theta, &layout, raw, &mut next)?;
    let velocities = cache
        .y
        .chunks_exact(2)
        .map(|xy| Vec2::new(xy[0], xy[1]))
        .collect();
    Ok((Prediction { velocities }, next))
}

/// Loss and exact gradient of one example sequence under truncated
/// backpropagation through time: the recurrent state entering the window is
/// zero and treated as constant.
///
/// `loss = mean_t pred_loss(y_t, target_t) + lambda_l2 * |theta|^2`.
pub fn tbptt_gradient(
    theta: &ParamVector,
    seq: &ExampleSequence,
    lambda_l2: f64,
) -> Result<(f64, ParamVector)> {
    let cfg = theta.cfg;
    let layout = Layout::new(&cfg);
    if seq.is_empty() {
        return Err(Error::EmptyDataset("tbptt_gradient"));
    }
    for ex in &seq.examples {
        if ex.target.len() != cfg.pred_steps {
            return Err(Error::ShapeMismatch {
                context: "target sequence",
                expected: cfg.pred_steps,
                actual: ex.target.len(),
            });
        }
    }

    let n_steps = seq.len();
    let mut state = RecurrentState::zeros(&cfg);
    let mut caches = Vec::with_capacity(n_steps);
    let mut loss = 0.0;
    for ex in &seq.examples {
        let raw = raw_input(&cfg, &ex.input)?;
        let cache = forward_step(theta, &layout, raw, &mut state)?;
        let mut step_loss = 0.0;
        for (k, target) in ex.target.iter().enumerate() {
            let dx = cache.y[2 * k] - target.x;
            let dy = cache.y[2 * k + 1] - target.y;
            step_loss += dx * dx + dy * dy;
        }
        loss += step_loss / cfg.pred_steps as f64;
        caches.push(cache);
    }
    loss /= n_steps as f64;

    let mut grad = ParamVector::zeros(cfg);
    let h_dim = cfg.hidden;
    let h4 = 4 * h_dim;
    let feat = cfg.feature_dim();
    let out_dim = cfg.output_dim();
    let occ_cols = cfg.occ_inputs();
    let soc_cols = cfg.soc_inputs();
    let d = theta.data();

    let mut dh_next = vec![0.0; h_dim];
    let mut dc_next = vec![0.0; h_dim];
    let scale = 2.0 / (cfg.pred_steps as f64 * n_steps as f64);

    for (ex, cache) in seq.examples.iter().zip(&caches).rev() {
        // Decoder.
        let mut dy = vec![0.0; out_dim];
        for (k, target) in ex.target.iter().enumerate() {
            dy[2 * k] = scale * (cache.y[2 * k] - target.x);
            dy[2 * k + 1] = scale * (cache.y[2 * k + 1] - target.y);
        }
        let mut dh = dh_next;
        let dec_w = &d[layout.dw..layout.dw + out_dim * h_dim];
        {
            let g = grad.data_mut();
            for r in 0..out_dim {
                let s = dy[r];
                let grow = &mut g[layout.dw + r * h_dim..layout.dw + (r + 1) * h_dim];
                for (gv, hv) in grow.iter_mut().zip(&cache.h) {
                    *gv += s * hv;
                }
                g[layout.db + r] += s;
            }
        }
        for r in 0..out_dim {
            let s = dy[r];
            let row = &dec_w[r * h_dim..(r + 1) * h_dim];
            for (dhv, wv) in dh.iter_mut().zip(row) {
                *dhv += s * wv;
            }
        }

        // LSTM cell.
        let mut dc = dc_next;
        let mut dz = vec![0.0; h4];
        for k in 0..h_dim {
            let do_ = dh[k] * cache.tanh_c[k];
            dc[k] += dh[k] * cache.gate_o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let di = dc[k] * cache.gate_g[k];
            let df = dc[k] * cache.c_prev[k];
            let dg = dc[k] * cache.gate_i[k];
            dz[k] = di * cache.gate_i[k] * (1.0 - cache.gate_i[k]);
            dz[h_dim + k] = df * cache.gate_f[k] * (1.0 - cache.gate_f[k]);
            dz[2 * h_dim + k] = do_ * cache.gate_o[k] * (1.0 - cache.gate_o[k]);
            dz[3 * h_dim + k] = dg * (1.0 - cache.gate_g[k] * cache.gate_g[k]);
            // Carry for the previous step.
            dc[k] *= cache.gate_f[k];
        }

        let mut dx = vec![0.0; feat];
        let mut dh_prev = vec![0.0; h_dim];
        let w_ih = &d[layout.ih..layout.ih + h4 * feat];
        let w_hh = &d[layout.hh..layout.hh + h4 * h_dim];
        {
            let g = grad.data_mut();
            for r in 0..h4 {
                let s = dz[r];
                if s == 0.0 {
                    continue;
                }
                let grow = &mut g[layout.ih + r * feat..layout.ih + (r + 1) * feat];
                let (gv, rest) = grow.split_at_mut(cfg.enc_vel);
                let (go, gs) = rest.split_at_mut(cfg.enc_occ);
                for (gvv, xv) in gv.iter_mut().zip(&cache.a_vel) {
                    *gvv += s * xv;
                }
                for (gov, xv) in go.iter_mut().zip(&cache.a_occ) {
                    *gov += s * xv;
                }
                for (gsv, xv) in gs.iter_mut().zip(&cache.a_soc) {
                    *gsv += s * xv;
                }
                let ghrow = &mut g[layout.hh + r * h_dim..layout.hh + (r + 1) * h_dim];
                for (ghv, hv) in ghrow.iter_mut().zip(&cache.h_prev) {
                    *ghv += s * hv;
                }
                g[layout.rb + r] += s;
            }
        }
        for r in 0..h4 {
            let s = dz[r];
            if s == 0.0 {
                continue;
            }
            let row = &w_ih[r * feat..(r + 1) * feat];
            for (dxv, wv) in dx.iter_mut().zip(row) {
                *dxv += s * wv;
            }
            let hrow = &w_hh[r * h_dim..(r + 1) * h_dim];
            for (dhv, wv) in dh_prev.iter_mut().zip(hrow) {
                *dhv += s * wv;
            }
        }

        // Encoders.
        let (dxv, rest) = dx.split_at(cfg.enc_vel);
        let (dxo, dxs) = rest.split_at(cfg.enc_occ);
        {
            let g = grad.data_mut();
            for (r, &da) in dxv.iter().enumerate() {
                let dzv = da * (1.0 - cache.a_vel[r] * cache.a_vel[r]);
                g[layout.ev_w + r * 2] += dzv * cache.raw.vel[0];
                g[layout.ev_w + r * 2 + 1] += dzv * cache.raw.vel[1];
                g[layout.ev_b + r] += dzv;
            }
            for (r, &da) in dxo.iter().enumerate() {
                let dzv = da * (1.0 - cache.a_occ[r] * cache.a_occ[r]);
                let base = layout.eo_w + r * occ_cols;
                for &idx in &cache.raw.occ_active {
                    g[base + idx as usize] += dzv;
                }
                g[layout.eo_b + r] += dzv;
            }
            for (r, &da) in dxs.iter().enumerate() {
                let dzv = da * (1.0 - cache.a_soc[r] * cache.a_soc[r]);
                let base = layout.es_w + r * soc_cols;
                for (gv, xv) in g[base..base + soc_cols].iter_mut().zip(&cache.raw.soc) {
                    *gv += dzv * xv;
                }
                g[layout.es_b + r] += dzv;
            }
        }

        dh_next = dh_prev;
        dc_next = dc;
    }

    if lambda_l2 != 0.0 {
        loss += lambda_l2 * theta.norm_sq();
        for (g, t) in grad.data.iter_mut().zip(&theta.data) {
            *g += 2.0 * lambda_l2 * t;
        }
    }
    Ok((loss, grad))
}

/// Integrate a velocity sequence into positions:
/// `p_k = start + dt * sum_{j<=k} v_j`.
pub fn integrate_velocities(velocities: &[Vec2], start: Vec2, dt: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(velocities.len());
    let mut p = start;
    for v in velocities {
        p = p + *v * dt;
        out.push(p);
    }
    out
}

/// Forward pass followed by position integration, for displacement metrics.
pub fn predict_trajectory(
    theta: &ParamVector,
    input: &ModelInput,
    state: &RecurrentState,
    start: Vec2,
    dt: f64,
) -> Result<(Vec<Vec2>, RecurrentState)> {
    let (pred, next) = forward(theta, input, state)?;
    Ok((integrate_velocities(&pred.velocities, start, dt), next))
}

/// Constant-velocity baseline: the current velocity repeated over the
/// horizon. Independent of any learned parameters.
pub fn cv_predict(input: &ModelInput, pred_steps: usize) -> Prediction {
    Prediction {
        velocities: vec![input.ego_velocity; pred_steps],
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::dataset::{Example, ExampleSequence};
    use crate::features::{OccupancyPatch, SocialEntry, SocialVector};
    use rand::Rng;

    pub fn random_input(cfg: &ModelConfig, rng: &mut impl Rng) -> ModelInput {
        ModelInput {
            ego_velocity: Vec2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
            occ_patch: OccupancyPatch {
                side: cfg.patch_cells,
                cells: (0..cfg.occ_inputs()).map(|_| rng.gen_bool(0.25)).collect(),
            },
            social: SocialVector {
                entries: (0..cfg.n_social)
                    .map(|_| SocialEntry {
                        rel_p: Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
                        rel_v: Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    })
                    .collect(),
            },
        }
    }

    pub fn random_sequence(cfg: &ModelConfig, len: usize, rng: &mut impl Rng) -> ExampleSequence {
        ExampleSequence {
            examples: (0..len)
                .map(|t| Example {
                    input: random_input(cfg, rng),
                    target: (0..cfg.pred_steps)
                        .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                    agent_id: 0,
                    tick: t as u64,
                })
                .collect(),
        }
    }
}
