//! One decode timestep on the tape, plus the per-image node hoisting that
//! keeps repeated work (projections of the image, the output matrix, leased
//! weights) out of the step loop.

use super::params::{GruParamIds, ParamIds};
use super::{AttentionMode, BottleneckMode, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamSet, Real, Rng, Tape, Tensor2D};

/// Visual input of one example: a pooled vector, plus a feature grid when
/// grid attention is configured.
#[derive(Clone, Debug)]
pub struct ImageFeatures<T> {
    /// 1 x v_dim pooled representation.
    pub pooled: Tensor2D<T>,
    /// rows x kv_dim grid; required in grid-attention mode.
    pub grid: Option<Tensor2D<T>>,
}

/// Leased weight nodes of one GRU cell.
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub uz: NodeId,
    pub ur: NodeId,
    pub u: NodeId,
    pub bz: NodeId,
    pub br: NodeId,
    pub bh: NodeId,
}

impl GruNodes {
    fn lease<T: Real>(tape: &mut Tape<T>, set: &ParamSet<T>, ids: &GruParamIds) -> GruNodes {
        GruNodes {
            uz: tape.param(set, ids.uz),
            ur: tape.param(set, ids.ur),
            u: tape.param(set, ids.u),
            bz: tape.param(set, ids.bz),
            br: tape.param(set, ids.br),
            bh: tape.param(set, ids.bh),
        }
    }
}

/// One attention head's per-image nodes.
#[derive(Clone, Copy, Debug)]
struct HeadNodes {
    q_proj: NodeId,
    /// dq x rows, keys already transposed for the score product.
    keys_t: NodeId,
    /// rows x dq.
    values: NodeId,
}

/// Weight and image nodes hoisted once per tape.
#[derive(Clone, Debug)]
pub struct ImageContext {
    /// Initial hidden state, conditioned on the pooled features.
    pub h0: NodeId,
    /// Pooled mode: tanh-gated image projection reused at every step.
    visual_gate: Option<NodeId>,
    heads: Vec<HeadNodes>,
    mha_out: Option<NodeId>,
    /// d x vocab projection: the transposed embedding when tied, Wout else.
    logits_proj: NodeId,
    embedding: NodeId,
    wx: NodeId,
    gru1: GruNodes,
    gru2_in: [NodeId; 3],
    gru2: GruNodes,
    bottleneck: BottleneckNodes,
    /// Baseline projection; leased here so reward code shares the tape.
    pub wbase: NodeId,
    dq: usize,
}

#[derive(Clone, Debug)]
enum BottleneckNodes {
    Linear {
        wbot: NodeId,
    },
    DeepGru {
        gru3_in: [NodeId; 3],
        gru3: GruNodes,
        wshrink: NodeId,
    },
}

impl ImageContext {
    /// Validate the features, project the image, and lease every weight the
    /// step loop needs.
    pub fn new<T: Real>(
        tape: &mut Tape<T>,
        model: &Model<T>,
        features: &ImageFeatures<T>,
    ) -> Result<ImageContext> {
        let config = &model.config;
        let ids = &model.ids;
        let set = &model.params;
        if features.pooled.shape() != (1, config.v_dim) {
            return Err(Error::Validation(format!(
                "pooled features are {}x{}, expected 1x{}",
                features.pooled.rows(),
                features.pooled.cols(),
                config.v_dim
            )));
        }
        let pooled = tape.constant(features.pooled.clone());

        let (h0, visual_gate, heads, mha_out) = match config.attention_mode {
            AttentionMode::Pooled => {
                let wimg = tape.param(set, ids.wimg.expect("pooled mode has Wimg"));
                let proj = tape.matmul(pooled, wimg);
                let gate = tape.tanh(proj);
                // The initial state is the same tanh projection; one node
                // serves both uses.
                (gate, Some(gate), Vec::new(), None)
            }
            AttentionMode::Mha => {
                let grid = features.grid.as_ref().ok_or_else(|| {
                    Error::Validation("grid attention needs grid features".to_string())
                })?;
                if grid.cols() != config.mha_kv_dim || grid.rows() == 0 {
                    return Err(Error::Validation(format!(
                        "feature grid is {}x{}, expected rows x {}",
                        grid.rows(),
                        grid.cols(),
                        config.mha_kv_dim
                    )));
                }
                let grid_node = tape.constant(grid.clone());
                let winit = tape.param(set, ids.winit.expect("grid mode has Winit"));
                let proj = tape.matmul(pooled, winit);
                let h0 = tape.tanh(proj);
                let heads = ids
                    .mha_heads
                    .iter()
                    .map(|h| {
                        let q_proj = tape.param(set, h.q);
                        let kp = tape.param(set, h.k);
                        let vp = tape.param(set, h.v);
                        let keys = tape.matmul(grid_node, kp);
                        HeadNodes {
                            q_proj,
                            keys_t: tape.transpose(keys),
                            values: tape.matmul(grid_node, vp),
                        }
                    })
                    .collect();
                let out = tape.param(set, ids.mha_out.expect("grid mode has Op"));
                (h0, None, heads, Some(out))
            }
        };

        let embedding = tape.param(set, ids.e);
        let logits_proj = match ids.wout {
            Some(wout) => tape.param(set, wout),
            // Tied: the same storage serves embedding lookups and logits, so
            // backward accumulates both uses into one gradient.
            None => tape.transpose(embedding),
        };
        let bottleneck = match config.bottleneck_mode {
            BottleneckMode::Linear => BottleneckNodes::Linear {
                wbot: tape.param(set, ids.wbot.expect("linear mode has Wbot")),
            },
            BottleneckMode::DeepGru => BottleneckNodes::DeepGru {
                gru3_in: ids
                    .gru3_in
                    .expect("deep mode has gru3 inputs")
                    .map(|id| tape.param(set, id)),
                gru3: GruNodes::lease(tape, set, &ids.gru3.expect("deep mode has gru3")),
                wshrink: tape.param(set, ids.wshrink.expect("deep mode has Wshrink")),
            },
        };

        Ok(ImageContext {
            h0,
            visual_gate,
            heads,
            mha_out,
            logits_proj,
            embedding,
            wx: tape.param(set, ids.wx),
            gru1: GruNodes::lease(tape, set, &ids.gru1),
            gru2_in: ids.gru2_in.map(|id| tape.param(set, id)),
            gru2: GruNodes::lease(tape, set, &ids.gru2),
            bottleneck,
            wbase: tape.param(set, ids.wbase),
            dq: config.dq_eff(),
        })
    }
}

/// Nodes produced by one decode step.
#[derive(Clone, Debug)]
pub struct DecoderState {
    /// 1 x d embedding row of the previous token.
    pub emb: NodeId,
    /// 1 x h projected token input.
    pub x: NodeId,
    /// First-stage hidden proposal h'.
    pub h_mid: NodeId,
    /// Attention context.
    pub c: NodeId,
    /// Final hidden state; feed back as `h_prev` of the next step.
    pub h: NodeId,
    /// Bottleneck as seen by the output projection (after any dropout).
    pub b: NodeId,
    pub logits: NodeId,
    /// Softmax of the logits.
    pub p: NodeId,
    /// Grid mode: per-head attention weights (1 x rows each).
    pub attn_weights: Vec<NodeId>,
}

/// One GRU cell evaluation with externally supplied gate inputs.
///
/// z = sigmoid(in_z + Uz s + bz), r likewise; the candidate applies the
/// reset gate to the recurrent term only; the update gate keeps `state`:
/// h = (1-z) * candidate + z * state.
pub fn gru_block<T: Real>(
    tape: &mut Tape<T>,
    in_z: NodeId,
    in_r: NodeId,
    in_h: NodeId,
    state: NodeId,
    w: &GruNodes,
) -> NodeId {
    let zu = tape.matmul(state, w.uz);
    let z_pre = tape.add(in_z, zu);
    let z_pre = tape.add(z_pre, w.bz);
    let z = tape.sigmoid(z_pre);
    let ru = tape.matmul(state, w.ur);
    let r_pre = tape.add(in_r, ru);
    let r_pre = tape.add(r_pre, w.br);
    let r = tape.sigmoid(r_pre);
    let hu = tape.matmul(state, w.u);
    let gated = tape.mul(r, hu);
    let cand_pre = tape.add(in_h, gated);
    let cand_pre = tape.add(cand_pre, w.bh);
    let cand = tape.tanh(cand_pre);
    let z_cand = tape.mul(z, cand);
    let keep = tape.mul(z, state);
    let new_minus = tape.sub(cand, z_cand);
    tape.add(new_minus, keep)
}

/// Scaled dot-product attention of one query over the hoisted heads.
fn attend_grid<T: Real>(
    tape: &mut Tape<T>,
    ctx: &ImageContext,
    h_mid: NodeId,
) -> (NodeId, Vec<NodeId>) {
    let scale = T::from_f64(1.0 / (ctx.dq as f64).sqrt());
    let mut outputs = Vec::with_capacity(ctx.heads.len());
    let mut weights = Vec::with_capacity(ctx.heads.len());
    for head in &ctx.heads {
        let q = tape.matmul(h_mid, head.q_proj);
        let scores = tape.matmul(q, head.keys_t);
        let scaled = tape.affine(scores, scale, T::zero());
        let w = tape.softmax_rows(scaled);
        weights.push(w);
        outputs.push(tape.matmul(w, head.values));
    }
    let concat = tape.concat_cols(&outputs);
    let c = tape.matmul(concat, ctx.mha_out.expect("grid mode has Op"));
    (c, weights)
}

/// Run one timestep: embed, propose, attend, combine, project.
pub fn cgru_step<T: Real>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    ctx: &ImageContext,
    y_prev: u32,
    h_prev: NodeId,
    dropout_rng: Option<&mut Rng>,
) -> Result<DecoderState> {
    let config: &ModelConfig = &model.config;
    let _ids: &ParamIds = &model.ids;
    if y_prev as usize >= config.vocab_size {
        return Err(Error::Validation(format!(
            "token id {y_prev} outside vocabulary of {}",
            config.vocab_size
        )));
    }

    let emb = tape.row_select(ctx.embedding, y_prev as usize);
    let x = tape.matmul(emb, ctx.wx);

    // Stage one: propose from the token input alone; the shared x vector
    // enters all three gates unprojected.
    let h_mid = gru_block(tape, x, x, x, h_prev, &ctx.gru1);

    // Attention reads the proposal, never the previous hidden state.
    let (c, attn_weights) = match config.attention_mode {
        AttentionMode::Pooled => {
            let gate = ctx.visual_gate.expect("pooled mode has a gate");
            (tape.mul(h_mid, gate), Vec::new())
        }
        AttentionMode::Mha => attend_grid(tape, ctx, h_mid),
    };

    // Stage two: the context drives the gates; the proposal is the
    // recurrent state being updated.
    let in_z = tape.matmul(c, ctx.gru2_in[0]);
    let in_r = tape.matmul(c, ctx.gru2_in[1]);
    let in_h = tape.matmul(c, ctx.gru2_in[2]);
    let h = gru_block(tape, in_z, in_r, in_h, h_mid, &ctx.gru2);

    let b = match &ctx.bottleneck {
        BottleneckNodes::Linear { wbot } => {
            let u = tape.concat_cols(&[emb, h, c]);
            tape.matmul(u, *wbot)
        }
        BottleneckNodes::DeepGru {
            gru3_in,
            gru3,
            wshrink,
        } => {
            let u = tape.concat_cols(&[emb, h_mid, c]);
            let in_z = tape.matmul(u, gru3_in[0]);
            let in_r = tape.matmul(u, gru3_in[1]);
            let in_h = tape.matmul(u, gru3_in[2]);
            let g = gru_block(tape, in_z, in_r, in_h, h, gru3);
            tape.matmul(g, *wshrink)
        }
    };
    let b = match dropout_rng {
        Some(rng) if config.dropout_p > 0.0 => tape.dropout(b, config.dropout_p, rng),
        _ => b,
    };

    let logits = tape.matmul(b, ctx.logits_proj);
    let p = tape.softmax_rows(logits);
    Ok(DecoderState {
        emb,
        x,
        h_mid,
        c,
        h,
        b,
        logits,
        p,
        attn_weights,
    })
}
