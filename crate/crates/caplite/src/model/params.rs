//! Parameter inventory: one table drives initialization, registration,
//! counting, and checkpoint naming, so they cannot drift apart.

use super::{AttentionMode, BottleneckMode, Model, ModelConfig};
use crate::error::Result;
use crate::numerics::{ParamId, ParamSet, Real, Rng, Tensor2D};

/// Initialization family for one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in [-1/sqrt(rows), 1/sqrt(rows)]; rows is the contraction dim.
    FanIn,
    /// Uniform in [-0.08, 0.08].
    Embedding,
    /// All zeros (gate biases).
    Zero,
}

/// Name, shape, and init of one parameter tensor under a config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

fn spec(name: &'static str, rows: usize, cols: usize, init: Init) -> ParamSpec {
    ParamSpec {
        name,
        rows,
        cols,
        init,
    }
}

/// Three gate biases of one GRU, as 1 x width rows.
fn gru_biases(prefix: &'static str, width: usize) -> [ParamSpec; 3] {
    let names: [&'static str; 3] = match prefix {
        "gru1" => ["gru1.bz", "gru1.br", "gru1.bh"],
        "gru2" => ["gru2.bz", "gru2.br", "gru2.bh"],
        "gru3" => ["gru3.bz", "gru3.br", "gru3.bh"],
        _ => unreachable!("unknown GRU prefix"),
    };
    names.map(|n| spec(n, 1, width, Init::Zero))
}

/// Every parameter tensor present under `config`, in registration order.
///
/// Weight tying is represented by absence: there is no output projection
/// entry when `tie_weights` is set, because the embedding matrix plays that
/// role through a transpose.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.d_eff();
    let h = config.h_eff();
    let v = config.v_dim;
    let mut specs = vec![
        spec("E", config.vocab_size, d, Init::Embedding),
        spec("Wx", d, h, Init::FanIn),
        spec("gru1.Uz", h, h, Init::FanIn),
        spec("gru1.Ur", h, h, Init::FanIn),
        spec("gru1.U", h, h, Init::FanIn),
    ];
    specs.extend(gru_biases("gru1", h));
    specs.extend([
        spec("gru2.Wz", h, h, Init::FanIn),
        spec("gru2.Wr", h, h, Init::FanIn),
        spec("gru2.W", h, h, Init::FanIn),
        spec("gru2.Uz", h, h, Init::FanIn),
        spec("gru2.Ur", h, h, Init::FanIn),
        spec("gru2.U", h, h, Init::FanIn),
    ]);
    specs.extend(gru_biases("gru2", h));
    match config.attention_mode {
        AttentionMode::Pooled => {
            // Wimg doubles as the initial-state projection; a separate init
            // matrix exists only in grid-attention mode.
            specs.push(spec("Wimg", v, h, Init::FanIn));
        }
        AttentionMode::Mha => {
            specs.push(spec("Winit", v, h, Init::FanIn));
            let dq = config.dq_eff();
            let kv = config.mha_kv_dim;
            for head in 0..config.mha_heads {
                let (q, k, vv) = head_names(head);
                specs.push(spec(q, h, dq, Init::FanIn));
                specs.push(spec(k, kv, dq, Init::FanIn));
                specs.push(spec(vv, kv, dq, Init::FanIn));
            }
            specs.push(spec("mha.Op", config.mha_heads * dq, h, Init::FanIn));
        }
    }
    match config.bottleneck_mode {
        BottleneckMode::Linear => {
            specs.push(spec("Wbot", d + 2 * h, d, Init::FanIn));
        }
        BottleneckMode::DeepGru => {
            specs.extend([
                spec("gru3.Wz", d + 2 * h, h, Init::FanIn),
                spec("gru3.Wr", d + 2 * h, h, Init::FanIn),
                spec("gru3.W", d + 2 * h, h, Init::FanIn),
                spec("gru3.Uz", h, h, Init::FanIn),
                spec("gru3.Ur", h, h, Init::FanIn),
                spec("gru3.U", h, h, Init::FanIn),
            ]);
            specs.extend(gru_biases("gru3", h));
            specs.push(spec("Wshrink", h, d, Init::FanIn));
        }
    }
    if !config.tie_weights {
        specs.push(spec("Wout", d, config.vocab_size, Init::FanIn));
    }
    specs.push(spec("Wbase", h, 1, Init::FanIn));
    specs
}

/// Up to 16 attention heads have static name triples; enough for any
/// realistic configuration and keeps names allocation-free.
fn head_names(head: usize) -> (&'static str, &'static str, &'static str) {
    const NAMES: [(&str, &str, &str); 16] = [
        ("mha.h0.Q", "mha.h0.K", "mha.h0.V"),
        ("mha.h1.Q", "mha.h1.K", "mha.h1.V"),
        ("mha.h2.Q", "mha.h2.K", "mha.h2.V"),
        ("mha.h3.Q", "mha.h3.K", "mha.h3.V"),
        ("mha.h4.Q", "mha.h4.K", "mha.h4.V"),
        ("mha.h5.Q", "mha.h5.K", "mha.h5.V"),
        ("mha.h6.Q", "mha.h6.K", "mha.h6.V"),
        ("mha.h7.Q", "mha.h7.K", "mha.h7.V"),
        ("mha.h8.Q", "mha.h8.K", "mha.h8.V"),
        ("mha.h9.Q", "mha.h9.K", "mha.h9.V"),
        ("mha.h10.Q", "mha.h10.K", "mha.h10.V"),
        ("mha.h11.Q", "mha.h11.K", "mha.h11.V"),
        ("mha.h12.Q", "mha.h12.K", "mha.h12.V"),
        ("mha.h13.Q", "mha.h13.K", "mha.h13.V"),
        ("mha.h14.Q", "mha.h14.K", "mha.h14.V"),
        ("mha.h15.Q", "mha.h15.K", "mha.h15.V"),
    ];
    NAMES[head]
}

/// Total trainable scalar count with a per-tensor breakdown.
pub fn count_params(config: &ModelConfig) -> (u64, Vec<(&'static str, u64)>) {
    let breakdown: Vec<(&'static str, u64)> = param_specs(config)
        .iter()
        .map(|s| (s.name, (s.rows * s.cols) as u64))
        .collect();
    (breakdown.iter().map(|(_, n)| n).sum(), breakdown)
}

/// Typed handles into the parameter set, resolved once at build time.
#[derive(Clone, Debug)]
pub struct ParamIds {
    pub e: ParamId,
    pub wx: ParamId,
    pub gru1: GruParamIds,
    pub gru2_in: [ParamId; 3],
    pub gru2: GruParamIds,
    /// Pooled mode: the shared image projection (attention gate and h0).
    pub wimg: Option<ParamId>,
    /// Grid mode: dedicated initial-state projection.
    pub winit: Option<ParamId>,
    pub mha_heads: Vec<MhaHeadIds>,
    pub mha_out: Option<ParamId>,
    pub wbot: Option<ParamId>,
    pub gru3_in: Option<[ParamId; 3]>,
    pub gru3: Option<GruParamIds>,
    pub wshrink: Option<ParamId>,
    /// Untied output projection; absent when the embedding is shared.
    pub wout: Option<ParamId>,
    pub wbase: ParamId,
}

/// Recurrent matrices and gate biases of one GRU (update, reset, candidate).
#[derive(Clone, Copy, Debug)]
pub struct GruParamIds {
    pub uz: ParamId,
    pub ur: ParamId,
    pub u: ParamId,
    pub bz: ParamId,
    pub br: ParamId,
    pub bh: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct MhaHeadIds {
    pub q: ParamId,
    pub k: ParamId,
    pub v: ParamId,
}

/// Initialize every tensor and register it; draw order follows the
/// `param_specs` order so a seed fully determines the parameters
/// regardless of scalar type (draws happen in f64).
pub fn build_model<T: Real>(config: ModelConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let mut params: ParamSet<T> = ParamSet::new();
    for s in param_specs(&config) {
        let mut t = Tensor2D::zeros(s.rows, s.cols);
        match s.init {
            Init::Zero => {}
            Init::FanIn => {
                let k = 1.0 / (s.rows as f64).sqrt();
                for v in t.data_mut() {
                    *v = T::from_f64(rng.uniform_in(-k, k));
                }
            }
            Init::Embedding => {
                for v in t.data_mut() {
                    *v = T::from_f64(rng.uniform_in(-0.08, 0.08));
                }
            }
        }
        params.add(s.name, t);
    }

    let id = |name: &str| params.id_of(name).expect("spec-listed parameter");
    let gru = |prefix: &str| GruParamIds {
        uz: id(&format!("{prefix}.Uz")),
        ur: id(&format!("{prefix}.Ur")),
        u: id(&format!("{prefix}.U")),
        bz: id(&format!("{prefix}.bz")),
        br: id(&format!("{prefix}.br")),
        bh: id(&format!("{prefix}.bh")),
    };
    let ids = ParamIds {
        e: id("E"),
        wx: id("Wx"),
        gru1: gru("gru1"),
        gru2_in: [id("gru2.Wz"), id("gru2.Wr"), id("gru2.W")],
        gru2: gru("gru2"),
        wimg: params.id_of("Wimg"),
        winit: params.id_of("Winit"),
        mha_heads: (0..config.mha_heads)
            .filter(|_| config.attention_mode == AttentionMode::Mha)
            .map(|h| {
                let (q, k, v) = head_names(h);
                MhaHeadIds {
                    q: id(q),
                    k: id(k),
                    v: id(v),
                }
            })
            .collect(),
        mha_out: params.id_of("mha.Op"),
        wbot: params.id_of("Wbot"),
        gru3_in: match config.bottleneck_mode {
            BottleneckMode::DeepGru => Some([id("gru3.Wz"), id("gru3.Wr"), id("gru3.W")]),
            BottleneckMode::Linear => None,
        },
        gru3: match config.bottleneck_mode {
            BottleneckMode::DeepGru => Some(gru("gru3")),
            BottleneckMode::Linear => None,
        },
        wshrink: params.id_of("Wshrink"),
        wout: params.id_of("Wout"),
        wbase: id("Wbase"),
    };
    Ok(Model {
        config,
        params,
        ids,
    })
}
