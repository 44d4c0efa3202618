//! Model hyperparameters, the named parameter store, and initialization.

use alloc::string::ToString;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{KernelConfig, PositionalKind, TrainConfig};
use crate::error::{Error, Result};
use crate::kernels::{freq_ladder, parse_mode, unit_widths, EmbeddingMode, HeadKind, Letter};
use crate::matrix::Matrix;
use crate::rng::{stream, Purpose, Stream};
use crate::tape::softplus_inv;

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: String,
    pub d_model: usize,
    pub head_dim: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub n_items: usize,
    /// Earliest corpus timestamp; origin of the Bochner time axis.
    pub t_min: i64,
    pub dropout: f64,
    pub sigma_init: f64,
    pub kernels: KernelConfig,
}

impl ModelConfig {
    pub fn from_train(cfg: &TrainConfig, n_items: usize, t_min: i64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            mode: cfg.embedding_mode()?.to_string(),
            d_model: cfg.d_model,
            head_dim: cfg.head_width()?,
            layers: cfg.layers,
            d_ff: cfg.d_ff,
            max_len: cfg.max_len,
            n_items,
            t_min,
            dropout: cfg.dropout,
            sigma_init: cfg.lnsr.sigma_init,
            kernels: cfg.kernels.clone(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensors in a fixed construction order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl ParamStore {
    fn add(&mut self, name: String, m: Matrix) -> ParamId {
        self.names.push(name);
        self.tensors.push(m);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Replaces every tensor from `(name, matrix)` pairs; names and shapes must match exactly.
    pub fn load(&mut self, entries: Vec<(String, Matrix)>) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return Err(Error::Shape(format!("expected {} tensors, found {}", self.tensors.len(), entries.len())));
        }
        for (k, (name, m)) in entries.into_iter().enumerate() {
            if name != self.names[k] || m.shape() != self.tensors[k].shape() {
                return Err(Error::Shape(format!(
                    "tensor {k}: expected {} {:?}, found {name} {:?}",
                    self.names[k],
                    self.tensors[k].shape(),
                    m.shape()
                )));
            }
            self.tensors[k] = m;
        }
        Ok(())
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (n, t) in self.names.iter().zip(&self.tensors) {
            eat(n.as_bytes());
            eat(&(t.rows() as u64).to_le_bytes());
            eat(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct NoisyIds {
    pub mu_w: ParamId,
    pub sigma_w: ParamId,
    pub mu_b: ParamId,
    pub sigma_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct CalendarIds {
    pub tables: Vec<ParamId>,
    pub scales: Vec<ParamId>,
    pub biases: Vec<ParamId>,
}

#[derive(Clone, Debug)]
pub enum HeadExtra {
    Absolute { wqa: ParamId, wka: ParamId },
    Relative { wr: ParamId, br: ParamId },
    Distance,
}

#[derive(Clone, Debug)]
pub struct HeadIds {
    pub kind: HeadKind,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub extra: HeadExtra,
}

#[derive(Clone, Debug)]
pub struct LayerIds {
    pub heads: Vec<HeadIds>,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

/// Parameter ids for every component, resolved once at construction.
#[derive(Clone, Debug)]
pub struct Layout {
    pub item_emb: ParamId,
    pub noisy: NoisyIds,
    pub positional: Option<ParamId>,
    /// Bochner frequencies (per unit time `tau`) and phases.
    pub bochner: Option<(ParamId, ParamId)>,
    pub calendar: Option<CalendarIds>,
    /// Sinusoid time-difference frequencies and phases.
    pub sinusoid: Option<(ParamId, ParamId)>,
    /// Gaussian center and pre-softplus width.
    pub gaussian: Option<(ParamId, ParamId)>,
    pub layers: Vec<LayerIds>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub mode: EmbeddingMode,
    pub layout: Layout,
    pub params: ParamStore,
}

const INIT_STD: f64 = 0.02;

fn trunc_normal(rows: usize, cols: usize, rng: &mut Stream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break z * INIT_STD;
        }
    })
}

impl Model {
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        let mode = parse_mode(&config.mode)?;
        let d = config.d_model;
        let d_h = config.head_dim;
        if d_h == 0 || d == 0 || config.layers == 0 || config.max_len == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        let mut rng = stream(init_seed, Purpose::Init, 0, 0);
        let mut ps = ParamStore::default();

        let item_emb = ps.add("item_emb".into(), trunc_normal(config.n_items + 1, d, &mut rng));
        let noisy = NoisyIds {
            mu_w: ps.add("noisy.mu_w".into(), Matrix::identity(d)),
            sigma_w: ps.add("noisy.sigma_w".into(), Matrix::filled(d, d, config.sigma_init)),
            mu_b: ps.add("noisy.mu_b".into(), Matrix::zeros(1, d)),
            sigma_b: ps.add("noisy.sigma_b".into(), Matrix::filled(1, d, config.sigma_init)),
        };

        let base = config.kernels.freq_base;
        let pair_freqs = || -> Matrix {
            let ladder = freq_ladder(d_h / 2, base);
            Matrix::from_vec(1, d_h / 2, ladder.iter().map(|f| 1.0 / f).collect())
        };
        let positional = (mode.has(Letter::P) && config.kernels.positional == PositionalKind::Learnable)
            .then(|| ps.add("kernel.p.table".into(), trunc_normal(config.max_len, d_h, &mut rng)));
        let bochner = mode.has(Letter::B).then(|| {
            (ps.add("kernel.b.freq".into(), pair_freqs()), ps.add("kernel.b.phase".into(), Matrix::zeros(1, d_h / 2)))
        });
        let calendar = if mode.has(Letter::T) {
            let spec = &config.kernels.calendar;
            let widths = unit_widths(d_h, spec.units.len());
            let mut ids = CalendarIds { tables: Vec::new(), scales: Vec::new(), biases: Vec::new() };
            for (k, (&unit, &w)) in spec.units.iter().zip(&widths).enumerate() {
                ids.tables.push(ps.add(format!("kernel.t.{k}.table"), trunc_normal(spec.table_rows(unit), w, &mut rng)));
                ids.scales.push(ps.add(format!("kernel.t.{k}.scale"), Matrix::scalar(1.0)));
                ids.biases.push(ps.add(format!("kernel.t.{k}.bias"), Matrix::zeros(1, w)));
            }
            Some(ids)
        } else {
            None
        };
        let sinusoid = mode.has(Letter::S).then(|| {
            (ps.add("kernel.s.freq".into(), pair_freqs()), ps.add("kernel.s.phase".into(), Matrix::zeros(1, d_h / 2)))
        });
        let gaussian = mode.has(Letter::R).then(|| {
            (
                ps.add("kernel.r.mu".into(), Matrix::scalar(config.kernels.gaussian_mu)),
                ps.add("kernel.r.sigma_raw".into(), Matrix::scalar(softplus_inv(config.kernels.gaussian_sigma))),
            )
        });

        let heads = mode.heads();
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut head_ids = Vec::with_capacity(heads.len());
            for (h, &kind) in heads.iter().enumerate() {
                let p = |s: &str| format!("layer{l}.head{h}.{s}");
                let wq = ps.add(p("wq"), trunc_normal(d, d_h, &mut rng));
                let wk = ps.add(p("wk"), trunc_normal(d, d_h, &mut rng));
                let wv = ps.add(p("wv"), trunc_normal(d, d_h, &mut rng));
                let extra = match kind {
                    HeadKind::Absolute(_) => HeadExtra::Absolute {
                        wqa: ps.add(p("wqa"), trunc_normal(d_h, d_h, &mut rng)),
                        wka: ps.add(p("wka"), trunc_normal(d_h, d_h, &mut rng)),
                    },
                    HeadKind::Relative(_) => HeadExtra::Relative {
                        wr: ps.add(p("wr"), trunc_normal(d_h, d_h, &mut rng)),
                        br: ps.add(p("br"), Matrix::zeros(1, d_h)),
                    },
                    HeadKind::Distance => HeadExtra::Distance,
                };
                head_ids.push(HeadIds { kind, wq, wk, wv, extra });
            }
            let p = |s: &str| format!("layer{l}.{s}");
            let hw = heads.len() * d_h;
            layers.push(LayerIds {
                heads: head_ids,
                wo: ps.add(p("wo"), trunc_normal(hw, d, &mut rng)),
                bo: ps.add(p("bo"), Matrix::zeros(1, d)),
                ln1_gain: ps.add(p("ln1.gain"), Matrix::filled(1, d, 1.0)),
                ln1_bias: ps.add(p("ln1.bias"), Matrix::zeros(1, d)),
                w1: ps.add(p("ffn.w1"), trunc_normal(d, config.d_ff, &mut rng)),
                b1: ps.add(p("ffn.b1"), Matrix::zeros(1, config.d_ff)),
                w2: ps.add(p("ffn.w2"), trunc_normal(config.d_ff, d, &mut rng)),
                b2: ps.add(p("ffn.b2"), Matrix::zeros(1, d)),
                ln2_gain: ps.add(p("ln2.gain"), Matrix::filled(1, d, 1.0)),
                ln2_bias: ps.add(p("ln2.bias"), Matrix::zeros(1, d)),
            });
        }

        let layout = Layout { item_emb, noisy, positional, bochner, calendar, sinusoid, gaussian, layers };
        Ok(Self { config, mode, layout, params: ps })
    }

    pub fn n_items(&self) -> usize {
        self.config.n_items
    }

    pub fn item_table(&self) -> &Matrix {
        self.params.get(self.layout.item_emb)
    }
}
