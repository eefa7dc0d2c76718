//! Parameterised sequence labelers and their analytic gradients.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BoundaryMode, SequenceModelConfig, Variant};
use super::crf::LinearChainCrf;
use crate::nn::{softmax_cross_entropy, BiLstm, Grads, Init, Linear, ParamId, ParamStore};
use crate::{Error, Result};

/// Per-document inputs: role-component rows and, for the joint model, the
/// shift-component rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DocInput {
    pub rr: Array2<f32>,
    pub shift: Option<Array2<f32>>,
}

impl DocInput {
    pub fn new(rr: Array2<f32>) -> Self {
        Self { rr, shift: None }
    }

    pub fn with_shift(rr: Array2<f32>, shift: Array2<f32>) -> Self {
        Self {
            rr,
            shift: Some(shift),
        }
    }

    pub fn len(&self) -> usize {
        self.rr.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rr.nrows() == 0
    }
}

/// Loss of one document. For the joint model `total = λ·shift + (1−λ)·rr`;
/// otherwise `total = rr` and `shift = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub rr: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CrfParams {
    transitions: ParamId,
    start: ParamId,
    end: ParamId,
}

impl CrfParams {
    fn new(store: &mut ParamStore, k: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            transitions: store.add("crf.transitions", k, k, Init::Uniform(0.1), rng),
            start: store.add("crf.start", 1, k, Init::Zeros, rng),
            end: store.add("crf.end", 1, k, Init::Zeros, rng),
        }
    }

    fn to_crf(self, store: &ParamStore) -> LinearChainCrf {
        LinearChainCrf {
            transitions: store.view(self.transitions).mapv(|v| v as f64),
            start: store.view(self.start).row(0).mapv(|v| v as f64),
            end: store.view(self.end).row(0).mapv(|v| v as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Boundary {
    left: ParamId,
    right: ParamId,
    width: usize,
}

impl Boundary {
    fn apply(&self, store: &ParamStore, x: &Array2<f32>) -> Array2<f32> {
        let mut x = x.clone();
        let n = x.nrows();
        let cols = x.ncols();
        if n > 0 {
            let mut first = x.slice_mut(s![0, ..self.width]);
            first += &store.view(self.left).row(0);
            let mut last = x.slice_mut(s![n - 1, cols - self.width..]);
            last += &store.view(self.right).row(0);
        }
        x
    }

    fn backward(&self, grads: &mut Grads, dx: &Array2<f32>) {
        let n = dx.nrows();
        let cols = dx.ncols();
        if n == 0 {
            return;
        }
        {
            let mut g = grads.view_mut(self.left);
            let mut row = g.row_mut(0);
            row += &dx.slice(s![0, ..self.width]);
        }
        let mut g = grads.view_mut(self.right);
        let mut row = g.row_mut(0);
        row += &dx.slice(s![n - 1, cols - self.width..]);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Arch {
    Crf {
        proj: Linear,
        crf: CrfParams,
    },
    Bilstm {
        lstm: BiLstm,
        proj: Linear,
    },
    BilstmCrf {
        lstm: BiLstm,
        proj: Linear,
        crf: CrfParams,
        boundary: Option<Boundary>,
    },
    Mtl {
        shift_lstm: BiLstm,
        shift_head: Linear,
        rr_lstm: BiLstm,
        proj: Linear,
        crf: CrfParams,
        boundary: Option<Boundary>,
    },
}

/// A sequence labeler whose parameters live in one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    config: SequenceModelConfig,
    store: ParamStore,
    arch: Arch,
}

impl SequenceModel {
    /// Builds a freshly initialised model; the layout depends only on the
    /// config and the initial values only on `config.seed`.
    pub fn new(config: SequenceModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let k = config.num_labels;
        let d = config.input_dim;
        let h = config.hidden_dim();
        let boundary = |store: &mut ParamStore, rng: &mut ChaCha8Rng| {
            (config.boundary == BoundaryMode::Learned).then(|| {
                let width = config.shift_embedding_dim.expect("validated");
                Boundary {
                    left: store.add("boundary.left", 1, width, Init::Zeros, rng),
                    right: store.add("boundary.right", 1, width, Init::Zeros, rng),
                    width,
                }
            })
        };
        let arch = match config.variant {
            Variant::Crf => Arch::Crf {
                proj: Linear::new(&mut store, "proj", d, k, &mut rng),
                crf: CrfParams::new(&mut store, k, &mut rng),
            },
            Variant::Bilstm => {
                let lstm = BiLstm::new(&mut store, "rr_lstm", d, h, &mut rng);
                Arch::Bilstm {
                    lstm,
                    proj: Linear::new(&mut store, "proj", lstm.output_dim(), k, &mut rng),
                }
            }
            Variant::BilstmCrf | Variant::LspBilstmCrf => {
                let boundary = boundary(&mut store, &mut rng);
                let lstm = BiLstm::new(&mut store, "rr_lstm", d, h, &mut rng);
                Arch::BilstmCrf {
                    lstm,
                    proj: Linear::new(&mut store, "proj", lstm.output_dim(), k, &mut rng),
                    crf: CrfParams::new(&mut store, k, &mut rng),
                    boundary,
                }
            }
            Variant::Mtl => {
                let boundary = boundary(&mut store, &mut rng);
                let e1 = config.shift_input_dim.expect("validated");
                let shift_lstm =
                    BiLstm::new(&mut store, "shift_lstm", e1, config.shift_hidden_dim(), &mut rng);
                let shift_head =
                    Linear::new(&mut store, "shift_head", shift_lstm.output_dim(), 2, &mut rng);
                let rr_lstm = BiLstm::new(&mut store, "rr_lstm", d, h, &mut rng);
                let joint = shift_lstm.output_dim() + rr_lstm.output_dim();
                Arch::Mtl {
                    shift_lstm,
                    shift_head,
                    rr_lstm,
                    proj: Linear::new(&mut store, "proj", joint, k, &mut rng),
                    crf: CrfParams::new(&mut store, k, &mut rng),
                    boundary,
                }
            }
        };
        Ok(Self {
            config,
            store,
            arch,
        })
    }

    /// Rebuilds a model from its config and a flat parameter vector.
    pub fn with_values(config: SequenceModelConfig, values: &[f32]) -> Result<Self> {
        let mut model = Self::new(config)?;
        model.store.load_values(values)?;
        Ok(model)
    }

    /// Short hash of the config and weights; equal fingerprints mean
    /// identical models.
    pub fn fingerprint(&self) -> String {
        let mut bytes = serde_json::to_vec(&self.config).expect("config serializes");
        bytes.extend(crate::util::f32_bytes(self.store.data()));
        crate::util::sha256_hex(&bytes)[..16].to_string()
    }

    pub fn config(&self) -> &SequenceModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn uses_crf(&self) -> bool {
        !matches!(self.arch, Arch::Bilstm { .. })
    }

    /// Parameter blocks of the joint model's shift head.
    pub fn shift_head_params(&self) -> Vec<ParamId> {
        match &self.arch {
            Arch::Mtl { shift_head, .. } => vec![shift_head.weight(), shift_head.bias()],
            _ => Vec::new(),
        }
    }

    fn crf_params(&self) -> Option<CrfParams> {
        match &self.arch {
            Arch::Crf { crf, .. } | Arch::BilstmCrf { crf, .. } | Arch::Mtl { crf, .. } => Some(*crf),
            Arch::Bilstm { .. } => None,
        }
    }

    /// The CRF layer with current parameter values.
    pub fn crf(&self) -> Option<LinearChainCrf> {
        self.crf_params().map(|c| c.to_crf(&self.store))
    }

    fn check_input(&self, input: &DocInput) -> Result<()> {
        if input.is_empty() {
            return Err(Error::InvalidInput("document has no sentences".into()));
        }
        if input.rr.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                context: "sentence inputs".into(),
                expected: self.config.input_dim,
                actual: input.rr.ncols(),
            });
        }
        if let Some(e1) = self.config.shift_input_dim {
            let shift = input
                .shift
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("joint model needs shift-component inputs".into()))?;
            if shift.ncols() != e1 {
                return Err(Error::DimensionMismatch {
                    context: "shift-component inputs".into(),
                    expected: e1,
                    actual: shift.ncols(),
                });
            }
            if shift.nrows() != input.rr.nrows() {
                return Err(Error::LengthMismatch {
                    left: input.rr.nrows(),
                    right: shift.nrows(),
                });
            }
        }
        if !input.rr.iter().chain(input.shift.iter().flatten()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model inputs".into()));
        }
        Ok(())
    }

    /// Per-sentence label scores (CRF emissions, or logits for the plain BiLSTM).
    pub fn emissions(&self, input: &DocInput) -> Result<Array2<f32>> {
        self.check_input(input)?;
        let st = &self.store;
        Ok(match &self.arch {
            Arch::Crf { proj, .. } => proj.forward(st, input.rr.view()),
            Arch::Bilstm { lstm, proj } => {
                proj.forward(st, lstm.forward(st, input.rr.view()).outputs().view())
            }
            Arch::BilstmCrf {
                lstm,
                proj,
                boundary,
                ..
            } => {
                let x = match boundary {
                    Some(b) => b.apply(st, &input.rr),
                    None => input.rr.clone(),
                };
                proj.forward(st, lstm.forward(st, x.view()).outputs().view())
            }
            Arch::Mtl {
                shift_lstm,
                rr_lstm,
                proj,
                boundary,
                ..
            } => {
                let e1 = input.shift.as_ref().expect("checked");
                let e1 = match boundary {
                    Some(b) => b.apply(st, e1),
                    None => e1.clone(),
                };
                let s = shift_lstm.forward(st, e1.view());
                let r = rr_lstm.forward(st, input.rr.view());
                let joint = ndarray::concatenate(Axis(1), &[s.outputs().view(), r.outputs().view()])
                    .expect("same length");
                proj.forward(st, joint.view())
            }
        })
    }

    /// Loss of one labelled document.
    pub fn loss(&self, input: &DocInput, gold: &[usize]) -> Result<LossParts> {
        let mut scratch = None;
        self.loss_impl(input, gold, &mut scratch, 1.0)
    }

    /// Loss of one document; adds `scale · dL/dθ` to `grads`.
    pub fn loss_and_grad(
        &self,
        input: &DocInput,
        gold: &[usize],
        grads: &mut Grads,
        scale: f64,
    ) -> Result<LossParts> {
        let mut g = Some(grads);
        self.loss_impl(input, gold, &mut g, scale)
    }

    fn check_gold(&self, input: &DocInput, gold: &[usize]) -> Result<()> {
        if gold.len() != input.len() {
            return Err(Error::LengthMismatch {
                left: input.len(),
                right: gold.len(),
            });
        }
        if let Some(bad) = gold.iter().find(|&&g| g >= self.config.num_labels) {
            return Err(Error::LabelOutsideSet(bad.to_string()));
        }
        Ok(())
    }

    fn crf_loss(
        &self,
        crf: CrfParams,
        emissions: &Array2<f32>,
        gold: &[usize],
        grads: &mut Option<&mut Grads>,
        scale: f64,
    ) -> Result<(f64, Option<Array2<f32>>)> {
        let layer = crf.to_crf(&self.store);
        let e64 = emissions.mapv(|v| v as f64);
        match grads {
            None => Ok((layer.nll(e64.view(), gold)?, None)),
            Some(g) => {
                let cg = layer.nll_with_grad(e64.view(), gold)?;
                let add = |g: &mut Grads, id: ParamId, vals: ArrayView2<f64>| {
                    let mut view = g.view_mut(id);
                    view.zip_mut_with(&vals, |a, b| *a += (scale * b) as f32);
                };
                add(g, crf.transitions, cg.d_transitions.view());
                add(g, crf.start, cg.d_start.view().insert_axis(Axis(0)));
                add(g, crf.end, cg.d_end.view().insert_axis(Axis(0)));
                let d_em = cg.d_emissions.mapv(|v| (scale * v) as f32);
                Ok((cg.nll, Some(d_em)))
            }
        }
    }

    fn loss_impl(
        &self,
        input: &DocInput,
        gold: &[usize],
        grads: &mut Option<&mut Grads>,
        scale: f64,
    ) -> Result<LossParts> {
        self.check_input(input)?;
        self.check_gold(input, gold)?;
        let st = &self.store;
        match &self.arch {
            Arch::Crf { proj, crf } => {
                let em = proj.forward(st, input.rr.view());
                let (nll, d_em) = self.crf_loss(*crf, &em, gold, grads, scale)?;
                if let (Some(g), Some(d_em)) = (grads.as_deref_mut(), d_em) {
                    proj.backward(st, g, input.rr.view(), d_em.view());
                }
                Ok(LossParts {
                    total: nll,
                    rr: nll,
                    shift: 0.0,
                })
            }
            Arch::Bilstm { lstm, proj } => {
                let cache = lstm.forward(st, input.rr.view());
                let logits = proj.forward(st, cache.outputs().view());
                let (loss, d_logits) = softmax_cross_entropy(logits.view(), gold, None);
                if let Some(g) = grads.as_deref_mut() {
                    let d_logits = d_logits.mapv(|v| v * scale as f32);
                    let dh = proj.backward(st, g, cache.outputs().view(), d_logits.view());
                    lstm.backward(st, g, input.rr.view(), &cache, dh.view());
                }
                Ok(LossParts {
                    total: loss,
                    rr: loss,
                    shift: 0.0,
                })
            }
            Arch::BilstmCrf {
                lstm,
                proj,
                crf,
                boundary,
            } => {
                let x = match boundary {
                    Some(b) => b.apply(st, &input.rr),
                    None => input.rr.clone(),
                };
                let cache = lstm.forward(st, x.view());
                let em = proj.forward(st, cache.outputs().view());
                let (nll, d_em) = self.crf_loss(*crf, &em, gold, grads, scale)?;
                if let (Some(g), Some(d_em)) = (grads.as_deref_mut(), d_em) {
                    let dh = proj.backward(st, g, cache.outputs().view(), d_em.view());
                    let dx = lstm.backward(st, g, x.view(), &cache, dh.view());
                    if let Some(b) = boundary {
                        b.backward(g, &dx);
                    }
                }
                Ok(LossParts {
                    total: nll,
                    rr: nll,
                    shift: 0.0,
                })
            }
            Arch::Mtl {
                shift_lstm,
                shift_head,
                rr_lstm,
                proj,
                crf,
                boundary,
            } => {
                let lambda = self.config.lambda as f64;
                let e1 = input.shift.as_ref().expect("checked");
                let e1 = match boundary {
                    Some(b) => b.apply(st, e1),
                    None => e1.clone(),
                };
                let s_cache = shift_lstm.forward(st, e1.view());
                let r_cache = rr_lstm.forward(st, input.rr.view());
                let hs = shift_lstm.output_dim();
                let joint = ndarray::concatenate(
                    Axis(1),
                    &[s_cache.outputs().view(), r_cache.outputs().view()],
                )
                .expect("same length");
                let em = proj.forward(st, joint.view());
                let (l_rr, d_em) = self.crf_loss(*crf, &em, gold, grads, scale * (1.0 - lambda))?;

                let n = input.len();
                let pairs = n - 1;
                let shift_rows = s_cache.outputs().slice(s![..pairs, ..]);
                let shift_gold: Vec<usize> = gold
                    .windows(2)
                    .map(|w| usize::from(w[0] != w[1]))
                    .collect();
                let (l_shift, d_shift_logits) = if pairs == 0 {
                    (0.0, None)
                } else {
                    let logits = shift_head.forward(st, shift_rows);
                    let (sum, d) = softmax_cross_entropy(logits.view(), &shift_gold, None);
                    (sum / pairs as f64, Some(d))
                };
                if let (Some(g), Some(d_em)) = (grads.as_deref_mut(), d_em) {
                    let d_joint = proj.backward(st, g, joint.view(), d_em.view());
                    let mut d_s = d_joint.slice(s![.., ..hs]).to_owned();
                    let d_r = d_joint.slice(s![.., hs..]).to_owned();
                    if let Some(d_logits) = d_shift_logits {
                        let f = (scale * lambda / pairs as f64) as f32;
                        let d_logits = d_logits.mapv(|v| v * f);
                        let d_rows = shift_head.backward(st, g, shift_rows, d_logits.view());
                        let mut top = d_s.slice_mut(s![..pairs, ..]);
                        top += &d_rows;
                    }
                    let dx1 = shift_lstm.backward(st, g, e1.view(), &s_cache, d_s.view());
                    if let Some(b) = boundary {
                        b.backward(g, &dx1);
                    }
                    rr_lstm.backward(st, g, input.rr.view(), &r_cache, d_r.view());
                }
                Ok(LossParts {
                    total: lambda * l_shift + (1.0 - lambda) * l_rr,
                    rr: l_rr,
                    shift: l_shift,
                })
            }
        }
    }

    /// Label indices: Viterbi for CRF variants, per-sentence argmax otherwise.
    pub fn predict(&self, input: &DocInput) -> Result<Vec<usize>> {
        let em = self.emissions(input)?;
        match self.crf() {
            Some(crf) => crf.decode(em.mapv(|v| v as f64).view()),
            None => Ok(em
                .rows()
                .into_iter()
                .map(|row| {
                    let mut best = 0;
                    for (j, v) in row.iter().enumerate() {
                        if *v > row[best] {
                            best = j;
                        }
                    }
                    best
                })
                .collect()),
        }
    }

    /// Per-sentence label posteriors.
    pub fn marginals(&self, input: &DocInput) -> Result<Array2<f64>> {
        let em = self.emissions(input)?;
        match self.crf() {
            Some(crf) => crf.marginals(em.mapv(|v| v as f64).view()),
            None => Ok(crate::nn::log_softmax_rows(em.view()).mapv(f64::exp)),
        }
    }

    /// Shift probabilities from the joint model's head, one per adjacent pair.
    pub fn shift_probabilities(&self, input: &DocInput) -> Result<Array1<f64>> {
        self.check_input(input)?;
        let Arch::Mtl {
            shift_lstm,
            shift_head,
            boundary,
            ..
        } = &self.arch
        else {
            return Err(Error::Unsupported("shift probabilities need the mtl variant".into()));
        };
        let st = &self.store;
        let e1 = input.shift.as_ref().expect("checked");
        let e1 = match boundary {
            Some(b) => b.apply(st, e1),
            None => e1.clone(),
        };
        let cache = shift_lstm.forward(st, e1.view());
        let pairs = input.len() - 1;
        let logits = shift_head.forward(st, cache.outputs().slice(s![..pairs, ..]));
        let lp = crate::nn::log_softmax_rows(logits.view());
        Ok(lp.column(1).mapv(f64::exp))
    }
}
