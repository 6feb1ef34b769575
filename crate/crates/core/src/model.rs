//! Hierarchical graph classifier.
//!
//! `num_blocks` repetitions of {GCN convolution with relu, GSAPool}, a
//! readout after every block (mean and max over nodes, concatenated), the
//! readouts summed into the graph embedding, and an MLP classifier with
//! dropout on its hidden layers and a log-softmax output.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{glorot, Activation, GcnConv, LayerConfig};
use crate::pool::{GsaPool, PoolConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub pool: PoolConfig,
    /// Hidden widths of the classifier; its output width is the class count.
    pub classifier_hidden: Vec<usize>,
    /// Applied to classifier hidden layers during training only.
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_hidden(128)
    }
}

impl ModelConfig {
    pub fn with_hidden(hidden_dim: usize) -> Self {
        Self {
            hidden_dim,
            num_blocks: 3,
            pool: PoolConfig::default(),
            classifier_hidden: vec![hidden_dim, (hidden_dim / 2).max(1)],
            dropout_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.classifier_hidden.contains(&0) {
            return Err(Error::Config("model dims must be positive".into()));
        }
        if self.num_blocks == 0 {
            return Err(Error::Config("num_blocks must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        self.pool.validate()
    }
}

/// Forward-pass mode. Training draws dropout masks from the given RNG.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

pub struct ModelOutput {
    /// `1 x num_classes`.
    pub log_probs: Var,
    /// Summed readouts, `1 x 2*hidden_dim`.
    pub embedding: Var,
    /// Node count after each pooling block.
    pub block_sizes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct GsaPoolNet {
    cfg: ModelConfig,
    in_dim: usize,
    num_classes: usize,
    convs: Vec<GcnConv>,
    pools: Vec<GsaPool>,
    classifier_dims: Vec<usize>,
}

impl GsaPoolNet {
    pub fn new(cfg: ModelConfig, in_dim: usize, num_classes: usize) -> Result<Self> {
        cfg.validate()?;
        if in_dim == 0 || num_classes == 0 {
            return Err(Error::Config(
                "input dim and class count must be positive".into(),
            ));
        }
        let h = cfg.hidden_dim;
        let mut convs = Vec::new();
        let mut pools = Vec::new();
        for blk in 0..cfg.num_blocks {
            let d_in = if blk == 0 { in_dim } else { h };
            convs.push(GcnConv::new(
                format!("block{blk}.conv"),
                LayerConfig::new(d_in, h, Activation::Relu),
            )?);
            pools.push(GsaPool::new(
                &format!("block{blk}.pool"),
                h,
                cfg.pool.clone(),
            )?);
        }
        let mut classifier_dims = vec![2 * h];
        classifier_dims.extend(&cfg.classifier_hidden);
        classifier_dims.push(num_classes);
        Ok(Self {
            cfg,
            in_dim,
            num_classes,
            convs,
            pools,
            classifier_dims,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn pools(&self) -> &[GsaPool] {
        &self.pools
    }

    fn classifier_names(i: usize) -> (String, String) {
        (
            format!("classifier.layer{i}.weight"),
            format!("classifier.layer{i}.bias"),
        )
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        for (conv, pool) in self.convs.iter().zip(&self.pools) {
            conv.init(params, rng)?;
            pool.init(params, rng)?;
        }
        for (i, pair) in self.classifier_dims.windows(2).enumerate() {
            let (w, b) = Self::classifier_names(i);
            params.insert(w, glorot(pair[0], pair[1], rng))?;
            params.insert(b, Tensor::zeros(1, pair[1]))?;
        }
        Ok(())
    }

    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn init_params(&self, seed: u64) -> Result<ParameterSet> {
        let mut params = ParameterSet::new();
        self.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(params)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        g: &Graph,
        mode: &mut Mode<'_>,
    ) -> Result<ModelOutput> {
        if g.feature_dim() != self.in_dim {
            return Err(Error::Shape {
                op: "model",
                detail: format!(
                    "feature dim {}, model expects {}",
                    g.feature_dim(),
                    self.in_dim
                ),
            });
        }
        let mut graph = g.clone();
        let mut x = tape.constant(g.features().clone());
        let mut embedding: Option<Var> = None;
        let mut block_sizes = Vec::with_capacity(self.pools.len());
        for (conv, pool) in self.convs.iter().zip(&self.pools) {
            let h = conv.forward(tape, b, &graph, x)?;
            let pooled = pool.forward(tape, b, &graph, h)?;
            graph = pooled.pooled_graph;
            x = pooled.features;
            block_sizes.push(graph.num_nodes());
            let mean = tape.mean_rows(x)?;
            let max = tape.max_rows(x)?;
            let readout = tape.concat_cols(&[mean, max])?;
            embedding = Some(match embedding {
                Some(e) => tape.add(e, readout)?,
                None => readout,
            });
        }
        let embedding = embedding.expect("num_blocks >= 1");

        let layers = self.classifier_dims.len() - 1;
        let mut h = embedding;
        for i in 0..layers {
            let (w, bias) = Self::classifier_names(i);
            h = tape.matmul(h, b.get(&w)?)?;
            h = tape.add(h, b.get(&bias)?)?;
            if i + 1 < layers {
                h = tape.relu(h);
                if let Mode::Train(rng) = mode {
                    if self.cfg.dropout_rate > 0.0 {
                        let keep = 1.0 - self.cfg.dropout_rate;
                        let cols = tape.value(h).cols();
                        let mask = (0..cols)
                            .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
                            .collect();
                        let mask = tape.constant(Tensor::row(mask));
                        h = tape.mul(h, mask)?;
                    }
                }
            }
        }
        let log_probs = tape.log_softmax_rows(h);
        Ok(ModelOutput {
            log_probs,
            embedding,
            block_sizes,
        })
    }

    /// Evaluation-mode log-probabilities and embedding of one graph.
    pub fn predict(&self, params: &ParameterSet, g: &Graph) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let out = self.forward(&mut tape, &b, g, &mut Mode::Eval)?;
        Ok((
            tape.value(out.log_probs).data().to_vec(),
            tape.value(out.embedding).data().to_vec(),
        ))
    }
}

/// `-log_probs[label]` as a `1 x 1` tensor.
pub fn nll_loss(tape: &mut Tape, log_probs: Var, label: usize) -> Result<Var> {
    let classes = tape.value(log_probs).cols();
    if tape.value(log_probs).rows() != 1 {
        return Err(Error::Shape {
            op: "nll_loss",
            detail: format!("expected one row, got {}", tape.value(log_probs).rows()),
        });
    }
    if label >= classes {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: classes,
        });
    }
    let mut onehot = Tensor::zeros(classes, 1);
    onehot.set(label, 0, 1.0);
    let onehot = tape.constant(onehot);
    let picked = tape.matmul(log_probs, onehot)?;
    Ok(tape.scale(picked, -1.0))
}

/// Mean of [`nll_loss`] over `(log_probs, label)` pairs.
pub fn batch_nll_loss(tape: &mut Tape, items: &[(Var, usize)]) -> Result<Var> {
    if items.is_empty() {
        return Err(Error::EmptySplit("batch"));
    }
    let mut total: Option<Var> = None;
    for &(lp, label) in items {
        let l = nll_loss(tape, lp, label)?;
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    Ok(tape.scale(total.expect("nonempty"), 1.0 / items.len() as f64))
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}
