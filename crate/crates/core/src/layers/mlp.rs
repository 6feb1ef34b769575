use rand::RngCore;

use super::{add_bias, glorot, Activation, LayerConfig};
use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Row-wise feedforward: relu between layers, `act` after the last one.
/// Graph structure plays no part.
pub fn mlp_forward(
    tape: &mut Tape,
    x: Var,
    layers: &[(Var, Option<Var>)],
    act: Activation,
) -> Result<Var> {
    if layers.is_empty() {
        return Err(Error::Config("mlp needs at least one layer".into()));
    }
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let (hc, wr) = (tape.value(h).cols(), tape.value(w).rows());
        if hc != wr {
            return Err(Error::Shape {
                op: "mlp",
                detail: format!("layer {i}: input width {hc}, weight rows {wr}"),
            });
        }
        h = tape.matmul(h, w)?;
        h = add_bias(tape, h, b)?;
        if i + 1 < layers.len() {
            h = tape.relu(h);
        }
    }
    Ok(act.apply(tape, h))
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub cfg: LayerConfig,
    prefix: String,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, cfg: LayerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prefix: prefix.into(),
        })
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.cfg.in_dim];
        d.extend(&self.cfg.hidden_dims);
        d.push(self.cfg.out_dim);
        d
    }

    fn names(&self, i: usize) -> (String, String) {
        (
            format!("{}.layer{i}.weight", self.prefix),
            format!("{}.layer{i}.bias", self.prefix),
        )
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        for (i, pair) in self.dims().windows(2).enumerate() {
            let (w, b) = self.names(i);
            params.insert(w, glorot(pair[0], pair[1], rng))?;
            if self.cfg.bias {
                params.insert(b, Tensor::zeros(1, pair[1]))?;
            }
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let layers = (0..self.dims().len() - 1)
            .map(|i| {
                let (w, bias) = self.names(i);
                Ok((b.get(&w)?, self.cfg.bias.then(|| b.get(&bias)).transpose()?))
            })
            .collect::<Result<Vec<_>>>()?;
        mlp_forward(tape, x, &layers, self.cfg.activation)
    }
}
