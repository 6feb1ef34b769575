use rand::RngCore;

use super::{add_bias, check_input, glorot, Activation, LayerConfig};
use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::Result;
use crate::graph::{normalized_adjacency, Graph};

/// `act(N X W + b)` with `N` the symmetric normalized adjacency with
/// self-loops.
pub fn gcn_forward(
    tape: &mut Tape,
    g: &Graph,
    x: Var,
    w: Var,
    bias: Option<Var>,
    act: Activation,
) -> Result<Var> {
    let in_dim = tape.value(w).rows();
    check_input("gcn", tape, g, x, in_dim)?;
    let norm = tape.constant(normalized_adjacency(g).into_tensor());
    let xw = tape.matmul(x, w)?;
    let h = tape.matmul(norm, xw)?;
    let h = add_bias(tape, h, bias)?;
    Ok(act.apply(tape, h))
}

#[derive(Clone, Debug)]
pub struct GcnConv {
    pub cfg: LayerConfig,
    prefix: String,
}

impl GcnConv {
    pub fn new(prefix: impl Into<String>, cfg: LayerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prefix: prefix.into(),
        })
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        params.insert(
            self.weight_name(),
            glorot(self.cfg.in_dim, self.cfg.out_dim, rng),
        )?;
        if self.cfg.bias {
            params.insert(self.bias_name(), Tensor::zeros(1, self.cfg.out_dim))?;
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, g: &Graph, x: Var) -> Result<Var> {
        let w = b.get(&self.weight_name())?;
        let bias = self
            .cfg
            .bias
            .then(|| b.get(&self.bias_name()))
            .transpose()?;
        gcn_forward(tape, g, x, w, bias, self.cfg.activation)
    }
}
