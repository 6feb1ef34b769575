use rand::RngCore;

use super::{add_bias, check_input, glorot, Activation, LayerConfig};
use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::Result;
use crate::graph::Graph;

/// Row-normalized adjacency: row `i` averages the neighbors of `i`; an
/// isolated node's row is zero.
pub fn mean_neighbor_operator(g: &Graph) -> Tensor {
    let n = g.num_nodes();
    let deg = g.degrees();
    let mut m = Tensor::zeros(n, n);
    for &(i, j) in g.edges() {
        m.set(i, j, 1.0 / deg[i] as f64);
    }
    m
}

/// `act([x_i || mean_{j in N(i)} x_j] W + b)`.
pub fn sage_forward(
    tape: &mut Tape,
    g: &Graph,
    x: Var,
    w: Var,
    bias: Option<Var>,
    act: Activation,
) -> Result<Var> {
    let in_dim = tape.value(w).rows() / 2;
    check_input("sage", tape, g, x, in_dim)?;
    let mean_op = tape.constant(mean_neighbor_operator(g));
    let agg = tape.matmul(mean_op, x)?;
    let cat = tape.concat_cols(&[x, agg])?;
    let h = tape.matmul(cat, w)?;
    let h = add_bias(tape, h, bias)?;
    Ok(act.apply(tape, h))
}

#[derive(Clone, Debug)]
pub struct SageConv {
    pub cfg: LayerConfig,
    prefix: String,
}

impl SageConv {
    pub fn new(prefix: impl Into<String>, cfg: LayerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prefix: prefix.into(),
        })
    }

    fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        params.insert(
            self.weight_name(),
            glorot(2 * self.cfg.in_dim, self.cfg.out_dim, rng),
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
        sage_forward(tape, g, x, w, bias, self.cfg.activation)
    }
}
