//! Message-passing and dense layers.
//!
//! Each kernel is exposed twice: as a free `*_forward` function over tape
//! variables, and as a small struct that owns a parameter-name prefix and
//! knows how to initialize and look up its weights in a [`ParameterSet`].

mod cheb;
mod gat;
mod gcn;
mod mlp;
mod sage;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

pub use cheb::{cheb_forward, scaled_laplacian, ChebConv};
pub use gat::{gat_attention, gat_forward, GatConv, GatHead};
pub use gcn::{gcn_forward, GcnConv};
pub use mlp::{mlp_forward, Mlp};
pub use sage::{mean_neighbor_operator, sage_forward, SageConv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    None,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Self::Tanh => tape.tanh(x),
            Self::Sigmoid => tape.sigmoid(x),
            Self::Relu => tape.relu(x),
            Self::None => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
            Self::Relu => "relu",
            Self::None => "none",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Self::Tanh),
            "sigmoid" => Ok(Self::Sigmoid),
            "relu" => Ok(Self::Relu),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Chebyshev polynomial order K (number of terms).
    pub cheb_order: usize,
    pub num_heads: usize,
    pub leaky_slope: f64,
    /// Hidden widths of an MLP; empty means a single linear map.
    pub hidden_dims: Vec<usize>,
    pub bias: bool,
}

impl LayerConfig {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            cheb_order: 2,
            num_heads: 1,
            leaky_slope: 0.2,
            hidden_dims: Vec::new(),
            bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("layer dims must be positive".into()));
        }
        if self.cheb_order == 0 {
            return Err(Error::Config("cheb_order must be >= 1".into()));
        }
        if self.num_heads == 0 {
            return Err(Error::Config("num_heads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Uniform Glorot initialization.
pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::new(rows, cols, data).expect("glorot shape")
}

pub(crate) fn check_input(
    op: &'static str,
    tape: &Tape,
    g: &Graph,
    x: Var,
    in_dim: usize,
) -> Result<()> {
    let xv = tape.value(x);
    if xv.rows() != g.num_nodes() || xv.cols() != in_dim {
        return Err(Error::Shape {
            op,
            detail: format!(
                "input {}x{}, expected {}x{in_dim}",
                xv.rows(),
                xv.cols(),
                g.num_nodes()
            ),
        });
    }
    Ok(())
}

pub(crate) fn add_bias(tape: &mut Tape, h: Var, bias: Option<Var>) -> Result<Var> {
    match bias {
        Some(b) => tape.add(h, b),
        None => Ok(h),
    }
}

/// Any of the layer kinds behind one interface.
#[derive(Clone, Debug)]
pub enum Layer {
    Gcn(GcnConv),
    Cheb(ChebConv),
    Sage(SageConv),
    Gat(GatConv),
    Mlp(Mlp),
}

impl Layer {
    pub fn config(&self) -> &LayerConfig {
        match self {
            Self::Gcn(l) => &l.cfg,
            Self::Cheb(l) => &l.cfg,
            Self::Sage(l) => &l.cfg,
            Self::Gat(l) => &l.cfg,
            Self::Mlp(l) => &l.cfg,
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        match self {
            Self::Gcn(l) => l.init(params, rng),
            Self::Cheb(l) => l.init(params, rng),
            Self::Sage(l) => l.init(params, rng),
            Self::Gat(l) => l.init(params, rng),
            Self::Mlp(l) => l.init(params, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, g: &Graph, x: Var) -> Result<Var> {
        match self {
            Self::Gcn(l) => l.forward(tape, b, g, x),
            Self::Cheb(l) => l.forward(tape, b, g, x),
            Self::Sage(l) => l.forward(tape, b, g, x),
            Self::Gat(l) => l.forward(tape, b, g, x),
            Self::Mlp(l) => l.forward(tape, b, x),
        }
    }
}
