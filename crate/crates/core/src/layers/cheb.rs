use rand::RngCore;

use super::{add_bias, check_input, glorot, Activation, LayerConfig};
use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// `L_sym - I` with `L_sym = I - D^-1/2 A D^-1/2`, i.e. the scaled
/// Laplacian `2 L_sym / lambda_max - I` at `lambda_max = 2`. Isolated nodes
/// have a zero Laplacian row, so their diagonal entry is `-1`.
pub fn scaled_laplacian(g: &Graph) -> Tensor {
    let n = g.num_nodes();
    let deg = g.degrees();
    let mut l = Tensor::zeros(n, n);
    for (i, &d) in deg.iter().enumerate() {
        if d == 0 {
            l.set(i, i, -1.0);
        }
    }
    for &(i, j) in g.edges() {
        l.set(i, j, -1.0 / ((deg[i] * deg[j]) as f64).sqrt());
    }
    l
}

/// `act(sum_k T_k(L) X W_k + b)` with the Chebyshev recurrence
/// `T_0 X = X`, `T_1 X = L X`, `T_k X = 2 L T_{k-1} X - T_{k-2} X`.
pub fn cheb_forward(
    tape: &mut Tape,
    g: &Graph,
    x: Var,
    weights: &[Var],
    bias: Option<Var>,
    act: Activation,
) -> Result<Var> {
    let Some(&w0) = weights.first() else {
        return Err(Error::Config(
            "cheb_forward needs at least one weight".into(),
        ));
    };
    check_input("cheb", tape, g, x, tape.value(w0).rows())?;
    let lap = tape.constant(scaled_laplacian(g));
    let mut out = tape.matmul(x, w0)?;
    let (mut prev, mut cur) = (x, x);
    for (k, &w) in weights.iter().enumerate().skip(1) {
        let next = if k == 1 {
            tape.matmul(lap, x)?
        } else {
            let lx = tape.matmul(lap, cur)?;
            let two_lx = tape.scale(lx, 2.0);
            let neg_prev = tape.scale(prev, -1.0);
            tape.add(two_lx, neg_prev)?
        };
        prev = cur;
        cur = next;
        let term = tape.matmul(cur, w)?;
        out = tape.add(out, term)?;
    }
    let out = add_bias(tape, out, bias)?;
    Ok(act.apply(tape, out))
}

#[derive(Clone, Debug)]
pub struct ChebConv {
    pub cfg: LayerConfig,
    prefix: String,
}

impl ChebConv {
    pub fn new(prefix: impl Into<String>, cfg: LayerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prefix: prefix.into(),
        })
    }

    fn weight_name(&self, k: usize) -> String {
        format!("{}.weight{k}", self.prefix)
    }

    fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        for k in 0..self.cfg.cheb_order {
            params.insert(
                self.weight_name(k),
                glorot(self.cfg.in_dim, self.cfg.out_dim, rng),
            )?;
        }
        if self.cfg.bias {
            params.insert(self.bias_name(), Tensor::zeros(1, self.cfg.out_dim))?;
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, g: &Graph, x: Var) -> Result<Var> {
        let weights = (0..self.cfg.cheb_order)
            .map(|k| b.get(&self.weight_name(k)))
            .collect::<Result<Vec<_>>>()?;
        let bias = self
            .cfg
            .bias
            .then(|| b.get(&self.bias_name()))
            .transpose()?;
        cheb_forward(tape, g, x, &weights, bias, self.cfg.activation)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    fn run(g: &Graph, x: &Tensor, ws: &[Tensor]) -> Tensor {
        eval(|t| {
            let xv = t.constant(x.clone());
            let wv: Vec<Var> = ws.iter().map(|w| t.constant(w.clone())).collect();
            cheb_forward(t, g, xv, &wv, None, Activation::None)
        })
    }

    #[test]
    fn order_one_is_linear() {
        let mut r = rng(3);
        let x = random(4, 3, &mut r);
        let w = random(3, 2, &mut r);
        let g = path(4, x.clone());
        let out = run(&g, &x, std::slice::from_ref(&w));
        assert!(out.max_abs_diff(&x.matmul(&w).unwrap()) < 1e-15);
    }

    #[test]
    fn edgeless_order_two() {
        let mut r = rng(4);
        let x = random(3, 2, &mut r);
        let (w0, w1) = (random(2, 2, &mut r), random(2, 2, &mut r));
        let g = Graph::from_undirected(3, [], x.clone(), 0).unwrap();
        let out = run(&g, &x, &[w0.clone(), w1.clone()]);
        let xw0 = x.matmul(&w0).unwrap();
        let xw1 = x.matmul(&w1).unwrap();
        for i in 0..out.len() {
            assert!((out.data()[i] - (xw0.data()[i] - xw1.data()[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn two_node_matches_polynomial_oracle() {
        // L_sym = [[1,-1],[-1,1]], L = L_sym - I = [[0,-1],[-1,0]];
        // T2(L) = 2 L^2 - I = I since L^2 = I.
        let mut r = rng(5);
        let x = random(2, 2, &mut r);
        let ws: Vec<Tensor> = (0..3).map(|_| random(2, 3, &mut r)).collect();
        let g = Graph::from_undirected(2, [(0, 1)], x.clone(), 0).unwrap();
        let swap = Tensor::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]).unwrap();
        let t1 = swap.matmul(&x).unwrap();
        let t2 = x.clone();
        let mut expect = x.matmul(&ws[0]).unwrap();
        for (t, w) in [(&t1, &ws[1]), (&t2, &ws[2])] {
            let term = t.matmul(w).unwrap();
            expect.add_assign(&term);
        }
        let out = run(&g, &x, &ws);
        assert!(out.max_abs_diff(&expect) < 1e-14);
        let out2 = run(&g, &x, &ws[..2]);
        let mut expect2 = x.matmul(&ws[0]).unwrap();
        expect2.add_assign(&t1.matmul(&ws[1]).unwrap());
        assert!(out2.max_abs_diff(&expect2) < 1e-14);
    }
}
