use rand::RngCore;

use super::{add_bias, check_input, glorot, Activation, LayerConfig};
use crate::autodiff::{Bindings, ParameterSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// One attention head: a projection `W` (`in x out`) and an attention
/// vector `a` (`2*out x 1`) split as `[a_dst; a_src]`.
#[derive(Clone, Copy, Debug)]
pub struct GatHead {
    pub weight: Var,
    pub att: Var,
}

/// Attention neighborhoods with self-loops, grouped by target node.
/// Returns `(dst, src)` with `dst` nondecreasing.
fn attention_edges(g: &Graph) -> (Vec<usize>, Vec<usize>) {
    let nbrs = g.neighbors();
    let mut dst = Vec::with_capacity(g.edges().len() + g.num_nodes());
    let mut src = Vec::with_capacity(dst.capacity());
    for (i, list) in nbrs.iter().enumerate() {
        // self first, then neighbors in index order
        dst.push(i);
        src.push(i);
        for &j in list {
            dst.push(i);
            src.push(j);
        }
    }
    (dst, src)
}

struct HeadOutput {
    projected: Var,
    alpha: Var,
}

fn head_attention(
    tape: &mut Tape,
    x: Var,
    head: GatHead,
    slope: f64,
    dst: &[usize],
    src: &[usize],
) -> Result<HeadOutput> {
    let out_dim = tape.value(head.weight).cols();
    let att = tape.value(head.att);
    if att.shape() != [2 * out_dim, 1] {
        return Err(Error::Shape {
            op: "gat",
            detail: format!(
                "attention vector {}x{}, expected {}x1",
                att.rows(),
                att.cols(),
                2 * out_dim
            ),
        });
    }
    let projected = tape.matmul(x, head.weight)?;
    let dst_rows: Vec<usize> = (0..out_dim).collect();
    let src_rows: Vec<usize> = (out_dim..2 * out_dim).collect();
    let a_dst = tape.gather_rows(head.att, &dst_rows)?;
    let a_src = tape.gather_rows(head.att, &src_rows)?;
    let score_dst = tape.matmul(projected, a_dst)?;
    let score_src = tape.matmul(projected, a_src)?;
    let e_dst = tape.gather_rows(score_dst, dst)?;
    let e_src = tape.gather_rows(score_src, src)?;
    let logits = tape.add(e_dst, e_src)?;
    let logits = tape.leaky_relu(logits, slope);
    let alpha = tape.segment_softmax(logits, dst)?;
    Ok(HeadOutput { projected, alpha })
}

/// Attention coefficients of a single head, one per `(dst, src)` pair
/// including self-loops. Returned as `(alpha, dst, src)`.
pub fn gat_attention(
    tape: &mut Tape,
    g: &Graph,
    x: Var,
    head: GatHead,
    slope: f64,
) -> Result<(Var, Vec<usize>, Vec<usize>)> {
    check_input("gat", tape, g, x, tape.value(head.weight).rows())?;
    let (dst, src) = attention_edges(g);
    let h = head_attention(tape, x, head, slope, &dst, &src)?;
    Ok((h.alpha, dst, src))
}

/// `h_i' = act(mean_heads(sum_{j in N(i) + i} a_ij W h_j) + b)` with
/// `a_ij = softmax_j(leaky_relu(a^T [W h_i || W h_j]))`.
pub fn gat_forward(
    tape: &mut Tape,
    g: &Graph,
    x: Var,
    heads: &[GatHead],
    bias: Option<Var>,
    slope: f64,
    act: Activation,
) -> Result<Var> {
    let Some(first) = heads.first() else {
        return Err(Error::Config("gat_forward needs at least one head".into()));
    };
    check_input("gat", tape, g, x, tape.value(first.weight).rows())?;
    let (dst, src) = attention_edges(g);
    let mut acc: Option<Var> = None;
    for &head in heads {
        let h = head_attention(tape, x, head, slope, &dst, &src)?;
        let msgs = tape.gather_rows(h.projected, &src)?;
        let weighted = tape.mul(msgs, h.alpha)?;
        let agg = tape.segment_sum(weighted, &dst, g.num_nodes())?;
        acc = Some(match acc {
            Some(a) => tape.add(a, agg)?,
            None => agg,
        });
    }
    let mut out = acc.expect("at least one head");
    if heads.len() > 1 {
        out = tape.scale(out, 1.0 / heads.len() as f64);
    }
    let out = add_bias(tape, out, bias)?;
    Ok(act.apply(tape, out))
}

#[derive(Clone, Debug)]
pub struct GatConv {
    pub cfg: LayerConfig,
    prefix: String,
}

impl GatConv {
    pub fn new(prefix: impl Into<String>, cfg: LayerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            prefix: prefix.into(),
        })
    }

    fn head_names(&self, h: usize) -> (String, String) {
        (
            format!("{}.head{h}.weight", self.prefix),
            format!("{}.head{h}.att", self.prefix),
        )
    }

    fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut dyn RngCore) -> Result<()> {
        for h in 0..self.cfg.num_heads {
            let (w, a) = self.head_names(h);
            params.insert(w, glorot(self.cfg.in_dim, self.cfg.out_dim, rng))?;
            let att = glorot(1, 2 * self.cfg.out_dim, rng);
            params.insert(a, Tensor::column(att.into_data()))?;
        }
        if self.cfg.bias {
            params.insert(self.bias_name(), Tensor::zeros(1, self.cfg.out_dim))?;
        }
        Ok(())
    }

    pub fn heads(&self, b: &Bindings) -> Result<Vec<GatHead>> {
        (0..self.cfg.num_heads)
            .map(|h| {
                let (w, a) = self.head_names(h);
                Ok(GatHead {
                    weight: b.get(&w)?,
                    att: b.get(&a)?,
                })
            })
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, g: &Graph, x: Var) -> Result<Var> {
        let heads = self.heads(b)?;
        let bias = self
            .cfg
            .bias
            .then(|| b.get(&self.bias_name()))
            .transpose()?;
        gat_forward(
            tape,
            g,
            x,
            &heads,
            bias,
            self.cfg.leaky_slope,
            self.cfg.activation,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;

    fn run(g: &Graph, x: &Tensor, w: &Tensor, a: &Tensor, act: Activation) -> Tensor {
        eval(|t| {
            let xv = t.constant(x.clone());
            let head = GatHead {
                weight: t.constant(w.clone()),
                att: t.constant(a.clone()),
            };
            gat_forward(t, g, xv, &[head], None, 0.2, act)
        })
    }

    #[test]
    fn identical_features_attend_uniformly() {
        let mut r = rng(9);
        let row = random(1, 3, &mut r);
        let x = Tensor::from_rows(&[row.data(), row.data(), row.data(), row.data()]).unwrap();
        let w = random(3, 2, &mut r);
        let a = random(4, 1, &mut r);
        let g = path(4, x.clone());
        let out = run(&g, &x, &w, &a, Activation::Tanh);
        let wh = x.matmul(&w).unwrap();
        for i in 0..4 {
            for c in 0..2 {
                assert!((out.get(i, c) - wh.get(i, c).tanh()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let mut r = rng(10);
        let x = random(2, 3, &mut r);
        let w = random(3, 2, &mut r);
        let a = random(4, 1, &mut r);
        let g = Graph::from_undirected(2, [], x.clone(), 0).unwrap();
        let out = run(&g, &x, &w, &a, Activation::Relu);
        let wh = x.matmul(&w).unwrap();
        for i in 0..4 {
            assert!((out.data()[i] - wh.data()[i].max(0.0)).abs() < 1e-15);
        }
    }

    /// Explicit per-node softmax over `{i} + N(i)`.
    fn oracle(g: &Graph, x: &Tensor, w: &Tensor, a: &Tensor) -> Tensor {
        let wh = x.matmul(w).unwrap();
        let d = w.cols();
        let n = g.num_nodes();
        let nbrs = g.neighbors();
        let mut out = Tensor::zeros(n, d);
        for (i, nb) in nbrs.iter().enumerate() {
            let hood: Vec<usize> = std::iter::once(i).chain(nb.iter().copied()).collect();
            let logits: Vec<f64> = hood
                .iter()
                .map(|&j| {
                    let s: f64 = (0..d)
                        .map(|c| a.data()[c] * wh.get(i, c) + a.data()[d + c] * wh.get(j, c))
                        .sum();
                    if s > 0.0 {
                        s
                    } else {
                        0.2 * s
                    }
                })
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for (k, &j) in hood.iter().enumerate() {
                let coef = (logits[k] - m).exp() / z;
                for c in 0..d {
                    out.set(i, c, out.get(i, c) + coef * wh.get(j, c));
                }
            }
        }
        out
    }

    #[test]
    fn star_matches_softmax_oracle() {
        let mut r = rng(11);
        let x = random(4, 3, &mut r);
        let w = random(3, 3, &mut r);
        let a = random(6, 1, &mut r);
        let g = star(3, x.clone());
        let out = run(&g, &x, &w, &a, Activation::None);
        assert!(out.max_abs_diff(&oracle(&g, &x, &w, &a)) < 1e-14);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut r = rng(12);
        let g = random_graph(7, 0.4, 3, &mut r);
        let w = random(3, 2, &mut r);
        let a = random(4, 1, &mut r);
        let mut t = Tape::new();
        let x = t.constant(g.features().clone());
        let head = GatHead {
            weight: t.constant(w),
            att: t.constant(a),
        };
        let (alpha, dst, _) = gat_attention(&mut t, &g, x, head, 0.2).unwrap();
        let mut sums = vec![0.0; 7];
        for (e, &i) in dst.iter().enumerate() {
            sums[i] += t.value(alpha).data()[e];
        }
        for s in sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heads_are_averaged() {
        let mut r = rng(13);
        let x = random(3, 2, &mut r);
        let g = path(3, x.clone());
        let (w1, a1, w2, a2) = (
            random(2, 2, &mut r),
            random(4, 1, &mut r),
            random(2, 2, &mut r),
            random(4, 1, &mut r),
        );
        let both = eval(|t| {
            let xv = t.constant(x.clone());
            let heads = [
                GatHead {
                    weight: t.constant(w1.clone()),
                    att: t.constant(a1.clone()),
                },
                GatHead {
                    weight: t.constant(w2.clone()),
                    att: t.constant(a2.clone()),
                },
            ];
            gat_forward(t, &g, xv, &heads, None, 0.2, Activation::None)
        });
        let o1 = run(&g, &x, &w1, &a1, Activation::None);
        let o2 = run(&g, &x, &w2, &a2, Activation::None);
        for i in 0..both.len() {
            assert!((both.data()[i] - 0.5 * (o1.data()[i] + o2.data()[i])).abs() < 1e-15);
        }
    }
}
