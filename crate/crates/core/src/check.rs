//! Finite-difference gradient checks over every layer kind, every pooling
//! variant and the full model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    gradient_check, gradient_check_params, GradCheckReport, ParameterSet, Tensor,
};
use crate::error::Result;
use crate::graph::Graph;
use crate::layers::{Activation, ChebConv, GatConv, GcnConv, Layer, LayerConfig, Mlp, SageConv};
use crate::model::{nll_loss, GsaPoolNet, Mode, ModelConfig};
use crate::pool::{FusionKind, GsaPool, PoolConfig, ScorerKernel};

/// Tolerance on the relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

fn random_graph(n: usize, p: f64, dim: usize, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                pairs.push((i, j));
            }
        }
    }
    let data = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Graph::from_undirected(n, pairs, Tensor::new(n, dim, data)?, 0)
}

fn layer(kind: &str, in_dim: usize, out_dim: usize) -> Result<Layer> {
    let mut cfg = LayerConfig::new(in_dim, out_dim, Activation::Tanh);
    Ok(match kind {
        "gcn" => Layer::Gcn(GcnConv::new(kind, cfg)?),
        "cheb" => Layer::Cheb(ChebConv::new(kind, cfg)?),
        "sage" => Layer::Sage(SageConv::new(kind, cfg)?),
        "gat" => {
            cfg.num_heads = 2;
            Layer::Gat(GatConv::new(kind, cfg)?)
        }
        _ => {
            cfg.hidden_dims = vec![in_dim];
            Layer::Mlp(Mlp::new(kind, cfg)?)
        }
    })
}

/// Runs every check and returns `(name, report)` pairs. The first entry
/// is the full model (hidden width 4, 5-node graph, NLL loss).
pub fn gradient_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let g = random_graph(5, 0.5, 3, &mut rng)?.with_label(1);
    let net = GsaPoolNet::new(ModelConfig::with_hidden(4), 3, 2)?;
    let params = net.init_params(rng.gen())?;
    let rep = gradient_check_params(
        &params,
        |t, b| {
            let o = net.forward(t, b, &g, &mut Mode::Eval)?;
            nll_loss(t, o.log_probs, g.label())
        },
        GRADCHECK_TOL,
    )?;
    out.push(("model".to_string(), rep));

    let g = random_graph(6, 0.5, 3, &mut rng)?;
    for kind in ["gcn", "cheb", "sage", "gat", "mlp"] {
        let l = layer(kind, 3, 2)?;
        let mut params = ParameterSet::new();
        l.init(&mut params, &mut rng)?;
        let rep = gradient_check_params(
            &params,
            |t, b| {
                let x = t.constant(g.features().clone());
                let h = l.forward(t, b, &g, x)?;
                let h = t.tanh(h);
                Ok(t.sum_all(h))
            },
            GRADCHECK_TOL,
        )?;
        out.push((format!("{kind} weights"), rep));
        let rep = gradient_check(
            |t, x| {
                let b = params.bind(t);
                let h = l.forward(t, &b, &g, x)?;
                let h = t.tanh(h);
                Ok(t.sum_all(h))
            },
            g.features(),
            GRADCHECK_TOL,
        )?;
        out.push((format!("{kind} input"), rep));
    }

    for sbtl in [
        ScorerKernel::Gcn,
        ScorerKernel::Cheb,
        ScorerKernel::Sage,
        ScorerKernel::Gat,
    ] {
        for fusion in [FusionKind::None, FusionKind::Gcn, FusionKind::Gat] {
            let cfg = PoolConfig {
                sbtl,
                fusion,
                ..PoolConfig::default()
            };
            let pool = GsaPool::new("pool", 3, cfg)?;
            let mut params = ParameterSet::new();
            pool.init(&mut params, &mut rng)?;
            let rep = gradient_check_params(
                &params,
                |t, b| {
                    let x = t.constant(g.features().clone());
                    let o = pool.forward(t, b, &g, x)?;
                    Ok(t.sum_all(o.features))
                },
                GRADCHECK_TOL,
            )?;
            out.push((format!("gsapool {sbtl}+mlp fusion={fusion}"), rep));
        }
    }
    Ok(out)
}
