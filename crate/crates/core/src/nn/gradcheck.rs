//! Finite-difference verification of analytic gradients.

use rand::Rng;

use super::graph::{Graph, GraphBuilder, Network};
use super::ops::{self, Padding};
use super::graph::LayerSpec;
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::seeded;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error `|a - n| / max(|a|, |n|, 1e-3)`; the floor keeps
/// near-zero gradients from amplifying rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCheck {
    /// Graph node index; `None` for the network input.
    pub node: Option<usize>,
    pub kind: &'static str,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.max_rel_err.is_finite() && l.max_rel_err < self.tolerance)
    }
}

fn projection(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = seeded(seed ^ 0x5eed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("length matches")
}

/// Checks `net` on the scalar objective `<net(input), r>` with a fixed random
/// projection `r`; `tamper` may alter the analytic gradients before comparison
/// (parameter gradients, input gradient).
pub fn grad_check_with(
    net: &Network<f64>,
    input: &Tensor<f64>,
    tolerance: f64,
    tamper: impl Fn(&mut [Tensor<f64>], &mut Tensor<f64>),
) -> Result<GradCheckReport> {
    let r = projection(net.graph().output_shape(), input.len() as u64);
    let objective = |n: &Network<f64>, x: &Tensor<f64>| -> Result<f64> { Ok(n.predict(x)?.dot(&r)) };

    let acts = net.forward(input)?;
    let mut grads = net.zero_grads();
    let mut dinput = net.backward(&acts, &r, &mut grads)?;
    tamper(&mut grads, &mut dinput);

    let mut layers = Vec::new();

    let mut x = input.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let up = objective(net, &x)?;
        x.data_mut()[i] = orig - FD_STEP;
        let down = objective(net, &x)?;
        x.data_mut()[i] = orig;
        worst = worst.max(relative_error(dinput.data()[i], (up - down) / (2.0 * FD_STEP)));
    }
    layers.push(LayerCheck {
        node: None,
        kind: "input",
        checked: x.len(),
        max_rel_err: worst,
    });

    let mut probe = net.clone();
    let mut k = 0;
    for (node_idx, node) in net.graph().nodes().iter().enumerate() {
        let n_params = node.layer.param_shapes().len();
        if n_params == 0 {
            continue;
        }
        let mut worst = 0.0f64;
        let mut checked = 0;
        for t in k..k + n_params {
            for i in 0..probe.params()[t].len() {
                let orig = probe.params()[t].data()[i];
                probe.params_mut()[t].data_mut()[i] = orig + FD_STEP;
                let up = objective(&probe, input)?;
                probe.params_mut()[t].data_mut()[i] = orig - FD_STEP;
                let down = objective(&probe, input)?;
                probe.params_mut()[t].data_mut()[i] = orig;
                worst = worst.max(relative_error(
                    grads[t].data()[i],
                    (up - down) / (2.0 * FD_STEP),
                ));
                checked += 1;
            }
        }
        layers.push(LayerCheck {
            node: Some(node_idx),
            kind: node.layer.kind_name(),
            checked,
            max_rel_err: worst,
        });
        k += n_params;
    }
    Ok(GradCheckReport { tolerance, layers })
}

pub fn grad_check(net: &Network<f64>, input: &Tensor<f64>, tolerance: f64) -> Result<GradCheckReport> {
    grad_check_with(net, input, tolerance, |_, _| {})
}

/// One small graph per layer kind, used by the standard suite.
pub fn layer_suite_graphs() -> Vec<(&'static str, Graph)> {
    let build = |f: &dyn Fn(&mut GraphBuilder, super::graph::NodeId) -> Result<super::graph::NodeId>,
                 shape: &[usize]| {
        let (mut b, x) = GraphBuilder::new(shape);
        let y = f(&mut b, x).expect("suite graph");
        b.finish(y).expect("suite graph")
    };
    vec![
        ("conv2d", build(&|b, x| b.conv(x, 3, 3), &[4, 4, 2])),
        (
            "conv2d_strided",
            build(
                &|b, x| {
                    b.add(
                        LayerSpec::Conv2D {
                            kernel: (2, 2),
                            stride: 2,
                            in_channels: 2,
                            out_channels: 3,
                            padding: Padding::Valid,
                        },
                        &[x],
                    )
                },
                &[4, 4, 2],
            ),
        ),
        ("maxpool2d", build(&|b, x| b.max_pool(x), &[4, 4, 2])),
        ("transpose_conv2d", build(&|b, x| b.up_conv(x, 2, 3), &[4, 4, 2])),
        ("fully_connected", build(&|b, x| b.dense(x, 5), &[16])),
        ("relu", build(&|b, x| b.relu(x), &[4, 4, 2])),
        (
            "concat_channels",
            build(
                &|b, x| {
                    let c = b.conv(x, 1, 3)?;
                    b.concat(&[c, x])
                },
                &[4, 4, 2],
            ),
        ),
        (
            "reshape",
            build(
                &|b, x| {
                    let f = b.reshape(x, &[32])?;
                    b.dense(f, 3)
                },
                &[4, 4, 2],
            ),
        ),
    ]
}

/// Runs every layer kind on random 4x4 inputs for `seeds` seeds.
pub fn layer_suite(seeds: u64, tolerance: f64) -> Result<Vec<(&'static str, u64, GradCheckReport)>> {
    let mut out = Vec::new();
    for (name, graph) in layer_suite_graphs() {
        for seed in 0..seeds {
            let mut rng = seeded(seed.wrapping_mul(31).wrapping_add(name.len() as u64));
            let net: Network<f64> = Network::init(graph.clone(), 0.5, &mut rng);
            // random biases so that bias gradients see non-trivial values
            let mut net = net;
            for p in net.params_mut() {
                if p.shape().len() == 1 {
                    for v in p.data_mut() {
                        *v = rng.random_range(-0.5..0.5);
                    }
                }
            }
            let n: usize = graph.input_shape().iter().product();
            let input = Tensor::from_vec(
                graph.input_shape(),
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )?;
            out.push((name, seed, grad_check(&net, &input, tolerance)?));
        }
    }
    Ok(out)
}

/// Relative gap `|<conv(x, w), y> - <x, tconv(y, w)>| / max(|.|, 1)` between a
/// valid convolution and the transposed convolution reading the same weight
/// array, on random shapes drawn from `seed`. Zero up to rounding when the
/// two are adjoint.
pub fn adjoint_gap(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let k = rng.random_range(1..=3usize);
    let stride = rng.random_range(1..=2usize);
    let (oh, ow) = (rng.random_range(1..=5usize), rng.random_range(1..=5usize));
    let (cin, cout) = (rng.random_range(1..=4usize), rng.random_range(1..=4usize));
    let (h, w) = ((oh - 1) * stride + k, (ow - 1) * stride + k);
    let mut rand_tensor = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let x: Tensor<f64> = rand_tensor(&[h, w, cin])?;
    let y = rand_tensor(&[oh, ow, cout])?;
    let wt = rand_tensor(&[k, k, cin, cout])?;
    let conv = ops::conv2d_forward(&x, &wt, &Tensor::zeros(&[cout]), stride, Padding::Valid)?;
    let tconv = ops::transpose_conv2d_forward(&y, &wt, &Tensor::zeros(&[cin]), stride)?;
    let (a, b) = (conv.dot(&y), x.dot(&tconv));
    Ok((a - b).abs() / a.abs().max(b.abs()).max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_and_transpose_conv_are_adjoint() {
        for seed in 0..50 {
            let gap = adjoint_gap(seed).unwrap();
            assert!(gap < 1e-12, "seed {seed}: {gap}");
        }
    }

    #[test]
    fn linear_graph_is_exact() {
        let (mut b, x) = GraphBuilder::new(&[6]);
        let y = b.dense(x, 4).unwrap();
        let net: Network<f64> = Network::init(b.finish(y).unwrap(), 0.5, &mut seeded(1));
        let input = Tensor::from_vec(&[6], vec![0.3, -0.1, 0.7, 0.2, -0.9, 0.5]).unwrap();
        let rep = grad_check(&net, &input, 1e-6).unwrap();
        assert!(rep.passed());
        assert!(rep.max_rel_err() < 1e-9, "{}", rep.max_rel_err());
    }

    #[test]
    fn corrupted_backward_is_reported() {
        let (mut b, x) = GraphBuilder::new(&[4, 4, 2]);
        let y = b.conv(x, 3, 2).unwrap();
        let net: Network<f64> = Network::init(b.finish(y).unwrap(), 0.5, &mut seeded(3));
        let input = Tensor::filled(&[4, 4, 2], 0.25);
        let rep = grad_check_with(&net, &input, 1e-6, |g, _| g[0].scale(1.01)).unwrap();
        assert!(!rep.passed());
        let conv = rep.layers.iter().find(|l| l.kind == "conv2d").unwrap();
        assert!(conv.max_rel_err > 1e-3);
    }

    #[test]
    fn every_layer_kind_passes_one_seed() {
        for (name, _, rep) in layer_suite(1, 1e-6).unwrap() {
            assert!(rep.passed(), "{name}: {:?}", rep.layers);
        }
    }
}
