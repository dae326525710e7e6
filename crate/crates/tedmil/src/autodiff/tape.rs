//! Record-replay tape for reverse-mode differentiation.
//!
//! Forward calls allocate nodes in an arena and append an op record per
//! executed operation. [`Tape::backward`] walks the records in reverse,
//! computing a fresh adjoint per node and then adding it into the node's
//! persistent gradient slot, so repeated backward calls accumulate
//! additively and accumulation order is fixed for a given graph.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::tensor::TemporalTensor;

/// Handle to a tensor node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

struct Node {
    times: usize,
    channels: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
}

enum Op {
    Conv {
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        out: NodeId,
        out_channels: usize,
        kernel_length: usize,
        in_channels: usize,
    },
    LeakyRelu {
        input: NodeId,
        out: NodeId,
        slope: f64,
    },
    ChannelNorm {
        input: NodeId,
        out: NodeId,
        epsilon: f64,
        /// Channel with the largest |value| per time step (lowest index on ties).
        peak: Vec<usize>,
    },
    MaxPool {
        input: NodeId,
        out: NodeId,
        /// Flat input index that won each output element (earlier step on ties).
        source: Vec<usize>,
    },
    Upsample {
        input: NodeId,
        out: NodeId,
    },
    Dense {
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
        out: NodeId,
    },
    Sigmoid {
        input: NodeId,
        out: NodeId,
    },
    Dropout {
        input: NodeId,
        out: NodeId,
        /// Per-element multiplier: 0 for dropped, 1/(1-rate) for kept.
        scale: Vec<f64>,
    },
    Add {
        a: NodeId,
        b: NodeId,
        out: NodeId,
    },
    Sum {
        input: NodeId,
        out: NodeId,
    },
}

fn stable_sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // Saturated inputs would otherwise round onto the interval endpoints;
    // scores must stay strictly inside (0, 1).
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_node(&mut self, times: usize, channels: usize, values: Vec<f64>) -> NodeId {
        debug_assert_eq!(values.len(), times * channels);
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node { times, channels, values, grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Register an input tensor as a leaf node.
    pub fn leaf(&mut self, tensor: &TemporalTensor) -> NodeId {
        self.push_node(tensor.times(), tensor.channels(), tensor.values().to_vec())
    }

    /// Register a flat parameter array as a leaf node (shape 1×len).
    pub fn param(&mut self, values: &[f64]) -> NodeId {
        self.push_node(1, values.len(), values.to_vec())
    }

    pub fn times(&self, id: NodeId) -> usize {
        self.nodes[id.0].times
    }

    pub fn channels(&self, id: NodeId) -> usize {
        self.nodes[id.0].channels
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// Snapshot of a node as a tensor carrying its accumulated gradient.
    pub fn snapshot(&self, id: NodeId) -> TemporalTensor {
        let n = &self.nodes[id.0];
        TemporalTensor::new(n.times, n.channels, n.values.clone())
            .expect("tape nodes are well-formed")
            .with_grad(n.grad.clone())
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// Causal 1-D convolution: left zero-padding of `kernel_length - 1`
    /// steps, so output time t reads input times t-kernel_length+1 ..= t
    /// and never anything later. Output keeps the input's time length.
    pub fn conv1d_causal(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        out_channels: usize,
        kernel_length: usize,
        in_channels: usize,
    ) -> Result<NodeId> {
        let t_len = self.times(input);
        if self.channels(input) != in_channels {
            return Err(Error::Shape(format!(
                "conv expects {in_channels} input channels, got {}",
                self.channels(input)
            )));
        }
        if self.values(kernels).len() != out_channels * kernel_length * in_channels {
            return Err(Error::Shape(format!(
                "conv kernel node has {} weights, expected {}",
                self.values(kernels).len(),
                out_channels * kernel_length * in_channels
            )));
        }
        if self.values(bias).len() != out_channels {
            return Err(Error::Shape(format!(
                "conv bias node has {} entries, expected {out_channels}",
                self.values(bias).len()
            )));
        }

        let mut out = vec![0.0; t_len * out_channels];
        {
            let x = self.values(input);
            let k = self.values(kernels);
            let b = self.values(bias);
            for t in 0..t_len {
                for f in 0..out_channels {
                    let mut acc = b[f];
                    for tap in 0..kernel_length {
                        let src = t as isize - (kernel_length as isize - 1) + tap as isize;
                        if src < 0 {
                            continue;
                        }
                        let src = src as usize;
                        let kbase = (f * kernel_length + tap) * in_channels;
                        let xbase = src * in_channels;
                        for c in 0..in_channels {
                            acc += k[kbase + c] * x[xbase + c];
                        }
                    }
                    out[t * out_channels + f] = acc;
                }
            }
        }
        let out = self.push_node(t_len, out_channels, out);
        self.ops.push(Op::Conv {
            input,
            kernels,
            bias,
            out,
            out_channels,
            kernel_length,
            in_channels,
        });
        Ok(out)
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> NodeId {
        debug_assert!(slope > 0.0 && slope < 1.0);
        let (t, c) = (self.times(input), self.channels(input));
        let out: Vec<f64> = self
            .values(input)
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let out = self.push_node(t, c, out);
        self.ops.push(Op::LeakyRelu { input, out, slope });
        out
    }

    /// Per time step, divide every channel by the largest channel
    /// magnitude plus epsilon. Ties on the max go to the lowest channel
    /// index; the max is differentiated through, not treated as constant.
    pub fn channel_norm(&mut self, input: NodeId, epsilon: f64) -> NodeId {
        debug_assert!(epsilon > 0.0);
        let (t_len, c_len) = (self.times(input), self.channels(input));
        let mut out = vec![0.0; t_len * c_len];
        let mut peak = vec![0usize; t_len];
        {
            let x = self.values(input);
            for t in 0..t_len {
                let row = &x[t * c_len..(t + 1) * c_len];
                let mut best = 0usize;
                for (c, v) in row.iter().enumerate() {
                    if v.abs() > row[best].abs() {
                        best = c;
                    }
                }
                peak[t] = best;
                let denom = row[best].abs() + epsilon;
                for c in 0..c_len {
                    out[t * c_len + c] = row[c] / denom;
                }
            }
        }
        let out = self.push_node(t_len, c_len, out);
        self.ops.push(Op::ChannelNorm { input, out, epsilon, peak });
        out
    }

    /// Non-overlapping max over time pairs (width 2, stride 2); ties go
    /// to the earlier step. Requires an even number of time steps.
    pub fn max_pool_time(&mut self, input: NodeId) -> Result<NodeId> {
        let (t_len, c_len) = (self.times(input), self.channels(input));
        if t_len % 2 != 0 {
            return Err(Error::Shape(format!(
                "max_pool_time needs an even time length, got {t_len}"
            )));
        }
        let out_t = t_len / 2;
        let mut out = vec![0.0; out_t * c_len];
        let mut source = vec![0usize; out_t * c_len];
        {
            let x = self.values(input);
            for s in 0..out_t {
                for c in 0..c_len {
                    let a = 2 * s * c_len + c;
                    let b = (2 * s + 1) * c_len + c;
                    let pick = if x[a] >= x[b] { a } else { b };
                    out[s * c_len + c] = x[pick];
                    source[s * c_len + c] = pick;
                }
            }
        }
        let out = self.push_node(out_t, c_len, out);
        self.ops.push(Op::MaxPool { input, out, source });
        Ok(out)
    }

    /// Nearest-neighbor doubling along time: out[2t] = out[2t+1] = in[t].
    pub fn upsample_time(&mut self, input: NodeId) -> NodeId {
        let (t_len, c_len) = (self.times(input), self.channels(input));
        let mut out = vec![0.0; 2 * t_len * c_len];
        {
            let x = self.values(input);
            for t in 0..t_len {
                let row = &x[t * c_len..(t + 1) * c_len];
                out[2 * t * c_len..(2 * t + 1) * c_len].copy_from_slice(row);
                out[(2 * t + 1) * c_len..(2 * t + 2) * c_len].copy_from_slice(row);
            }
        }
        let out = self.push_node(2 * t_len, c_len, out);
        self.ops.push(Op::Upsample { input, out });
        out
    }

    /// Same affine map at every time step: out[t] = ⟨weights, in[t,·]⟩ + bias.
    pub fn time_distributed_dense(
        &mut self,
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
    ) -> Result<NodeId> {
        let (t_len, c_len) = (self.times(input), self.channels(input));
        if self.values(weights).len() != c_len {
            return Err(Error::Shape(format!(
                "dense expects {c_len} weights, got {}",
                self.values(weights).len()
            )));
        }
        if self.values(bias).len() != 1 {
            return Err(Error::Shape("dense bias must be a single value".into()));
        }
        let mut out = vec![0.0; t_len];
        {
            let x = self.values(input);
            let w = self.values(weights);
            let b = self.values(bias)[0];
            for t in 0..t_len {
                let mut acc = b;
                for c in 0..c_len {
                    acc += w[c] * x[t * c_len + c];
                }
                out[t] = acc;
            }
        }
        let out = self.push_node(t_len, 1, out);
        self.ops.push(Op::Dense { input, weights, bias, out });
        Ok(out)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let (t, c) = (self.times(input), self.channels(input));
        let out: Vec<f64> = self.values(input).iter().map(|&x| stable_sigmoid(x)).collect();
        let out = self.push_node(t, c, out);
        self.ops.push(Op::Sigmoid { input, out });
        out
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1-rate); in
    /// inference mode (or at rate 0) the input node is returned as-is.
    pub fn dropout(
        &mut self,
        input: NodeId,
        rate: f64,
        rng: &mut ChaCha8Rng,
        training: bool,
    ) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if !training || rate == 0.0 {
            return input;
        }
        let (t, c) = (self.times(input), self.channels(input));
        let keep = 1.0 / (1.0 - rate);
        let scale: Vec<f64> = (0..t * c)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out: Vec<f64> =
            self.values(input).iter().zip(&scale).map(|(&x, &s)| x * s).collect();
        let out = self.push_node(t, c, out);
        self.ops.push(Op::Dropout { input, out, scale });
        out
    }

    /// Elementwise sum of two nodes of identical shape.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (t, c) = (self.times(a), self.channels(a));
        if (self.times(b), self.channels(b)) != (t, c) {
            return Err(Error::Shape("add expects identical shapes".into()));
        }
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let out = self.push_node(t, c, out);
        self.ops.push(Op::Add { a, b, out });
        Ok(out)
    }

    /// Sum of all elements, as a 1×1 node.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let total: f64 = self.values(input).iter().sum();
        let out = self.push_node(1, 1, vec![total]);
        self.ops.push(Op::Sum { input, out });
        out
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Backward from a scalar loss node (seed gradient 1).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.values(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss node, got {} elements",
                self.values(loss).len()
            )));
        }
        self.backward_seeded(loss, &[1.0])
    }

    /// Backward with an explicit output gradient, for graphs whose loss
    /// is computed off-tape (the ranking losses seed the score node).
    pub fn backward_seeded(&mut self, node: NodeId, seed: &[f64]) -> Result<()> {
        if seed.len() != self.values(node).len() {
            return Err(Error::Shape(format!(
                "seed gradient has {} elements, node has {}",
                seed.len(),
                self.values(node).len()
            )));
        }
        let mut adj: Vec<Vec<f64>> =
            self.nodes.iter().map(|n| vec![0.0; n.values.len()]).collect();
        adj[node.0].copy_from_slice(seed);

        for op in self.ops.iter().rev() {
            self.propagate(op, &mut adj);
        }
        for (n, a) in self.nodes.iter_mut().zip(&adj) {
            for (g, v) in n.grad.iter_mut().zip(a) {
                *g += v;
            }
        }
        Ok(())
    }

    fn propagate(&self, op: &Op, adj: &mut [Vec<f64>]) {
        match op {
            Op::Conv {
                input,
                kernels,
                bias,
                out,
                out_channels,
                kernel_length,
                in_channels,
            } => {
                let t_len = self.nodes[input.0].times;
                let x = &self.nodes[input.0].values;
                let k = &self.nodes[kernels.0].values;
                let g_out = adj[out.0].clone();
                for t in 0..t_len {
                    for f in 0..*out_channels {
                        let g = g_out[t * out_channels + f];
                        if g == 0.0 {
                            continue;
                        }
                        adj[bias.0][f] += g;
                        for tap in 0..*kernel_length {
                            let src = t as isize - (*kernel_length as isize - 1) + tap as isize;
                            if src < 0 {
                                continue;
                            }
                            let src = src as usize;
                            let kbase = (f * kernel_length + tap) * in_channels;
                            let xbase = src * in_channels;
                            for c in 0..*in_channels {
                                adj[kernels.0][kbase + c] += g * x[xbase + c];
                                adj[input.0][xbase + c] += g * k[kbase + c];
                            }
                        }
                    }
                }
            }
            Op::LeakyRelu { input, out, slope } => {
                let x = &self.nodes[input.0].values;
                let g_out = adj[out.0].clone();
                for (i, (&xi, &g)) in x.iter().zip(&g_out).enumerate() {
                    adj[input.0][i] += if xi >= 0.0 { g } else { slope * g };
                }
            }
            Op::ChannelNorm { input, out, epsilon, peak } => {
                let c_len = self.nodes[input.0].channels;
                let x = &self.nodes[input.0].values;
                let g_out = adj[out.0].clone();
                for (t, &star) in peak.iter().enumerate() {
                    let base = t * c_len;
                    let xstar = x[base + star];
                    let denom = xstar.abs() + epsilon;
                    let mut dot = 0.0;
                    for c in 0..c_len {
                        adj[input.0][base + c] += g_out[base + c] / denom;
                        dot += g_out[base + c] * x[base + c];
                    }
                    // d max/d x[peak] is the sign of the winning value.
                    let sign = if xstar > 0.0 {
                        1.0
                    } else if xstar < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    adj[input.0][base + star] -= sign * dot / (denom * denom);
                }
            }
            Op::MaxPool { input, out, source } => {
                let g_out = adj[out.0].clone();
                for (i, &src) in source.iter().enumerate() {
                    adj[input.0][src] += g_out[i];
                }
                debug_assert_eq!(g_out.len(), self.nodes[out.0].values.len());
            }
            Op::Upsample { input, out } => {
                let c_len = self.nodes[input.0].channels;
                let t_len = self.nodes[input.0].times;
                let g_out = adj[out.0].clone();
                for t in 0..t_len {
                    for c in 0..c_len {
                        adj[input.0][t * c_len + c] +=
                            g_out[2 * t * c_len + c] + g_out[(2 * t + 1) * c_len + c];
                    }
                }
            }
            Op::Dense { input, weights, bias, out } => {
                let c_len = self.nodes[input.0].channels;
                let t_len = self.nodes[input.0].times;
                let x = &self.nodes[input.0].values;
                let w = &self.nodes[weights.0].values;
                let g_out = adj[out.0].clone();
                for t in 0..t_len {
                    let g = g_out[t];
                    if g == 0.0 {
                        continue;
                    }
                    adj[bias.0][0] += g;
                    for c in 0..c_len {
                        adj[weights.0][c] += g * x[t * c_len + c];
                        adj[input.0][t * c_len + c] += g * w[c];
                    }
                }
            }
            Op::Sigmoid { input, out } => {
                let y = &self.nodes[out.0].values;
                let g_out = adj[out.0].clone();
                for (i, (&yi, &g)) in y.iter().zip(&g_out).enumerate() {
                    adj[input.0][i] += g * yi * (1.0 - yi);
                }
            }
            Op::Dropout { input, out, scale } => {
                let g_out = adj[out.0].clone();
                for (i, (&s, &g)) in scale.iter().zip(&g_out).enumerate() {
                    adj[input.0][i] += g * s;
                }
            }
            Op::Add { a, b, out } => {
                let g_out = adj[out.0].clone();
                for (i, &g) in g_out.iter().enumerate() {
                    adj[a.0][i] += g;
                    adj[b.0][i] += g;
                }
            }
            Op::Sum { input, out } => {
                let g = adj[out.0][0];
                for v in adj[input.0].iter_mut() {
                    *v += g;
                }
            }
        }
    }
}
