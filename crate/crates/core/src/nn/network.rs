use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Formulation, NetworkConfig, Target};
use super::layers::{self, LstmTrace};
use super::loss;
use crate::dsp::FeatureTensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Which statistics batch normalization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Running averages; inference.
    Running,
    /// Statistics of the current mini-batch; training.
    Batch,
}

/// A named contiguous range of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
struct ConvLayout {
    cin: usize,
    cout: usize,
    bins: usize,
    pool: usize,
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct LstmDirLayout {
    w_ih: usize,
    w_hh: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct LstmLayout {
    input: usize,
    dirs: [LstmDirLayout; 2],
}

#[derive(Debug, Clone, Copy)]
struct DenseLayout {
    input: usize,
    output: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<ConvLayout>,
    lstm: Vec<LstmLayout>,
    fc: [DenseLayout; 2],
    blocks: Vec<Block>,
    total: usize,
}

impl Layout {
    fn new(cfg: &NetworkConfig, out_dim: usize) -> Layout {
        let mut cursor = 0;
        let mut blocks = Vec::new();
        let mut take = |name: String, len: usize, blocks: &mut Vec<Block>| {
            let offset = cursor;
            cursor += len;
            blocks.push(Block { name, offset, len });
            offset
        };
        let k = cfg.kernel;
        let mut conv = Vec::new();
        let mut cin = cfg.input_rows();
        let mut bins = cfg.freq_bins;
        for (s, (&cout, &pool)) in cfg.conv_channels.iter().zip(&cfg.pool).enumerate() {
            let w = take(format!("conv{}.weight", s + 1), cout * cin * k * k, &mut blocks);
            let b = take(format!("conv{}.bias", s + 1), cout, &mut blocks);
            let gamma = take(format!("bn{}.gamma", s + 1), cout, &mut blocks);
            let beta = take(format!("bn{}.beta", s + 1), cout, &mut blocks);
            conv.push(ConvLayout {
                cin,
                cout,
                bins,
                pool,
                w,
                b,
                gamma,
                beta,
            });
            cin = cout;
            bins /= pool;
        }
        let h = cfg.hidden;
        let mut lstm = Vec::new();
        let mut input = cfg.frame_width();
        for l in 0..cfg.recurrent_layers {
            let dirs = ["fwd", "bwd"].map(|d| LstmDirLayout {
                w_ih: take(format!("lstm{}.{d}.w_ih", l + 1), 4 * h * input, &mut blocks),
                w_hh: take(format!("lstm{}.{d}.w_hh", l + 1), 4 * h * h, &mut blocks),
                b: take(format!("lstm{}.{d}.bias", l + 1), 4 * h, &mut blocks),
            });
            lstm.push(LstmLayout { input, dirs });
            input = 2 * h;
        }
        let mut dense = |name: &str, input: usize, output: usize, blocks: &mut Vec<Block>| DenseLayout {
            input,
            output,
            w: take(format!("{name}.weight"), input * output, blocks),
            b: take(format!("{name}.bias"), output, blocks),
        };
        let fc1 = dense("fc1", 2 * h, cfg.fc_width, &mut blocks);
        let fc2 = dense("fc2", cfg.fc_width, out_dim, &mut blocks);
        Layout {
            conv,
            lstm,
            fc: [fc1, fc2],
            blocks,
            total: cursor,
        }
    }
}

/// Per-frame network outputs, frames × dim, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutputs {
    pub frames: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FrameOutputs {
    pub fn new(frames: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * dim || frames == 0 {
            return Err(Error::Shape {
                expected: format!("{frames} x {dim}"),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(FrameOutputs { frames, dim, values })
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.dim..(frame + 1) * self.dim]
    }
}

/// Loss and parameter gradient of one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// per conv stage (mean, variance) when computed in [`NormMode::Batch`]
    pub batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Default)]
struct SampleTrace {
    conv_in: Vec<Vec<f64>>,
    relu: Vec<Vec<f64>>,
    xhat: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    lstm_in: Vec<Vec<f64>>,
    lstm: Vec<[LstmTrace; 2]>,
    fc_in: [Vec<f64>; 2],
    raw: Vec<f64>,
}

struct BatchTrace {
    samples: Vec<SampleTrace>,
    inv_std: Vec<Vec<f64>>,
    stats: Vec<(Vec<f64>, Vec<f64>)>,
    mode: NormMode,
}

/// Convolutional-recurrent estimator with a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    formulation: Formulation,
    layout: Layout,
    params: Vec<f64>,
    /// per conv stage: running mean (cout) then running variance (cout)
    running: Vec<f64>,
}

impl Network {
    pub fn new(config: NetworkConfig, formulation: Formulation, seed: u64) -> Result<Network> {
        config.validate()?;
        let layout = Layout::new(&config, formulation.output_dim());
        let mut params = vec![0.0; layout.total];
        let k = config.kernel;
        for (s, c) in layout.conv.iter().enumerate() {
            let bound = (6.0 / (c.cin * k * k) as f64).sqrt();
            fill_uniform(&mut params[c.w..c.w + c.cout * c.cin * k * k], bound, seed, s as u64);
            params[c.gamma..c.gamma + c.cout].iter_mut().for_each(|v| *v = 1.0);
        }
        let h = config.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        for (l, layer) in layout.lstm.iter().enumerate() {
            for (d, dir) in layer.dirs.iter().enumerate() {
                let stream = 100 + 2 * l as u64 + d as u64;
                let len = 4 * h * (layer.input + h);
                let mut buf = vec![0.0; len];
                fill_uniform(&mut buf, bound, seed, stream);
                params[dir.w_ih..dir.w_ih + 4 * h * layer.input].copy_from_slice(&buf[..4 * h * layer.input]);
                params[dir.w_hh..dir.w_hh + 4 * h * h].copy_from_slice(&buf[4 * h * layer.input..]);
                params[dir.b + h..dir.b + 2 * h].iter_mut().for_each(|v| *v = 1.0);
            }
        }
        for (i, fc) in layout.fc.iter().enumerate() {
            let bound = 1.0 / (fc.input as f64).sqrt();
            fill_uniform(&mut params[fc.w..fc.w + fc.input * fc.output], bound, seed, 200 + i as u64);
        }
        let running = config
            .conv_channels
            .iter()
            .flat_map(|c| std::iter::repeat(0.0).take(*c).chain(std::iter::repeat(1.0).take(*c)))
            .collect();
        Ok(Network {
            config,
            formulation,
            layout,
            params,
            running,
        })
    }

    pub(crate) fn from_parts(
        config: NetworkConfig,
        formulation: Formulation,
        params: Vec<f64>,
        running: Vec<f64>,
    ) -> Result<Network> {
        let mut net = Network::new(config, formulation, 0)?;
        if params.len() != net.params.len() || running.len() != net.running.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters and {} running statistics", net.params.len(), net.running.len()),
                actual: format!("{} and {}", params.len(), running.len()),
            });
        }
        net.params = params;
        net.running = running;
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn formulation(&self) -> &Formulation {
        &self.formulation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[f64] {
        &self.running
    }

    pub fn blocks(&self) -> &[Block] {
        &self.layout.blocks
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Parameters of everything below the output layer.
    pub fn trunk_params(&self) -> &[f64] {
        &self.params[..self.layout.fc[1].w]
    }

    /// Sets the output layer to zero.
    pub fn zero_output_layer(&mut self) {
        let fc = self.layout.fc[1];
        self.params[fc.w..fc.b + fc.output].iter_mut().for_each(|v| *v = 0.0);
    }

    /// Name of the block holding parameter `index`.
    pub fn block_of(&self, index: usize) -> &str {
        self.layout
            .blocks
            .iter()
            .find(|b| index >= b.offset && index < b.offset + b.len)
            .map(|b| b.name.as_str())
            .unwrap_or("?")
    }

    fn check_input(&self, x: &FeatureTensor) -> Result<()> {
        if x.frames() != self.config.frames || x.bins() != self.config.freq_bins {
            return Err(Error::Shape {
                expected: format!("6 x {} x {}", self.config.frames, self.config.freq_bins),
                actual: format!("6 x {} x {}", x.frames(), x.bins()),
            });
        }
        Ok(())
    }

    fn check_target(&self, target: &Target) -> Result<()> {
        let ok = match (&self.formulation, target) {
            (Formulation::Categorical { grid }, Target::Class(c)) => *c < grid.len(),
            (Formulation::Cartesian, Target::Vector(_)) => true,
            (Formulation::Spherical, Target::Angles(..)) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "target {target:?} does not fit the {} formulation",
                self.formulation.name()
            )))
        }
    }

    /// Inference-mode outputs after the head activation.
    pub fn forward(&self, x: &FeatureTensor) -> Result<FrameOutputs> {
        self.check_input(x)?;
        let trace = self.forward_batch(&[x], NormMode::Running);
        let raw = trace.samples.into_iter().next().unwrap().raw;
        let values = match self.formulation {
            Formulation::Categorical { .. } => raw.iter().map(|z| layers::sigmoid(*z)).collect(),
            _ => raw,
        };
        FrameOutputs::new(self.config.frames, self.formulation.output_dim(), values)
    }

    /// (channels, frames, bins) actually produced by each conv stage on `x`.
    pub fn stage_output_shapes(&self, x: &FeatureTensor) -> Result<Vec<[usize; 3]>> {
        self.check_input(x)?;
        let trace = self.forward_batch(&[x], NormMode::Running);
        let s = &trace.samples[0];
        let t = self.config.frames;
        let mut shapes = Vec::new();
        for (i, c) in self.layout.conv.iter().enumerate() {
            let len = match s.conv_in.get(i + 1) {
                Some(next) => next.len(),
                None => s.lstm_in[0].len(),
            };
            shapes.push([c.cout, t, len / (c.cout * t)]);
        }
        Ok(shapes)
    }

    /// Mean loss over a batch without gradients.
    pub fn batch_loss(&self, batch: &[(&FeatureTensor, Target)], mode: NormMode) -> Result<f64> {
        self.check_batch(batch)?;
        let xs: Vec<&FeatureTensor> = batch.iter().map(|b| b.0).collect();
        let trace = self.forward_batch(&xs, mode);
        let dim = self.formulation.output_dim();
        let total: f64 = trace
            .samples
            .iter()
            .zip(batch)
            .map(|(s, (_, t))| loss::loss_and_grad(&s.raw, dim, t).0)
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Summands of [`Network::batch_loss`], for cancellation-free differencing.
    pub(crate) fn batch_loss_terms(&self, batch: &[(&FeatureTensor, Target)], mode: NormMode) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let xs: Vec<&FeatureTensor> = batch.iter().map(|b| b.0).collect();
        let trace = self.forward_batch(&xs, mode);
        let dim = self.formulation.output_dim();
        let scale = 1.0 / batch.len() as f64;
        Ok(trace
            .samples
            .iter()
            .zip(batch)
            .flat_map(|(s, (_, t))| loss::loss_terms(&s.raw, dim, t))
            .map(|v| v * scale)
            .collect())
    }

    fn check_batch(&self, batch: &[(&FeatureTensor, Target)]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        for (x, t) in batch {
            self.check_input(x)?;
            self.check_target(t)?;
        }
        Ok(())
    }

    /// Mean loss over the batch and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[(&FeatureTensor, Target)], mode: NormMode) -> Result<BatchGradient> {
        self.check_batch(batch)?;
        let xs: Vec<&FeatureTensor> = batch.iter().map(|b| b.0).collect();
        let trace = self.forward_batch(&xs, mode);
        let dim = self.formulation.output_dim();
        let scale = 1.0 / batch.len() as f64;
        let mut loss_sum = 0.0;
        let mut d_raw = Vec::with_capacity(batch.len());
        for (s, (_, t)) in trace.samples.iter().zip(batch) {
            let (l, mut g) = loss::loss_and_grad(&s.raw, dim, t);
            loss_sum += l;
            g.iter_mut().for_each(|v| *v *= scale);
            d_raw.push(g);
        }
        let grad = self.backward_batch(&trace, d_raw);
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(self.block_of(i).to_string()));
        }
        Ok(BatchGradient {
            loss: loss_sum * scale,
            grad,
            batch_stats: trace.stats,
        })
    }

    /// Gradient of the loss of a single example.
    pub fn backward(&self, x: &FeatureTensor, target: Target, mode: NormMode) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(&[(x, target)], mode)?.grad)
    }

    /// Folds mini-batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) {
        let mut off = 0;
        for (mean, var) in stats {
            let c = mean.len();
            for i in 0..c {
                self.running[off + i] = BN_MOMENTUM * self.running[off + i] + (1.0 - BN_MOMENTUM) * mean[i];
                self.running[off + c + i] = BN_MOMENTUM * self.running[off + c + i] + (1.0 - BN_MOMENTUM) * var[i];
            }
            off += 2 * c;
        }
    }

    fn forward_batch(&self, xs: &[&FeatureTensor], mode: NormMode) -> BatchTrace {
        let p = &self.params;
        let cfg = &self.config;
        let (t_len, k) = (cfg.frames, cfg.kernel);
        let mut samples: Vec<SampleTrace> = xs
            .iter()
            .map(|x| SampleTrace {
                conv_in: vec![x.values().to_vec()],
                ..Default::default()
            })
            .collect();
        let mut inv_stds = Vec::new();
        let mut stats = Vec::new();
        let mut running_off = 0;
        for c in &self.layout.conv {
            let n_per = (t_len * c.bins) as f64;
            let plane = t_len * c.bins;
            // convolution and rectifier, plus per-channel sums for batch statistics
            let partial: Vec<Vec<f64>> = samples
                .par_iter_mut()
                .map(|s| {
                    let input = s.conv_in.last().unwrap();
                    let mut z = layers::conv_forward(
                        input,
                        c.cin,
                        t_len,
                        c.bins,
                        &p[c.w..c.w + c.cout * c.cin * k * k],
                        &p[c.b..c.b + c.cout],
                        c.cout,
                        k,
                    );
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                    let sums: Vec<f64> = z
                        .chunks_exact(plane)
                        .flat_map(|ch| [ch.iter().sum::<f64>(), ch.iter().map(|v| v * v).sum::<f64>()])
                        .collect();
                    s.relu.push(z);
                    sums
                })
                .collect();
            let (mean, var) = match mode {
                NormMode::Batch => {
                    let n = n_per * xs.len() as f64;
                    let mut mean = vec![0.0; c.cout];
                    for part in &partial {
                        for ch in 0..c.cout {
                            mean[ch] += part[2 * ch];
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= n);
                    // second pass for a numerically stable variance
                    let dev: Vec<Vec<f64>> = samples
                        .par_iter()
                        .map(|s| {
                            s.relu
                                .last()
                                .unwrap()
                                .chunks_exact(plane)
                                .zip(&mean)
                                .map(|(ch, m)| ch.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
                                .collect()
                        })
                        .collect();
                    let mut var = vec![0.0; c.cout];
                    for d in &dev {
                        for ch in 0..c.cout {
                            var[ch] += d[ch];
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n);
                    (mean, var)
                }
                NormMode::Running => (
                    self.running[running_off..running_off + c.cout].to_vec(),
                    self.running[running_off + c.cout..running_off + 2 * c.cout].to_vec(),
                ),
            };
            running_off += 2 * c.cout;
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            samples.par_iter_mut().for_each(|s| {
                let a = s.relu.last().unwrap();
                let mut xhat = Vec::with_capacity(a.len());
                let mut y = Vec::with_capacity(a.len());
                for (ch, chunk) in a.chunks_exact(plane).enumerate() {
                    let (g, b) = (p[c.gamma + ch], p[c.beta + ch]);
                    for v in chunk {
                        let xh = (v - mean[ch]) * inv_std[ch];
                        xhat.push(xh);
                        y.push(g * xh + b);
                    }
                }
                let (pooled, arg) = layers::pool_forward(&y, c.cout, t_len, c.bins, c.pool);
                s.xhat.push(xhat);
                s.argmax.push(arg);
                s.conv_in.push(pooled);
            });
            inv_stds.push(inv_std);
            stats.push((mean, var));
        }
        let h = cfg.hidden;
        let last = self.layout.conv.last().unwrap();
        let out_bins = last.bins / last.pool;
        samples.par_iter_mut().for_each(|s| {
            let pooled = s.conv_in.pop().unwrap();
            let width = last.cout * out_bins;
            let mut seq = vec![0.0; t_len * width];
            for ch in 0..last.cout {
                for t in 0..t_len {
                    let src = &pooled[(ch * t_len + t) * out_bins..(ch * t_len + t + 1) * out_bins];
                    seq[t * width + ch * out_bins..t * width + (ch + 1) * out_bins].copy_from_slice(src);
                }
            }
            for layer in &self.layout.lstm {
                let traces = [0, 1].map(|d| {
                    let dir = layer.dirs[d];
                    layers::lstm_forward(
                        &seq,
                        t_len,
                        layer.input,
                        h,
                        &p[dir.w_ih..dir.w_ih + 4 * h * layer.input],
                        &p[dir.w_hh..dir.w_hh + 4 * h * h],
                        &p[dir.b..dir.b + 4 * h],
                        d == 1,
                    )
                });
                let mut next = vec![0.0; t_len * 2 * h];
                for t in 0..t_len {
                    next[t * 2 * h..t * 2 * h + h].copy_from_slice(&traces[0].hidden[t * h..(t + 1) * h]);
                    next[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&traces[1].hidden[t * h..(t + 1) * h]);
                }
                s.lstm_in.push(std::mem::replace(&mut seq, next));
                s.lstm.push(traces);
            }
            for (i, fc) in self.layout.fc.iter().enumerate() {
                let out = layers::dense_forward(
                    &seq,
                    t_len,
                    fc.input,
                    fc.output,
                    &p[fc.w..fc.w + fc.input * fc.output],
                    &p[fc.b..fc.b + fc.output],
                );
                s.fc_in[i] = std::mem::replace(&mut seq, out);
            }
            s.raw = seq;
        });
        BatchTrace {
            samples,
            inv_std: inv_stds,
            stats: if mode == NormMode::Batch { stats } else { Vec::new() },
            mode,
        }
    }

    fn backward_batch(&self, trace: &BatchTrace, d_raw: Vec<Vec<f64>>) -> Vec<f64> {
        let p = &self.params;
        let cfg = &self.config;
        let (t_len, k, h) = (cfg.frames, cfg.kernel, cfg.hidden);
        let total = self.layout.total;
        let last = self.layout.conv.last().unwrap();
        let out_bins = last.bins / last.pool;
        let mut grads: Vec<Vec<f64>> = vec![vec![0.0; total]; trace.samples.len()];
        // head, recurrent layers and the flatten, per sample
        let mut d_pooled: Vec<Vec<f64>> = trace
            .samples
            .par_iter()
            .zip(grads.par_iter_mut())
            .zip(d_raw.into_par_iter())
            .map(|((s, g), d_out)| {
                let mut d = d_out;
                for (i, fc) in self.layout.fc.iter().enumerate().rev() {
                    let (dw, db) = split_pair(g, fc.w, fc.input * fc.output, fc.b, fc.output);
                    d = layers::dense_backward(
                        &s.fc_in[i],
                        &d,
                        t_len,
                        fc.input,
                        fc.output,
                        &p[fc.w..fc.w + fc.input * fc.output],
                        dw,
                        db,
                    );
                }
                for (l, layer) in self.layout.lstm.iter().enumerate().rev() {
                    let mut dx = vec![0.0; t_len * layer.input];
                    for dir_i in 0..2 {
                        let dir = layer.dirs[dir_i];
                        let dh: Vec<f64> = (0..t_len)
                            .flat_map(|t| d[t * 2 * h + dir_i * h..t * 2 * h + (dir_i + 1) * h].to_vec())
                            .collect();
                        let (dw_ih, rest) = g[dir.w_ih..].split_at_mut(4 * h * layer.input);
                        let (dw_hh, rest) = rest.split_at_mut(4 * h * h);
                        let db = &mut rest[..4 * h];
                        layers::lstm_backward(
                            &s.lstm[l][dir_i],
                            &s.lstm_in[l],
                            &dh,
                            t_len,
                            layer.input,
                            h,
                            &p[dir.w_ih..dir.w_ih + 4 * h * layer.input],
                            &p[dir.w_hh..dir.w_hh + 4 * h * h],
                            dir_i == 1,
                            dw_ih,
                            dw_hh,
                            db,
                            &mut dx,
                        );
                    }
                    d = dx;
                }
                let width = last.cout * out_bins;
                let mut dp = vec![0.0; last.cout * t_len * out_bins];
                for ch in 0..last.cout {
                    for t in 0..t_len {
                        dp[(ch * t_len + t) * out_bins..(ch * t_len + t + 1) * out_bins]
                            .copy_from_slice(&d[t * width + ch * out_bins..t * width + (ch + 1) * out_bins]);
                    }
                }
                dp
            })
            .collect();

        for (si, c) in self.layout.conv.iter().enumerate().rev() {
            let plane = t_len * c.bins;
            let inv_std = &trace.inv_std[si];
            let len = c.cout * plane;
            // through pooling to the normalized output; collect per-channel sums
            let dys: Vec<(Vec<f64>, Vec<f64>)> = trace
                .samples
                .par_iter()
                .zip(d_pooled.par_iter())
                .map(|(s, dp)| {
                    let dy = layers::pool_backward(dp, &s.argmax[si], len);
                    let xhat = &s.xhat[si];
                    let sums = dy
                        .chunks_exact(plane)
                        .zip(xhat.chunks_exact(plane))
                        .flat_map(|(d, x)| [d.iter().sum::<f64>(), d.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()])
                        .collect();
                    (dy, sums)
                })
                .collect();
            let mut sum_dy = vec![0.0; c.cout];
            let mut sum_dy_xhat = vec![0.0; c.cout];
            for (_, sums) in &dys {
                for ch in 0..c.cout {
                    sum_dy[ch] += sums[2 * ch];
                    sum_dy_xhat[ch] += sums[2 * ch + 1];
                }
            }
            let n = (plane * trace.samples.len()) as f64;
            let mode = trace.mode;
            d_pooled = trace
                .samples
                .par_iter()
                .zip(grads.par_iter_mut())
                .zip(dys.into_par_iter())
                .map(|((s, g), (dy, _))| {
                    let xhat = &s.xhat[si];
                    let a = &s.relu[si];
                    let mut dz = vec![0.0; len];
                    for ch in 0..c.cout {
                        let gamma = p[c.gamma + ch];
                        let range = ch * plane..(ch + 1) * plane;
                        let mut dgamma = 0.0;
                        let mut dbeta = 0.0;
                        for i in range {
                            dgamma += dy[i] * xhat[i];
                            dbeta += dy[i];
                            if a[i] <= 0.0 {
                                continue;
                            }
                            dz[i] = match mode {
                                NormMode::Running => dy[i] * gamma * inv_std[ch],
                                NormMode::Batch => {
                                    gamma * inv_std[ch] / n
                                        * (n * dy[i] - sum_dy[ch] - xhat[i] * sum_dy_xhat[ch])
                                }
                            };
                        }
                        g[c.gamma + ch] += dgamma;
                        g[c.beta + ch] += dbeta;
                    }
                    let mut dx = if si > 0 { Some(vec![0.0; c.cin * plane]) } else { None };
                    let (dw, db) = split_pair(g, c.w, c.cout * c.cin * k * k, c.b, c.cout);
                    layers::conv_backward(
                        &s.conv_in[si],
                        &dz,
                        c.cin,
                        t_len,
                        c.bins,
                        &p[c.w..c.w + c.cout * c.cin * k * k],
                        c.cout,
                        k,
                        dw,
                        db,
                        dx.as_deref_mut(),
                    );
                    dx.unwrap_or_default()
                })
                .collect();
        }
        let mut total_grad = vec![0.0; total];
        for g in &grads {
            for (t, v) in total_grad.iter_mut().zip(g) {
                *t += v;
            }
        }
        total_grad
    }
}

/// Two disjoint mutable windows `[a, a+la)` and `[b, b+lb)` with `a + la <= b`.
fn split_pair(g: &mut [f64], a: usize, la: usize, b: usize, lb: usize) -> (&mut [f64], &mut [f64]) {
    let (left, right) = g.split_at_mut(b);
    (&mut left[a..a + la], &mut right[..lb])
}

fn fill_uniform(dst: &mut [f64], bound: f64, seed: u64, stream: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for v in dst {
        *v = rng.gen_range(-bound..bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::Direction;

    fn random_input(cfg: &NetworkConfig, seed: u64) -> FeatureTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6 * cfg.frames * cfg.freq_bins;
        FeatureTensor::new(cfg.frames, cfg.freq_bins, (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect()).unwrap()
    }

    #[test]
    fn output_shapes_per_formulation() {
        let cfg = NetworkConfig::tiny();
        let x = random_input(&cfg, 1);
        for (f, dim) in [
            (Formulation::Cartesian, 3),
            (Formulation::Spherical, 2),
            (Formulation::categorical(45.0).unwrap(), Formulation::categorical(45.0).unwrap().output_dim()),
        ] {
            let out = Network::new(cfg.clone(), f, 3).unwrap().forward(&x).unwrap();
            assert_eq!((out.frames, out.dim, out.values.len()), (3, dim, 3 * dim));
        }
    }

    #[test]
    fn zero_head_gives_half_scores() {
        let cfg = NetworkConfig::tiny();
        let mut net = Network::new(cfg.clone(), Formulation::categorical(60.0).unwrap(), 1).unwrap();
        net.zero_output_layer();
        let out = net.forward(&FeatureTensor::zeros(cfg.frames, cfg.freq_bins)).unwrap();
        assert!(out.values.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let net = Network::new(NetworkConfig::tiny(), Formulation::Cartesian, 0).unwrap();
        assert!(matches!(net.forward(&FeatureTensor::zeros(4, 16)), Err(Error::Shape { .. })));
        let x = FeatureTensor::zeros(3, 16);
        assert!(net.backward(&x, Target::Class(0), NormMode::Batch).is_err());
    }

    #[test]
    fn trunks_are_identical_across_heads() {
        let cfg = NetworkConfig::tiny();
        let a = Network::new(cfg.clone(), Formulation::Cartesian, 42).unwrap();
        let b = Network::new(cfg.clone(), Formulation::Spherical, 42).unwrap();
        let c = Network::new(cfg, Formulation::categorical(30.0).unwrap(), 42).unwrap();
        assert_eq!(a.trunk_params(), b.trunk_params());
        assert_eq!(a.trunk_params(), c.trunk_params());
        assert!(a.param_count() < c.param_count());
    }

    #[test]
    fn full_preset_counts() {
        let cfg = NetworkConfig::full();
        let cart = Network::new(cfg.clone(), Formulation::Cartesian, 0).unwrap();
        let cat = Network::new(cfg, Formulation::categorical(10.0).unwrap(), 0).unwrap();
        let fc2 = cart.blocks().iter().filter(|b| b.name.starts_with("fc2")).map(|b| b.len).sum::<usize>();
        assert_eq!(fc2, 429 * 3 + 3);
        let fc1 = cart.blocks().iter().filter(|b| b.name.starts_with("fc1")).map(|b| b.len).sum::<usize>();
        assert_eq!(fc1, 55_341);
        assert!(cart.param_count() < cat.param_count());
    }

    #[test]
    fn running_mode_output_does_not_depend_on_batch() {
        let cfg = NetworkConfig::tiny();
        let net = Network::new(cfg.clone(), Formulation::Cartesian, 5).unwrap();
        let (x1, x2) = (random_input(&cfg, 1), random_input(&cfg, 2));
        let t = Target::Vector(Direction::from_degrees(10.0, 20.0).unit());
        let solo = net.batch_loss(&[(&x1, t)], NormMode::Running).unwrap();
        let pair = net.batch_loss(&[(&x1, t), (&x2, t)], NormMode::Running).unwrap();
        let other = net.batch_loss(&[(&x2, t)], NormMode::Running).unwrap();
        assert!((pair - (solo + other) / 2.0).abs() < 1e-12);
    }
}
