//! A small dense denoiser with hand-written backprop.
//!
//! Input is `[latent | conditioning | 8 sinusoidal features of t/T]`, two
//! SiLU hidden layers, linear output of the latent dimension. Gradients are
//! exact (checked against finite differences in the trainer tests), so the
//! whole training stack stays dependency-free.

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream_rng};
use crate::schedule::NoiseSchedule;
use crate::util::{silu, silu_deriv};

pub const TIME_FEATURES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub hidden: [usize; 2],
}

impl MlpArch {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.cond_dim + TIME_FEATURES
    }
}

#[derive(Debug, Clone)]
struct Layer {
    /// Row-major `[out_dim x in_dim]`.
    w: Vec<f64>,
    b: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = self.b.clone();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out[o] += acc;
        }
        out
    }

    /// Accumulates weight gradients for upstream `dout` and returns the
    /// gradient with respect to the layer input.
    fn backward(&self, x: &[f64], dout: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let d = dout[o];
            gb[o] += d;
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }
}

/// Per-layer gradient buffers matching an [`MlpDenoiser`]'s shape.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpDenoiser) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v *= s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

pub(crate) struct ForwardCache {
    input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpDenoiser {
    arch: MlpArch,
    sched: NoiseSchedule,
    cost_weight: f64,
    layers: Vec<Layer>,
}

impl MlpDenoiser {
    pub fn new(arch: MlpArch, sched: NoiseSchedule, cost_weight: f64, seed: u64) -> Result<Self> {
        if arch.latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be >= 1".into()));
        }
        if arch.hidden[0] == 0 || arch.hidden[1] == 0 {
            return Err(Error::InvalidParameter(
                "hidden widths must be >= 1".into(),
            ));
        }
        if !(cost_weight.is_finite() && cost_weight > 0.0) {
            return Err(Error::InvalidParameter(
                "cost_weight must be finite and > 0".into(),
            ));
        }
        let dims = [
            (arch.input_dim(), arch.hidden[0]),
            (arch.hidden[0], arch.hidden[1]),
            (arch.hidden[1], arch.latent_dim),
        ];
        let mut rng = stream_rng(seed, 0xA11C);
        let layers = dims
            .iter()
            .map(|&(i, o)| {
                let std = (2.0 / i as f64).sqrt();
                Layer {
                    w: (0..i * o).map(|_| std * standard_normal(&mut rng)).collect(),
                    b: vec![0.0; o],
                    in_dim: i,
                    out_dim: o,
                }
            })
            .collect();
        Ok(MlpDenoiser {
            arch,
            sched,
            cost_weight,
            layers,
        })
    }

    pub fn arch(&self) -> MlpArch {
        self.arch
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    pub fn schedule_hash(&self) -> String {
        self.sched.content_hash()
    }

    fn time_features(&self, t: usize) -> [f64; TIME_FEATURES] {
        let tt = t as f64 / self.sched.num_steps() as f64;
        let mut out = [0.0; TIME_FEATURES];
        for k in 0..TIME_FEATURES / 2 {
            let angle = std::f64::consts::PI * tt * (1u32 << k) as f64;
            out[2 * k] = angle.sin();
            out[2 * k + 1] = angle.cos();
        }
        out
    }

    fn assemble_input(&self, x: &[f64], t: usize, cond: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.arch.latent_dim, "latent dimension mismatch");
        assert_eq!(cond.len(), self.arch.cond_dim, "conditioning dimension mismatch");
        let mut input = Vec::with_capacity(self.arch.input_dim());
        input.extend_from_slice(x);
        input.extend_from_slice(cond);
        input.extend_from_slice(&self.time_features(t));
        input
    }

    pub(crate) fn forward_cached(
        &self,
        x: &[f64],
        t: usize,
        cond: &[f64],
    ) -> (Vec<f64>, ForwardCache) {
        let input = self.assemble_input(x, t, cond);
        let pre1 = self.layers[0].forward(&input);
        let act1: Vec<f64> = pre1.iter().map(|&v| silu(v)).collect();
        let pre2 = self.layers[1].forward(&act1);
        let act2: Vec<f64> = pre2.iter().map(|&v| silu(v)).collect();
        let out = self.layers[2].forward(&act2);
        (
            out,
            ForwardCache {
                input,
                pre1,
                act1,
                pre2,
                act2,
            },
        )
    }

    /// Accumulates parameter gradients for one sample given `d(loss)/d(out)`.
    pub(crate) fn backward(&self, cache: &ForwardCache, dout: &[f64], grads: &mut MlpGrads) {
        let (gw2, gb2) = {
            let (w, b) = &mut grads.layers[2];
            (w.as_mut_slice(), b.as_mut_slice())
        };
        let dact2 = self.layers[2].backward(&cache.act2, dout, gw2, gb2);
        let dpre2: Vec<f64> = dact2
            .iter()
            .zip(&cache.pre2)
            .map(|(d, p)| d * silu_deriv(*p))
            .collect();
        let (gw1, gb1) = {
            let (w, b) = &mut grads.layers[1];
            (w.as_mut_slice(), b.as_mut_slice())
        };
        let dact1 = self.layers[1].backward(&cache.act1, &dpre2, gw1, gb1);
        let dpre1: Vec<f64> = dact1
            .iter()
            .zip(&cache.pre1)
            .map(|(d, p)| d * silu_deriv(*p))
            .collect();
        let (gw0, gb0) = {
            let (w, b) = &mut grads.layers[0];
            (w.as_mut_slice(), b.as_mut_slice())
        };
        let _ = self.layers[0].backward(&cache.input, &dpre1, gw0, gb0);
    }

    /// One SGD-with-momentum step: `v = m v - lr g; theta += v`.
    pub fn apply_sgd(&mut self, grads: &MlpGrads, velocity: &mut MlpGrads, lr: f64, momentum: f64) {
        for (layer, ((gw, gb), (vw, vb))) in self
            .layers
            .iter_mut()
            .zip(grads.layers.iter().zip(velocity.layers.iter_mut()))
        {
            for i in 0..layer.w.len() {
                vw[i] = momentum * vw[i] - lr * gw[i];
                layer.w[i] += vw[i];
            }
            for i in 0..layer.b.len() {
                vb[i] = momentum * vb[i] - lr * gb[i];
                layer.b[i] += vb[i];
            }
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn load_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            l.w.copy_from_slice(&params[off..off + l.w.len()]);
            off += l.w.len();
            l.b.copy_from_slice(&params[off..off + l.b.len()]);
            off += l.b.len();
        }
        Ok(())
    }

    pub fn get_param(&self, idx: usize) -> f64 {
        let (l, within, is_bias) = self.locate(idx);
        if is_bias {
            self.layers[l].b[within]
        } else {
            self.layers[l].w[within]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (l, within, is_bias) = self.locate(idx);
        if is_bias {
            self.layers[l].b[within] = value;
        } else {
            self.layers[l].w[within] = value;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize, bool) {
        for (l, layer) in self.layers.iter().enumerate() {
            if idx < layer.w.len() {
                return (l, idx, false);
            }
            idx -= layer.w.len();
            if idx < layer.b.len() {
                return (l, idx, true);
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }
}

impl Denoiser for MlpDenoiser {
    fn evaluate(&self, x: &[f64], t: usize, cond: &[f64]) -> Vec<f64> {
        let input = self.assemble_input(x, t, cond);
        let a1: Vec<f64> = self.layers[0].forward(&input).iter().map(|&v| silu(v)).collect();
        let a2: Vec<f64> = self.layers[1].forward(&a1).iter().map(|&v| silu(v)).collect();
        self.layers[2].forward(&a2)
    }

    fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    fn cond_dim(&self) -> usize {
        self.arch.cond_dim
    }

    fn cost_weight(&self) -> f64 {
        self.cost_weight
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{build_schedule, ScheduleKind};
    use crate::util::norm_sq;

    fn sched() -> NoiseSchedule {
        build_schedule(20, 1e-3, 0.04, ScheduleKind::Linear).unwrap()
    }

    fn small_net(seed: u64) -> MlpDenoiser {
        MlpDenoiser::new(
            MlpArch {
                latent_dim: 2,
                cond_dim: 1,
                hidden: [4, 3],
            },
            sched(),
            1.0,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn param_count_matches_hand_arithmetic() {
        // input = 2 + 1 + 8 = 11; layers 11->4, 4->3, 3->2:
        // (11*4+4) + (4*3+3) + (3*2+2) = 48 + 15 + 8 = 71
        assert_eq!(small_net(0).param_count(), 71);
    }

    #[test]
    fn evaluate_is_deterministic_and_matches_cached_forward() {
        let net = small_net(3);
        let x = [0.4, -0.9];
        let cond = [0.2];
        let a = net.evaluate(&x, 7, &cond);
        let b = net.evaluate(&x, 7, &cond);
        let (c, _) = net.forward_cached(&x, 7, &cond);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn time_features_distinguish_timesteps() {
        let net = small_net(5);
        let f1 = net.time_features(1);
        let f2 = net.time_features(13);
        assert!(f1.iter().all(|v| v.abs() <= 1.0));
        assert_ne!(f1, f2);
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = small_net(9);
        let p = net.params_flat();
        assert_eq!(p.len(), 71);
        let mut other = small_net(10);
        other.load_params_flat(&p).unwrap();
        assert_eq!(other.params_flat(), p);
        assert_eq!(net.get_param(50), p[50]);
        net.set_param(50, 7.25);
        assert_eq!(net.get_param(50), 7.25);
        assert!(net.load_params_flat(&[0.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences_on_squared_error() {
        let mut net = small_net(17);
        let x = [0.3, 1.1];
        let cond = [-0.5];
        let tgt = [0.25, -0.75];
        let loss = |n: &MlpDenoiser| {
            let out = n.evaluate(&x, 9, &cond);
            norm_sq(&crate::util::sub(&out, &tgt))
        };
        let mut grads = MlpGrads::zeros_like(&net);
        let (out, cache) = net.forward_cached(&x, 9, &cond);
        let dout: Vec<f64> = out.iter().zip(&tgt).map(|(o, t)| 2.0 * (o - t)).collect();
        net.backward(&cache, &dout, &mut grads);
        let flat = grads.flat();
        let h = 1e-6;
        for idx in (0..net.param_count()).step_by(3) {
            let orig = net.get_param(idx);
            net.set_param(idx, orig + h);
            let up = loss(&net);
            net.set_param(idx, orig - h);
            let down = loss(&net);
            net.set_param(idx, orig);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - flat[idx]).abs() / fd.abs().max(flat[idx].abs()).max(1e-6);
            assert!(rel <= 1e-4, "param {idx}: fd {fd} vs analytic {}", flat[idx]);
        }
    }

    #[test]
    fn constructor_rejects_degenerate_shapes() {
        let bad = MlpDenoiser::new(
            MlpArch {
                latent_dim: 0,
                cond_dim: 0,
                hidden: [4, 4],
            },
            sched(),
            1.0,
            0,
        );
        assert!(bad.is_err());
        let bad = MlpDenoiser::new(
            MlpArch {
                latent_dim: 1,
                cond_dim: 0,
                hidden: [0, 4],
            },
            sched(),
            1.0,
            0,
        );
        assert!(bad.is_err());
    }
}
