//! Synthetic gesture data: smooth random-walk templates, perturbed training
//! samples, and long streams with labelled instances embedded among noise.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::util::mix_seed;
use crate::{Dataset, Error, LabeledInterval, Result, Sequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub streams: usize,
    /// Instances over all streams, assigned to classes and streams round-robin.
    pub instances: usize,
    pub dim: usize,
    pub template_length: usize,
    /// Standard deviation of the additive per-frame noise.
    pub noise: f64,
    /// Relative length jitter and speed variation of each copy; 0 disables warping.
    pub warp: f64,
    /// Relative amplitude jitter of each copy.
    pub amplitude: f64,
    /// Scale of the filler between embedded instances, relative to a template.
    pub background: f64,
    /// Probability that a frame is hit by an impulsive glitch.
    pub glitch_rate: f64,
    /// Standard deviation of a glitch offset.
    pub glitch_scale: f64,
    pub gap_min: usize,
    pub gap_max: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            samples_per_class: 10,
            streams: 2,
            instances: 20,
            dim: 2,
            template_length: 30,
            noise: 0.02,
            warp: 0.1,
            amplitude: 0.05,
            background: 0.3,
            glitch_rate: 0.05,
            glitch_scale: 2.0,
            gap_min: 15,
            gap_max: 40,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.classes == 0 || self.dim == 0 {
            return bad("classes and dim must be positive");
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be at least 2");
        }
        if self.template_length < 2 {
            return bad("template_length must be at least 2");
        }
        if self.streams == 0 && self.instances > 0 {
            return bad("instances need at least one stream");
        }
        if self.gap_min == 0 || self.gap_max < self.gap_min {
            return bad("need 0 < gap_min <= gap_max");
        }
        for (name, v) in [
            ("noise", self.noise),
            ("amplitude", self.amplitude),
            ("background", self.background),
            ("glitch_scale", self.glitch_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.warp.is_finite() && (0.0..0.9).contains(&self.warp)) {
            return bad("warp must lie in [0, 0.9)");
        }
        if !(0.0..=1.0).contains(&self.glitch_rate) {
            return bad("glitch_rate must lie in [0, 1]");
        }
        if self.amplitude >= 1.0 {
            return bad("amplitude must be below 1");
        }
        Ok(())
    }

    pub fn class_name(index: usize) -> String {
        format!("class{index}")
    }
}

/// Generated templates plus the train and test datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub templates: Vec<Sequence>,
    /// One fully labelled sequence per training sample.
    pub train: Dataset,
    /// Streams with embedded instances.
    pub test: Dataset,
}

fn standard_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Moving average over `radius` frames on each side, per dimension.
fn smooth(data: &[f64], dim: usize, radius: usize) -> Vec<f64> {
    let n = data.len() / dim;
    let mut out = vec![0.0; data.len()];
    for t in 0..n {
        let lo = t.saturating_sub(radius);
        let hi = (t + radius).min(n - 1);
        for d in 0..dim {
            let s: f64 = (lo..=hi).map(|u| data[u * dim + d]).sum();
            out[t * dim + d] = s / (hi - lo + 1) as f64;
        }
    }
    out
}

/// Smoothed Gaussian steps, integrated, centred and scaled to unit peak per dimension.
fn random_walk(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<f64> {
    let steps: Vec<f64> = (0..len * dim).map(|_| standard_normal().sample(rng)).collect();
    let steps = smooth(&steps, dim, 2);
    let mut walk = vec![0.0; len * dim];
    for t in 0..len {
        for d in 0..dim {
            let prev = if t == 0 { 0.0 } else { walk[(t - 1) * dim + d] };
            walk[t * dim + d] = prev + steps[t * dim + d];
        }
    }
    for d in 0..dim {
        let mean = (0..len).map(|t| walk[t * dim + d]).sum::<f64>() / len as f64;
        let peak = (0..len)
            .map(|t| (walk[t * dim + d] - mean).abs())
            .fold(0.0, f64::max)
            .max(1e-12);
        for t in 0..len {
            walk[t * dim + d] = (walk[t * dim + d] - mean) / peak;
        }
    }
    walk
}

fn template(config: &SynthConfig, class: usize) -> Result<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, class as u64));
    let walk = random_walk(&mut rng, config.template_length, config.dim);
    Sequence::from_flat(SynthConfig::class_name(class), config.dim, walk)
}

/// A time-warped, amplitude-scaled, noisy copy of `template`.
fn perturbed_copy(config: &SynthConfig, template: &Sequence, rng: &mut ChaCha8Rng, id: String) -> Result<Sequence> {
    let (len, dim) = (template.len(), template.dim());
    let normal = standard_normal();
    let out_len = if config.warp > 0.0 {
        let f: f64 = rng.random_range(1.0 - config.warp..=1.0 + config.warp);
        ((len as f64 * f).round() as usize).max(2)
    } else {
        len
    };
    // monotone time map from smoothed positive speeds
    let mut speeds: Vec<f64> = (0..out_len.saturating_sub(1))
        .map(|_| 1.0 + config.warp * 2.0 * normal.sample(rng))
        .collect();
    speeds = smooth(&speeds, 1, 3);
    speeds.iter_mut().for_each(|s| *s = s.max(0.2));
    let total: f64 = speeds.iter().sum();
    let mut positions = Vec::with_capacity(out_len);
    let mut acc = 0.0;
    positions.push(0.0);
    for s in &speeds {
        acc += s;
        positions.push(acc * (len - 1) as f64 / total);
    }
    let scale: Vec<f64> = (0..dim)
        .map(|_| {
            if config.amplitude > 0.0 {
                rng.random_range(1.0 - config.amplitude..=1.0 + config.amplitude)
            } else {
                1.0
            }
        })
        .collect();
    let mut data = Vec::with_capacity(out_len * dim);
    for &p in &positions {
        let p = p.clamp(0.0, (len - 1) as f64);
        let i = (p.floor() as usize).min(len - 2);
        let w = p - i as f64;
        let (a, b) = (template.frame(i), template.frame(i + 1));
        for d in 0..dim {
            let v = (1.0 - w) * a[d] + w * b[d];
            let n = if config.noise > 0.0 {
                config.noise * normal.sample(rng)
            } else {
                0.0
            };
            data.push(v * scale[d] + n);
        }
    }
    glitch(config, rng, &mut data);
    Sequence::from_flat(id, dim, data)
}

/// Adds an occasional large offset to whole frames.
fn glitch(config: &SynthConfig, rng: &mut ChaCha8Rng, data: &mut [f64]) {
    if config.glitch_rate <= 0.0 {
        return;
    }
    let normal = standard_normal();
    for frame in data.chunks_mut(config.dim) {
        if rng.random::<f64>() < config.glitch_rate {
            frame
                .iter_mut()
                .for_each(|v| *v += config.glitch_scale * normal.sample(rng));
        }
    }
}

/// Low-amplitude smooth wander used between embedded instances.
fn background(config: &SynthConfig, rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let walk = random_walk(rng, len.max(2), config.dim);
    let normal = standard_normal();
    let mut out: Vec<f64> = walk
        .into_iter()
        .take(len * config.dim)
        .map(|v| {
            let n = if config.noise > 0.0 {
                config.noise * normal.sample(rng)
            } else {
                0.0
            };
            config.background * v + n
        })
        .collect();
    glitch(config, rng, &mut out);
    out
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let templates = (0..config.classes)
        .map(|c| template(config, c))
        .collect::<Result<Vec<_>>>()?;
    let class_names: BTreeSet<String> = (0..config.classes).map(SynthConfig::class_name).collect();

    let mut train_seqs = Vec::new();
    let mut train_labels = BTreeMap::new();
    for (c, tpl) in templates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ 0x7472_6169_6e00_0000, c as u64));
        for s in 0..config.samples_per_class {
            let id = format!("train-{}-{s:02}", SynthConfig::class_name(c));
            let seq = perturbed_copy(config, tpl, &mut rng, id.clone())?;
            train_labels.insert(id, vec![LabeledInterval::new(tpl.id(), 0, seq.len() - 1)]);
            train_seqs.push(seq);
        }
    }
    let train = Dataset::new(train_seqs, train_labels, class_names.clone())?;

    let mut test_seqs = Vec::new();
    let mut test_labels = BTreeMap::new();
    for s in 0..config.streams {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ 0x7465_7374_0000_0000, s as u64));
        let id = format!("stream-{s:02}");
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut frames = 0usize;
        let push_gap = |rng: &mut ChaCha8Rng, data: &mut Vec<f64>, frames: &mut usize| {
            let gap = rng.random_range(config.gap_min..=config.gap_max);
            data.extend(background(config, rng, gap));
            *frames += gap;
        };
        push_gap(&mut rng, &mut data, &mut frames);
        for k in (s..config.instances).step_by(config.streams.max(1)) {
            let class = k % config.classes;
            let inst = perturbed_copy(config, &templates[class], &mut rng, format!("{id}-instance"))?;
            labels.push(LabeledInterval::new(
                SynthConfig::class_name(class),
                frames,
                frames + inst.len() - 1,
            ));
            frames += inst.len();
            data.extend_from_slice(inst.as_flat());
            push_gap(&mut rng, &mut data, &mut frames);
        }
        test_seqs.push(Sequence::from_flat(id.clone(), config.dim, data)?);
        test_labels.insert(id, labels);
    }
    let test = Dataset::new(test_seqs, test_labels, class_names)?;
    Ok(SynthData { templates, train, test })
}
