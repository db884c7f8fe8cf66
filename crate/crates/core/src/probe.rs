//! Frozen feature maps with a trainable softmax head, and classification
//! metrics.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Image, RngStream, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Area-average to `d x d x 3`.
    RawDownsample { d: usize },
    /// `max(0, W x + b)` over a `d x d` downsample, Gaussian `W` scaled by
    /// `1 / sqrt(3 d^2)`.
    RandomRelu { d: usize, dims: usize, seed: u64 },
    /// Per-channel normalized histograms with `bins` equal-width bins.
    ChannelHist { bins: usize },
}

impl Default for FeatureKind {
    fn default() -> Self {
        FeatureKind::RandomRelu { d: 16, dims: 512, seed: 0 }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::RawDownsample { d } => write!(f, "raw_downsample:{d}"),
            FeatureKind::RandomRelu { d, dims, seed } => write!(f, "random_relu:{d}:{dims}:{seed}"),
            FeatureKind::ChannelHist { bins } => write!(f, "channel_hist:{bins}"),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    /// `raw_downsample[:d]`, `random_relu[:d[:dims[:seed]]]`, `channel_hist[:bins]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default();
        let nums: Vec<u64> = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad feature map argument '{p}' in '{s}'")))
            })
            .collect::<Result<_>>()?;
        let arg = |i: usize, default: u64| nums.get(i).copied().unwrap_or(default);
        match name {
            "raw_downsample" => Ok(FeatureKind::RawDownsample { d: arg(0, 16) as usize }),
            "random_relu" => Ok(FeatureKind::RandomRelu {
                d: arg(0, 16) as usize,
                dims: arg(1, 512) as usize,
                seed: arg(2, 0),
            }),
            "channel_hist" => Ok(FeatureKind::ChannelHist { bins: arg(0, 32) as usize }),
            _ => Err(Error::InvalidParameter(format!("unknown feature map '{s}'"))),
        }
    }
}

/// Frozen feature extractor. Parameters are fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    kind: FeatureKind,
    projection: Option<(Vec<f64>, Vec<f64>)>,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind) -> Result<Self> {
        let projection = match kind {
            FeatureKind::RawDownsample { d } if d == 0 => {
                return Err(Error::InvalidParameter("downsample size must be positive".into()))
            }
            FeatureKind::ChannelHist { bins } if bins == 0 => {
                return Err(Error::InvalidParameter("histogram needs at least one bin".into()))
            }
            FeatureKind::RandomRelu { d, dims, seed } => {
                if d == 0 || dims == 0 {
                    return Err(Error::InvalidParameter("random_relu needs d > 0 and dims > 0".into()));
                }
                let input = CHANNELS * d * d;
                let scale = 1.0 / (input as f64).sqrt();
                let mut rng = RngStream::new(seed, "feature_map", "random_relu").rng();
                let w = (0..dims * input)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                    .collect();
                let b = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
                Some((w, b))
            }
            _ => None,
        };
        Ok(Self { kind, projection })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            FeatureKind::RawDownsample { d } => CHANNELS * d * d,
            FeatureKind::RandomRelu { dims, .. } => dims,
            FeatureKind::ChannelHist { bins } => CHANNELS * bins,
        }
    }

    pub fn extract(&self, img: &Image) -> Vec<f64> {
        match self.kind {
            FeatureKind::RawDownsample { d } => area_downsample(img, d),
            FeatureKind::RandomRelu { d, dims, .. } => {
                let x: Vec<f64> = area_downsample(img, d).into_iter().map(|v| v - 0.5).collect();
                let (w, b) = self.projection.as_ref().expect("random_relu has a projection");
                (0..dims)
                    .map(|j| {
                        let row = &w[j * x.len()..(j + 1) * x.len()];
                        let z: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b[j];
                        z.max(0.0)
                    })
                    .collect()
            }
            FeatureKind::ChannelHist { bins } => {
                let n = img.pixel_count() as f64;
                let mut out = vec![0.0; CHANNELS * bins];
                for c in 0..CHANNELS {
                    for &v in img.channel(c) {
                        let bin = ((v * bins as f64) as usize).min(bins - 1);
                        out[c * bins + bin] += 1.0;
                    }
                }
                out.iter_mut().for_each(|v| *v /= n);
                out
            }
        }
    }
}

/// Fractional-overlap weights mapping `n` source cells onto `d` bins.
fn overlap_weights(n: usize, d: usize) -> Vec<Vec<(usize, f64)>> {
    let step = n as f64 / d as f64;
    (0..d)
        .map(|i| {
            let (lo, hi) = (i as f64 * step, (i + 1) as f64 * step);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|p| {
                    let w = (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0) / step;
                    (w > 0.0).then_some((p, w))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted average pooling to `d x d` per channel, channel-major.
pub fn area_downsample(img: &Image, d: usize) -> Vec<f64> {
    let (h, w) = img.dims();
    let wy = overlap_weights(h, d);
    let wx = overlap_weights(w, d);
    let mut out = Vec::with_capacity(CHANNELS * d * d);
    for c in 0..CHANNELS {
        let plane = img.channel(c);
        for ry in &wy {
            for rx in &wx {
                let mut acc = 0.0;
                for &(y, a) in ry {
                    for &(x, b) in rx {
                        acc += a * b * plane[y * w + x];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub feature: FeatureKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub l2: f64,
    /// Evaluations without validation improvement before stopping.
    pub patience: usize,
    pub eval_every: usize,
    /// z-score features with training-set statistics.
    pub standardize: bool,
    /// Std-dev of the random head initialization.
    pub init_scale: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::default(),
            learning_rate: 0.1,
            max_epochs: 2000,
            l2: 1e-4,
            patience: 20,
            eval_every: 10,
            standardize: true,
            init_scale: 0.01,
        }
    }
}

/// Linear softmax classifier: `scores = W x + b`, `W` is `classes x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn random(classes: usize, dim: usize, scale: f64, rng: &RngStream) -> Self {
        let mut r = rng.rng();
        let mut head = Self::zeros(classes, dim);
        head.weights
            .iter_mut()
            .for_each(|w| *w = r.sample::<f64, _>(StandardNormal) * scale);
        head
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[k]
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Mean softmax cross-entropy plus `l2 / 2 * ||W||^2`, with gradients
    /// `(dW, db)`.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let n = xs.len() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.classes];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let p = softmax(&self.logits(x));
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            for k in 0..self.classes {
                let r = (p[k] - f64::from(u8::from(k == y))) / n;
                gb[k] += r;
                let g = &mut gw[k * self.dim..(k + 1) * self.dim];
                g.iter_mut().zip(x).for_each(|(g, v)| *g += r * v);
            }
        }
        loss /= n;
        loss += 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        gw.iter_mut().zip(&self.weights).for_each(|(g, w)| *g += l2 * w);
        (loss, gw, gb)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for x in xs {
            var.iter_mut()
                .zip(x.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let inv_std = var
            .into_iter()
            .map(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, inv_std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.inv_std))
            .map(|(v, (m, s))| (v - m) * s)
            .collect()
    }
}

/// Feature vectors (before standardization) with their labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledFeatures {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub feature_map: FeatureMap,
    pub standardizer: Option<Standardizer>,
    pub head: Head,
    pub config: ProbeConfig,
    /// Epochs actually run by the last training call.
    pub epochs_run: usize,
}

impl ProbeModel {
    /// Fresh model; the feature map and head initialization derive from `seed`.
    pub fn new(config: ProbeConfig, classes: usize, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 classes, got {classes}")));
        }
        let kind = match config.feature {
            FeatureKind::RandomRelu { d, dims, .. } => FeatureKind::RandomRelu { d, dims, seed },
            other => other,
        };
        let feature_map = FeatureMap::new(kind)?;
        let head = Head::random(
            classes,
            feature_map.dim(),
            config.init_scale,
            &RngStream::new(seed, "head", "init"),
        );
        Ok(Self {
            feature_map,
            standardizer: None,
            head,
            config,
            epochs_run: 0,
        })
    }

    pub fn classes(&self) -> usize {
        self.head.classes
    }

    /// Raw feature-map output.
    pub fn extract(&self, img: &Image) -> Vec<f64> {
        self.feature_map.extract(img)
    }

    /// Fits (or clears) the standardizer from raw training features.
    pub fn fit_standardizer(&mut self, train: &LabeledFeatures) {
        self.standardizer = self
            .config
            .standardize
            .then(|| Standardizer::fit(&train.features));
    }

    fn prepare(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match &self.standardizer {
            Some(s) => xs.iter().map(|x| s.apply(x)).collect(),
            None => xs.to_vec(),
        }
    }

    pub fn predict_features(&self, raw: &[Vec<f64>]) -> Vec<usize> {
        self.prepare(raw).iter().map(|x| self.head.predict(x)).collect()
    }

    pub fn predict(&self, img: &Image) -> usize {
        self.predict_features(&[self.extract(img)])[0]
    }
}

/// Full-batch gradient descent on the head, keeping the snapshot with the
/// best validation macro-F1. Validation defaults to the training data.
pub fn train_head(
    mut model: ProbeModel,
    train: &LabeledFeatures,
    val: Option<&LabeledFeatures>,
) -> Result<ProbeModel> {
    let k = model.classes();
    for class in 0..k {
        if !train.labels.contains(&class) {
            return Err(Error::MissingClass { class });
        }
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} outside {k} classes")));
    }
    let cfg = model.config.clone();
    let xs = model.prepare(&train.features);
    let val = val.filter(|v| !v.is_empty()).unwrap_or(train);
    let val_xs = model.prepare(&val.features);
    let score = |head: &Head| -> f64 {
        let preds: Vec<usize> = val_xs.iter().map(|x| head.predict(x)).collect();
        evaluate_predictions(&preds, &val.labels, k).map_or(0.0, |m| m.macro_f1)
    };

    let eval_every = cfg.eval_every.max(1);
    let mut best = (score(&model.head), model.head.clone());
    let mut stale = 0;
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        let (_, gw, gb) = model.head.loss_and_grad(&xs, &train.labels, cfg.l2);
        model.head.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= cfg.learning_rate * g);
        model.head.bias.iter_mut().zip(&gb).for_each(|(b, g)| *b -= cfg.learning_rate * g);
        epochs += 1;
        if epochs % eval_every == 0 {
            let s = score(&model.head);
            if s > best.0 + 1e-12 {
                best = (s, model.head.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    model.head = best.1;
    model.epochs_run = epochs;
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub relative_delta: Option<f64>,
}

/// Accuracy, macro-F1 (absent classes score 0) and confusion matrix.
pub fn evaluate_predictions(predicted: &[usize], actual: &[usize], classes: usize) -> Result<Metrics> {
    if actual.is_empty() {
        return Err(Error::EmptyDataset);
    }
    assert_eq!(predicted.len(), actual.len(), "one prediction per label");
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &a) in predicted.iter().zip(actual) {
        confusion[a][p] += 1;
    }
    let correct: u64 = (0..classes).map(|k| confusion[k][k]).sum();
    let f1_sum: f64 = (0..classes)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let pred: u64 = (0..classes).map(|a| confusion[a][k]).sum();
            let act: u64 = confusion[k].iter().sum();
            let denom = pred as f64 + act as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    Ok(Metrics {
        accuracy: correct as f64 / actual.len() as f64,
        macro_f1: f1_sum / classes as f64,
        confusion,
        relative_delta: None,
    })
}

pub fn evaluate(model: &ProbeModel, data: &LabeledFeatures) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    evaluate_predictions(&model.predict_features(&data.features), &data.labels, model.classes())
}

/// `100 * (value - baseline) / baseline`, rounded to two decimals.
pub fn relative_delta(baseline: f64, value: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::NonPositiveBaseline(baseline));
    }
    let d = 100.0 * (value - baseline) / baseline;
    Ok((d * 100.0).round() / 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_constant() {
        let img = Image::filled(10, 7, [0.5; 3]).unwrap();
        let f = FeatureMap::new(FeatureKind::RawDownsample { d: 2 }).unwrap().extract(&img);
        assert_eq!(f.len(), 12);
        assert!(f.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn downsample_ragged_weights() {
        // 3 columns into 2 bins: the middle column splits evenly
        let img = Image::from_fn(1, 3, |_, x| [[0.0, 0.6, 0.9][x]; 3]).unwrap();
        let f = area_downsample(&img, 2);
        // rows: 1 pixel into 2 bins, each bin sees the same row
        assert!((f[0] - (0.0 * 2.0 / 3.0 + 0.6 / 3.0)).abs() < 1e-12);
        assert!((f[1] - (0.6 / 3.0 + 0.9 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn channel_hist_half_split() {
        let img = Image::from_fn(4, 4, |y, _| if y < 2 { [0.0; 3] } else { [1.0; 3] }).unwrap();
        let f = FeatureMap::new(FeatureKind::ChannelHist { bins: 2 }).unwrap().extract(&img);
        assert_eq!(f, vec![0.5; 6]);
    }

    #[test]
    fn random_relu_nonnegative_and_deterministic() {
        let kind = FeatureKind::RandomRelu { d: 4, dims: 64, seed: 9 };
        let img = Image::from_fn(12, 12, |y, x| [(y as f64) / 12.0, (x as f64) / 12.0, 0.3]).unwrap();
        let a = FeatureMap::new(kind).unwrap().extract(&img);
        let b = FeatureMap::new(kind).unwrap().extract(&img);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v >= 0.0));
        assert!(a.iter().any(|&v| v > 0.0));
        let c = FeatureMap::new(FeatureKind::RandomRelu { d: 4, dims: 64, seed: 10 }).unwrap().extract(&img);
        assert_ne!(a, c);
    }

    #[test]
    fn feature_kind_parsing() {
        assert_eq!("raw_downsample:8".parse::<FeatureKind>().unwrap(), FeatureKind::RawDownsample { d: 8 });
        assert_eq!(
            "random_relu".parse::<FeatureKind>().unwrap(),
            FeatureKind::RandomRelu { d: 16, dims: 512, seed: 0 }
        );
        assert!("nope".parse::<FeatureKind>().is_err());
        assert!("channel_hist:x".parse::<FeatureKind>().is_err());
        for k in [FeatureKind::ChannelHist { bins: 5 }, FeatureKind::RandomRelu { d: 2, dims: 3, seed: 4 }] {
            assert_eq!(k.to_string().parse::<FeatureKind>().unwrap(), k);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn macro_f1_cases() {
        let labels = [0, 0, 1, 1];
        assert_eq!(evaluate_predictions(&labels, &labels, 2).unwrap().macro_f1, 1.0);
        let m = evaluate_predictions(&[0, 0, 0, 0], &labels, 2).unwrap();
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.5);
        let m = evaluate_predictions(&[1, 1, 0, 0], &labels, 2).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (0.0, 0.0));
        assert_eq!(m.confusion, vec![vec![0, 2], vec![2, 0]]);
        assert!(evaluate_predictions(&[], &[], 2).is_err());
    }

    #[test]
    fn relative_delta_values() {
        assert_eq!(relative_delta(82.01, 69.71).unwrap(), -15.0);
        assert_eq!(relative_delta(97.77, 91.98).unwrap(), -5.92);
        assert_eq!(relative_delta(50.0, 50.0).unwrap(), 0.0);
        assert!(matches!(relative_delta(0.0, 1.0), Err(Error::NonPositiveBaseline(_))));
    }

    #[test]
    fn separable_toy_trains_to_perfect() {
        let mut data = LabeledFeatures::default();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            data.features.push(vec![1.0 + t, 0.5 - t]);
            data.labels.push(0);
            data.features.push(vec![-1.0 - t, 0.2 + t]);
            data.labels.push(1);
        }
        let cfg = ProbeConfig {
            feature: FeatureKind::ChannelHist { bins: 1 },
            max_epochs: 500,
            patience: usize::MAX,
            standardize: false,
            ..Default::default()
        };
        let mut model = ProbeModel::new(cfg, 2, 1).unwrap();
        model.head = Head::zeros(2, 2);
        let model = train_head(model, &data, None).unwrap();
        assert_eq!(evaluate(&model, &data).unwrap().accuracy, 1.0);
    }

    #[test]
    fn missing_class_rejected() {
        let data = LabeledFeatures { features: vec![vec![0.0; 3]; 4], labels: vec![0; 4] };
        let model = ProbeModel::new(ProbeConfig { feature: FeatureKind::ChannelHist { bins: 1 }, ..Default::default() }, 2, 0).unwrap();
        assert!(matches!(train_head(model, &data, None), Err(Error::MissingClass { class: 1 })));
    }
}
