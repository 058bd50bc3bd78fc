//! The adversarial network: feature learner `F`, softmax predictor, gradient
//! reversal, multilinear conditioning `h = f ⊗ p`, and domain discriminator
//! `D` (FC-ReLU-FC-ReLU-FC-Sigmoid).

mod checkpoint;

pub use checkpoint::{Checkpoint, CheckpointEntry};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Discriminator outputs are clamped into `[D_CLAMP, 1 - D_CLAMP]` before `log`.
pub const D_CLAMP: f64 = 1e-7;

/// Widths of a ReLU MLP, input first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 || layer_widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP needs at least two widths, all >= 1, got {layer_widths:?}"
            )));
        }
        Ok(MlpSpec { layer_widths })
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated non-empty")
    }
}

/// Architecture knobs; the input width comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden widths of the feature learner, between input and features.
    pub hidden: Vec<usize>,
    /// Feature dimension `d_f`.
    pub feature_dim: usize,
    /// Number of classes `C`.
    pub classes: usize,
    /// Width of both hidden discriminator layers.
    pub disc_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![64],
            feature_dim: 16,
            classes: 2,
            disc_hidden: 64,
        }
    }
}

/// Affine map `x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Linear {
            weight: Tensor::new(fan_in, fan_out, data).expect("sized"),
            bias: Tensor::zeros(1, fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros(fan_in, fan_out),
            bias: Tensor::zeros(1, fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }
}

/// Model parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub features: Vec<BoundLinear>,
    pub predictor: BoundLinear,
    pub discriminator: [BoundLinear; 3],
    pub grl_coeff: f64,
}

impl BoundModel {
    /// Parameter handles in [`AtmModel::param_names`] order.
    pub fn params(&self) -> Vec<Var> {
        self.features
            .iter()
            .chain(std::iter::once(&self.predictor))
            .chain(self.discriminator.iter())
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

/// The assembled adaptation network.
#[derive(Clone, Debug, PartialEq)]
pub struct AtmModel {
    features: Vec<Linear>,
    predictor: Linear,
    discriminator: [Linear; 3],
    /// Multiplier applied (negated) to gradients flowing back through the
    /// reversal stage in front of the discriminator.
    pub grl_coeff: f64,
}

impl AtmModel {
    pub fn new(input_dim: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&config.hidden);
        widths.push(config.feature_dim);
        let spec = MlpSpec::new(widths)?;
        if config.classes < 1 || config.disc_hidden < 1 {
            return Err(Error::InvalidArgument(
                "classes and disc_hidden must be >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = spec
            .layer_widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], &mut rng))
            .collect();
        let predictor = Linear::init(config.feature_dim, config.classes, &mut rng);
        let joint = config.feature_dim * config.classes;
        let discriminator = [
            Linear::init(joint, config.disc_hidden, &mut rng),
            Linear::init(config.disc_hidden, config.disc_hidden, &mut rng),
            Linear::init(config.disc_hidden, 1, &mut rng),
        ];
        Ok(AtmModel {
            features,
            predictor,
            discriminator,
            grl_coeff: 1.0,
        })
    }

    /// Assembles a model from explicit layers, checking that widths chain.
    pub fn from_layers(
        features: Vec<Linear>,
        predictor: Linear,
        discriminator: [Linear; 3],
    ) -> Result<Self> {
        let mut prev = None;
        for layer in features.iter().chain(std::iter::once(&predictor)) {
            check_layer(layer)?;
            if let Some(p) = prev {
                if layer.in_dim() != p {
                    return Err(width_error("feature/predictor chain", p, layer.in_dim()));
                }
            }
            prev = Some(layer.out_dim());
        }
        if features.is_empty() {
            return Err(Error::InvalidArgument("feature learner has no layers".into()));
        }
        let feature_dim = features.last().map(Linear::out_dim).unwrap_or(0);
        let joint = feature_dim * predictor.out_dim();
        let mut prev = joint;
        for layer in &discriminator {
            check_layer(layer)?;
            if layer.in_dim() != prev {
                return Err(width_error("discriminator chain", prev, layer.in_dim()));
            }
            prev = layer.out_dim();
        }
        if prev != 1 {
            return Err(width_error("discriminator output", 1, prev));
        }
        Ok(AtmModel {
            features,
            predictor,
            discriminator,
            grl_coeff: 1.0,
        })
    }

    pub fn feature_spec(&self) -> MlpSpec {
        let mut widths = vec![self.features[0].in_dim()];
        widths.extend(self.features.iter().map(Linear::out_dim));
        MlpSpec { layer_widths: widths }
    }

    pub fn input_dim(&self) -> usize {
        self.features[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.predictor.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.predictor.out_dim()
    }

    pub fn feature_layers(&self) -> &[Linear] {
        &self.features
    }

    pub fn feature_layers_mut(&mut self) -> &mut [Linear] {
        &mut self.features
    }

    pub fn predictor(&self) -> &Linear {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut Linear {
        &mut self.predictor
    }

    pub fn discriminator(&self) -> &[Linear; 3] {
        &self.discriminator
    }

    pub fn discriminator_mut(&mut self) -> &mut [Linear; 3] {
        &mut self.discriminator
    }

    fn layers(&self) -> impl Iterator<Item = (String, &Linear)> {
        self.features
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("features.{i}"), l))
            .chain(std::iter::once(("predictor".to_string(), &self.predictor)))
            .chain(
                self.discriminator
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (format!("discriminator.{i}"), l)),
            )
    }

    /// Parameter names, e.g. `features.0.weight`, in a fixed order.
    pub fn param_names(&self) -> Vec<String> {
        self.layers()
            .flat_map(|(name, _)| [format!("{name}.weight"), format!("{name}.bias")])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers()
            .flat_map(|(_, l)| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.features
            .iter_mut()
            .chain(std::iter::once(&mut self.predictor))
            .chain(self.discriminator.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Whether a parameter (by [`AtmModel::param_names`] index) belongs to the
    /// discriminator.
    pub fn is_discriminator_param(&self, index: usize) -> bool {
        index >= 2 * (self.features.len() + 1)
    }

    /// Registers every parameter on `tape`, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let mut bind = |l: &Linear| BoundLinear {
            weight: tape.leaf(l.weight.clone(), trainable),
            bias: tape.leaf(l.bias.clone(), trainable),
        };
        let features = self.features.iter().map(&mut bind).collect();
        let predictor = bind(&self.predictor);
        let discriminator = [
            bind(&self.discriminator[0]),
            bind(&self.discriminator[1]),
            bind(&self.discriminator[2]),
        ];
        BoundModel {
            features,
            predictor,
            discriminator,
            grl_coeff: self.grl_coeff,
        }
    }

    /// Features for a batch, without recording gradients.
    pub fn features_of(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let f = forward_features(&mut tape, &bound, xv)?;
        Ok(tape.value(f).clone())
    }

    /// Class probabilities for a batch of inputs.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let f = forward_features(&mut tape, &bound, xv)?;
        let p = predict(&mut tape, &bound, f)?;
        Ok(tape.value(p).clone())
    }

    /// Argmax class per row, ties to the lowest index.
    pub fn predict_labels(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.argmax_rows())
    }
}

fn check_layer(l: &Linear) -> Result<()> {
    if l.bias.shape() != (1, l.out_dim()) || l.in_dim() == 0 || l.out_dim() == 0 {
        return Err(Error::InvalidArgument(format!(
            "layer weight {:?} and bias {:?} do not match",
            l.weight.shape(),
            l.bias.shape()
        )));
    }
    Ok(())
}

fn width_error(what: &str, expected: usize, got: usize) -> Error {
    Error::InvalidArgument(format!("{what}: expected width {expected}, got {got}"))
}

fn check_width(op: &'static str, tape: &Tape, x: Var, weight: Var) -> Result<()> {
    let (xs, ws) = (tape.shape(x), tape.shape(weight));
    if xs.1 != ws.0 {
        return Err(Error::Shape {
            op,
            left: xs,
            right: ws,
        });
    }
    Ok(())
}

/// `f = F(x)`: every layer affine then ReLU, the last included.
pub fn forward_features(tape: &mut Tape, model: &BoundModel, x: Var) -> Result<Var> {
    check_width("forward_features", tape, x, model.features[0].weight)?;
    let mut h = x;
    for layer in &model.features {
        let z = layer.apply(tape, h)?;
        h = tape.relu(z)?;
    }
    Ok(h)
}

/// Softmax class probabilities from features.
pub fn predict(tape: &mut Tape, model: &BoundModel, f: Var) -> Result<Var> {
    check_width("predict", tape, f, model.predictor.weight)?;
    let logits = model.predictor.apply(tape, f)?;
    tape.softmax_rows(logits)
}

/// `h = Π(f, p)`: row-wise flattened outer product, feature index major.
pub fn multilinear_map(tape: &mut Tape, f: Var, p: Var) -> Result<Var> {
    tape.row_outer(f, p)
}

/// Identity forward, gradients scaled by `-coeff` backward.
pub fn gradient_reversal(tape: &mut Tape, x: Var, coeff: f64) -> Result<Var> {
    tape.grad_reverse(x, coeff)
}

/// Discriminator probability that each row of `h` comes from the source.
pub fn discriminate(tape: &mut Tape, model: &BoundModel, h: Var) -> Result<Var> {
    check_width("discriminate", tape, h, model.discriminator[0].weight)?;
    let [l0, l1, l2] = &model.discriminator;
    let z = l0.apply(tape, h)?;
    let a = tape.relu(z)?;
    let z = l1.apply(tape, a)?;
    let a = tape.relu(z)?;
    let z = l2.apply(tape, a)?;
    tape.sigmoid(z)
}

/// Shannon entropy (natural log, `0 log 0 = 0`) of each row.
pub fn row_entropy(p: &Tensor) -> Result<Vec<f64>> {
    p.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 || row.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} is not a probability vector (sums to {total})"
                )));
            }
            Ok(-row
                .iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| x * x.ln())
                .sum::<f64>())
        })
        .collect()
}

/// Raw entropy-conditioning weights `1 + exp(-H(p_i))`.
pub fn entropy_weight_raw(p: &Tensor) -> Result<Vec<f64>> {
    Ok(row_entropy(p)?
        .into_iter()
        .map(|h| 1.0 + (-h).exp())
        .collect())
}

/// Entropy-conditioning weights rescaled to mean 1 over the batch.
pub fn entropy_weight(p: &Tensor) -> Result<Vec<f64>> {
    let raw = entropy_weight_raw(p)?;
    if raw.is_empty() {
        return Err(Error::EmptyReduction {
            op: "entropy_weight",
        });
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

/// Scalar values of the adversarial loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvLossParts {
    pub cls_loss: f64,
    /// `E_w[log D(h_s)] + E_w[log(1 - D(h_t))]`; the discriminator ascends it.
    pub dom_loss: f64,
    /// `cls_loss + lambda * dom_loss`.
    pub total: f64,
    pub lambda: f64,
}

/// Tape nodes produced by [`adversarial_loss`].
#[derive(Clone, Debug)]
pub struct AdvGraph {
    pub cls: Var,
    pub dom: Var,
    /// `cls - lambda * dom`: descending it trains the classifier and moves the
    /// discriminator up the domain term, while the reversal stage sends the
    /// feature learner and predictor down it.
    pub objective: Var,
    pub source_features: Var,
    pub target_features: Var,
    pub source_probs: Var,
    pub target_probs: Var,
    pub parts: AdvLossParts,
}

/// Cross-entropy on labeled source rows plus the entropy-conditioned domain
/// term on both domains.
pub fn adversarial_loss(
    tape: &mut Tape,
    model: &BoundModel,
    xs: Var,
    ys: &[usize],
    xt: Var,
    lambda: f64,
) -> Result<AdvGraph> {
    let (ns, nt) = (tape.shape(xs).0, tape.shape(xt).0);
    if ns == 0 || nt == 0 {
        return Err(Error::EmptyReduction {
            op: "adversarial_loss",
        });
    }
    if ys.len() != ns {
        return Err(Error::InvalidArgument(format!(
            "{} source labels for {ns} rows",
            ys.len()
        )));
    }
    let fs = forward_features(tape, model, xs)?;
    let ft = forward_features(tape, model, xt)?;
    let ps = predict(tape, model, fs)?;
    let pt = predict(tape, model, ft)?;

    let classes = tape.shape(ps).1;
    if let Some((row, &label)) = ys.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(Error::LabelOutOfRange {
            row,
            label,
            classes,
        });
    }
    let log_ps = tape.log(ps)?;
    let picked = tape.pick_per_row(log_ps, ys)?;
    let mean_ll = tape.mean(picked)?;
    let cls = tape.scale(mean_ll, -1.0)?;

    let ws = entropy_weight(tape.value(ps))?;
    let wt = entropy_weight(tape.value(pt))?;
    let ws = tape.constant(Tensor::column_vector(ws));
    let wt = tape.constant(Tensor::column_vector(wt));

    let source_term = {
        let d = domain_output(tape, model, fs, ps)?;
        let l = tape.log(d)?;
        let weighted = tape.mul(l, ws)?;
        tape.mean(weighted)?
    };
    let target_term = {
        let d = domain_output(tape, model, ft, pt)?;
        let neg = tape.scale(d, -1.0)?;
        let one_minus = tape.add_scalar(neg, 1.0)?;
        let l = tape.log(one_minus)?;
        let weighted = tape.mul(l, wt)?;
        tape.mean(weighted)?
    };
    let dom = tape.add(source_term, target_term)?;
    let ascent = tape.scale(dom, -lambda)?;
    let objective = tape.add(cls, ascent)?;

    let cls_loss = tape.value(cls).item()?;
    let dom_loss = tape.value(dom).item()?;
    Ok(AdvGraph {
        cls,
        dom,
        objective,
        source_features: fs,
        target_features: ft,
        source_probs: ps,
        target_probs: pt,
        parts: AdvLossParts {
            cls_loss,
            dom_loss,
            total: cls_loss + lambda * dom_loss,
            lambda,
        },
    })
}

fn domain_output(tape: &mut Tape, model: &BoundModel, f: Var, p: Var) -> Result<Var> {
    let rf = gradient_reversal(tape, f, model.grl_coeff)?;
    let rp = gradient_reversal(tape, p, model.grl_coeff)?;
    let h = multilinear_map(tape, rf, rp)?;
    let d = discriminate(tape, model, h)?;
    tape.clamp(d, D_CLAMP, 1.0 - D_CLAMP)
}
