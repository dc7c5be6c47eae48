//! MLP encoder `R^n -> R^l` and decoder `R^l -> R^n`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gram, Tape, Var};
use crate::error::{shape_err, Error, Result};

const CHECKPOINT_MAGIC: &[u8; 6] = b"MAECP1";

/// Nonlinearity applied after every hidden layer. Output layers are linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// No nonlinearity; makes the whole network affine.
    Identity,
}

impl Activation {
    fn code(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, a: &mut Array2<f64>) {
        if self == Activation::Tanh {
            a.mapv_inplace(f64::tanh);
        }
    }

    fn apply_on(self, tape: &mut Tape, a: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(a),
            Activation::Identity => a,
        }
    }
}

/// Layer widths of an autoencoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
}

impl ShapeSpec {
    /// Decoder hidden widths mirror the encoder's.
    pub fn symmetric(ambient_dim: usize, latent_dim: usize, hidden: &[usize], activation: Activation) -> Self {
        Self {
            ambient_dim,
            latent_dim,
            encoder_hidden: hidden.to_vec(),
            decoder_hidden: hidden.iter().rev().copied().collect(),
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Parameter {
                name: "latent_dim",
                reason: "must be positive".into(),
            });
        }
        if self.latent_dim >= self.ambient_dim {
            return Err(Error::Parameter {
                name: "latent_dim",
                reason: format!(
                    "latent dimension {} must be below ambient dimension {}",
                    self.latent_dim, self.ambient_dim
                ),
            });
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&w| w == 0) {
            return Err(Error::Parameter {
                name: "hidden",
                reason: "hidden widths must be positive".into(),
            });
        }
        Ok(())
    }

    fn encoder_dims(&self) -> Vec<usize> {
        std::iter::once(self.ambient_dim)
            .chain(self.encoder_hidden.iter().copied())
            .chain(std::iter::once(self.latent_dim))
            .collect()
    }

    fn decoder_dims(&self) -> Vec<usize> {
        std::iter::once(self.latent_dim)
            .chain(self.decoder_hidden.iter().copied())
            .chain(std::iter::once(self.ambient_dim))
            .collect()
    }
}

/// Affine layer acting on row vectors: `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `in x out`
    pub weight: Array2<f64>,
    /// `1 x out`
    pub bias: Array2<f64>,
}

impl Layer {
    pub fn new(weight: Array2<f64>, bias: Array2<f64>) -> Result<Self> {
        if bias.nrows() != 1 || bias.ncols() != weight.ncols() {
            return Err(shape_err(
                "layer bias",
                format!("1x{}", weight.ncols()),
                format!("{:?}", bias.dim()),
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub activation: Activation,
    /// Fixed length scale `s`: the encoder computes `s * f(x / s)` and the
    /// decoder `s * g(z / s)`, so hidden units see O(1) inputs while latent
    /// and ambient coordinates stay in data units. Not trained.
    pub scale: f64,
}

/// Tape handles for every parameter, in [`MlpModel::params`] order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    encoder: Vec<(Var, Var)>,
    decoder: Vec<(Var, Var)>,
}

impl ParamVars {
    pub fn all(&self) -> Vec<Var> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }
}

/// Root-mean-square coordinate of a (centered) point set, the default
/// [`MlpModel::scale`]. Falls back to 1 for all-zero data.
pub fn data_scale(points: ArrayView2<f64>) -> f64 {
    let rms = (points.iter().map(|v| v * v).sum::<f64>() / points.len().max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        rms
    } else {
        1.0
    }
}

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn init_layers(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    dims.windows(2)
        .map(|w| {
            let bound = init_bound(w[0], w[1]);
            let weight = Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..=bound));
            Layer {
                weight,
                bias: Array2::zeros((1, w[1])),
            }
        })
        .collect()
}

fn forward_plain(layers: &[Layer], activation: Activation, x: ArrayView2<f64>) -> Array2<f64> {
    let mut h = x.to_owned();
    let last = layers.len() - 1;
    for (i, layer) in layers.iter().enumerate() {
        h = h.dot(&layer.weight) + &layer.bias;
        if i != last {
            activation.apply(&mut h);
        }
    }
    h
}

fn forward_on(tape: &mut Tape, vars: &[(Var, Var)], activation: Activation, x: Var) -> Var {
    let mut h = x;
    let last = vars.len() - 1;
    for (i, &(w, b)) in vars.iter().enumerate() {
        let lin = tape.matmul(h, w);
        h = tape.add_row(lin, b);
        if i != last {
            h = activation.apply_on(tape, h);
        }
    }
    h
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &ShapeSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = init_layers(&spec.encoder_dims(), &mut rng);
        let decoder = init_layers(&spec.decoder_dims(), &mut rng);
        Ok(Self {
            encoder,
            decoder,
            activation: spec.activation,
            scale: 1.0,
        })
    }

    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(encoder: Vec<Layer>, decoder: Vec<Layer>, activation: Activation) -> Result<Self> {
        let model = Self {
            encoder,
            decoder,
            activation,
            scale: 1.0,
        };
        model.shape_spec()?.validate()?;
        Ok(model)
    }

    pub fn shape_spec(&self) -> Result<ShapeSpec> {
        fn chain(layers: &[Layer], what: &'static str) -> Result<Vec<usize>> {
            if layers.is_empty() {
                return Err(Error::Parameter {
                    name: what,
                    reason: "needs at least one layer".into(),
                });
            }
            for w in layers.windows(2) {
                if w[0].fan_out() != w[1].fan_in() {
                    return Err(shape_err(what, w[0].fan_out(), w[1].fan_in()));
                }
            }
            Ok(layers
                .iter()
                .map(Layer::fan_in)
                .chain(std::iter::once(layers.last().unwrap().fan_out()))
                .collect())
        }
        let enc = chain(&self.encoder, "encoder")?;
        let dec = chain(&self.decoder, "decoder")?;
        if enc.last() != dec.first() {
            return Err(shape_err("latent dimension", enc.last().unwrap(), dec.first().unwrap()));
        }
        if enc.first() != dec.last() {
            return Err(shape_err(
                "ambient dimension",
                enc.first().unwrap(),
                dec.last().unwrap(),
            ));
        }
        Ok(ShapeSpec {
            ambient_dim: enc[0],
            latent_dim: dec[0],
            encoder_hidden: enc[1..enc.len() - 1].to_vec(),
            decoder_hidden: dec[1..dec.len() - 1].to_vec(),
            activation: self.activation,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.encoder[0].fan_in()
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder[0].fan_in()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Encoder then decoder parameters, weight before bias within a layer.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let z = self.encode_batch(x.insert_axis(ndarray::Axis(0)))?;
        Ok(z.row(0).to_owned())
    }

    pub fn decode(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x = self.decode_batch(z.insert_axis(ndarray::Axis(0)))?;
        Ok(x.row(0).to_owned())
    }

    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.ambient_dim() {
            return Err(shape_err("encode input", self.ambient_dim(), x.ncols()));
        }
        Ok(self.scaled(|x| forward_plain(&self.encoder, self.activation, x), x))
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.latent_dim() {
            return Err(shape_err("decode input", self.latent_dim(), z.ncols()));
        }
        Ok(self.scaled(|z| forward_plain(&self.decoder, self.activation, z), z))
    }

    /// Registers every parameter as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let mut reg = |layers: &[Layer]| -> Vec<(Var, Var)> {
            layers
                .iter()
                .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
                .collect()
        };
        let encoder = reg(&self.encoder);
        let decoder = reg(&self.decoder);
        ParamVars { encoder, decoder }
    }

    /// Puts the parameters on the tape as constants (no gradients).
    pub fn register_frozen(&self, tape: &mut Tape) -> ParamVars {
        let mut reg = |layers: &[Layer]| -> Vec<(Var, Var)> {
            layers
                .iter()
                .map(|l| (tape.constant(l.weight.clone()), tape.constant(l.bias.clone())))
                .collect()
        };
        let encoder = reg(&self.encoder);
        let decoder = reg(&self.decoder);
        ParamVars { encoder, decoder }
    }

    pub fn encode_on(&self, tape: &mut Tape, vars: &ParamVars, x: Var) -> Var {
        self.scaled_on(tape, &vars.encoder, x)
    }

    pub fn decode_on(&self, tape: &mut Tape, vars: &ParamVars, z: Var) -> Var {
        self.scaled_on(tape, &vars.decoder, z)
    }

    /// Sets the fixed length scale; must be positive and finite.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Parameter {
                name: "scale",
                reason: format!("must be positive and finite, got {scale}"),
            });
        }
        self.scale = scale;
        Ok(self)
    }

    fn scaled(&self, f: impl Fn(ArrayView2<f64>) -> Array2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
        if self.scale == 1.0 {
            return f(x);
        }
        let s = self.scale;
        f((&x / s).view()) * s
    }

    fn scaled_on(&self, tape: &mut Tape, vars: &[(Var, Var)], x: Var) -> Var {
        if self.scale == 1.0 {
            return forward_on(tape, vars, self.activation, x);
        }
        let inner = tape.scale(x, 1.0 / self.scale);
        let out = forward_on(tape, vars, self.activation, inner);
        tape.scale(out, self.scale)
    }

    /// Exact decoder Jacobian at `z`, `n x l`.
    pub fn decoder_jacobian(&self, z: ArrayView1<f64>) -> Result<Array2<f64>> {
        if z.len() != self.latent_dim() {
            return Err(shape_err("decoder_jacobian input", self.latent_dim(), z.len()));
        }
        let mut tape = Tape::new();
        let vars = self.register_frozen(&mut tape);
        let zv = tape.input(z.to_owned().insert_axis(ndarray::Axis(0)));
        let x = self.decode_on(&mut tape, &vars, zv);
        Ok(tape.jacobian(x, zv)?.into_matrix())
    }

    /// Pullback of the ambient metric through the decoder, `J_D(z)^T J_D(z)`.
    pub fn decoder_pullback(&self, z: ArrayView1<f64>) -> Result<Array2<f64>> {
        let j = self.decoder_jacobian(z)?;
        Ok(gram(&j))
    }

    /// Binary checkpoint: `MAECP1`, shape header, the length scale, then
    /// parameters as row-major f64, all little-endian.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = self.shape_spec()?;
        w.write_all(CHECKPOINT_MAGIC)?;
        let mut header = vec![
            spec.ambient_dim as u64,
            spec.latent_dim as u64,
            spec.activation.code(),
            spec.encoder_hidden.len() as u64,
        ];
        header.extend(spec.encoder_hidden.iter().map(|&h| h as u64));
        header.push(spec.decoder_hidden.len() as u64);
        header.extend(spec.decoder_hidden.iter().map(|&h| h as u64));
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.scale.to_le_bytes())?;
        for p in self.params() {
            for v in p.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "checkpoint",
            path: path.to_path_buf(),
            reason,
        };
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let read_u64 = |r: &mut R| -> Result<usize> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated header".into()))?;
            usize::try_from(u64::from_le_bytes(b)).map_err(|_| bad("header value overflow".into()))
        };
        let ambient_dim = read_u64(&mut r)?;
        let latent_dim = read_u64(&mut r)?;
        let activation =
            Activation::from_code(read_u64(&mut r)? as u64).ok_or_else(|| bad("unknown activation code".into()))?;
        let widths = |r: &mut R| -> Result<Vec<usize>> {
            let n = read_u64(r)?;
            if n > 1024 {
                return Err(bad(format!("implausible layer count {n}")));
            }
            (0..n).map(|_| read_u64(r)).collect()
        };
        let encoder_hidden = widths(&mut r)?;
        let decoder_hidden = widths(&mut r)?;
        let spec = ShapeSpec {
            ambient_dim,
            latent_dim,
            encoder_hidden,
            decoder_hidden,
            activation,
        };
        spec.validate().map_err(|e| bad(e.to_string()))?;
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|_| bad("truncated header".into()))?;
        let mut model = MlpModel::init(&spec, 0)?
            .with_scale(f64::from_le_bytes(buf))
            .map_err(|e| bad(e.to_string()))?;
        for p in model.params_mut() {
            for v in p.iter_mut() {
                r.read_exact(&mut buf).map_err(|_| bad("truncated parameters".into()))?;
                *v = f64::from_le_bytes(buf);
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(BufReader::new(File::open(path)?), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_spec() -> ShapeSpec {
        ShapeSpec::symmetric(3, 2, &[8, 6], Activation::Tanh)
    }

    #[test]
    fn zero_final_layer_outputs_bias() {
        let mut m = MlpModel::init(&small_spec(), 1).unwrap();
        let last = m.encoder.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias = array![[0.25, -4.0]];
        let z = m.encode(array![1.0, -2.0, 3.0].view()).unwrap();
        assert_eq!(z, array![0.25, -4.0]);
        let last = m.decoder.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias = array![[1.0, 2.0, 3.0]];
        assert_eq!(m.decode(array![9.0, 9.0].view()).unwrap(), array![1.0, 2.0, 3.0]);
    }

    #[test]
    fn identical_points_identical_latents() {
        let m = MlpModel::init(&small_spec(), 2).unwrap();
        let x = array![[0.3, 0.1, -0.2], [0.3, 0.1, -0.2]];
        let z = m.encode_batch(x.view()).unwrap();
        assert_eq!(z.row(0), z.row(1));
    }

    #[test]
    fn shape_errors() {
        let m = MlpModel::init(&small_spec(), 2).unwrap();
        assert!(m.encode(array![1.0, 2.0].view()).is_err());
        assert!(m.decode(array![1.0, 2.0, 3.0].view()).is_err());
        assert!(m.decoder_pullback(array![1.0].view()).is_err());
    }

    #[test]
    fn latent_must_be_smaller_than_ambient() {
        let spec = ShapeSpec::symmetric(2, 2, &[4], Activation::Tanh);
        assert!(matches!(
            MlpModel::init(&spec, 0),
            Err(Error::Parameter { name: "latent_dim", .. })
        ));
    }

    #[test]
    fn init_determinism_and_bounds() {
        let a = MlpModel::init(&small_spec(), 7).unwrap();
        let b = MlpModel::init(&small_spec(), 7).unwrap();
        let c = MlpModel::init(&small_spec(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for layer in a.encoder.iter().chain(&a.decoder) {
            let bound = init_bound(layer.fan_in(), layer.fan_out());
            assert!(layer.weight.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn mismatched_layers_rejected() {
        let l = |i, o| Layer::new(Array2::zeros((i, o)), Array2::zeros((1, o))).unwrap();
        assert!(MlpModel::from_layers(vec![l(3, 4), l(5, 2)], vec![l(2, 3)], Activation::Tanh).is_err());
        assert!(MlpModel::from_layers(vec![l(3, 2)], vec![l(1, 3)], Activation::Tanh).is_err());
        assert!(MlpModel::from_layers(vec![l(3, 2)], vec![l(2, 3)], Activation::Tanh).is_ok());
    }

    #[test]
    fn orthonormal_linear_decoder_pullback_is_identity() {
        let s = 1.0 / 2f64.sqrt();
        // rows are latent directions: W = A^T with A having orthonormal columns
        let w = array![[s, s, 0.0], [0.0, 0.0, 1.0]];
        let enc = Layer::new(w.t().to_owned(), Array2::zeros((1, 2))).unwrap();
        let dec = Layer::new(w.clone(), Array2::zeros((1, 3))).unwrap();
        let m = MlpModel::from_layers(vec![enc.clone()], vec![dec], Activation::Identity).unwrap();
        let h = m.decoder_pullback(array![0.4, -1.2].view()).unwrap();
        assert!((&h - &Array2::<f64>::eye(2)).iter().all(|v| v.abs() < 1e-10));

        let dec2 = Layer::new(&w * 2.0, Array2::zeros((1, 3))).unwrap();
        let m2 = MlpModel::from_layers(vec![enc], vec![dec2], Activation::Identity).unwrap();
        let h2 = m2.decoder_pullback(array![0.4, -1.2].view()).unwrap();
        assert!((&h2 - &(Array2::<f64>::eye(2) * 4.0)).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MlpModel::init(&ShapeSpec::symmetric(5, 2, &[7, 4], Activation::Tanh), 3)
            .unwrap()
            .with_scale(2.5)
            .unwrap();
        let mut bytes = Vec::new();
        m.write_checkpoint(&mut bytes).unwrap();
        assert_eq!(&bytes[..6], b"MAECP1");
        let back = MlpModel::read_checkpoint(&bytes[..], Path::new("mem")).unwrap();
        assert_eq!(back, m);
        bytes.pop();
        assert!(MlpModel::read_checkpoint(&bytes[..], Path::new("mem")).is_err());
    }

    #[test]
    fn scale_conjugates_the_maps() {
        let m = MlpModel::init(&ShapeSpec::symmetric(3, 2, &[6], Activation::Tanh), 4).unwrap();
        let s = 7.0;
        let scaled = m.clone().with_scale(s).unwrap();
        let x = ndarray::array![[1.0, -2.0, 0.5]];
        let z = scaled.encode_batch(x.view()).unwrap();
        let inner = m.encode_batch((&x / s).view()).unwrap() * s;
        assert!((&z - &inner).iter().all(|v| v.abs() < 1e-12));
        // the decoder Jacobian is unchanged by conjugation with a scale
        let zq = ndarray::array![0.3, -0.1];
        let j = scaled.decoder_jacobian(zq.view()).unwrap();
        let j0 = m.decoder_jacobian((&zq / s).view()).unwrap();
        assert!((&j - &j0).iter().all(|v| v.abs() < 1e-12));
        assert!(m.with_scale(0.0).is_err());
    }
}
