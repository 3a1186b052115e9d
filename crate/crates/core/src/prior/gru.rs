//! Bidirectional-GRU variational motion autoencoder (inference only).
//!
//! Encoder: `e = lift(x)`; two bidirectional GRU layers over `e`;
//! `μ = mu(h) + mu_skip(e)`, `log σ² = logvar(h) + logvar_skip(e)`.
//! Decoder: `d = lift(z)`; two bidirectional GRU layers over `d`;
//! `x̂ = out(g) + out_skip(d)`. GRU cells follow the PyTorch convention
//! (gate order r, z, n; `n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))`,
//! `h' = (1 − z) ⊙ n + z ⊙ h`, zero initial state). Weights are stored as
//! f32 and evaluated in f64.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::archive::WeightArchive;
use super::PriorError;
use crate::bodymodel::MOTION_DIM;

pub const GRU_BACKEND: &str = "gru_vae";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruArchitecture {
    pub kind: String,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub latent_dim: usize,
    pub gate_order: String,
}

impl Default for GruArchitecture {
    fn default() -> Self {
        Self::with_sizes(256, 256, 2, 32)
    }
}

impl GruArchitecture {
    pub fn with_sizes(embed_dim: usize, hidden_dim: usize, num_layers: usize, latent_dim: usize) -> Self {
        Self { kind: "bigru_vae".into(), input_dim: MOTION_DIM, embed_dim, hidden_dim, num_layers, latent_dim, gate_order: "rzn".into() }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("architecture serializes")
    }

    /// Every tensor of the archive with its expected shape, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (e, h, l, x) = (self.embed_dim, self.hidden_dim, self.latent_dim, self.input_dim);
        let mut out = vec![("enc.lift.weight".to_string(), vec![e, x]), ("enc.lift.bias".to_string(), vec![e])];
        let gru = |prefix: &str, out: &mut Vec<(String, Vec<usize>)>| {
            for k in 0..self.num_layers {
                let input = if k == 0 { e } else { 2 * h };
                for sfx in ["", "_reverse"] {
                    out.push((format!("{prefix}.weight_ih_l{k}{sfx}"), vec![3 * h, input]));
                    out.push((format!("{prefix}.weight_hh_l{k}{sfx}"), vec![3 * h, h]));
                    out.push((format!("{prefix}.bias_ih_l{k}{sfx}"), vec![3 * h]));
                    out.push((format!("{prefix}.bias_hh_l{k}{sfx}"), vec![3 * h]));
                }
            }
        };
        gru("enc.gru", &mut out);
        for head in ["mu", "logvar"] {
            out.push((format!("enc.{head}.weight"), vec![l, 2 * h]));
            out.push((format!("enc.{head}.bias"), vec![l]));
            out.push((format!("enc.{head}_skip.weight"), vec![l, e]));
        }
        out.push(("dec.lift.weight".into(), vec![e, l]));
        out.push(("dec.lift.bias".into(), vec![e]));
        gru("dec.gru", &mut out);
        out.push(("dec.out.weight".into(), vec![x, 2 * h]));
        out.push(("dec.out.bias".into(), vec![x]));
        out.push(("dec.out_skip.weight".into(), vec![x, e]));
        out
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: DMatrix<f64>,
    b: Option<DVector<f64>>,
}

impl Linear {
    /// Applies to column-stacked inputs.
    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.w * x;
        if let Some(b) = &self.b {
            for mut col in y.column_iter_mut() {
                col += b;
            }
        }
        y
    }

    fn backward(&self, dy: &DMatrix<f64>) -> DMatrix<f64> {
        self.w.transpose() * dy
    }
}

#[derive(Debug, Clone)]
struct GruDirection {
    w_ih: DMatrix<f64>,
    w_hh: DMatrix<f64>,
    b_ih: DVector<f64>,
    b_hh: DVector<f64>,
}

/// Per-step activations kept for the reverse pass (columns indexed by time).
struct DirectionCache {
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    n: DMatrix<f64>,
    hn: DMatrix<f64>,
    h_prev: DMatrix<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GruDirection {
    fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    fn steps(t: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
        if reverse {
            Box::new((0..t).rev())
        } else {
            Box::new(0..t)
        }
    }

    fn forward(&self, x: &DMatrix<f64>, reverse: bool) -> (DMatrix<f64>, DirectionCache) {
        let (h_dim, t) = (self.hidden(), x.ncols());
        let mut gi = &self.w_ih * x;
        for mut col in gi.column_iter_mut() {
            col += &self.b_ih;
        }
        let mut out = DMatrix::zeros(h_dim, t);
        let mut cache = DirectionCache {
            r: DMatrix::zeros(h_dim, t),
            z: DMatrix::zeros(h_dim, t),
            n: DMatrix::zeros(h_dim, t),
            hn: DMatrix::zeros(h_dim, t),
            h_prev: DMatrix::zeros(h_dim, t),
        };
        let mut h = DVector::zeros(h_dim);
        for s in Self::steps(t, reverse) {
            let gh = &self.w_hh * &h + &self.b_hh;
            for i in 0..h_dim {
                let r = sigmoid(gi[(i, s)] + gh[i]);
                let z = sigmoid(gi[(h_dim + i, s)] + gh[h_dim + i]);
                let hn = gh[2 * h_dim + i];
                let n = (gi[(2 * h_dim + i, s)] + r * hn).tanh();
                cache.r[(i, s)] = r;
                cache.z[(i, s)] = z;
                cache.n[(i, s)] = n;
                cache.hn[(i, s)] = hn;
                cache.h_prev[(i, s)] = h[i];
                out[(i, s)] = (1.0 - z) * n + z * h[i];
            }
            h.copy_from(&out.column(s));
        }
        (out, cache)
    }

    /// Input gradient given the gradient with respect to every output state.
    fn backward(&self, cache: &DirectionCache, dout: &DMatrix<f64>, reverse: bool) -> DMatrix<f64> {
        let (h_dim, t) = (self.hidden(), dout.ncols());
        let mut dgi = DMatrix::zeros(3 * h_dim, t);
        let mut dh_next = DVector::zeros(h_dim);
        let order: Vec<usize> = Self::steps(t, reverse).collect();
        for &s in order.iter().rev() {
            let mut dgh = DVector::zeros(3 * h_dim);
            let mut dh_prev = DVector::zeros(h_dim);
            for i in 0..h_dim {
                let dh = dout[(i, s)] + dh_next[i];
                let (r, z, n, hn, hp) = (cache.r[(i, s)], cache.z[(i, s)], cache.n[(i, s)], cache.hn[(i, s)], cache.h_prev[(i, s)]);
                let dn = dh * (1.0 - z);
                let dz = dh * (hp - n);
                dh_prev[i] = dh * z;
                let da_n = dn * (1.0 - n * n);
                let da_r = da_n * hn * r * (1.0 - r);
                let da_z = dz * z * (1.0 - z);
                dgi[(i, s)] = da_r;
                dgi[(h_dim + i, s)] = da_z;
                dgi[(2 * h_dim + i, s)] = da_n;
                dgh[i] = da_r;
                dgh[h_dim + i] = da_z;
                dgh[2 * h_dim + i] = da_n * r;
            }
            dh_next = dh_prev + self.w_hh.tr_mul(&dgh);
        }
        self.w_ih.tr_mul(&dgi)
    }
}

#[derive(Debug, Clone)]
struct BiGru {
    layers: Vec<[GruDirection; 2]>,
}

impl BiGru {
    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<[DirectionCache; 2]>) {
        let mut input = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for [fwd, bwd] in &self.layers {
            let (hf, cf) = fwd.forward(&input, false);
            let (hb, cb) = bwd.forward(&input, true);
            let h = fwd.hidden();
            let mut out = DMatrix::zeros(2 * h, x.ncols());
            out.rows_mut(0, h).copy_from(&hf);
            out.rows_mut(h, h).copy_from(&hb);
            caches.push([cf, cb]);
            input = out;
        }
        (input, caches)
    }

    fn backward(&self, caches: &[[DirectionCache; 2]], dout: &DMatrix<f64>) -> DMatrix<f64> {
        let mut grad = dout.clone();
        for ([fwd, bwd], [cf, cb]) in self.layers.iter().zip(caches).rev() {
            let h = fwd.hidden();
            let df = grad.rows(0, h).into_owned();
            let db = grad.rows(h, h).into_owned();
            grad = fwd.backward(cf, &df, false) + bwd.backward(cb, &db, true);
        }
        grad
    }
}

/// Loaded GRU-VAE with its source archive.
#[derive(Debug, Clone)]
pub struct GruVae {
    pub architecture: GruArchitecture,
    pub arch_hash: String,
    archive: WeightArchive,
    enc_lift: Linear,
    enc_gru: BiGru,
    mu: Linear,
    logvar: Linear,
    mu_skip: Linear,
    logvar_skip: Linear,
    dec_lift: Linear,
    dec_gru: BiGru,
    out: Linear,
    out_skip: Linear,
}

fn matrix(archive: &WeightArchive, name: &str) -> DMatrix<f64> {
    let t = archive.get(name).expect("validated tensor");
    DMatrix::from_row_iterator(t.shape[0], t.shape[1], t.data.iter().map(|&v| v as f64))
}

fn vector(archive: &WeightArchive, name: &str) -> DVector<f64> {
    let t = archive.get(name).expect("validated tensor");
    DVector::from_iterator(t.shape[0], t.data.iter().map(|&v| v as f64))
}

impl GruVae {
    pub fn from_archive(archive: WeightArchive) -> Result<Self, PriorError> {
        if archive.backend != GRU_BACKEND {
            return Err(PriorError::MalformedArchive(format!("expected backend {GRU_BACKEND}, got {}", archive.backend)));
        }
        let architecture: GruArchitecture = serde_json::from_value(archive.architecture.clone())
            .map_err(|e| PriorError::MalformedArchive(format!("bad architecture descriptor: {e}")))?;
        if architecture.input_dim != MOTION_DIM || architecture.gate_order != "rzn" || architecture.num_layers == 0 {
            return Err(PriorError::MalformedArchive("unsupported architecture descriptor".into()));
        }
        let expected = architecture.tensor_shapes();
        for (name, shape) in &expected {
            let t = archive.get(name).ok_or_else(|| PriorError::MalformedArchive(format!("missing tensor {name}")))?;
            if &t.shape != shape {
                return Err(PriorError::ShapeMismatch { tensor: name.clone(), expected: shape.clone(), got: t.shape.clone() });
            }
        }
        if let Some(extra) = archive.tensors.iter().find(|t| !expected.iter().any(|(n, _)| n == &t.name)) {
            return Err(PriorError::MalformedArchive(format!("unexpected tensor {}", extra.name)));
        }
        let linear = |name: &str, bias: bool| Linear {
            w: matrix(&archive, &format!("{name}.weight")),
            b: bias.then(|| vector(&archive, &format!("{name}.bias"))),
        };
        let bigru = |prefix: &str| BiGru {
            layers: (0..architecture.num_layers)
                .map(|k| {
                    ["", "_reverse"].map(|sfx| GruDirection {
                        w_ih: matrix(&archive, &format!("{prefix}.weight_ih_l{k}{sfx}")),
                        w_hh: matrix(&archive, &format!("{prefix}.weight_hh_l{k}{sfx}")),
                        b_ih: vector(&archive, &format!("{prefix}.bias_ih_l{k}{sfx}")),
                        b_hh: vector(&archive, &format!("{prefix}.bias_hh_l{k}{sfx}")),
                    })
                })
                .collect(),
        };
        Ok(Self {
            arch_hash: archive.arch_hash(),
            enc_lift: linear("enc.lift", true),
            enc_gru: bigru("enc.gru"),
            mu: linear("enc.mu", true),
            logvar: linear("enc.logvar", true),
            mu_skip: linear("enc.mu_skip", false),
            logvar_skip: linear("enc.logvar_skip", false),
            dec_lift: linear("dec.lift", true),
            dec_gru: bigru("dec.gru"),
            out: linear("dec.out", true),
            out_skip: linear("dec.out_skip", false),
            architecture,
            archive,
        })
    }

    /// Weights drawn uniformly from `[-scale/√fan_in, scale/√fan_in]`.
    pub fn random(architecture: GruArchitecture, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut archive = WeightArchive::new(GRU_BACKEND, architecture.to_value());
        for (name, shape) in architecture.tensor_shapes() {
            let fan_in = if shape.len() == 2 { shape[1] } else { architecture.hidden_dim };
            let bound = scale / (fan_in as f64).sqrt();
            let data = (0..shape.iter().product::<usize>()).map(|_| rng.random_range(-bound..bound) as f32).collect();
            archive.push(&name, shape, data);
        }
        Self::from_archive(archive).expect("generated archive matches its architecture")
    }

    pub fn archive(&self) -> &WeightArchive {
        &self.archive
    }

    pub fn latent_dim(&self) -> usize {
        self.architecture.latent_dim
    }

    /// Rows of `x` are frames; returns `(μ, σ)` with frames as rows.
    pub fn encode_rows(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let e = self.enc_lift.forward(&x.transpose());
        let (h, _) = self.enc_gru.forward(&e);
        let mu = self.mu.forward(&h) + self.mu_skip.forward(&e);
        let logvar = self.logvar.forward(&h) + self.logvar_skip.forward(&e);
        (mu.transpose(), logvar.map(|v| (0.5 * v).exp()).transpose())
    }

    pub fn decode_rows(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dec_lift.forward(&z.transpose());
        let (g, _) = self.dec_gru.forward(&d);
        (self.out.forward(&g) + self.out_skip.forward(&d)).transpose()
    }

    /// Decoded motion and the vector-Jacobian product for `upstream`.
    pub fn decode_with_gradient(&self, z: &DMatrix<f64>, upstream: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dec_lift.forward(&z.transpose());
        let (g, caches) = self.dec_gru.forward(&d);
        let x = (self.out.forward(&g) + self.out_skip.forward(&d)).transpose();
        let dx = upstream.transpose();
        let dg = self.out.backward(&dx);
        let dd = self.out_skip.backward(&dx) + self.dec_gru.backward(&caches, &dg);
        (x, self.dec_lift.backward(&dd).transpose())
    }
}
