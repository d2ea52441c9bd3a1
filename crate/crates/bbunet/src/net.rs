use landslide_core::patchkit::{DEM_BANDS, SPECTRAL_BANDS};
use landslide_tensor::ops::{abs_diff, concat_channels, conv2d, group_norm, maxpool2, relu, upsample_nearest2};
use landslide_tensor::{kaiming_normal, seeded_rng, Checkpoint, Parameter, Real, Tensor, TensorError};
use serde::{Deserialize, Serialize};

use crate::ModelError;

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub in_bands: usize,
    pub dem_bands: usize,
    pub stages: usize,
    pub stage_channels: Vec<usize>,
    pub norm_groups: usize,
    /// `false` gives the Unet-Siam-Diff baseline with no DEM path.
    pub use_bbf: bool,
    pub loss_pos_weight: f64,
    pub threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_bands: SPECTRAL_BANDS,
            dem_bands: DEM_BANDS,
            stages: 4,
            stage_channels: vec![16, 32, 64, 128],
            norm_groups: 8,
            use_bbf: true,
            loss_pos_weight: 5.0,
            threshold: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.stages == 0 || self.stage_channels.len() != self.stages {
            return bad(format!(
                "{} stages but stage_channels has {} entries",
                self.stages,
                self.stage_channels.len()
            ));
        }
        if self.in_bands == 0 || self.dem_bands == 0 || self.stage_channels.contains(&0) {
            return bad("band and channel counts must be positive".into());
        }
        if self.norm_groups == 0 {
            return bad("norm_groups must be positive".into());
        }
        if !(self.loss_pos_weight > 0.0 && self.loss_pos_weight.is_finite()) {
            return bad(format!("loss_pos_weight {} must be positive", self.loss_pos_weight));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} not in (0,1)", self.threshold));
        }
        Ok(())
    }

    /// Spatial sizes must halve cleanly `stages - 1` times.
    pub fn size_multiple(&self) -> usize {
        1 << (self.stages - 1)
    }
}

/// Group count for `channels`: `norm_groups` capped at `channels`, lowered
/// until it divides the channel count.
pub fn groups_for(channels: usize, norm_groups: usize) -> usize {
    let mut g = norm_groups.min(channels).max(1);
    while channels % g != 0 {
        g -= 1;
    }
    g
}

#[derive(Clone, Copy)]
enum Init {
    Kaiming(usize),
    Zeros,
    Ones,
}

/// Registers parameters in construction order; values come from `source`.
struct Builder<'a, T: Real> {
    params: Vec<Parameter<T>>,
    source: &'a mut dyn FnMut(&str, &[usize], Init) -> Vec<T>,
}

impl<T: Real> Builder<'_, T> {
    fn param(&mut self, name: String, shape: &[usize], init: Init, decay_exempt: bool) -> Tensor<T> {
        let data = (self.source)(&name, shape, init);
        let t = Tensor::leaf(shape, data);
        self.params.push(Parameter::new(name, t.clone(), decay_exempt));
        t
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> Conv<T> {
        let w = self.param(
            format!("{name}.weight"),
            &[cout, cin, k, k],
            Init::Kaiming(cin * k * k),
            false,
        );
        let b = bias.then(|| self.param(format!("{name}.bias"), &[cout], Init::Zeros, true));
        Conv { w, b, pad: k / 2 }
    }

    fn norm(&mut self, name: &str, channels: usize, norm_groups: usize) -> Norm<T> {
        Norm {
            scale: self.param(format!("{name}.scale"), &[channels], Init::Ones, true),
            shift: self.param(format!("{name}.shift"), &[channels], Init::Zeros, true),
            groups: groups_for(channels, norm_groups),
        }
    }

    fn double_conv(&mut self, name: &str, cin: usize, cout: usize, g: usize) -> DoubleConv<T> {
        DoubleConv {
            c1: self.conv(&format!("{name}.conv1"), cin, cout, 3, false),
            n1: self.norm(&format!("{name}.norm1"), cout, g),
            c2: self.conv(&format!("{name}.conv2"), cout, cout, 3, false),
            n2: self.norm(&format!("{name}.norm2"), cout, g),
        }
    }
}

#[derive(Clone)]
struct Conv<T: Real> {
    w: Tensor<T>,
    b: Option<Tensor<T>>,
    pad: usize,
}

impl<T: Real> Conv<T> {
    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        conv2d(x, &self.w, self.b.as_ref(), 1, self.pad)
    }
}

#[derive(Clone)]
struct Norm<T: Real> {
    scale: Tensor<T>,
    shift: Tensor<T>,
    groups: usize,
}

impl<T: Real> Norm<T> {
    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        group_norm(x, self.groups, &self.scale, &self.shift, T::of(NORM_EPS))
    }
}

/// `2 × (conv3x3 → group norm → relu)`.
#[derive(Clone)]
struct DoubleConv<T: Real> {
    c1: Conv<T>,
    n1: Norm<T>,
    c2: Conv<T>,
    n2: Norm<T>,
}

impl<T: Real> DoubleConv<T> {
    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let y = relu(&self.n1.apply(&self.c1.apply(x)?)?);
        Ok(relu(&self.n2.apply(&self.c2.apply(&y)?)?))
    }
}

/// Bitemporal-bimodal fusion: `conv(relu(norm(conv(diff ++ dem))))`.
#[derive(Clone)]
struct Bbf<T: Real> {
    c1: Conv<T>,
    n1: Norm<T>,
    c2: Conv<T>,
}

#[derive(Clone)]
struct Up<T: Real> {
    up: Conv<T>,
    block: DoubleConv<T>,
}

/// Siamese change-detection U-Net. Parameter tensors are shared handles, so
/// the pre and post passes read the same storage.
#[derive(Clone)]
pub struct BbuNet<T: Real> {
    config: ModelConfig,
    encoder: Vec<DoubleConv<T>>,
    dem_encoder: Vec<DoubleConv<T>>,
    bbf: Vec<Bbf<T>>,
    decoder: Vec<Up<T>>,
    head: Conv<T>,
    params: Vec<Parameter<T>>,
}

impl<T: Real> BbuNet<T> {
    fn build(config: &ModelConfig, source: &mut dyn FnMut(&str, &[usize], Init) -> Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let ch = &config.stage_channels;
        let g = config.norm_groups;
        let mut b = Builder {
            params: Vec::new(),
            source,
        };
        let mut encoder = Vec::new();
        for (k, &c) in ch.iter().enumerate() {
            let cin = if k == 0 { config.in_bands } else { ch[k - 1] };
            encoder.push(b.double_conv(&format!("encoder.stage{k}"), cin, c, g));
        }
        let (mut dem_encoder, mut bbf) = (Vec::new(), Vec::new());
        if config.use_bbf {
            for (k, &c) in ch.iter().enumerate() {
                let cin = if k == 0 { config.dem_bands } else { ch[k - 1] };
                dem_encoder.push(b.double_conv(&format!("dem_encoder.stage{k}"), cin, c, g));
            }
            for (k, &c) in ch.iter().enumerate() {
                bbf.push(Bbf {
                    c1: b.conv(&format!("bbf.stage{k}.conv1"), 2 * c, c, 3, false),
                    n1: b.norm(&format!("bbf.stage{k}.norm1"), c, g),
                    c2: b.conv(&format!("bbf.stage{k}.conv2"), c, c, 3, true),
                });
            }
        }
        let mut decoder = Vec::new();
        for k in 0..config.stages - 1 {
            decoder.push(Up {
                up: b.conv(&format!("decoder.stage{k}.up"), ch[k + 1], ch[k], 3, true),
                block: b.double_conv(&format!("decoder.stage{k}"), 2 * ch[k], ch[k], g),
            });
        }
        let head = b.conv("head", ch[0], 1, 1, true);
        Ok(Self {
            config: config.clone(),
            encoder,
            dem_encoder,
            bbf,
            decoder,
            head,
            params: b.params,
        })
    }

    /// Kaiming-normal convolution weights, zero biases and shifts, unit
    /// norm scales, all drawn from one seeded stream in parameter order.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = seeded_rng(seed);
        Self::build(config, &mut |_, shape, init| {
            let n = shape.iter().product();
            match init {
                Init::Kaiming(fan_in) => kaiming_normal(n, fan_in, &mut rng),
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
            }
        })
    }

    /// Same weights in another element type (e.g. `f64` for gradient checks).
    pub fn cast<U: Real>(&self) -> BbuNet<U> {
        let mut it = self.params.iter();
        BbuNet::build(&self.config, &mut |_, _, _| {
            it.next()
                .expect("identical layout")
                .tensor
                .data()
                .iter()
                .map(|v| U::of(v.as_f64()))
                .collect()
        })
        .expect("config already validated")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    fn check_input(&self, x: &Tensor<T>, bands: usize, what: &str) -> Result<(), ModelError> {
        let s = x.shape();
        let m = self.config.size_multiple();
        if s.len() != 4 || s[1] != bands {
            return Err(ModelError::Shape(format!("{what} must be [N,{bands},H,W], got {s:?}")));
        }
        if s[2] % m != 0 || s[3] % m != 0 || s[2] == 0 || s[3] == 0 {
            return Err(ModelError::Shape(format!(
                "{what} spatial size {}x{} is not a positive multiple of {m}",
                s[2], s[3]
            )));
        }
        Ok(())
    }

    fn run_encoder(blocks: &[DoubleConv<T>], x: &Tensor<T>) -> Result<Vec<Tensor<T>>, ModelError> {
        let mut feats: Vec<Tensor<T>> = Vec::with_capacity(blocks.len());
        for (k, block) in blocks.iter().enumerate() {
            let input = if k == 0 { x.clone() } else { maxpool2(&feats[k - 1])? };
            feats.push(block.apply(&input)?);
        }
        Ok(feats)
    }

    /// Stage features of the shared spectral encoder.
    pub fn encode(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>, ModelError> {
        self.check_input(x, self.config.in_bands, "spectral input")?;
        Self::run_encoder(&self.encoder, x)
    }

    /// Stage features of the DEM encoder (empty without the BBF branch).
    pub fn encode_dem(&self, dem: &Tensor<T>) -> Result<Vec<Tensor<T>>, ModelError> {
        self.check_input(dem, self.config.dem_bands, "DEM input")?;
        Self::run_encoder(&self.dem_encoder, dem)
    }

    /// Fuses a difference feature with a DEM feature at `stage`.
    pub fn bbf_fuse(&self, stage: usize, diff: &Tensor<T>, dem: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let block = self
            .bbf
            .get(stage)
            .ok_or_else(|| ModelError::Config(format!("no BBF block at stage {stage}")))?;
        if diff.shape()[2..] != dem.shape()[2..] {
            return Err(ModelError::Shape(format!(
                "BBF inputs differ spatially: {:?} vs {:?}",
                diff.shape(),
                dem.shape()
            )));
        }
        let x = concat_channels(diff, dem)?;
        let y = relu(&block.n1.apply(&block.c1.apply(&x)?)?);
        Ok(block.c2.apply(&y)?)
    }

    /// Change logits `[N,1,H,W]`.
    pub fn forward(&self, pre: &Tensor<T>, post: &Tensor<T>, dem: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        if pre.shape() != post.shape() {
            return Err(ModelError::Shape(format!(
                "pre {:?} and post {:?} differ",
                pre.shape(),
                post.shape()
            )));
        }
        let fa = self.encode(pre)?;
        let fb = self.encode(post)?;
        let mut skips = Vec::with_capacity(fa.len());
        for (a, b) in fa.iter().zip(&fb) {
            skips.push(abs_diff(a, b)?);
        }
        if self.config.use_bbf {
            if dem.shape()[0] != pre.shape()[0] || dem.shape()[2..] != pre.shape()[2..] {
                return Err(ModelError::Shape(format!(
                    "DEM {:?} does not match spectra {:?}",
                    dem.shape(),
                    pre.shape()
                )));
            }
            let fd = self.encode_dem(dem)?;
            for (k, d) in fd.iter().enumerate() {
                skips[k] = self.bbf_fuse(k, &skips[k], d)?;
            }
        }
        let mut x = skips.pop().expect("at least one stage");
        for k in (0..self.decoder.len()).rev() {
            let up = self.decoder[k].up.apply(&upsample_nearest2(&x)?)?;
            x = self.decoder[k].block.apply(&concat_channels(&up, &skips[k])?)?;
        }
        Ok(self.head.apply(&x)?)
    }
}

impl BbuNet<f32> {
    /// Rebuilds a model from a checkpoint whose header carries its config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_value(ck.header.model.clone())
            .map_err(|e| ModelError::CheckpointMismatch(format!("model config: {e}")))?;
        let model = Self::new(&config, 0)?;
        model
            .load(ck)
            .map_err(|e| ModelError::CheckpointMismatch(e.to_string()))?;
        Ok(model)
    }

    /// Copies checkpoint weights after checking names and shapes.
    pub fn load(&self, ck: &Checkpoint) -> Result<(), ModelError> {
        ck.restore_params(&self.params)
            .map_err(|e| ModelError::CheckpointMismatch(e.to_string()))
    }

    pub fn config_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(use_bbf: bool) -> ModelConfig {
        ModelConfig {
            stages: 2,
            stage_channels: vec![4, 8],
            norm_groups: 2,
            use_bbf,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn groups_rule() {
        assert_eq!(groups_for(16, 8), 8);
        assert_eq!(groups_for(4, 8), 4);
        assert_eq!(groups_for(12, 8), 6);
        assert_eq!(groups_for(7, 8), 7);
        assert_eq!(groups_for(10, 4), 2);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut c = ModelConfig::default();
        c.stages = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.threshold = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn names_unique_and_exemptions() {
        let m = BbuNet::<f32>::new(&tiny(true), 1).unwrap();
        let mut names: Vec<_> = m.params().iter().map(|p| p.name.as_str()).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        for p in m.params() {
            assert_eq!(p.decay_exempt, !p.name.ends_with(".weight"), "{}", p.name);
        }
        let base = BbuNet::<f32>::new(&tiny(false), 1).unwrap();
        assert!(base.params().iter().all(|p| !p.name.starts_with("dem_") && !p.name.starts_with("bbf")));
    }

    #[test]
    fn cast_preserves_values() {
        let m = BbuNet::<f32>::new(&tiny(true), 5).unwrap();
        let d: BbuNet<f64> = m.cast();
        for (a, b) in m.params().iter().zip(d.params()) {
            assert_eq!(a.name, b.name);
            let back: Vec<f32> = b.tensor.data().iter().map(|&v| v as f32).collect();
            assert_eq!(back, a.tensor.to_vec());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = BbuNet::<f32>::new(&tiny(true), 1).unwrap();
        let x = Tensor::zeros(&[1, 12, 8, 8]);
        assert!(m.encode(&Tensor::zeros(&[1, 11, 8, 8])).is_err());
        assert!(m.encode(&Tensor::zeros(&[1, 12, 7, 8])).is_err());
        assert!(m.forward(&x, &x, &Tensor::zeros(&[1, 4, 4, 4])).is_err());
        assert!(m.forward(&x, &Tensor::zeros(&[1, 12, 16, 16]), &Tensor::zeros(&[1, 4, 8, 8])).is_err());
        assert_eq!(m.forward(&x, &x, &Tensor::zeros(&[1, 4, 8, 8])).unwrap().shape(), [1, 1, 8, 8]);
    }
}
