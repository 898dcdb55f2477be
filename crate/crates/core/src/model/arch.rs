use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound added to softplus so σ is strictly positive.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// x·sigmoid(x). Smooth, so finite-difference checks are well posed.
    #[default]
    Silu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// One appliance; a single layer emits (μ, s).
    Single,
    /// k appliances; a σ layer emits s₁..s_k, then a second layer reads the
    /// trunk together with s and emits μ₁..μ_k.
    #[default]
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub seq_len: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub dense_units: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub head: HeadKind,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            seq_len: 99,
            conv_channels: vec![16, 16, 24, 24, 24],
            conv_kernels: vec![9, 7, 5, 5, 3],
            dense_units: 256,
            dropout: 0.25,
            activation: Activation::Silu,
            head: HeadKind::Multi,
        }
    }
}

impl Architecture {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.seq_len == 0 || self.seq_len % 2 == 0 {
            v.push(format!("model.seq_len must be odd and positive, got {}", self.seq_len));
        }
        if self.conv_channels.is_empty() {
            v.push("model.conv_channels must not be empty".into());
        }
        if self.conv_channels.len() != self.conv_kernels.len() {
            v.push("model.conv_channels and model.conv_kernels must have equal length".into());
        }
        if self.conv_channels.iter().any(|&c| c == 0) {
            v.push("model.conv_channels must be positive".into());
        }
        if self.conv_kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
            v.push("model.conv_kernels must be odd and positive".into());
        }
        if self.dense_units == 0 {
            v.push("model.dense_units must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            v.push(format!("model.dropout must lie in [0, 1), got {}", self.dropout));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Width of the flattened conv output.
    pub fn feature_width(&self) -> usize {
        self.seq_len * self.conv_channels.last().copied().unwrap_or(0)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for act in [Activation::Silu, Activation::Relu] {
            for z in [-3.0, -0.7, 0.4, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn even_kernel_rejected() {
        let arch = Architecture {
            conv_kernels: vec![9, 6, 5, 5, 3],
            ..Architecture::default()
        };
        assert!(arch.validate().is_err());
    }
}
