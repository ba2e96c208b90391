use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fe, Field, FieldConfig};
use crate::linalg::ConvParams;

/// Layer shape. Weights live separately in [`LayerSpec`] so the architecture
/// can be shared without them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// `d_out x d_in` weight matrix, row-major.
    FullyConnected { d_in: usize, d_out: usize },
    /// Kernel flattened as documented on [`ConvParams`].
    Convolution { params: ConvParams },
    Relu,
}

impl LayerKind {
    pub fn is_linear(&self) -> bool {
        !matches!(self, LayerKind::Relu)
    }

    /// Number of weights, zero for ReLU.
    pub fn weight_len(&self) -> usize {
        match self {
            LayerKind::FullyConnected { d_in, d_out } => d_in * d_out,
            LayerKind::Convolution { params } => params.kernel_len(),
            LayerKind::Relu => 0,
        }
    }

    fn io(&self, prev: usize) -> (usize, usize) {
        match *self {
            LayerKind::FullyConnected { d_in, d_out } => (d_in, d_out),
            LayerKind::Convolution { params } => (params.input_len(), params.output_len()),
            LayerKind::Relu => (prev, prev),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::FullyConnected { .. } => "fully_connected",
            LayerKind::Convolution { .. } => "convolution",
            LayerKind::Relu => "relu",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Integer weights; present on the holder only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<i64>>,
}

/// Everything both parties agree on before any input is shared.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub field: FieldConfig,
    pub input_len: usize,
    pub layers: Vec<LayerKind>,
}

impl Architecture {
    /// Checks that every layer consumes what the previous one produces.
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.layers.is_empty() {
            return Err(Error::Shape("model has no layers".into()));
        }
        if self.input_len == 0 {
            return Err(Error::Shape("model input is empty".into()));
        }
        let mut prev = self.input_len;
        let mut prev_name = "input".to_string();
        for (i, l) in self.layers.iter().enumerate() {
            if let LayerKind::Convolution { params } = l {
                params.validate()?;
            }
            let (inp, out) = l.io(prev);
            if inp != prev {
                return Err(Error::Shape(format!(
                    "{prev_name} produces {prev} values but layer {i} ({}) expects {inp}",
                    l.name()
                )));
            }
            if out == 0 {
                return Err(Error::Shape(format!("layer {i} ({}) has no outputs", l.name())));
            }
            prev = out;
            prev_name = format!("layer {i} ({})", l.name());
        }
        Ok(())
    }

    /// `(input length, output length)` for every layer.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        let mut prev = self.input_len;
        self.layers
            .iter()
            .map(|l| {
                let io = l.io(prev);
                prev = io.1;
                io
            })
            .collect()
    }

    pub fn output_len(&self) -> usize {
        self.dims().last().map_or(self.input_len, |d| d.1)
    }

    pub fn relu_count(&self) -> usize {
        self.dims()
            .iter()
            .zip(&self.layers)
            .filter(|(_, l)| !l.is_linear())
            .map(|(d, _)| d.0)
            .sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(LayerKind::weight_len).sum()
    }
}

/// The holder's model: architecture plus weights.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub field: FieldConfig,
    pub input_len: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            field: self.field,
            input_len: self.input_len,
            layers: self.layers.iter().map(|l| l.kind).collect(),
        }
    }

    /// Shape checks plus weight presence and encoding bounds.
    pub fn validate(&self) -> Result<()> {
        self.architecture().validate()?;
        let field = Field::new(self.field);
        for (i, l) in self.layers.iter().enumerate() {
            match (&l.weights, l.kind.is_linear()) {
                (None, true) => return Err(Error::Shape(format!("layer {i} ({}) has no weights", l.kind.name()))),
                (Some(w), false) if !w.is_empty() => {
                    return Err(Error::Shape(format!("layer {i} (relu) carries weights")));
                }
                (Some(w), true) if w.len() != l.kind.weight_len() => {
                    return Err(Error::Shape(format!(
                        "layer {i} ({}) has {} weights, expected {}",
                        l.kind.name(),
                        w.len(),
                        l.kind.weight_len()
                    )));
                }
                _ => {}
            }
            for (j, &w) in l.weights.iter().flatten().enumerate() {
                field
                    .encode_int(w)
                    .map_err(|_| Error::Shape(format!("layer {i} weight {j} = {w} exceeds the signed range")))?;
            }
        }
        Ok(())
    }

    /// All weights of all layers concatenated, as field elements.
    pub fn flat_weights(&self, field: &Field) -> Result<Vec<Fe>> {
        let mut out = Vec::with_capacity(self.architecture().weight_count());
        for l in &self.layers {
            if l.kind.is_linear() {
                let w = l.weights.as_ref().ok_or_else(|| Error::Shape("missing weights".into()))?;
                for &x in w {
                    out.push(field.encode_int(x)?);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc(d_in: usize, d_out: usize) -> LayerKind {
        LayerKind::FullyConnected { d_in, d_out }
    }

    fn arch(input_len: usize, layers: Vec<LayerKind>) -> Architecture {
        Architecture {
            field: FieldConfig::default(),
            input_len,
            layers,
        }
    }

    #[test]
    fn mlp_shapes_compose() {
        let a = arch(8, vec![fc(8, 4), LayerKind::Relu, fc(4, 2)]);
        a.validate().unwrap();
        assert_eq!(a.dims(), vec![(8, 4), (4, 4), (4, 2)]);
        assert_eq!(a.relu_count(), 4);
        assert_eq!(a.weight_count(), 40);
        assert_eq!(a.output_len(), 2);
    }

    #[test]
    fn mismatch_names_both_layers() {
        let e = arch(8, vec![fc(8, 4), LayerKind::Relu, fc(5, 2)]).validate().unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("layer 1 (relu)") && msg.contains("layer 2 (fully_connected)"), "{msg}");
    }

    #[test]
    fn json_round_trip() {
        let m = ModelSpec {
            field: FieldConfig::default(),
            input_len: 2,
            layers: vec![
                LayerSpec {
                    kind: fc(2, 1),
                    weights: Some(vec![3, -4]),
                },
                LayerSpec {
                    kind: LayerKind::Relu,
                    weights: None,
                },
            ],
        };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains(r#""kind":"fully_connected""#));
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
        let f = Field::new(m.field);
        assert_eq!(back.flat_weights(&f).unwrap(), vec![f.elem(3), f.from_i64(-4)]);
    }

    #[test]
    fn weight_count_checked() {
        let m = ModelSpec {
            field: FieldConfig::default(),
            input_len: 2,
            layers: vec![LayerSpec {
                kind: fc(2, 1),
                weights: Some(vec![1]),
            }],
        };
        assert!(matches!(m.validate(), Err(Error::Shape(_))));
    }
}
