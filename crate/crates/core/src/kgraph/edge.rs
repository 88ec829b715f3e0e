use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeColor {
    /// Dataset and model agree the association is strong.
    Green,
    /// Dataset association the model does not reach at any layer.
    Blue,
    /// Model association absent from the dataset.
    Red,
    /// Neither side clears the threshold.
    Gray,
}

/// Which layer probabilities drive edge inclusion and color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerMode {
    /// Any layer counts.
    Aggregate,
    /// Only the layer at this position (0-based) counts.
    Single(usize),
}

fn model_hit(model_probs: &[f64], tau: f64, mode: &LayerMode) -> Result<bool> {
    match *mode {
        LayerMode::Aggregate => Ok(model_probs.iter().any(|&p| p >= tau)),
        LayerMode::Single(l) => model_probs
            .get(l)
            .map(|&p| p >= tau)
            .ok_or_else(|| Error::InvalidArgument(format!("layer position {l} out of range"))),
    }
}

/// Green: dataset and (some / the selected) layer clear τ. Blue: dataset
/// clears τ but no considered layer does. Red: only the model clears τ.
/// Gray: neither does.
pub fn classify_edge(dataset_prob: f64, model_probs: &[f64], tau: f64, mode: &LayerMode) -> Result<EdgeColor> {
    let data = dataset_prob >= tau;
    let model = model_hit(model_probs, tau, mode)?;
    Ok(match (data, model) {
        (true, true) => EdgeColor::Green,
        (true, false) => EdgeColor::Blue,
        (false, true) => EdgeColor::Red,
        (false, false) => EdgeColor::Gray,
    })
}

/// Maximum model probability over layers.
pub fn edge_width(model_probs: &[f64]) -> Result<f64> {
    model_probs
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::InvalidArgument("empty layer vector".into()))
}

/// `aggregate` or `layer:<id>`, resolved against a layer list.
impl LayerMode {
    pub fn parse(text: &str, layers: &[String]) -> Result<Self> {
        if text == "aggregate" {
            return Ok(LayerMode::Aggregate);
        }
        let id = text.strip_prefix("layer:").unwrap_or(text);
        layers
            .iter()
            .position(|l| l == id)
            .map(LayerMode::Single)
            .ok_or_else(|| Error::Unknown {
                kind: "layer",
                name: id.to_string(),
            })
    }

    pub fn label(&self, layers: &[String]) -> String {
        match self {
            LayerMode::Aggregate => "aggregate".into(),
            LayerMode::Single(l) => format!("layer:{}", layers[*l]),
        }
    }
}

/// Serialized form of a layer mode before it is resolved against layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerModeLabel(pub String);

impl Serialize for LayerModeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LayerModeLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "aggregate" || s.starts_with("layer:") {
            Ok(Self(s))
        } else {
            Err(serde::de::Error::custom(format!("bad layer_mode {s:?}")))
        }
    }
}

impl fmt::Display for EdgeColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeColor::Green => "green",
            EdgeColor::Blue => "blue",
            EdgeColor::Red => "red",
            EdgeColor::Gray => "gray",
        })
    }
}

impl FromStr for EdgeColor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "green" => Ok(EdgeColor::Green),
            "blue" => Ok(EdgeColor::Blue),
            "red" => Ok(EdgeColor::Red),
            "gray" => Ok(EdgeColor::Gray),
            _ => Err(Error::Unknown {
                kind: "edge color",
                name: s.into(),
            }),
        }
    }
}
