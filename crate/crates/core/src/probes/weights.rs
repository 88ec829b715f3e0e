use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample loss weights by label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        positive: 1.0,
        negative: 1.0,
    };

    pub fn of(&self, label: bool) -> f64 {
        if label {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Balanced weights `N / (2 * N_class)`: each label carries half the total
/// mass. A single-class vector is a degenerate concept.
pub fn class_balanced_weights(labels: &[bool]) -> Result<ClassWeights> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    Ok(ClassWeights {
        positive: n / (2.0 * pos),
        negative: n / (2.0 * neg),
    })
}
