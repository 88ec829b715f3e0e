//! Synthetic bundle with planted concept biases.
//!
//! Two classes, ten concepts, three layers. Concepts 0-4 are strongly
//! class-biased and written into dedicated units of some layers; concepts
//! 5-9 are near-uniform across classes and never encoded. Per-class concept
//! counts are exact, so the dataset bias matrix equals the prescribed rates.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::bundle::write_f32;
use crate::ingest::{ConceptEntry, DatasetManifest, LayerDescriptor, ANNOTATIONS_FILE, LABELS_FILE, MANIFEST_FILE};
use crate::matrix::Matrix;

pub const CLASSES: [&str; 2] = ["husky", "wolf"];
pub const PER_CLASS: usize = 200;
pub const UNITS: usize = 128;
const UNITS_PER_CONCEPT: usize = 20;
const SIGNAL: f64 = 3.0;
const NOISE: f64 = 0.5;

/// (name, category, rate in class 0, rate in class 1)
pub const CONCEPTS: [(&str, &str, f64, f64); 10] = [
    ("snow", "scene", 0.90, 0.10),
    ("grass", "scene", 0.10, 0.85),
    ("leash", "object", 0.80, 0.15),
    ("forest", "scene", 0.20, 0.90),
    ("harness", "object", 0.95, 0.05),
    ("fur", "texture", 0.50, 0.50),
    ("sky", "scene", 0.40, 0.45),
    ("rock", "object", 0.55, 0.50),
    ("water", "scene", 0.30, 0.35),
    ("eye", "part", 0.60, 0.55),
];

pub const LAYERS: [&str; 3] = ["layer1", "layer2", "layer3"];

/// First layer (0-based) in which each encoded concept appears; it stays
/// encoded in every later layer.
const FIRST_LAYER: [usize; 5] = [0, 0, 1, 1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFixture {
    /// Prescribed `[I, K]` rates, equal to the dataset bias matrix.
    pub rates: Matrix<f64>,
    /// `(layer_id, concept_index)` pairs carrying a linear signal.
    pub encoded: Vec<(String, usize)>,
    /// Concepts that were planted as biased.
    pub biased_concepts: Vec<usize>,
}

fn encoded_units(layer: usize, concept: usize) -> Vec<usize> {
    // a layer-specific rotation keeps the subsets disjoint within a layer
    (0..UNITS_PER_CONCEPT)
        .map(|j| (concept * UNITS_PER_CONCEPT + j + 7 * layer) % UNITS)
        .collect()
}

/// Writes the planted bundle into `root` and returns what was planted.
pub fn write_planted_fixture(root: &Path, seed: u64) -> Result<PlantedFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = CLASSES.len() * PER_CLASS;
    let k = CONCEPTS.len();
    let labels: Vec<usize> = (0..n).map(|i| i / PER_CLASS).collect();

    let mut ann = Matrix::<u8>::zeros(n, k);
    for (c, &(_, _, r0, r1)) in CONCEPTS.iter().enumerate() {
        for (class, rate) in [r0, r1].into_iter().enumerate() {
            let count = (rate * PER_CLASS as f64).round() as usize;
            for i in sample(&mut rng, PER_CLASS, count) {
                ann.set(class * PER_CLASS + i, c, 1);
            }
        }
    }

    let noise = Normal::new(0.0, NOISE).expect("valid normal");
    let mut encoded = Vec::new();
    let mut pooled = Vec::with_capacity(LAYERS.len());
    for (l, id) in LAYERS.iter().enumerate() {
        let mut m = Matrix::<f32>::from_fn(n, UNITS, |_, _| noise.sample(&mut rng) as f32);
        for (c, &first) in FIRST_LAYER.iter().enumerate() {
            if l < first {
                continue;
            }
            encoded.push((id.to_string(), c));
            for u in encoded_units(l, c) {
                for i in 0..n {
                    if ann.get(i, c) == 1 {
                        m.set(i, u, m.get(i, u) + SIGNAL as f32);
                    }
                }
            }
        }
        pooled.push(m);
    }

    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    // layer1 as 2x2 maps whose mean is the pooled value
    let spatial: Vec<f32> = pooled[0]
        .as_slice()
        .iter()
        .flat_map(|&v| {
            let a = noise.sample(&mut rng) as f32;
            let b = noise.sample(&mut rng) as f32;
            [v + a, v - a, v + b, v - b]
        })
        .collect();
    write_f32(&root.join("layer1.f32"), &spatial)?;
    write_f32(&root.join("layer2.f32"), pooled[1].as_slice())?;
    let mut text = String::new();
    for i in 0..n {
        let row: Vec<String> = pooled[2].row(i).iter().map(|v| v.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = root.join("layer3.csv");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let manifest = DatasetManifest {
        dataset_name: "planted".into(),
        image_count: n,
        classes: CLASSES.iter().map(|s| s.to_string()).collect(),
        concepts: CONCEPTS
            .iter()
            .map(|&(name, category, _, _)| ConceptEntry {
                name: name.into(),
                category: category.into(),
            })
            .collect(),
        layers: vec![
            layer("layer1", 1, true, "layer1.f32"),
            layer("layer2", 2, false, "layer2.f32"),
            layer("layer3", 3, false, "layer3.csv"),
        ],
    };
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

    let mut labels_csv = String::from("image_id,class\n");
    let mut ann_csv = String::from("image_id");
    for (name, ..) in CONCEPTS {
        ann_csv.push(',');
        ann_csv.push_str(name);
    }
    ann_csv.push('\n');
    for i in 0..n {
        labels_csv.push_str(&format!("img{i:04},{}\n", CLASSES[labels[i]]));
        ann_csv.push_str(&format!("img{i:04}"));
        for &v in ann.row(i) {
            ann_csv.push_str(if v == 1 { ",1" } else { ",0" });
        }
        ann_csv.push('\n');
    }
    let path = root.join(LABELS_FILE);
    fs::write(&path, labels_csv).map_err(|e| Error::io(&path, e))?;
    let path = root.join(ANNOTATIONS_FILE);
    fs::write(&path, ann_csv).map_err(|e| Error::io(&path, e))?;

    let rates = Matrix::from_fn(CLASSES.len(), k, |class, c| {
        let (_, _, r0, r1) = CONCEPTS[c];
        let count = ([r0, r1][class] * PER_CLASS as f64).round();
        count / PER_CLASS as f64
    });
    Ok(PlantedFixture {
        rates,
        encoded,
        biased_concepts: (0..FIRST_LAYER.len()).collect(),
    })
}

fn layer(id: &str, index: usize, spatial: bool, file: &str) -> LayerDescriptor {
    LayerDescriptor {
        layer_id: id.into(),
        index,
        unit_count: UNITS,
        spatial,
        height: spatial.then_some(2),
        width: spatial.then_some(2),
        file: file.into(),
    }
}
