use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::Dataset;

use super::probe::{train_probe, ProbeSettings, ProbeSpec, TrainedProbe};

/// Rows used for probe training: all of them at fraction 1.0, otherwise the
/// leading `ceil(fraction * N)` rows of a seeded permutation, in ascending
/// order.
pub fn training_rows(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f7a1));
    rows.truncate(((fraction * n as f64).ceil() as usize).clamp(1, n));
    rows.sort_unstable();
    rows
}

/// Trains a probe for every (layer, concept) pair of the selected layers
/// (all layers when `layers` is empty). Output is ordered by layer, then
/// concept.
pub fn train_all_probes(
    dataset: &Dataset,
    layers: &[String],
    settings: &ProbeSettings,
    exec: Execution,
) -> Result<Vec<TrainedProbe>> {
    settings.validate()?;
    let manifest = &dataset.manifest;
    let layer_positions: Vec<usize> = if layers.is_empty() {
        (0..manifest.layer_count()).collect()
    } else {
        layers
            .iter()
            .map(|id| {
                manifest.layer_position(id).ok_or_else(|| Error::Unknown {
                    kind: "layer",
                    name: id.clone(),
                })
            })
            .collect::<Result<_>>()?
    };
    let rows = training_rows(dataset.image_count(), settings.train_fraction, settings.seed);
    let layer_features: Vec<_> = layer_positions
        .iter()
        .map(|&pos| dataset.layers[pos].select_rows(&rows))
        .collect();
    let k = manifest.concept_count();
    let columns: Vec<Vec<bool>> = (0..k)
        .map(|c| rows.iter().map(|&r| dataset.annotations.get(r, c) == 1).collect())
        .collect();

    exec.try_map_range(layer_positions.len() * k, |job| {
        let (li, c) = (job / k, job % k);
        let spec = ProbeSpec {
            layer_id: manifest.layers[layer_positions[li]].layer_id.clone(),
            concept_index: c,
            concept: manifest.concepts[c].name.clone(),
            settings: ProbeSettings {
                seed: settings.seed.wrapping_add(c as u64),
                ..settings.clone()
            },
        };
        train_probe(&layer_features[li], &columns[c], &spec)
    })
}
