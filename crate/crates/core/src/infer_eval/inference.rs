use rayon::prelude::*;

use crate::error::Result;
use crate::model::{EnsembleMode, ImageFeatures, PflModel, Prediction};
use crate::numcore::Rng;

/// Predicts every image with `samples` draws per distribution. Image `i`
/// uses the random stream `(seed, i)`, so the output does not depend on the
/// number of worker threads.
pub fn run_inference(
    model: &PflModel,
    images: &[ImageFeatures],
    samples: usize,
    mode: EnsembleMode,
    seed: u64,
) -> Result<Vec<Prediction>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, features)| {
            let mut rng = Rng::stream(seed, i as u64);
            model.predict(features, samples, mode, &mut rng)
        })
        .collect()
}
