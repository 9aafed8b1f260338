#![no_main]

use libfuzzer_sys::fuzz_target;
use tacl_core::{assign_levels, build_manifest, compute_cluster_stats, ClusterModel, EmbeddingMatrix};

fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<ClusterModel>(data) else { return };
    // pair the model with a matrix carrying its own ids, one row per sample
    let Some(d) = model.centroids.first().map(Vec::len) else { return };
    if d == 0 || d > 64 || model.ids.len() > 4096 {
        return;
    }
    let values = (0..model.ids.len() * d).map(|i| (i % 7) as f32).collect();
    let Ok(matrix) = EmbeddingMatrix::new(d, values, model.ids.clone()) else { return };
    if model.check_against(&matrix).is_err() {
        return;
    }
    if let Ok(stats) = compute_cluster_stats(&matrix, &model) {
        let levels = assign_levels(&stats);
        if let Ok(manifest) = build_manifest(&matrix, &model, &levels) {
            assert_eq!(manifest.level_counts.total(), matrix.n());
        }
    }
});
