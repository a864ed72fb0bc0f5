//! Frozen output of the default desk encoder.
//!
//! Regenerate with `CCIM_UPDATE_GOLDEN=1 cargo test -p ccim-core --test golden`.

use std::path::PathBuf;

use ccim_core::confounder::{extract_context_features, ContextEncoder, ContextImage, RandomProjectionEncoder};
use ccim_core::features::{decode_feature_set, encode_feature_set};
use ccim_core::Grid;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/random_proj_seed7_ones4x4_d8.fea")
}

#[test]
fn random_projection_seed7_on_ones_matches_golden_file() {
    let encoder = RandomProjectionEncoder::new(16, 8, 7).unwrap();
    let image = ContextImage::unmasked(Grid::filled(4, 4, 1, 1.0), "ones");
    let features = extract_context_features(std::slice::from_ref(&image), &encoder).unwrap();
    let bytes = encode_feature_set(&features);
    let path = golden_path();
    if std::env::var_os("CCIM_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    let golden = std::fs::read(&path).expect("golden file present");
    assert_eq!(bytes, golden);
    let frozen = decode_feature_set(&golden).unwrap();
    assert_eq!(frozen.row_ids(), ["ones"]);
    // the f64 output rounds to the stored f32 row
    let direct: Vec<f32> = encoder.encode(&image).unwrap().iter().map(|&v| v as f32).collect();
    assert_eq!(frozen.row(0), direct.as_slice());
}
