//! Feature extraction from reconstruction triplets: global error metrics,
//! keypoint statistics on the residual, and patch-descriptor features over
//! a 32x32 block grid.

mod blocks;
mod descriptor;
mod errmetrics;
mod extract;
mod sift;

pub use blocks::{block_count, split_blocks, BLOCK_SIZE};
pub use descriptor::{write_network_file, NetworkLayer, PatchDescriptor, DESCRIPTOR_LEN};
pub use errmetrics::{average_hash, err_metrics, hash_distance, ssim_mean};
pub use extract::{
    read_features_csv, write_features_csv, Extractor, FeatureKind, FeatureRecord, Hardnet1Source,
};
pub use sift::{detect_keypoints, keypoint_summary, summarize_keypoints, Keypoint, SIFT_SUMMARY_LEN};
