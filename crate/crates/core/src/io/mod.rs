//! On-disk formats: PTMF matrices, label files, hub manifests and head dumps.

mod head;
mod labels;
mod manifest;
pub mod ptmf;

pub use head::{check_head_features, decode_head, encode_head, read_head, write_head};
pub use labels::{format_class_indices, parse_class_indices, read_labels, write_labels};
pub use manifest::{parse_manifest, read_manifest, write_manifest, HubManifest, ManifestModel};
pub use ptmf::{
    decode_matrix, encode_matrix, read_feature_file, read_matrix_file, write_feature_file,
    write_matrix_file,
};
