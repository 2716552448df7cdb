//! Dataset ingestion, image emission and the checkpoint container.

mod checkpoint;
mod dataset;
mod idx;
mod images;

use std::path::Path;

use crate::error::{Error, Result};

pub use checkpoint::{
    decode_container, encode_container, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, DType,
    RngDescriptor, TensorRecord, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub(crate) use dataset::shuffled_order;
pub use dataset::Dataset;
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, load_idx_labels, parse_idx_images, parse_idx_labels,
    write_idx_images, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use images::{decode_png, encode_png, load_image_dir, load_png, montage, save_montage, save_png, to_bytes};

/// Loads a dataset from an IDX image file or a directory of PNGs.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if path.is_dir() {
        load_image_dir(path)
    } else {
        load_idx(path)
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
