//! Dataset ingestion and preprocessing.

mod csv_io;
mod pca;
mod standardize;

pub use csv_io::{load_csv, write_csv, LabelColumn};
pub use pca::{pca_fit, pca_transform, PcaModel, PcaRetain};
pub use standardize::{standardize_apply, standardize_fit, Standardizer};
