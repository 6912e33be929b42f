//! Downstream analysis of spectra: density distances, outlier counting,
//! δ-vector extraction and cluster purity.

pub mod deltas;
pub mod distance;
pub mod outliers;
pub mod table;

pub use deltas::{cluster_purity, extract_deltas, sample_delta_columns, DeltaSet, PurityReport};
pub use distance::{js_divergence, normalized_wasserstein1, wasserstein1};
pub use outliers::{count_outliers, count_outliers_with, OutlierConfig, OutlierReport};
pub use table::{layer_distance_table, DistanceRow, DistanceTable};
