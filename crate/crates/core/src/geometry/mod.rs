//! Exact nearest-neighbor search and Lloyd's KMeans over title embeddings.

mod kmeans;
mod knn;

pub use kmeans::{kmeans_assign, kmeans_fit, kmeans_fit_traced, ClusterModel, DEFAULT_MAX_ITERS};
pub use knn::{adaptive_filter, knn_query, knn_query_excluding, mean_distance, Neighbor, PointSet};
