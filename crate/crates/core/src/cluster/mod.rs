//! Clustering of particularized-layer vectors, clustering quality, the
//! centroid post-training loop and label-similarity analyses.

mod kmeans;
mod labels;
mod posttrain;
mod quality;
mod report;
mod similarity;

pub use kmeans::{distinct_points, kmeans, nearest, ClusterModel, MAX_ITERATIONS};
pub use labels::{label_centroids, LabeledCentroid};
pub use posttrain::{fresh_centroids, posttrain, training_quality, PosttrainConfig, PosttrainReport};
pub use quality::{completeness_homogeneity, select_k, silhouette, ClusterQuality, KSelection, SILHOUETTE_SAMPLE};
pub use report::{cluster_novelties, read_cluster_report, write_cluster_report, ClusterRecord, MAX_NOVELTY_K};
pub use similarity::{
    similarity_by_clustering, similarity_by_misclassification, CoClusterRun, CoClusterSimilarity, SimilarLabel,
    SimilarityGroup, ACCEPT_THRESHOLD,
};
