//! Preprocessing, forecasting, segmentation and anomaly detection.

mod anomaly;
mod forecast;
mod kmeans;
mod pipeline;
mod preprocess;
mod tree;

pub use anomaly::detect_spike;
pub use forecast::{
    accuracy, fit_forecaster, predict, rolling_one_step, Forecast, ForecastParams, Forecaster, ForecasterKind,
};
pub use kmeans::{inertia, kmeans_fit, nearest, segment_assign, ClusterModel};
pub use pipeline::{segment_users, user_features, DemandForecaster, ForecastConfig, Segmentation, SegmentationConfig};
pub use preprocess::{
    aggregate, clean, normalize, one_hot, CleanReport, DemandSeries, FeatureMatrix, NormMeta, NormMethod, OneHotEncoder,
};
pub use tree::RegressionTree;
