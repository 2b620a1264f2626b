//! Data nuggets: reduce a large `N x P` dataset to a small set of weighted
//! representatives, refine them, and run weighted analytics on the result.
//!
//! ```
//! use nugget_core::{create_data_nuggets, Matrix, ReductionParams};
//!
//! let x = Matrix::from_column((0..400).map(|i| f64::from(i).sin()).collect()).unwrap();
//! let params = ReductionParams::defaults_for(400, 1).with_m_init(200).with_m(20).with_seed(7);
//! let set = create_data_nuggets(&x, &params).unwrap();
//! assert_eq!(set.len(), 20);
//! assert_eq!(set.total_weight(), 400);
//! ```
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod error;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod metric;
pub mod nugget;
pub mod pairs;
pub mod reduce;
pub mod refine;
pub mod rng;
pub mod scalar;
pub mod simgen;
pub mod wcluster;
pub mod wstats;

pub use error::{NuggetError, Result};
pub use linalg::{Mat, SymmetricEigen};
pub use matrix::{validate_matrix, DataMatrix, MatrixReport};
pub use metric::{distance, DistanceMetric};
pub use nugget::{CenterMode, DataNugget, DistanceEvals, NuggetSet, ReductionParams, ReductionStats};
pub use pairs::PairSearch;
pub use reduce::{assign_all, build_nuggets, create_data_nuggets, reduce_submatrix, select_initial_centers};
pub use refine::{largest_eigenvalue, refine_data_nuggets, split_nugget, RefineParams, RefineReport, Refinement};
pub use rng::SeedStream;
pub use scalar::Scalar;
pub use simgen::{
    aggregate_unique_rows, gen_binary_patients, gen_gaussian4, gen_largep, gen_smile, BinarySimSpec, Gaussian4Spec,
    LargePSpec, Simulated, SmileSpec,
};
pub use wcluster::{
    align_labels, best_permutation_accuracy, choose_k, weighted_kmeans, wwcss, Alignment, Clustering, KSelection,
    WKMeansParams,
};
pub use wstats::{
    decompose_covariance, density_grid, estimate_quantiles, grid_correlation, weighted_mean_cov, wpca,
    CovarianceDecomposition, DensityGrid, QuantileEstimate, QuantileFit, WPCAResult,
};

pub type Matrix = DataMatrix<f64>;
pub type Nugget = DataNugget<f64>;
pub type Nuggets = NuggetSet<f64>;
pub type Clusters = Clustering<f64>;
pub type Matrix32 = DataMatrix<f32>;
pub type Nugget32 = DataNugget<f32>;
pub type Nuggets32 = NuggetSet<f32>;
pub type Clusters32 = Clustering<f32>;
