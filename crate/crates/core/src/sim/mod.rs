//! Synthetic data from the regression, classification and shift models.

mod dataset;
mod generate;
mod params;
pub mod rng;

pub use dataset::{
    format_float, read_csv, read_csv_path, standardize_dataset, standardize_jointly, write_csv,
    write_csv_path, Dataset, Scaling, Split,
};
pub use generate::{
    gen_classification, gen_classification_pair, gen_classification_raw, gen_linear_scm,
    gen_regression, gen_regression_pair, gen_regression_raw, gen_shift_data, Environment,
};
pub use params::{
    sample_classification_params, sample_regression_params, sample_shift_params,
    ScmClassificationParams, ScmRegressionParams, ShiftScmParams,
};
