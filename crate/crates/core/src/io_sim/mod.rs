//! Data ingestion, simulated datasets and result files.

pub mod datasets;
pub mod results;
pub mod sim;
pub mod table;

pub use datasets::{
    cox_data, cox_schema, gaussian_response, gaussian_schema, glmm_data, glmm_schema, poisson_data, poisson_schema,
};
pub use results::{
    read_fit_state, read_metadata, read_samples_csv, read_summaries_csv, write_fit_state, write_grid_csv,
    write_marginal_csv, write_metadata, write_samples_csv, write_summaries_csv, FitMetadata, FitState, SampleTable,
    FORMAT_VERSION,
};
pub use sim::{
    constant_response, simulate_bernoulli_glmm, simulate_cox, simulate_gaussian_scale, simulate_poisson_aggregate,
    SimTruth, TruthRecord,
};
pub use table::{read_csv, read_csv_from, Column, ColumnTable, ColumnType, Schema};
