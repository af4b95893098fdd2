//! Case model, mining filters, packaging and dataset statistics.

pub mod case;
pub mod coverage;
pub mod fetch;
pub mod mining;
pub mod package;
pub mod stats;

pub use case::*;
pub use coverage::{filter_by_coverage, parse_lcov, CoverageError};
pub use fetch::{FetchConfig, FetchError, PrFetcher};
pub use mining::{extract_modified_functions, filter_prs, load_pr_export, CandidateFunction, MiningError, PrRecord};
pub use package::{cases_from_project, package_case, FunctionDescription, PackageError, PackageOptions};
pub use stats::{dataset_stats, DatasetStats, FunnelCounts, FunnelRow, StatsError};
