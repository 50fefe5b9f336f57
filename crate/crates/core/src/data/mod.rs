//! Panel data and region adjacency: ingest, validation, standardisation.

mod graph;
mod panel;
mod standardize;

pub use graph::{load_adjacency, parse_adjacency, write_adjacency, RegionGraph};
pub use panel::{
    load_panel, read_panel, write_panel, CovariateGroup, PanelDataset, PanelObservation,
    PanelSchema,
};
pub use standardize::{
    apply_standardization, standardize_covariates, CovariateScaling, StandardizationRecord,
};
