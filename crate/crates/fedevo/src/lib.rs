//! File formats, dataset handling, plotting, and reporting around
//! `fedevo-core`: everything that needs the filesystem lives here, the
//! model math stays in the core crate.

pub mod dataio;
pub mod report;
pub mod snapshot_io;
pub mod svg;
