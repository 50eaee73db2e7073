pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod model;
pub mod oracle;
