pub mod abstraction;
pub mod analysis;
pub mod data;
pub mod report;
