pub mod conv1d;
pub mod dense;
pub mod dropout;
pub mod lstm;
