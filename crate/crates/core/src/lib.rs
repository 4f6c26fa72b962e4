pub mod clock;
pub mod genetic;
pub mod harness;
pub mod instance;
pub mod localsearch;
pub mod relatedness;
pub mod splittour;
