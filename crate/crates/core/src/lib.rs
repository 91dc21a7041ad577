pub mod canonical;
pub mod goodturing;
pub mod harness;
pub mod measures;
pub mod mixing;
pub mod sources;
