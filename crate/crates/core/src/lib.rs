pub mod consolidate;
pub mod crawler;
pub mod evalharness;
pub mod fixtures;
pub mod gateway;
pub mod kbstore;
pub mod pipeline;
pub mod triple;
