//! Sentiment classification of urban outdoor images from fused deep and
//! semantic features, with the evaluation protocols and the city-scale
//! geospatial analysis built on top of it.

pub mod dataset;
pub mod experiment;
pub mod fusion;
pub mod geo;
pub mod synthetic;
