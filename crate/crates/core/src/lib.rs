//! Community polling pipeline: census-driven synthetic populations, LLM
//! agent surveys about a proposed data center, response analytics and
//! conformal calibration of the resulting proportions.

pub mod attribute;
pub mod census;
pub mod fsutil;
pub mod impact;
pub mod survey;
pub mod template;
pub mod synth;
pub mod poll;
pub mod analytics;
pub mod calibration;
pub mod config;
pub mod pipeline;
pub mod report;
