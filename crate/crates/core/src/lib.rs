//! Keypoint-driven closed-loop control for simulated legged and arm robots.

pub mod decision;
pub mod geometry;
pub mod sim;
pub mod task;
pub mod tracker;
pub mod adapter;
pub mod brains;
pub mod config;
pub mod benchmark;
pub mod episode;
pub mod trace;
