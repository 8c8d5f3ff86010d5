//! Core library for anchor-based ultrasound probe navigation.
//!
//! The crate is organized around interchangeable strategies selected by name
//! at runtime: navigation heads (`models`) that map a current frame plus
//! historical keyframes to per-view probe actions, and keyframe samplers
//! (`sampling`) that pick those keyframes from the scan history. Supporting
//! layers provide exact 6-DOF pose algebra (`pose`), a small reverse-mode
//! autodiff engine with the required neural building blocks (`tensor`),
//! frozen visual-feature providers (`encoders`), a deterministic synthetic
//! scan simulator (`sim`), and the dataset pipeline (`data`).

pub mod data;
pub mod encoders;
pub mod models;
pub mod pose;
pub mod rng;
pub mod sampling;
pub mod sim;
pub mod tensor;
