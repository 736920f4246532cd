#![allow(dead_code)]

pub mod gradients;
pub mod jakes;
pub mod scalar_kf;
