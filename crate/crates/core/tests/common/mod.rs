#![allow(dead_code)]

pub mod geo_oracle;
pub mod gradcheck;
