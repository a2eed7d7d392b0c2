#![allow(dead_code)]

pub mod bl;
pub mod dense;
pub mod forecast_oracle;
pub mod random;
