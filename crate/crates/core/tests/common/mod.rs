#![allow(dead_code)]

pub mod fresnel_oracle;
pub mod dense_oracle;
pub mod psf_table;
