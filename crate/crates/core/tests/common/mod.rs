#![allow(dead_code)]
#![allow(unused_imports)]

pub use lmrj::selfcheck::{random_covariates, random_instance, random_spec, VARIANTS};
