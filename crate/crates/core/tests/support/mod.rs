#![allow(dead_code)]

pub mod checks;
pub mod oracle;
pub mod learning;
pub mod persistence;
pub mod fixture;
