pub mod econometrics;
pub mod empirical;
pub mod frame;
pub mod pipeline;
pub mod prospects;
pub mod synthdata;
