pub mod bench;
pub mod distill;
pub mod explain;
pub mod generate;
pub mod record;
pub mod serve;
