pub mod audit;
pub mod corpus;
pub mod creativity;
pub mod digest;
pub mod embedding;
pub mod genharness;
pub mod markedness;
pub mod net;
pub mod numeric;
pub mod par;
pub mod sentiment;
pub mod stats;
pub mod textproc;
