pub mod clifford;
pub mod experiment;
pub mod fit;
pub mod noise;
pub mod pauli;
pub mod physicality;
pub mod pulse;
pub mod reconstruct;
pub mod sequence;
pub mod simulate;
