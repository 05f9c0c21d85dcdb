pub mod checks;
pub mod diffusion;
pub mod gcn;
pub mod gdu;
pub mod graph;
pub mod model;
pub mod reference;
pub mod rng;
pub mod tensor;
pub mod toy;
pub mod train;
