pub mod conformal;
pub mod continuation;
pub mod jet;
pub mod manifold;
pub mod mobius;
pub mod oracles;
pub mod quadrature;
pub mod residues;
pub mod verify;
