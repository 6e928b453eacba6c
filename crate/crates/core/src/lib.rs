pub mod discgame;
pub mod error;
pub mod harness;
pub mod io;
pub mod measures;
pub mod qmat;
pub mod sampler;
pub mod sdp;
