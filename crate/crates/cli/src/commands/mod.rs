pub mod evaluate;
pub mod prepare;
pub mod spectral;
pub mod synth;
pub mod train;
