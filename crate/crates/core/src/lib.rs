pub mod audio;
pub mod cli;
pub mod curriculum;
pub mod eval;
pub mod forge;
pub mod llm;
pub mod model;
pub mod synth;
