pub mod cli;
pub mod config;
pub mod constants;
pub mod corrections;
pub mod hypforce;
pub mod lifshitz;
pub mod metrology;
pub mod optics;
pub mod quad;
