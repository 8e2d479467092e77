pub mod convert;
pub mod denoise;
pub mod evaluate;
pub mod export;
pub mod inspect;
pub mod synthesize;
pub mod train;
