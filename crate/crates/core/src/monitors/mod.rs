//! Runtime monitors: camera occlusion detection on grayscale frames, and a
//! conformal power-martingale detector over nonconformity scores.

mod martingale;
mod occlusion;
mod pgm;

pub use martingale::{MartingaleConfig, MartingaleState};
pub use occlusion::{
    detect_occlusion, synth_frame, Blob, Frame, FrameError, FrameSpec, OcclusionConfig, OcclusionReport,
};
pub use pgm::{read_pgm, write_pgm};
