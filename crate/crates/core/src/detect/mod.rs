//! Landmark providers other than precomputed files.

pub mod external;
pub mod synthetic;

pub use external::ExternalDetector;
pub use synthetic::{detect_synthetic, detect_synthetic_file};

/// Image dimensions from the header alone, sniffing the format from content.
pub fn probe_dimensions(path: &std::path::Path) -> Option<(u32, u32)> {
    image::ImageReader::open(path)
        .ok()?
        .with_guessed_format()
        .ok()?
        .into_dimensions()
        .ok()
}
