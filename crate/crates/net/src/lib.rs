//! Network-facing pieces: the annotation service and the image fetcher.

pub mod fetch;
pub mod server;
