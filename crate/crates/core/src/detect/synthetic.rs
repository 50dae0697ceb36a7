//! Marker detector for generated corpora. Eyes are drawn as solid pure-red
//! and pure-blue disks; each disk is an 8-connected component of exactly
//! matching pixels and its centroid is the eye center.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::PixelPoint;
use crate::landmarks::{FaceLandmarks, LandmarkRecord};

pub const RED: Rgb<u8> = Rgb([255, 0, 0]);
pub const BLUE: Rgb<u8> = Rgb([0, 0, 255]);
pub const DETECTOR_TAG: &str = "synthetic-markers";

/// Centroids of the 8-connected components of pixels equal to `color`, in
/// raster order of each component's first pixel.
pub fn marker_centroids(image: &RgbImage, color: Rgb<u8>) -> Vec<PixelPoint> {
    let (w, h) = image.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut centroids = Vec::new();

    for start in 0..w * h {
        if visited[start] || *image.get_pixel((start % w) as u32, (start / w) as u32) != color {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            sx += x as f64;
            sy += y as f64;
            n += 1;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if !visited[nidx] && *image.get_pixel(nx as u32, ny as u32) == color {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        centroids.push(PixelPoint::new(sx / n as f64, sy / n as f64));
    }
    centroids
}

/// One face per red/blue marker pair. Pairs are formed greedily by
/// increasing red-to-blue distance; within a pair the marker with the
/// smaller x is the left eye. Faces are ordered by left-eye position.
pub fn detect_synthetic(image: &RgbImage) -> Result<Vec<FaceLandmarks>> {
    let reds = marker_centroids(image, RED);
    let blues = marker_centroids(image, BLUE);
    if reds.len() != blues.len() {
        return Err(Error::Detection(format!(
            "{} red markers but {} blue markers",
            reds.len(),
            blues.len()
        )));
    }

    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(reds.len() * blues.len());
    for (i, r) in reds.iter().enumerate() {
        for (j, b) in blues.iter().enumerate() {
            pairs.push(((r.x - b.x).hypot(r.y - b.y), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut red_used = vec![false; reds.len()];
    let mut blue_used = vec![false; blues.len()];
    let mut faces = Vec::with_capacity(reds.len());
    for (_, i, j) in pairs {
        if red_used[i] || blue_used[j] {
            continue;
        }
        red_used[i] = true;
        blue_used[j] = true;
        let (r, b) = (reds[i], blues[j]);
        let (left, right) = if b.x < r.x { (b, r) } else { (r, b) };
        faces.push(FaceLandmarks::new(vec![left], vec![right]));
    }
    faces.sort_by(|a, b| {
        let (pa, pb) = (a.left_eye[0], b.left_eye[0]);
        pa.y.total_cmp(&pb.y).then(pa.x.total_cmp(&pb.x))
    });
    Ok(faces)
}

/// Decodes by content sniffing, so files stored without an extension work.
pub fn decode_rgb(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io_at(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io_at(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

/// Decodes and detects one image file. Decoding or detection failures
/// produce a faceless record tagged with the failure, so a batch keeps going
/// and the image scores as "no face".
pub fn detect_synthetic_file(path: &Path, image_id: &str) -> LandmarkRecord {
    let decoded = match decode_rgb(path) {
        Ok(img) => img,
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "undecodable image, recording zero faces");
            let (w, h) = super::probe_dimensions(path).unwrap_or((1, 1));
            return LandmarkRecord::failed(image_id, w, h, "decode-error");
        }
    };
    let (width, height) = decoded.dimensions();
    match detect_synthetic(&decoded) {
        Ok(faces) => LandmarkRecord {
            image_id: image_id.to_string(),
            width,
            height,
            detector: DETECTOR_TAG.to_string(),
            faces,
        },
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "marker detection failed, recording zero faces");
            LandmarkRecord::failed(image_id, width, height, "detection-error")
        }
    }
}
