//! Classical iris processing: segmentation, normalization, phase codes,
//! matching and quality scoring.

mod code;
mod quality;
mod segment;

pub use code::{
    best_hamming_distance, hamming_distance, iris_code, iris_code_with, match_codes, normalize_iris,
    normalize_iris_with, CodeConfig, IrisCode, PolarStrip,
};
pub use quality::{
    assess_quality, assess_quality_with, combine_components, log_energy, overall_quality, polygon_circularity,
    quality_components, quality_components_with, trace_pupil_boundary, write_quality_csv, QualityComponents,
    QualityConfig, QualityReport, FAILURE_SCORE, QUALITY_CSV_HEADER, SHARPNESS_REF,
};
pub use segment::{segment_iris, segment_iris_with, SegmentConfig, Segmentation};

use crate::error::{Error, Result};
use crate::image::Image;

/// Segment, unwrap and encode an image.
pub fn extract_code(image: &Image) -> Result<IrisCode> {
    extract_code_with(image, &CodeConfig::default(), &SegmentConfig::default())
}

pub fn extract_code_with(image: &Image, code: &CodeConfig, seg_cfg: &SegmentConfig) -> Result<IrisCode> {
    let seg = segment_iris_with(image, seg_cfg);
    let strip = normalize_iris_with(image, &seg, code)?;
    let c = iris_code_with(&strip, code);
    if !c.is_usable() {
        return Err(Error::SegmentationFailed);
    }
    Ok(c)
}
