//! Split incoming documents into page rasters and bound their resolution.
//!
//! Images (PNG/JPEG) pass through as a single page. PDFs are handed to a
//! [`Rasterizer`]; which one is used is chosen by configuration or the
//! `CLAIMPIPE_RASTERIZER` environment variable. No orientation, deskew or
//! contrast correction happens here: the OCR backend owns that.

mod raster;
mod resize;

use std::fmt;

use image::ImageFormat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::PageImage;

pub use raster::{
    rasterizer_from_env, rasterizer_from_name, write_image_pdf, EmbeddedImageRasterizer,
    PdftoppmRasterizer, Rasterizer, UnavailableRasterizer, RASTERIZER_ENV,
};
pub use resize::{resize_page, scaled_dimensions};

pub const DEFAULT_MAX_DIM: u32 = 1024;
pub const DEFAULT_DPI: u32 = 150;
pub const DEFAULT_MAX_BYTES: usize = 50 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("document payload is empty")]
    EmptyPayload,
    #[error("document is {size} bytes, above the {limit} byte limit")]
    TooLarge { size: usize, limit: usize },
    #[error("unrecognized document format (expected pdf, png or jpeg)")]
    UnknownFormat,
    #[error("declared format {declared} does not match payload ({sniffed})")]
    FormatMismatch {
        declared: DocumentFormat,
        sniffed: DocumentFormat,
    },
    #[error("failed to decode document: {0}")]
    Decode(String),
    #[error("document has no pages")]
    EmptyDocument,
    #[error("rasterizer unavailable: {0}")]
    RasterizerUnavailable(String),
}

impl PreprocessError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyPayload | Self::EmptyDocument => "empty_document",
            Self::TooLarge { .. } => "payload_too_large",
            Self::UnknownFormat | Self::FormatMismatch { .. } => "unsupported_format",
            Self::Decode(_) => "decode_failed",
            Self::RasterizerUnavailable(_) => "rasterizer_unavailable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentFormat {
    Pdf,
    Png,
    Jpeg,
}

impl DocumentFormat {
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(b"%PDF-") {
            Some(Self::Pdf)
        } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Some(Self::Png)
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(Self::Jpeg)
        } else {
            None
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Pdf => "pdf",
            Self::Png => "png",
            Self::Jpeg => "jpg",
        }
    }
}

impl fmt::Display for DocumentFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pdf => "pdf",
            Self::Png => "png",
            Self::Jpeg => "jpeg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_dim: u32,
    pub dpi: u32,
    pub max_bytes: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_dim: DEFAULT_MAX_DIM,
            dpi: DEFAULT_DPI,
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }
}

/// An uploaded file, format established from its magic bytes.
#[derive(Clone)]
pub struct RawDocument {
    bytes: Vec<u8>,
    format: DocumentFormat,
    filename: String,
    digest: String,
}

impl RawDocument {
    pub fn new(filename: impl Into<String>, bytes: Vec<u8>) -> Result<Self, PreprocessError> {
        if bytes.is_empty() {
            return Err(PreprocessError::EmptyPayload);
        }
        let format = DocumentFormat::sniff(&bytes).ok_or(PreprocessError::UnknownFormat)?;
        let digest = sha256_hex(&bytes);
        Ok(Self {
            bytes,
            format,
            filename: filename.into(),
            digest,
        })
    }

    /// Like [`RawDocument::new`] but also checks a declared format.
    pub fn with_declared_format(
        filename: impl Into<String>,
        bytes: Vec<u8>,
        declared: DocumentFormat,
    ) -> Result<Self, PreprocessError> {
        let doc = Self::new(filename, bytes)?;
        if doc.format != declared {
            return Err(PreprocessError::FormatMismatch {
                declared,
                sniffed: doc.format,
            });
        }
        Ok(doc)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn format(&self) -> DocumentFormat {
        self.format
    }

    pub fn filename(&self) -> &str {
        &self.filename
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

impl fmt::Debug for RawDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawDocument")
            .field("filename", &self.filename)
            .field("format", &self.format)
            .field("len", &self.bytes.len())
            .field("digest", &self.digest)
            .finish()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest identifying page `index` of the document with digest `doc_digest`.
/// Fixture backends key on this value, and it survives resizing.
pub fn page_digest(doc_digest: &str, index: usize) -> String {
    sha256_hex(format!("{doc_digest}:{index}").as_bytes())
}

/// One [`PageImage`] per page, indices contiguous from 0.
pub fn split_document(
    doc: &RawDocument,
    rasterizer: &dyn Rasterizer,
    config: &PreprocessConfig,
) -> Result<Vec<PageImage>, PreprocessError> {
    if doc.len() > config.max_bytes {
        return Err(PreprocessError::TooLarge {
            size: doc.len(),
            limit: config.max_bytes,
        });
    }
    let rasters = match doc.format {
        DocumentFormat::Png | DocumentFormat::Jpeg => {
            let fmt = if doc.format == DocumentFormat::Png {
                ImageFormat::Png
            } else {
                ImageFormat::Jpeg
            };
            let img = image::load_from_memory_with_format(&doc.bytes, fmt)
                .map_err(|e| PreprocessError::Decode(e.to_string()))?;
            vec![img]
        }
        DocumentFormat::Pdf => rasterizer.rasterize(&doc.bytes, config.dpi)?,
    };
    if rasters.is_empty() {
        return Err(PreprocessError::EmptyDocument);
    }
    rasters
        .into_iter()
        .enumerate()
        .map(|(i, img)| {
            PageImage::new(i, img, page_digest(&doc.digest, i))
                .map_err(|e| PreprocessError::Decode(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{DynamicImage, GrayImage, Luma};

    fn png_bytes(w: u32, h: u32) -> Vec<u8> {
        let img = DynamicImage::ImageLuma8(GrayImage::from_pixel(w, h, Luma([200])));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).unwrap();
        out.into_inner()
    }

    fn jpeg_bytes(w: u32, h: u32) -> Vec<u8> {
        let img = DynamicImage::ImageRgb8(image::RgbImage::from_pixel(w, h, image::Rgb([10, 20, 30])));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Jpeg).unwrap();
        out.into_inner()
    }

    fn pages(n: usize) -> Vec<GrayImage> {
        (0..n)
            .map(|i| GrayImage::from_pixel(40 + i as u32, 60, Luma([(i * 40) as u8])))
            .collect()
    }

    #[test]
    fn sniffs_formats() {
        assert_eq!(DocumentFormat::sniff(b"%PDF-1.4\n"), Some(DocumentFormat::Pdf));
        assert_eq!(DocumentFormat::sniff(&png_bytes(2, 2)), Some(DocumentFormat::Png));
        assert_eq!(DocumentFormat::sniff(&jpeg_bytes(8, 8)), Some(DocumentFormat::Jpeg));
        assert_eq!(DocumentFormat::sniff(b"GIF89a"), None);
        assert!(matches!(RawDocument::new("x", vec![]), Err(PreprocessError::EmptyPayload)));
        assert!(matches!(RawDocument::new("x", b"hello".to_vec()), Err(PreprocessError::UnknownFormat)));
        assert!(matches!(
            RawDocument::with_declared_format("x.png", b"%PDF-1.4".to_vec(), DocumentFormat::Png),
            Err(PreprocessError::FormatMismatch { .. })
        ));
    }

    #[test]
    fn single_jpeg_is_one_page() {
        let doc = RawDocument::new("a.jpg", jpeg_bytes(30, 20)).unwrap();
        let pages = split_document(&doc, &EmbeddedImageRasterizer, &PreprocessConfig::default()).unwrap();
        assert_eq!(pages.len(), 1);
        assert_eq!(pages[0].page_index(), 0);
        assert_eq!((pages[0].width(), pages[0].height()), (30, 20));
        assert_eq!(pages[0].source_digest(), page_digest(doc.digest(), 0));
    }

    #[test]
    fn three_page_pdf_keeps_order() {
        let pdf = write_image_pdf(&pages(3)).unwrap();
        let doc = RawDocument::new("a.pdf", pdf).unwrap();
        let out = split_document(&doc, &EmbeddedImageRasterizer, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.len(), 3);
        for (i, p) in out.iter().enumerate() {
            assert_eq!(p.page_index(), i);
            assert_eq!(p.width(), 40 + i as u32);
            assert_eq!(p.image().to_luma8().get_pixel(0, 0).0[0], (i * 40) as u8);
        }
    }

    #[test]
    fn truncated_pdf_is_a_decode_error() {
        let pdf = write_image_pdf(&pages(3)).unwrap();
        let doc = RawDocument::new("a.pdf", pdf[..pdf.len() / 3].to_vec()).unwrap();
        let err = split_document(&doc, &EmbeddedImageRasterizer, &PreprocessConfig::default()).unwrap_err();
        assert!(matches!(err, PreprocessError::Decode(_)), "{err:?}");
    }

    #[test]
    fn corrupt_png_is_a_decode_error() {
        let mut bytes = png_bytes(10, 10);
        bytes.truncate(20);
        let doc = RawDocument::new("a.png", bytes).unwrap();
        assert!(matches!(
            split_document(&doc, &EmbeddedImageRasterizer, &PreprocessConfig::default()),
            Err(PreprocessError::Decode(_))
        ));
    }

    #[test]
    fn oversize_rejected_before_decode() {
        let doc = RawDocument::new("a.png", png_bytes(10, 10)).unwrap();
        let cfg = PreprocessConfig {
            max_bytes: 10,
            ..Default::default()
        };
        assert!(matches!(
            split_document(&doc, &EmbeddedImageRasterizer, &cfg),
            Err(PreprocessError::TooLarge { .. })
        ));
    }

    #[test]
    fn pdf_without_rasterizer_is_unavailable() {
        let pdf = write_image_pdf(&pages(1)).unwrap();
        let doc = RawDocument::new("a.pdf", pdf).unwrap();
        assert!(matches!(
            split_document(&doc, &UnavailableRasterizer, &PreprocessConfig::default()),
            Err(PreprocessError::RasterizerUnavailable(_))
        ));
    }
}
