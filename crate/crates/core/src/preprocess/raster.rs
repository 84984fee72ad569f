use std::path::PathBuf;
use std::process::Command;

use image::{DynamicImage, GrayImage, RgbImage};
use lopdf::{dictionary, Document, Object, ObjectId, Stream};

use super::PreprocessError;

pub const RASTERIZER_ENV: &str = "CLAIMPIPE_RASTERIZER";

/// Turns a PDF payload into one raster per page, in page order.
///
/// Implementations must be reentrant: the pipeline calls them from several
/// workers at once.
pub trait Rasterizer: Send + Sync {
    fn name(&self) -> &str;
    fn rasterize(&self, pdf: &[u8], dpi: u32) -> Result<Vec<DynamicImage>, PreprocessError>;
}

/// Recovers the scanned raster embedded in each page of an image-only PDF
/// (the common shape of scanner and phone-camera output). Pages without an
/// embedded image are reported as unsupported. `dpi` is ignored: the native
/// scan resolution is returned and bounded later by the resize step.
#[derive(Debug, Default, Clone, Copy)]
pub struct EmbeddedImageRasterizer;

impl Rasterizer for EmbeddedImageRasterizer {
    fn name(&self) -> &str {
        "embedded"
    }

    fn rasterize(&self, pdf: &[u8], _dpi: u32) -> Result<Vec<DynamicImage>, PreprocessError> {
        let doc = Document::load_mem(pdf).map_err(|e| PreprocessError::Decode(e.to_string()))?;
        let pages = doc.get_pages();
        if pages.is_empty() {
            return Err(PreprocessError::EmptyDocument);
        }
        pages
            .iter()
            .map(|(&number, &page_id)| {
                let stream = largest_page_image(&doc, page_id)?.ok_or_else(|| {
                    PreprocessError::RasterizerUnavailable(format!(
                        "page {number} has no embedded raster; configure the pdftoppm rasterizer"
                    ))
                })?;
                decode_image_stream(stream)
                    .map_err(|e| PreprocessError::Decode(format!("page {number}: {e}")))
            })
            .collect()
    }
}

fn largest_page_image(doc: &Document, page_id: ObjectId) -> Result<Option<&Stream>, PreprocessError> {
    let decode = |e: lopdf::Error| PreprocessError::Decode(e.to_string());
    let (inline, referenced) = doc.get_page_resources(page_id).map_err(decode)?;
    let mut resource_dicts = Vec::new();
    if let Some(d) = inline {
        resource_dicts.push(d);
    }
    for id in referenced {
        resource_dicts.push(doc.get_dictionary(id).map_err(decode)?);
    }

    let mut best: Option<(i64, &Stream)> = None;
    for resources in resource_dicts {
        let Ok(xobjects) = doc.get_dict_in_dict(resources, b"XObject") else {
            continue;
        };
        for (_, value) in xobjects.iter() {
            let obj = match value {
                Object::Reference(id) => doc.get_object(*id).map_err(decode)?,
                other => other,
            };
            let Ok(stream) = obj.as_stream() else { continue };
            let is_image = stream
                .dict
                .get(b"Subtype")
                .and_then(Object::as_name)
                .is_ok_and(|n| n == b"Image");
            if !is_image {
                continue;
            }
            let w = stream.dict.get(b"Width").and_then(Object::as_i64).unwrap_or(0);
            let h = stream.dict.get(b"Height").and_then(Object::as_i64).unwrap_or(0);
            if best.is_none_or(|(area, _)| w * h > area) {
                best = Some((w * h, stream));
            }
        }
    }
    Ok(best.map(|(_, s)| s))
}

fn stream_filters(stream: &Stream) -> Vec<Vec<u8>> {
    match stream.dict.get(b"Filter") {
        Ok(Object::Name(n)) => vec![n.clone()],
        Ok(Object::Array(items)) => items
            .iter()
            .filter_map(|o| o.as_name().ok().map(<[u8]>::to_vec))
            .collect(),
        _ => Vec::new(),
    }
}

fn decode_image_stream(stream: &Stream) -> Result<DynamicImage, String> {
    let filters = stream_filters(stream);
    if filters.iter().any(|f| f == b"DCTDecode") {
        return image::load_from_memory_with_format(&stream.content, image::ImageFormat::Jpeg)
            .map_err(|e| e.to_string());
    }
    let data = match filters.as_slice() {
        [] => stream.content.clone(),
        [f] if f == b"FlateDecode" => {
            // lopdf refuses to inflate streams tagged as images
            let mut plain = stream.clone();
            plain.dict.remove(b"Subtype");
            plain.decompressed_content().map_err(|e| e.to_string())?
        }
        other => {
            let names: Vec<String> = other.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect();
            return Err(format!("unsupported image filter {names:?}"));
        }
    };
    let dim = |key: &[u8]| -> Result<u32, String> {
        stream
            .dict
            .get(key)
            .and_then(Object::as_i64)
            .ok()
            .and_then(|v| u32::try_from(v).ok())
            .filter(|v| *v > 0)
            .ok_or_else(|| format!("missing or invalid /{}", String::from_utf8_lossy(key)))
    };
    let (w, h) = (dim(b"Width")?, dim(b"Height")?);
    let bpc = stream.dict.get(b"BitsPerComponent").and_then(Object::as_i64).unwrap_or(8);
    if bpc != 8 {
        return Err(format!("unsupported bits per component {bpc}"));
    }
    let color = stream
        .dict
        .get(b"ColorSpace")
        .and_then(Object::as_name)
        .map(<[u8]>::to_vec)
        .unwrap_or_else(|_| b"DeviceGray".to_vec());
    match color.as_slice() {
        b"DeviceGray" => GrayImage::from_raw(w, h, data)
            .map(DynamicImage::ImageLuma8)
            .ok_or_else(|| "image data shorter than declared size".to_string()),
        b"DeviceRGB" => RgbImage::from_raw(w, h, data)
            .map(DynamicImage::ImageRgb8)
            .ok_or_else(|| "image data shorter than declared size".to_string()),
        other => Err(format!("unsupported color space {}", String::from_utf8_lossy(other))),
    }
}

/// Renders through poppler's `pdftoppm` at the requested DPI.
#[derive(Debug, Clone)]
pub struct PdftoppmRasterizer {
    program: PathBuf,
}

impl PdftoppmRasterizer {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
        }
    }
}

impl Default for PdftoppmRasterizer {
    fn default() -> Self {
        Self::new("pdftoppm")
    }
}

impl Rasterizer for PdftoppmRasterizer {
    fn name(&self) -> &str {
        "pdftoppm"
    }

    fn rasterize(&self, pdf: &[u8], dpi: u32) -> Result<Vec<DynamicImage>, PreprocessError> {
        let io = |e: std::io::Error| PreprocessError::RasterizerUnavailable(e.to_string());
        let dir = tempfile::tempdir().map_err(io)?;
        let input = dir.path().join("in.pdf");
        std::fs::write(&input, pdf).map_err(io)?;
        let prefix = dir.path().join("page");
        let output = Command::new(&self.program)
            .arg("-r")
            .arg(dpi.to_string())
            .arg("-png")
            .arg(&input)
            .arg(&prefix)
            .output()
            .map_err(|e| {
                PreprocessError::RasterizerUnavailable(format!("{}: {e}", self.program.display()))
            })?;
        if !output.status.success() {
            return Err(PreprocessError::Decode(
                String::from_utf8_lossy(&output.stderr).trim().to_string(),
            ));
        }
        // pdftoppm zero-pads the page number to the width of the page count
        let mut files: Vec<(u32, PathBuf)> = std::fs::read_dir(dir.path())
            .map_err(io)?
            .filter_map(Result::ok)
            .filter_map(|entry| {
                let name = entry.file_name().into_string().ok()?;
                let number = name.strip_prefix("page-")?.strip_suffix(".png")?.parse().ok()?;
                Some((number, entry.path()))
            })
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|(_, path)| image::open(&path).map_err(|e| PreprocessError::Decode(e.to_string())))
            .collect()
    }
}

/// Stands in when no rasterizer is configured; every PDF is refused.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnavailableRasterizer;

impl Rasterizer for UnavailableRasterizer {
    fn name(&self) -> &str {
        "none"
    }

    fn rasterize(&self, _pdf: &[u8], _dpi: u32) -> Result<Vec<DynamicImage>, PreprocessError> {
        Err(PreprocessError::RasterizerUnavailable(
            "no PDF rasterizer configured".into(),
        ))
    }
}

/// `embedded`, `pdftoppm`, `pdftoppm:<path>` or `none`.
pub fn rasterizer_from_name(name: &str) -> Result<Box<dyn Rasterizer>, PreprocessError> {
    match name.trim() {
        "" | "embedded" => Ok(Box::new(EmbeddedImageRasterizer)),
        "pdftoppm" => Ok(Box::new(PdftoppmRasterizer::default())),
        "none" => Ok(Box::new(UnavailableRasterizer)),
        other => match other.strip_prefix("pdftoppm:") {
            Some(path) => Ok(Box::new(PdftoppmRasterizer::new(path))),
            None => Err(PreprocessError::RasterizerUnavailable(format!(
                "unknown rasterizer `{other}`"
            ))),
        },
    }
}

pub fn rasterizer_from_env() -> Result<Box<dyn Rasterizer>, PreprocessError> {
    rasterizer_from_name(&std::env::var(RASTERIZER_ENV).unwrap_or_default())
}

/// Writes an image-only PDF with one full-page grayscale raster per page,
/// laid out at 150 DPI.
pub fn write_image_pdf(pages: &[GrayImage]) -> Result<Vec<u8>, lopdf::Error> {
    let mut doc = Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let mut kids = Vec::with_capacity(pages.len());
    for img in pages {
        let (w, h) = img.dimensions();
        let mut image_stream = Stream::new(
            dictionary! {
                "Type" => "XObject",
                "Subtype" => "Image",
                "Width" => w as i64,
                "Height" => h as i64,
                "ColorSpace" => "DeviceGray",
                "BitsPerComponent" => 8,
            },
            img.as_raw().clone(),
        );
        image_stream.compress()?;
        let image_id = doc.add_object(image_stream);
        let (wpt, hpt) = (w as f64 * 72.0 / 150.0, h as f64 * 72.0 / 150.0);
        let content = format!("q {wpt:.2} 0 0 {hpt:.2} 0 0 cm /Im0 Do Q");
        let content_id = doc.add_object(Stream::new(dictionary! {}, content.into_bytes()));
        let page_id = doc.add_object(dictionary! {
            "Type" => "Page",
            "Parent" => pages_id,
            "MediaBox" => vec![0.into(), 0.into(), Object::Real(wpt as f32), Object::Real(hpt as f32)],
            "Resources" => dictionary! {
                "XObject" => dictionary! { "Im0" => image_id },
            },
            "Contents" => content_id,
        });
        kids.push(Object::Reference(page_id));
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
        }),
    );
    let catalog_id = doc.add_object(dictionary! {
        "Type" => "Catalog",
        "Pages" => pages_id,
    });
    doc.trailer.set("Root", catalog_id);
    let mut out = Vec::new();
    doc.save_to(&mut out)?;
    Ok(out)
}
