use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Loads an 8-bit grayscale PNG or PGM as intensities `p / 255`.
pub fn load_image_gray(path: &Path) -> Result<DenseMatrix> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if img.color() != ColorType::L8 {
        return Err(Error::Format(format!(
            "{}: expected 8-bit grayscale, found {:?}",
            path.display(),
            img.color()
        )));
    }
    let gray = img.into_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray
        .into_raw()
        .into_iter()
        .map(|p| f64::from(p) / 255.0)
        .collect();
    DenseMatrix::from_row_major(h, w, data)
}

/// Pixel value for an intensity: clamp to `[0, 1]`, scale, round half up.
pub(crate) fn to_pixel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Saves intensities as 8-bit grayscale; `.pgm` writes plain (ASCII) PGM,
/// anything else PNG.
pub fn save_image_gray(m: &DenseMatrix, path: &Path) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::domain("image has non-finite intensities"));
    }
    let pixels: Vec<u8> = m.as_slice().iter().map(|&v| to_pixel(v)).collect();
    let (w, h) = (m.cols() as u32, m.rows() as u32);
    let pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let encode_err = |e: image::ImageError| Error::Format(format!("{}: {e}", path.display()));
    if pgm {
        let out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Ascii))
            .write_image(&pixels, w, h, ExtendedColorType::L8)
            .map_err(encode_err)
    } else {
        image::save_buffer_with_format(
            path,
            &pixels,
            w,
            h,
            ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(encode_err)
    }
}
