//! Binary PGM (P5) and PPM (P6) images, maxval 255, intensities in `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageFormat, ImageReader};

use crate::error::{DecodeError, Error, Result};
use crate::tensor::Tensor;

/// Decodes a PGM or PPM file into an `H x W x 3` tensor. Grayscale images are
/// replicated into all three channels.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor, DecodeError> {
    let img = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm)
        .decode()
        .map_err(|e| DecodeError::Image(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if img.color().channel_count() == 1 {
        img.to_luma8()
            .into_raw()
            .into_iter()
            .flat_map(|v| [f64::from(v) / 255.0; 3])
            .collect()
    } else {
        img.to_rgb8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect()
    };
    Tensor::from_vec(h, w, 3, data).map_err(|e| DecodeError::Image(e.to_string()))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| Error::decode(path, e))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// P5 bytes of the per-pixel channel mean.
pub fn encode_pgm(image: &Tensor) -> Vec<u8> {
    let c = image.channels() as f64;
    let raw: Vec<u8> = image
        .data()
        .chunks_exact(image.channels())
        .map(|px| quantize(px.iter().sum::<f64>() / c))
        .collect();
    encode(&raw, image, PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
}

/// P6 bytes of the first three channels (a single channel is replicated).
pub fn encode_ppm(image: &Tensor) -> Vec<u8> {
    let raw: Vec<u8> = image
        .data()
        .chunks_exact(image.channels())
        .flat_map(|px| {
            let at = |i: usize| quantize(px[i.min(px.len() - 1)]);
            [at(0), at(1), at(2)]
        })
        .collect();
    encode(&raw, image, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

fn encode(raw: &[u8], image: &Tensor, subtype: PnmSubtype, color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .encode(raw, image.width() as u32, image.height() as u32, color)
        .expect("in-memory PNM encoding of a well-formed buffer");
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_round_trip() {
        let img = Tensor::from_fn(3, 4, 3, |y, x, _| (y * 4 + x) as f64 / 11.0);
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5"));
        let back = decode_image(&bytes).unwrap();
        assert_eq!(back.shape(), (3, 4, 3));
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        // quantized values survive a second trip unchanged
        assert_eq!(encode_pgm(&back), bytes);
    }

    #[test]
    fn ppm_keeps_channels() {
        let img = Tensor::from_fn(2, 2, 3, |_, _, c| [0.0, 0.5, 1.0][c]);
        let back = decode_image(&encode_ppm(&img)).unwrap();
        assert_eq!(back.pixel(1, 1), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn hand_written_p5_with_comment() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.pixel(0, 1), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn garbage_is_a_decode_error() {
        assert!(decode_image(b"P9 nonsense").is_err());
    }
}
