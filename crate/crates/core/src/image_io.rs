//! 8-bit RGB rasters, PNG/JPEG decoding, PNG encoding, and conversion to
//! channel-planar float tensors.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major interleaved RGB bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument {
                op: "ImageRgb::new",
                reason: format!("zero dimension {width}x{height}"),
            });
        }
        if data.len() != 3 * width * height {
            return Err(Error::ShapeMismatch {
                op: "ImageRgb::new",
                dim: "buffer length",
                expected: 3 * width * height,
                actual: data.len(),
            });
        }
        Ok(ImageRgb {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// On a zero dimension.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "zero image dimension");
        ImageRgb {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Reads a PNG or JPEG file; other formats are rejected.
pub fn decode(path: &Path) -> Result<ImageRgb> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bytes(&bytes).map_err(|message| Error::Decode {
        path: path.to_path_buf(),
        message,
    })
}

pub fn decode_bytes(bytes: &[u8]) -> std::result::Result<ImageRgb, String> {
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(format!("unsupported format {format:?} (PNG and JPEG only)"));
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| format!("{format:?}: {e}"))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    ImageRgb::new(w, h, img.into_raw()).map_err(|e| e.to_string())
}

/// Width and height from the file header, without decoding pixels.
pub fn dimensions(path: &Path) -> Result<(usize, usize)> {
    image::image_dimensions(path)
        .map(|(w, h)| (w as usize, h as usize))
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn encode_png(path: &Path, image: &ImageRgb) -> Result<()> {
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, image.data.clone())
        .expect("buffer length checked at construction");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Encode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

/// Bytes to `[3, H, W]` floats in `[0, 1]`.
pub fn to_tensor(image: &ImageRgb) -> Tensor {
    let plane = image.width * image.height;
    let mut t = Tensor::zeros(&[3, image.height, image.width]);
    let out = t.data_mut();
    for (i, px) in image.data.chunks_exact(3).enumerate() {
        for (c, &b) in px.iter().enumerate() {
            out[c * plane + i] = f64::from(b) / 255.0;
        }
    }
    t
}

/// `[3, H, W]` floats to bytes: clamp to `[0, 1]`, scale, round to nearest.
pub fn from_tensor(tensor: &Tensor) -> Result<ImageRgb> {
    let &[c, h, w] = tensor.shape() else {
        return Err(Error::InvalidShape {
            op: "from_tensor",
            reason: format!("expected [3, H, W], got {:?}", tensor.shape()),
        });
    };
    if c != 3 {
        return Err(Error::ShapeMismatch {
            op: "from_tensor",
            dim: "channels",
            expected: 3,
            actual: c,
        });
    }
    tensor.check_finite("image tensor")?;
    let plane = h * w;
    let src = tensor.data();
    let mut data = vec![0u8; 3 * plane];
    for (i, px) in data.chunks_exact_mut(3).enumerate() {
        for (ch, slot) in px.iter_mut().enumerate() {
            *slot = (src[ch * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    ImageRgb::new(w, h, data)
}
