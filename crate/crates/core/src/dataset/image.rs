use std::io::Cursor;
use std::path::Path;

use super::DatasetError;

/// Value range an image's samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDomain {
    /// `[0, 255]`, possibly fractional after resampling.
    Byte,
    /// `[0.0, 1.0]`.
    Unit,
}

impl ValueDomain {
    pub fn max(self) -> f64 {
        match self {
            ValueDomain::Byte => 255.0,
            ValueDomain::Unit => 1.0,
        }
    }
}

/// H×W×C raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub domain: ValueDomain,
}

impl Image {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
        domain: ValueDomain,
    ) -> Result<Self, DatasetError> {
        if channels != 1 && channels != 3 {
            return Err(DatasetError::Image(format!("{channels} channels; expected 1 or 3")));
        }
        if data.len() != height * width * channels {
            return Err(DatasetError::Image(format!(
                "{} values for a {height}×{width}×{channels} image",
                data.len()
            )));
        }
        let max = domain.max();
        if let Some(v) = data.iter().find(|v| !(0.0..=max).contains(*v)) {
            return Err(DatasetError::Image(format!(
                "value {v} outside the {domain:?} domain [0, {max}]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            domain,
        })
    }

    pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self, DatasetError> {
        Self::new(
            height,
            width,
            channels,
            bytes.iter().map(|&b| f64::from(b)).collect(),
            ValueDomain::Byte,
        )
    }

    /// Constant image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64, domain: ValueDomain) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
            domain,
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Samples quantized to bytes (unit images are scaled by 255 first).
    pub fn to_bytes(&self) -> Vec<u8> {
        let scale = match self.domain {
            ValueDomain::Byte => 1.0,
            ValueDomain::Unit => 255.0,
        };
        self.data
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Channel-planar copy (C×H×W) of the samples, for tensor input.
    pub fn to_planar(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.push(self.get(y, x, c));
                }
            }
        }
        out
    }

    /// Inverse of [`Image::to_planar`].
    pub fn from_planar(
        height: usize,
        width: usize,
        channels: usize,
        planar: &[f64],
        domain: ValueDomain,
    ) -> Result<Self, DatasetError> {
        if planar.len() != height * width * channels {
            return Err(DatasetError::Image(format!(
                "{} planar values for a {height}×{width}×{channels} image",
                planar.len()
            )));
        }
        let mut data = vec![0.0; planar.len()];
        for c in 0..channels {
            for i in 0..height * width {
                data[i * channels + c] = planar[c * height * width + i];
            }
        }
        Image::new(height, width, channels, data, domain)
    }
}

/// Decodes a PNG or binary PPM (P6) file into a byte-domain image.
pub fn load_image(path: &Path) -> Result<Image, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else {
        Err(DatasetError::Format(format!(
            "{}: not a PNG or binary PPM (P6) file",
            path.display()
        )))
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, DatasetError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| DatasetError::Decode(format!("png header: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| DatasetError::Decode("png image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| DatasetError::Decode(format!("png data: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(DatasetError::Format(format!(
            "unsupported png bit depth {:?}; only 8-bit images are supported",
            info.bit_depth
        )));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    let buf = &buf[..info.buffer_size()];
    let (channels, stride) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 4),
        png::ColorType::Indexed => {
            return Err(DatasetError::Format("palette png was not expanded".into()))
        }
    };
    let bytes: Vec<u8> = buf
        .chunks_exact(stride)
        .flat_map(|px| px[..channels].iter().copied())
        .collect();
    Image::from_bytes(h, w, channels, &bytes)
}

/// Encodes a 1- or 3-channel image as an 8-bit PNG.
pub fn encode_png(img: &Image) -> Result<Vec<u8>, DatasetError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| DatasetError::Format(format!("png encode: {e}")))?;
        writer
            .write_image_data(&img.to_bytes())
            .map_err(|e| DatasetError::Format(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn ppm_token(bytes: &[u8], pos: &mut usize) -> Result<String, DatasetError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(DatasetError::Decode("truncated ppm header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image, DatasetError> {
    let mut pos = 0;
    if ppm_token(bytes, &mut pos)? != "P6" {
        return Err(DatasetError::Format("not a binary PPM (P6)".into()));
    }
    let mut number = |what: &str| -> Result<usize, DatasetError> {
        ppm_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| DatasetError::Decode(format!("bad ppm {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(DatasetError::Format(format!("ppm maxval {maxval}; only 255 is supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * 3;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| DatasetError::Decode(format!("truncated ppm raster: need {need} bytes")))?;
    Image::from_bytes(height, width, 3, raster)
}

/// Canonical P6 encoding: `P6\n<w> <h>\n255\n` then the raster.
pub fn encode_ppm(img: &Image) -> Result<Vec<u8>, DatasetError> {
    if img.channels != 3 {
        return Err(DatasetError::Format("ppm needs a 3-channel image".into()));
    }
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    Ok(out)
}

/// Warps to `side`×`side` with bilinear interpolation (aspect ratio is not
/// preserved). Sample positions use pixel centers; edges are clamped.
pub fn resize_to_square(img: &Image, side: usize) -> Result<Image, DatasetError> {
    if side == 0 {
        return Err(DatasetError::Image("resize side must be ≥ 1".into()));
    }
    if img.height == side && img.width == side {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / side as f64;
    let sx = img.width as f64 / side as f64;
    let mut data = Vec::with_capacity(side * side * img.channels);
    for oy in 0..side {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for ox in 0..side {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            for c in 0..img.channels {
                let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), tx);
                let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), tx);
                data.push(lerp(top, bottom, ty));
            }
        }
    }
    Ok(Image {
        height: side,
        width: side,
        channels: img.channels,
        data,
        domain: img.domain,
    })
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if a == b {
        a
    } else {
        a + t * (b - a)
    }
}
