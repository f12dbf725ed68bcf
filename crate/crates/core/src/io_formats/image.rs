use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fields::GridField;

/// A 2D image with interleaved channels, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if values.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite image value at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Channel values of pixel `(x, y)`, with `y = 0` the top row.
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.values[i..i + self.channels]
    }

    /// Grid field over the unit square; axis 0 runs along columns and axis 1
    /// down the rows.
    pub fn to_grid_field(&self) -> GridField {
        GridField::new(
            vec![self.width, self.height],
            self.channels,
            self.values.iter().map(|&v| v as f64).collect(),
        )
        .expect("image dimensions validated on construction")
    }

    /// Inverse of [`ImageBuffer::to_grid_field`], rounding values to 32 bits.
    pub fn from_grid_field(grid: &GridField) -> Result<Self> {
        let res = grid.resolution();
        if res.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "images are 2D, grid has {} axes",
                res.len()
            )));
        }
        Self::new(
            res[0],
            res[1],
            grid.dout(),
            grid.values().iter().map(|&v| v as f32).collect(),
        )
    }
}

/// sRGB transfer function, encoded value in `[0, 1]` to linear light.
pub fn srgb_to_linear(v: f32) -> f32 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Linear light to sRGB-encoded value; inputs are clamped to `[0, 1]`.
pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next whitespace-delimited token and its starting offset. The single
    /// delimiter after the token is consumed.
    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.skip_whitespace();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("missing {what}")));
        }
        if self.pos == self.bytes.len() {
            return Err(Error::parse(self.pos, format!("header ends after {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("{what} is not ASCII")))?;
        self.pos += 1;
        Ok((start, text))
    }
}

/// Decodes a PFM image. Either byte order is accepted, as signalled by the
/// sign of the scale field.
pub fn read_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let (at, magic) = cur.token("magic")?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(Error::parse(
                at,
                format!("expected PF or Pf, found {other:?}"),
            ))
        }
    };
    let mut dimension = |what: &str| -> Result<usize> {
        let (at, t) = cur.token(what)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(
                at,
                format!("{what} must be a positive integer, found {t:?}"),
            )),
        }
    };
    let width = dimension("width")?;
    let height = dimension("height")?;
    let (at, t) = cur.token("scale")?;
    let scale: f64 = t
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| Error::parse(at, format!("scale must be a non-zero number, found {t:?}")))?;
    let little_endian = scale < 0.0;

    let start = cur.pos;
    let count = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| Error::parse(0, "image dimensions overflow"))?;
    let needed = count
        .checked_mul(4)
        .ok_or_else(|| Error::parse(0, "image dimensions overflow"))?;
    let available = bytes.len() - start;
    if available < needed {
        return Err(Error::parse(
            bytes.len(),
            format!(
                "truncated payload: expected {needed} bytes from offset {start}, found {available}"
            ),
        ));
    }

    let row_len = width * channels;
    let mut values = vec![0.0f32; count];
    for (i, chunk) in bytes[start..start + needed].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(Error::parse(start + 4 * i, "non-finite sample"));
        }
        // Rows are stored bottom to top.
        let (file_row, col) = (i / row_len, i % row_len);
        values[(height - 1 - file_row) * row_len + col] = v;
    }
    ImageBuffer::new(width, height, channels, values)
}

/// Encodes a PFM image with little-endian samples (scale -1.0).
pub fn write_pfm(image: &ImageBuffer) -> Vec<u8> {
    let magic = if image.channels == 3 { "PF" } else { "Pf" };
    let header = format!("{magic}\n{} {}\n-1.0\n", image.width, image.height);
    let row_len = image.width * image.channels;
    let mut out = Vec::with_capacity(header.len() + 4 * image.values.len());
    out.extend_from_slice(header.as_bytes());
    for row in image.values.chunks_exact(row_len).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes a PNG as sRGB into linear light. Alpha is dropped, gray stays one
/// channel, and 16-bit samples keep their full precision.
pub fn read_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let format = |e: png::DecodingError| Error::Format(format!("PNG: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(format)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(format)?;
    buf.truncate(info.buffer_size());

    let (in_channels, out_channels) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::Format("PNG: palette was not expanded".into()))
        }
    };
    let samples: Vec<f32> = match info.bit_depth {
        png::BitDepth::Eight => buf.iter().map(|&b| b as f32 / 255.0).collect(),
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        other => {
            return Err(Error::Format(format!(
                "PNG: unexpected bit depth {other:?}"
            )))
        }
    };
    let values = samples
        .chunks_exact(in_channels)
        .flat_map(|px| px[..out_channels].iter().map(|&v| srgb_to_linear(v)))
        .collect();
    ImageBuffer::new(
        info.width as usize,
        info.height as usize,
        out_channels,
        values,
    )
}

/// Encodes linear-light values as an 8-bit sRGB PNG.
pub fn write_png(image: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        encoder.set_color(if image.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_source_srgb(png::SrgbRenderingIntent::Perceptual);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
        let data: Vec<u8> = image
            .values
            .iter()
            .map(|&v| (linear_to_srgb(v) * 255.0).round() as u8)
            .collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    }
    Ok(out)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads a `.pfm` or `.png` file.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path)?;
    match extension(path).as_str() {
        "pfm" => read_pfm(&bytes),
        "png" => read_png(&bytes),
        other => Err(Error::Format(format!(
            "{}: unsupported image extension {other:?}",
            path.display()
        ))),
    }
}

/// Writes a `.pfm` or `.png` file.
pub fn write_image(path: &Path, image: &ImageBuffer) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "pfm" => write_pfm(image),
        "png" => write_png(image)?,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported image extension {other:?}",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads every `.pfm` / `.png` frame in a directory, ordered by file name.
pub fn read_frames(dir: &Path) -> Result<Vec<ImageBuffer>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(extension(p).as_str(), "pfm" | "png"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format(format!(
            "{}: no PFM or PNG frames",
            dir.display()
        )));
    }
    paths.iter().map(|p| read_image(p)).collect()
}

/// Stacks equally sized frames into a 3D grid field with time on axis 2.
pub fn frames_to_grid_field(frames: &[ImageBuffer]) -> Result<GridField> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("no frames".into()))?;
    let (w, h, c) = (first.width, first.height, first.channels);
    let mut values = Vec::with_capacity(w * h * c * frames.len());
    for (i, f) in frames.iter().enumerate() {
        if (f.width, f.height, f.channels) != (w, h, c) {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} is {}x{}x{}, expected {w}x{h}x{c}",
                f.width, f.height, f.channels
            )));
        }
        values.extend(f.values.iter().map(|&v| v as f64));
    }
    GridField::new(vec![w, h, frames.len()], c, values)
}
