//! 8-bit greyscale / 24-bit RGB rasters and their PNG encoding.

use std::fs::File;
use std::io::{BufRead, BufWriter, Seek, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorKind {
    Grey,
    Rgb,
}

impl ColorKind {
    pub fn channels(self) -> usize {
        match self {
            ColorKind::Grey => 1,
            ColorKind::Rgb => 3,
        }
    }
}

/// Row-major raster, 8 bits per sample, no alpha.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub color: ColorKind,
    pub data: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.color.channels();
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// Greyscale heatmap of non-negative values, scaled so the maximum maps to 255.
    pub fn heatmap(values: &[f64], width: usize, height: usize) -> Self {
        let max = values.iter().cloned().fold(0.0, f64::max);
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        Image {
            width: width as u32,
            height: height as u32,
            color: ColorKind::Grey,
            data: values
                .iter()
                .map(|&v| (v * scale).floor().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }
}

impl Image {
    /// White RGB canvas with each series drawn as a polyline; y spans `[0, 1]`.
    pub fn line_plot(series: &[(Vec<f64>, [u8; 3])], width: u32, height: u32) -> Self {
        let mut img = Image {
            width,
            height,
            color: ColorKind::Rgb,
            data: vec![255; (width * height * 3) as usize],
        };
        let longest = series.iter().map(|(v, _)| v.len()).max().unwrap_or(0);
        let to_px = |i: usize, y: f64| -> (i64, i64) {
            let x = if longest > 1 {
                i as f64 * (width - 1) as f64 / (longest - 1) as f64
            } else {
                0.0
            };
            let y = (1.0 - y.clamp(0.0, 1.0)) * (height - 1) as f64;
            (x.round() as i64, y.round() as i64)
        };
        for (values, colour) in series {
            for i in 0..values.len() {
                let a = to_px(i, values[i]);
                let b = if i + 1 < values.len() {
                    to_px(i + 1, values[i + 1])
                } else {
                    a
                };
                let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
                for s in 0..=steps {
                    let x = a.0 + (b.0 - a.0) * s / steps;
                    let y = a.1 + (b.1 - a.1) * s / steps;
                    let at = ((y as u32 * width + x as u32) * 3) as usize;
                    img.data[at..at + 3].copy_from_slice(colour);
                }
            }
        }
        img
    }
}

pub fn write_png<W: Write>(w: W, image: &Image) -> Result<()> {
    let expected = image.width as usize * image.height as usize * image.color.channels();
    if image.data.len() != expected {
        return Err(Error::Length {
            expected,
            got: image.data.len(),
        });
    }
    let mut enc = png::Encoder::new(w, image.width, image.height);
    enc.set_color(match image.color {
        ColorKind::Grey => png::ColorType::Grayscale,
        ColorKind::Rgb => png::ColorType::Rgb,
    });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&image.data)?;
    writer.finish()?;
    Ok(())
}

pub fn write_png_file(path: &Path, image: &Image) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_png(&mut w, image)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_png<R: BufRead + Seek>(r: R) -> Result<Image> {
    let mut reader = png::Decoder::new(r).read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let color = match info.color_type {
        png::ColorType::Grayscale => ColorKind::Grey,
        png::ColorType::Rgb => ColorKind::Rgb,
        other => return Err(Error::Format(format!("unsupported color type {other:?}"))),
    };
    buf.truncate(info.buffer_size());
    Ok(Image {
        width: info.width,
        height: info.height,
        color,
        data: buf,
    })
}
