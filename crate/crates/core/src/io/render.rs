use std::io::Write;

use thiserror::Error;

use super::isolines::Polyline;
use crate::network::FieldSnapshot;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("contour set is for a {got_w}x{got_h} field, frame is {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("malformed PGM: {0}")]
    BadPgm(String),
    #[error("PNG encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

/// An 8-bit greyscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Maps a value to `round(255 * clamp(v * scale, 0, 1))`. NaN maps to 0.
pub fn intensity(value: f64, scale: f64) -> u8 {
    let v = value * scale;
    if v.is_nan() {
        return 0;
    }
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Renders node `(x, y)` as pixel `(x, y)`.
pub fn render_frame(snapshot: &FieldSnapshot, scale: f64) -> GreyImage {
    GreyImage {
        width: snapshot.width(),
        height: snapshot.height(),
        pixels: snapshot.values.iter().map(|&v| intensity(v, scale)).collect(),
    }
}

impl GreyImage {
    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, RenderError> {
        let bad = |m: &str| RenderError::BadPgm(m.to_string());
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if bytes.get(pos) == Some(&b'#') {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("magic is not P5"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
        if pixels.len() != width * height {
            return Err(bad("raster size does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            pixels: pixels.to_vec(),
        })
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        encode_png(self.width, self.height, png::ColorType::Grayscale, &self.pixels)
    }

    /// Nearest-neighbour magnification.
    pub fn zoomed(&self, zoom: usize) -> Self {
        let (w, h) = (self.width * zoom, self.height * zoom);
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                pixels.push(self.pixels[(y / zoom) * self.width + x / zoom]);
            }
        }
        Self {
            width: w,
            height: h,
            pixels,
        }
    }
}

/// An 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_grey(grey: &GreyImage) -> Self {
        Self {
            width: grey.width,
            height: grey.height,
            pixels: grey.pixels.iter().map(|&g| [g, g, g]).collect(),
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        encode_png(self.width, self.height, png::ColorType::Rgb, &flat)
    }

    fn plot(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = color;
        }
    }

    /// Bresenham segment between pixel centres.
    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.plot(x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

/// Colours cycled over successive contour sets, oldest first.
const PALETTE: [[u8; 3]; 6] = [
    [230, 57, 70],
    [244, 162, 97],
    [233, 196, 106],
    [42, 157, 143],
    [69, 123, 157],
    [131, 56, 236],
];

/// One isoline set together with the field dimensions it was traced on.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub cycle: u64,
    pub width: usize,
    pub height: usize,
    pub level: f64,
    pub lines: Vec<Polyline>,
}

/// Draws each contour set over the zoomed base frame. Lattice coordinate
/// `(u, v)` maps to pixel `(u * zoom, v * zoom)`.
pub fn overlay_contours(base: &GreyImage, sets: &[ContourSet], zoom: usize) -> Result<RgbImage, RenderError> {
    if let Some(bad) = sets.iter().find(|s| s.width != base.width || s.height != base.height) {
        return Err(RenderError::DimensionMismatch {
            want_w: base.width,
            want_h: base.height,
            got_w: bad.width,
            got_h: bad.height,
        });
    }
    let zoom = zoom.max(1);
    let mut image = RgbImage::from_grey(&base.zoomed(zoom));
    let to_px = |(u, v): (f64, f64)| ((u * zoom as f64).floor() as i64, (v * zoom as f64).floor() as i64);
    for (i, set) in sets.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for line in &set.lines {
            for pair in line.points.windows(2) {
                image.line(to_px(pair[0]), to_px(pair[1]), color);
            }
            if line.closed && line.points.len() > 2 {
                image.line(to_px(line.points[line.points.len() - 1]), to_px(line.points[0]), color);
            }
        }
    }
    Ok(image)
}

/// Writes bytes to `path`, creating parent directories.
pub fn write_bytes(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(bytes)?;
    file.sync_all()
}
