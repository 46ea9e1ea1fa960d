//! Edge-sharpness blurriness of grayscale images.
//!
//! The sharpness of an image is the mean, over all pixels, of the largest
//! signed difference between the pixel and one of its 8-connected
//! neighbours. Blurriness of a filtered image relative to its original is
//! `|X - Y| / X`.

use std::fmt;

/// Upper bound on `width * height` accepted by the PNM reader.
pub const MAX_PIXELS: usize = 1 << 26;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum BlurError {
    #[error("image has no pixels")]
    Empty,
    #[error("pixel count does not match {width}x{height}")]
    Dimensions { width: usize, height: usize },
    #[error("original image has no positive sharpness")]
    Undefined,
    #[error("pnm: {0}")]
    Pnm(&'static str),
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, BlurError> {
        if width == 0 || height == 0 {
            return Err(BlurError::Empty);
        }
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(BlurError::Dimensions { width, height });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_rows(rows: &[&[u8]]) -> Result<Self, BlurError> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(BlurError::Dimensions { width, height: rows.len() });
        }
        Self::new(width, rows.len(), rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    fn local_max_difference(&self, x: usize, y: usize) -> i32 {
        let v = i32::from(self.get(x, y));
        let mut best: Option<i32> = None;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                    continue;
                }
                let d = v - i32::from(self.get(nx as usize, ny as usize));
                best = Some(best.map_or(d, |b| b.max(d)));
            }
        }
        best.unwrap_or(0)
    }
}

impl fmt::Display for GrayImage {
    /// Plain PGM.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "P2\n{} {}\n255", self.width, self.height)?;
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Mean over all pixels of the signed max difference to a neighbour.
pub fn edge_sharpness(img: &GrayImage) -> f64 {
    let mut sum: i64 = 0;
    for y in 0..img.height {
        for x in 0..img.width {
            sum += i64::from(img.local_max_difference(x, y));
        }
    }
    sum as f64 / img.pixels.len() as f64
}

/// `|X - Y| / X` for the sharpness `X` of `original` and `Y` of `blurred`.
pub fn blurriness(original: &GrayImage, blurred: &GrayImage) -> Result<f64, BlurError> {
    let x = edge_sharpness(original);
    // signed maxima can make X negative, e.g. a lone bright pixel between dark ones
    if x <= 0.0 {
        return Err(BlurError::Undefined);
    }
    Ok((x - edge_sharpness(blurred)).abs() / x)
}

/// Integer luma of an RGB triple.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b)) / 1000) as u8
}

struct Tokens<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Tokens<'_> {
    fn next_token(&mut self) -> Option<&[u8]> {
        loop {
            match self.s.get(self.pos)? {
                b'#' => {
                    while self.s.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(|&c| !c.is_ascii_whitespace() && c != b'#') {
            self.pos += 1;
        }
        Some(&self.s[start..self.pos])
    }

    fn number(&mut self, what: &'static str) -> Result<usize, BlurError> {
        let tok = self.next_token().ok_or(BlurError::Pnm(what))?;
        if tok.is_empty() || tok.len() > 9 || !tok.iter().all(u8::is_ascii_digit) {
            return Err(BlurError::Pnm(what));
        }
        Ok(std::str::from_utf8(tok).expect("digits").parse().expect("short digit run"))
    }
}

/// Reads a plain-text PGM (`P2`) or PPM (`P3`) image. Samples are rescaled
/// to 0..=255 and colour is reduced with [`luma`].
pub fn parse_pnm(bytes: &[u8]) -> Result<GrayImage, BlurError> {
    let mut t = Tokens { s: bytes, pos: 0 };
    let channels = match t.next_token() {
        Some(b"P2") => 1,
        Some(b"P3") => 3,
        _ => return Err(BlurError::Pnm("expected P2 or P3 header")),
    };
    let width = t.number("bad width")?;
    let height = t.number("bad height")?;
    let maxval = t.number("bad maxval")?;
    if width == 0 || height == 0 {
        return Err(BlurError::Empty);
    }
    if !(1..=65535).contains(&maxval) {
        return Err(BlurError::Pnm("maxval out of range"));
    }
    let count = width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or(BlurError::Pnm("image too large"))?;
    let mut sample = || -> Result<u8, BlurError> {
        let v = t.number("bad sample")?;
        if v > maxval {
            return Err(BlurError::Pnm("sample above maxval"));
        }
        Ok(((v * 255 + maxval / 2) / maxval) as u8)
    };
    let mut pixels = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let px = if channels == 1 {
            sample()?
        } else {
            let (r, g, b) = (sample()?, sample()?, sample()?);
            luma(r, g, b)
        };
        pixels.push(px);
    }
    if t.next_token().is_some() {
        return Err(BlurError::Pnm("trailing data"));
    }
    GrayImage::new(width, height, pixels)
}
