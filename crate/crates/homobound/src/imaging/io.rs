//! Image file I/O: binary and ASCII PGM (maxval 255) and a plain CSV grid of
//! reals. PGM quantizes intensities to `round(value * 255) / 255`; CSV round
//! trips exactly.

use super::{Image, ImagingError, Padding};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFlavor {
    /// P5: binary sample bytes.
    Binary,
    /// P2: whitespace-separated ASCII samples.
    Ascii,
}

fn io_err(path: &Path, source: std::io::Error) -> ImagingError {
    ImagingError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> ImagingError {
    ImagingError::Format { path: path.display().to_string(), msg: msg.into() }
}

/// Pull-based token scanner over PGM bytes: skips whitespace and `#` comments.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Tokens { bytes, pos: 0 }
    }

    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Option<&'a str> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or(""))
    }

    fn next_usize(&mut self, path: &Path, what: &str) -> Result<usize, ImagingError> {
        self.next_token()
            .ok_or_else(|| format_err(path, format!("missing {what} in PGM header")))?
            .parse()
            .map_err(|_| format_err(path, format!("invalid {what} in PGM header")))
    }
}

/// Loads a P5 or P2 PGM file. The maxval must be 255; samples map to
/// `value / 255`. The padding mode is supplied by the caller (the format does
/// not carry one).
pub fn load_pgm(path: &Path, padding: Padding) -> Result<Image, ImagingError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut tok = Tokens::new(&bytes);
    let magic = tok.next_token().ok_or_else(|| format_err(path, "empty PGM file"))?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        other => return Err(format_err(path, format!("unsupported PGM magic {other:?}"))),
    };
    let w = tok.next_usize(path, "width")?;
    let h = tok.next_usize(path, "height")?;
    let maxval = tok.next_usize(path, "maxval")?;
    if maxval != 255 {
        return Err(format_err(path, format!("unsupported maxval {maxval} (expected 255)")));
    }
    let samples: Vec<u16> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = tok.pos + 1;
        let raster =
            bytes.get(start..start + h * w).ok_or_else(|| format_err(path, "truncated raster"))?;
        raster.iter().map(|&b| u16::from(b)).collect()
    } else {
        let mut out = Vec::with_capacity(h * w);
        for k in 0..h * w {
            let t = tok
                .next_token()
                .ok_or_else(|| format_err(path, format!("missing sample {k} of {}", h * w)))?;
            out.push(
                t.parse::<u16>().map_err(|_| format_err(path, format!("invalid sample {t:?}")))?,
            );
        }
        out
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > 255) {
        return Err(format_err(path, format!("sample {bad} exceeds maxval 255")));
    }
    let data = samples.iter().map(|&s| f64::from(s) / 255.0).collect();
    Image::new(h, w, data, padding)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Writes a PGM file, quantizing each intensity to `round(value * 255)`.
pub fn save_pgm(img: &Image, path: &Path, flavor: PgmFlavor) -> Result<(), ImagingError> {
    let quantized: Vec<u8> =
        img.pixels().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let header = format!(
        "{}\n{} {}\n255\n",
        if flavor == PgmFlavor::Binary { "P5" } else { "P2" },
        img.width(),
        img.height()
    );
    let mut out = header.into_bytes();
    match flavor {
        PgmFlavor::Binary => out.extend_from_slice(&quantized),
        PgmFlavor::Ascii => {
            let mut text = String::new();
            for row in quantized.chunks(img.width()) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                writeln!(text, "{}", line.join(" ")).expect("string write");
            }
            out.extend_from_slice(text.as_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Loads a CSV grid: one image row per line, comma-separated reals in [0, 1].
pub fn load_csv(path: &Path, padding: Padding) -> Result<Image, ImagingError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut data = Vec::new();
    let mut w = None;
    let mut h = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> =
            line.split(',').map(|cell| cell.trim().parse::<f64>()).collect();
        let row = row
            .map_err(|e| format_err(path, format!("line {}: {e}", lineno + 1)))?;
        match w {
            None => w = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(format_err(
                    path,
                    format!("line {}: expected {w} columns, found {}", lineno + 1, row.len()),
                ))
            }
            _ => {}
        }
        data.extend(row);
        h += 1;
    }
    let w = w.ok_or_else(|| format_err(path, "empty CSV image"))?;
    Image::new(h, w, data, padding).map_err(|e| format_err(path, e.to_string()))
}

/// Writes a CSV grid with 17 significant digits, enough for exact f64 round
/// trips.
pub fn save_csv(img: &Image, path: &Path) -> Result<(), ImagingError> {
    let mut text = String::new();
    for row in img.pixels().chunks(img.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(text, "{}", line.join(",")).expect("string write");
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Loads an image file by extension: `.pgm` (P5 or P2) or `.csv`.
pub fn load_image(path: &Path, padding: Padding) -> Result<Image, ImagingError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => load_pgm(path, padding),
        Some("csv") => load_csv(path, padding),
        _ => Err(format_err(path, "unsupported image extension (expected .pgm or .csv)")),
    }
}

/// Writes an image file by extension: `.pgm` (binary P5) or `.csv`.
pub fn save_image(img: &Image, path: &Path) -> Result<(), ImagingError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => save_pgm(img, path, PgmFlavor::Binary),
        Some("csv") => save_csv(img, path),
        _ => Err(format_err(path, "unsupported image extension (expected .pgm or .csv)")),
    }
}
