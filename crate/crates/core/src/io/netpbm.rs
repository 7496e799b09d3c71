use std::io::{BufRead, BufReader, Read, Write};

use super::IoError;
use crate::image::{DepthMap, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Reads whitespace-separated header tokens, skipping `#` comments. The
/// single whitespace byte after the last token is consumed too.
fn header_tokens<R: BufRead>(r: &mut R, count: usize, format: &'static str) -> Result<Vec<String>, IoError> {
    let mut tokens = Vec::with_capacity(count);
    let mut current = Vec::new();
    let mut byte = [0u8; 1];
    while tokens.len() < count {
        if r.read(&mut byte)? == 0 {
            return Err(IoError::format(format, "truncated header"));
        }
        match byte[0] {
            b'#' if current.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            }
            b if b.is_ascii_whitespace() => {
                if !current.is_empty() {
                    tokens.push(String::from_utf8_lossy(&current).into_owned());
                    current.clear();
                }
            }
            b => current.push(b),
        }
    }
    Ok(tokens)
}

fn parse_dim(tok: &str, format: &'static str) -> Result<usize, IoError> {
    tok.parse::<usize>()
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| IoError::format(format, format!("bad dimension {tok:?}")))
}

/// Writes a binary (P5) PGM. Intensities are scaled by the maxval and rounded;
/// 16-bit samples are big-endian.
pub fn write_pgm<W: Write>(w: W, img: &GrayImage, depth: PgmDepth) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(w);
    let maxval = depth.maxval();
    write!(w, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval)?;
    let m = maxval as f64;
    for v in img.values() {
        let q = (v * m).round() as u32;
        match depth {
            PgmDepth::Eight => w.write_all(&[q as u8])?,
            PgmDepth::Sixteen => w.write_all(&(q as u16).to_be_bytes())?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary PGM; samples become `value / maxval`.
pub fn read_pgm<R: Read>(r: R) -> Result<GrayImage, IoError> {
    let mut r = BufReader::new(r);
    let t = header_tokens(&mut r, 4, "PGM")?;
    if t[0] != "P5" {
        return Err(IoError::format("PGM", format!("expected magic P5, found {:?}", t[0])));
    }
    let width = parse_dim(&t[1], "PGM")?;
    let height = parse_dim(&t[2], "PGM")?;
    let maxval: u32 = t[3]
        .parse()
        .ok()
        .filter(|m| (1..=65535).contains(m))
        .ok_or_else(|| IoError::format("PGM", format!("bad maxval {:?}", t[3])))?;
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let mut raw = vec![0u8; width * height * bytes_per];
    r.read_exact(&mut raw)
        .map_err(|_| IoError::format("PGM", "fewer samples than the header promises"))?;
    let m = maxval as f64;
    let values = raw
        .chunks_exact(bytes_per)
        .map(|c| {
            let q = if bytes_per == 2 {
                u16::from_be_bytes([c[0], c[1]]) as u32
            } else {
                c[0] as u32
            };
            if q > maxval {
                Err(IoError::format("PGM", format!("sample {q} exceeds maxval {maxval}")))
            } else {
                Ok(q as f64 / m)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    GrayImage::new(width, height, values).map_err(|e| IoError::format("PGM", e.to_string()))
}

/// Single-channel float image, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl From<&DepthMap> for FloatImage {
    fn from(d: &DepthMap) -> Self {
        Self {
            width: d.width,
            height: d.height,
            data: d.depth.iter().map(|v| *v as f32).collect(),
        }
    }
}

/// Writes a grayscale PFM (`Pf`), little-endian, bottom row first.
pub fn write_pfm<W: Write>(w: W, img: &FloatImage) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(w);
    write!(w, "Pf\n{} {}\n-1.0\n", img.width, img.height)?;
    for row in (0..img.height).rev() {
        for v in &img.data[row * img.width..(row + 1) * img.width] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a grayscale PFM of either byte order.
pub fn read_pfm<R: Read>(r: R) -> Result<FloatImage, IoError> {
    let mut r = BufReader::new(r);
    let t = header_tokens(&mut r, 4, "PFM")?;
    if t[0] != "Pf" {
        return Err(IoError::format("PFM", format!("expected grayscale magic Pf, found {:?}", t[0])));
    }
    let width = parse_dim(&t[1], "PFM")?;
    let height = parse_dim(&t[2], "PFM")?;
    let scale: f64 = t[3]
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| IoError::format("PFM", format!("bad scale {:?}", t[3])))?;
    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)
        .map_err(|_| IoError::format("PFM", "fewer samples than the header promises"))?;
    let mut data = vec![0f32; width * height];
    for (i, c) in raw.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (i / width, i % width);
        data[(height - 1 - file_row) * width + col] = v;
    }
    Ok(FloatImage { width, height, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_both_depths() {
        for (depth, m) in [(PgmDepth::Eight, 255.0), (PgmDepth::Sixteen, 65535.0)] {
            let img = GrayImage::from_fn(7, 5, |c, r| ((c * 31 + r * 17) % 256) as f64 / 255.0);
            let quantized = GrayImage::from_fn(7, 5, |c, r| (img.get(c, r) * m).round() / m);
            let mut buf = Vec::new();
            write_pgm(&mut buf, &quantized, depth).unwrap();
            assert_eq!(read_pgm(&buf[..]).unwrap(), quantized);
        }
    }

    #[test]
    fn pgm_sixteen_bit_is_big_endian() {
        let img = GrayImage::new(1, 1, vec![258.0 / 65535.0]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img, PgmDepth::Sixteen).unwrap();
        assert_eq!(&buf[buf.len() - 2..], &[1, 2]);
        assert!(buf.starts_with(b"P5\n1 1\n65535\n"));
    }

    #[test]
    fn pgm_header_comments_and_errors() {
        let mut buf = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        buf.extend([0u8, 255]);
        let img = read_pgm(&buf[..]).unwrap();
        assert_eq!(img.values(), &[0.0, 1.0]);
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\0"[..]).is_err());
    }

    #[test]
    fn pfm_round_trip_and_layout() {
        let img = FloatImage {
            width: 3,
            height: 2,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.5, f32::MIN_POSITIVE],
        };
        let mut buf = Vec::new();
        write_pfm(&mut buf, &img).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        let header = b"Pf\n3 2\n-1.0\n".len();
        // bottom row first
        assert_eq!(&buf[header..header + 4], &4.0f32.to_le_bytes());
        let back = read_pfm(&buf[..]).unwrap();
        assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), img.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn pfm_big_endian_input() {
        let mut buf = b"Pf\n1 1\n1.0\n".to_vec();
        buf.extend(2.5f32.to_be_bytes());
        assert_eq!(read_pfm(&buf[..]).unwrap().data, vec![2.5]);
        assert!(read_pfm(&b"PF\n1 1\n-1.0\n\0\0\0\0"[..]).is_err());
    }
}
