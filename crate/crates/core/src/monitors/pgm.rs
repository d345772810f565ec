//! Portable graymap IO: writes binary P5, reads P5 and plain P2.

use std::io::{Read, Write};

use super::{Frame, FrameError};

pub fn write_pgm<W: Write>(frame: &Frame, mut out: W) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    out.write_all(frame.pixels())
}

pub fn read_pgm<R: Read>(mut input: R) -> Result<Frame, FrameError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|e| FrameError::Pgm(e.to_string()))?;
    let mut pos = 0;
    let magic = token(&buf, &mut pos)?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(FrameError::Pgm(format!("unsupported magic `{other}`"))),
    };
    let width = number(&buf, &mut pos)?;
    let height = number(&buf, &mut pos)?;
    let maxval = number(&buf, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(FrameError::Pgm(format!("maxval {maxval} not supported")));
    }
    let n = width * height;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = buf.get(pos..pos + n).ok_or_else(|| FrameError::Pgm("truncated raster".into()))?;
        raster.to_vec()
    } else {
        (0..n)
            .map(|_| number(&buf, &mut pos).map(|v| v.min(255) as u8))
            .collect::<Result<_, _>>()?
    };
    let pixels = if maxval == 255 {
        pixels
    } else {
        pixels.iter().map(|&p| ((p as usize * 255) / maxval) as u8).collect()
    };
    Frame::new(width, height, pixels)
}

fn token(buf: &[u8], pos: &mut usize) -> Result<String, FrameError> {
    loop {
        while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < buf.len() && buf[*pos] == b'#' {
            while *pos < buf.len() && buf[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FrameError::Pgm("unexpected end of header".into()));
    }
    Ok(String::from_utf8_lossy(&buf[start..*pos]).into_owned())
}

fn number(buf: &[u8], pos: &mut usize) -> Result<usize, FrameError> {
    let t = token(buf, pos)?;
    t.parse().map_err(|_| FrameError::Pgm(format!("expected a number, got `{t}`")))
}
