//! Image and trace file formats.
//!
//! * binary PGM (`P5`, one channel) and PPM (`P6`, three channels), 8 bit,
//!   bytes mapped to `[0, 1]` by `v/255` and back by `round(255·v)`,
//! * raw `F32`: the ASCII line `F32 C H W\n` followed by `C·H·W`
//!   little-endian floats, a lossless container for states,
//! * `trace.csv`: one row per trajectory step.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::engine::Transition;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TRACE_CSV_HEADER: &str = "t,delta,beta_delta,loss_data,loss_couple,psnr,ssim";

/// Reads PGM, PPM or F32, chosen by the magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.starts_with(b"F32") {
        decode_f32(&bytes)
    } else {
        decode_pnm(&bytes)
    }
}

/// Writes PGM for one channel and PPM for three.
pub fn write_pnm(path: impl AsRef<Path>, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode_pnm(image)?)?;
    Ok(())
}

pub fn write_f32(path: impl AsRef<Path>, tensor: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode_f32(tensor)?)?;
    Ok(())
}

/// File extension [`write_pnm`] uses for an image with this many channels.
pub fn pnm_extension(channels: usize) -> &'static str {
    if channels == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_pnm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (c, h, w) = image.dims3()?;
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::invalid(format!("PNM stores 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let data = image.data();
    out.reserve(c * plane);
    for p in 0..plane {
        for ch in 0..c {
            out.push(quantize(data[ch * plane + p]));
        }
    }
    Ok(out)
}

/// Splits the next whitespace-delimited header token, skipping `#` comments.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
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
        return Err(Error::Format("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let token = header_token(bytes, pos)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v: &usize| v > 0)
        .ok_or_else(|| Error::Format(format!("bad {what} {:?}", String::from_utf8_lossy(token))))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)? {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(Error::Format(format!("unsupported magic {:?}", String::from_utf8_lossy(other)))),
    };
    let w = header_number(bytes, &mut pos, "width")?;
    let h = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit images (maxval 255) are supported, got {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator before pixel data".into()));
    }
    pos += 1;
    let plane = h * w;
    let payload = &bytes[pos..];
    if payload.len() < channels * plane {
        return Err(Error::Format(format!("truncated payload: {} of {} bytes", payload.len(), channels * plane)));
    }
    let mut data = vec![0.0f32; channels * plane];
    for p in 0..plane {
        for ch in 0..channels {
            data[ch * plane + p] = payload[p * channels + ch] as f32 / 255.0;
        }
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Two-dimensional tensors are stored as one channel.
pub fn encode_f32(tensor: &Tensor<f32>) -> Result<Vec<u8>> {
    let (c, h, w) = match *tensor.shape() {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape("f32 file", "[C, H, W] or [H, W]", format!("{:?}", tensor.shape()))),
    };
    let mut out = format!("F32 {c} {h} {w}\n").into_bytes();
    out.reserve(4 * tensor.numel());
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_f32(bytes: &[u8]) -> Result<Tensor<f32>> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing F32 header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != "F32" {
        return Err(Error::Format(format!("bad F32 header {header:?}")));
    }
    let dims = fields[1..]
        .iter()
        .map(|f| f.parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Format(format!("bad F32 extents {header:?}")))?;
    let count = dims.iter().product::<usize>();
    let payload = &bytes[newline + 1..];
    if payload.len() != 4 * count {
        return Err(Error::Format(format!("F32 payload has {} bytes, expected {}", payload.len(), 4 * count)));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(dims, data)
}

/// `printf("%.8e")`: eight fraction digits and an exponent of at least two
/// digits with explicit sign.
pub fn format_sci(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.8e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn finite_field(out: &mut String, v: f64, column: &str, t: usize) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{column} at t={t}")));
    }
    out.push(',');
    out.push_str(&format_sci(v));
    Ok(())
}

/// CSV text of the per-step diagnostics; missing metrics are written as `nan`.
pub fn trace_csv(transitions: &[Transition]) -> Result<String> {
    let mut out = String::with_capacity(96 * (transitions.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for s in transitions {
        write!(out, "{}", s.t).expect("writing to a String");
        finite_field(&mut out, s.delta, "delta", s.t)?;
        finite_field(&mut out, s.beta_delta, "beta_delta", s.t)?;
        finite_field(&mut out, s.loss_data, "loss_data", s.t)?;
        finite_field(&mut out, s.loss_couple, "loss_couple", s.t)?;
        for metric in [s.psnr, s.ssim] {
            out.push(',');
            out.push_str(&format_sci(metric.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_trace_csv(path: impl AsRef<Path>, transitions: &[Transition]) -> Result<()> {
    fs::write(path, trace_csv(transitions)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_of_quantized_image() {
        let img = Tensor::from_fn(&[1, 3, 5], |i| ((i * 37) % 256) as f32 / 255.0);
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_interleaves_channels() {
        let img = Tensor::from_fn(&[3, 2, 2], |i| i as f32 / 255.0);
        let bytes = encode_pnm(&img).unwrap();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 12..bytes.len() - 9], &[0, 4, 8]);
        assert_eq!(decode_pnm(&bytes).unwrap(), img);
    }

    #[test]
    fn byte_mapping() {
        let img = decode_pnm(b"P5 # comment\n1 1\n255\n\x80").unwrap();
        assert!((img.data()[0] - 0.50196).abs() < 1e-5);
        let clamped = Tensor::new(vec![1, 1, 2], vec![-0.2f32, 1.7]).unwrap();
        assert_eq!(&encode_pnm(&clamped).unwrap()[11..], &[0, 255]);
    }

    #[test]
    fn malformed_pnm() {
        assert!(matches!(decode_pnm(b"P4\n1 1\n255\n\x00"), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(b"P5\n2 2\n255\n\x00"), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(b"P5\n2 x\n255\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00"), Err(Error::Format(_))));
    }

    #[test]
    fn f32_round_trip_is_bitwise() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| (i as f32 * 0.1).sin() / 3.0);
        let bytes = encode_f32(&t).unwrap();
        assert!(bytes.starts_with(b"F32 2 3 4\n"));
        let back = decode_f32(&bytes).unwrap();
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(decode_f32(&encode_f32(&Tensor::zeros(&[3, 4])).unwrap()).unwrap().shape(), &[1, 3, 4]);
    }

    #[test]
    fn malformed_f32() {
        assert!(decode_f32(b"F32 1 2 2\n\0\0\0\0").is_err());
        assert!(decode_f32(b"F32 1 2\n").is_err());
        assert!(decode_f32(b"F64 1 1 1\n\0\0\0\0").is_err());
    }

    #[test]
    fn c_style_scientific() {
        assert_eq!(format_sci(0.0), "0.00000000e+00");
        assert_eq!(format_sci(1.5e-3), "1.50000000e-03");
        assert_eq!(format_sci(-123456.0), "-1.23456000e+05");
        assert_eq!(format_sci(2.5e120), "2.50000000e+120");
        assert_eq!(format_sci(f64::INFINITY), "inf");
        assert_eq!(format_sci(f64::NAN), "nan");
    }

    #[test]
    fn csv_rows() {
        let row = |t, psnr| Transition {
            t,
            delta: 1.0,
            beta: 0.5,
            beta_delta: 0.5,
            loss_data: 2.0,
            loss_couple: 0.25,
            psnr,
            ssim: psnr.map(|_| 0.9),
        };
        let text = trace_csv(&[row(1, Some(f64::INFINITY)), row(0, None)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_CSV_HEADER);
        assert_eq!(lines[1], "1,1.00000000e+00,5.00000000e-01,2.00000000e+00,2.50000000e-01,inf,9.00000000e-01");
        assert!(lines[2].ends_with(",nan,nan"));
        let mut bad = row(0, None);
        bad.delta = f64::NAN;
        assert!(trace_csv(&[bad]).is_err());
    }
}
