use super::{crc16, WireError};
use crate::types::{Frame, Wavelength, ADC_MAX_CODE, CHANNELS, DETECTORS_PER_GROUP, GROUPS};

pub const FRAME_LEN: usize = 74;
pub const FRAME_MAGIC: [u8; 2] = [0xA5, 0x5A];
pub const FRAME_VERSION: u8 = 0x01;

const CRC_OFFSET: usize = FRAME_LEN - 2;

pub fn encode_frame(frame: &Frame) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    encode_frame_into(frame, &mut out);
    out
}

pub fn encode_frame_into(frame: &Frame, out: &mut [u8; FRAME_LEN]) {
    out[0..2].copy_from_slice(&FRAME_MAGIC);
    out[2] = FRAME_VERSION;
    out[3] = frame.wavelength.index() as u8;
    out[4..8].copy_from_slice(&frame.seq.to_le_bytes());
    out[8..16].copy_from_slice(&frame.timestamp_us.to_le_bytes());
    out[16..24].copy_from_slice(&frame.mux_idx);
    for (i, s) in frame.samples.iter().enumerate() {
        out[24 + 2 * i..26 + 2 * i].copy_from_slice(&s.to_le_bytes());
    }
    let crc = crc16(&out[..CRC_OFFSET]);
    out[CRC_OFFSET..].copy_from_slice(&crc.to_le_bytes());
}

/// Decodes the frame at the start of `bytes`. Checks run in wire order: magic,
/// version, CRC, then field ranges.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    if bytes.len() < FRAME_LEN {
        if let Some(&b) = bytes.first() {
            if b != FRAME_MAGIC[0] {
                return Err(WireError::BadMagic(b));
            }
        }
        return Err(WireError::Truncated { needed: FRAME_LEN, got: bytes.len() });
    }
    let bytes = &bytes[..FRAME_LEN];
    if bytes[0] != FRAME_MAGIC[0] {
        return Err(WireError::BadMagic(bytes[0]));
    }
    if bytes[1] != FRAME_MAGIC[1] {
        return Err(WireError::BadMagic(bytes[1]));
    }
    if bytes[2] != FRAME_VERSION {
        return Err(WireError::BadVersion(bytes[2]));
    }
    let received = u16::from_le_bytes([bytes[CRC_OFFSET], bytes[CRC_OFFSET + 1]]);
    let computed = crc16(&bytes[..CRC_OFFSET]);
    if received != computed {
        return Err(WireError::CrcMismatch { computed, received });
    }
    let flags = bytes[3];
    if flags & !1 != 0 {
        return Err(WireError::BadFlags(flags));
    }
    let wavelength = if flags & 1 == 0 { Wavelength::Nm660 } else { Wavelength::Nm940 };
    let seq = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let timestamp_us = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let mut mux_idx = [0u8; GROUPS];
    mux_idx.copy_from_slice(&bytes[16..24]);
    if let Some((group, &value)) = mux_idx.iter().enumerate().find(|(_, &m)| m as usize >= DETECTORS_PER_GROUP) {
        return Err(WireError::MuxOutOfRange { group, value });
    }
    let mut samples = [0u16; CHANNELS];
    for (i, s) in samples.iter_mut().enumerate() {
        *s = u16::from_le_bytes([bytes[24 + 2 * i], bytes[25 + 2 * i]]);
        if *s > ADC_MAX_CODE {
            return Err(WireError::SampleOutOfRange { index: i, value: *s });
        }
    }
    Ok(Frame { seq, timestamp_us, wavelength, mux_idx, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frame() -> Frame {
        let mut f = Frame::zeroed(0x0102_0304, 0x1122_3344_5566_7788);
        f.wavelength = Wavelength::Nm940;
        f.mux_idx = [0, 1, 2, 0, 1, 2, 0, 1];
        for (i, s) in f.samples.iter_mut().enumerate() {
            *s = (i as u16) * 170 + 5;
        }
        f
    }

    #[test]
    fn zero_frame_round_trip() {
        let f = Frame::zeroed(0, 0);
        let bytes = encode_frame(&f);
        assert_eq!(bytes.len(), FRAME_LEN);
        assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = encode_frame(&sample_frame());
        assert_eq!(&bytes[0..4], &[0xA5, 0x5A, 0x01, 0x01]);
        assert_eq!(&bytes[4..8], &[0x04, 0x03, 0x02, 0x01]);
        assert_eq!(&bytes[8..16], &[0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11]);
        assert_eq!(&bytes[16..24], &[0, 1, 2, 0, 1, 2, 0, 1]);
        // sample 1 = 175 = 0x00AF
        assert_eq!(&bytes[26..28], &[0xAF, 0x00]);
        let crc = crc16(&bytes[..72]);
        assert_eq!(&bytes[72..74], &crc.to_le_bytes());
    }

    #[test]
    fn single_byte_flip_is_crc_mismatch() {
        let bytes = encode_frame(&sample_frame());
        for pos in 4..72 {
            let mut corrupted = bytes;
            corrupted[pos] ^= 0x10;
            assert!(matches!(decode_frame(&corrupted), Err(WireError::CrcMismatch { .. })), "byte {pos}");
        }
    }

    #[test]
    fn distinct_error_kinds() {
        let good = encode_frame(&sample_frame());

        let mut b = good;
        b[0] = 0x00;
        assert_eq!(decode_frame(&b), Err(WireError::BadMagic(0x00)));

        let mut b = good;
        b[2] = 0x02;
        assert_eq!(decode_frame(&b), Err(WireError::BadVersion(0x02)));

        // Out-of-range sample with a valid CRC.
        let mut b = good;
        b[24..26].copy_from_slice(&4096u16.to_le_bytes());
        let crc = crc16(&b[..72]);
        b[72..74].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_frame(&b), Err(WireError::SampleOutOfRange { index: 0, value: 4096 }));

        let mut b = good;
        b[19] = 3;
        let crc = crc16(&b[..72]);
        b[72..74].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_frame(&b), Err(WireError::MuxOutOfRange { group: 3, value: 3 }));

        assert_eq!(decode_frame(&good[..10]), Err(WireError::Truncated { needed: FRAME_LEN, got: 10 }));
    }
}
