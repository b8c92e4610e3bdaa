//! The 12-bit style attribute vector and the geometric transforms it denotes.
//!
//! Bit layout: `[0..5)` one-hot eye angle, `[5..10)` one-hot iris-center
//! shift, `[10]` pupil contraction, `[11]` pupil dilation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Image;

/// Allowed eye angles in degrees, in bit order.
pub const ANGLES: [f64; 5] = [0.0, 10.0, 12.0, 15.0, 18.0];

/// Allowed iris-center shifts `[dx, dy]` in pixels, in bit order.
pub const SHIFTS: [[i32; 2]; 5] = [[0, 0], [5, 5], [10, 10], [-10, 10], [-10, -10]];

pub const ATTRIBUTE_BITS: usize = 12;

/// Number of distinct valid attribute vectors (5 angles × 5 shifts × 2 pupil states).
pub const COMBINATIONS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PupilState {
    Contraction,
    Dilation,
}

/// Decoded style: angle, shift and pupil state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Style {
    pub angle: f64,
    pub shift: [i32; 2],
    pub pupil: PupilState,
}

/// Twelve attribute bits. Construction from raw bits does not validate;
/// [`decode_attributes`] does.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeVector {
    bits: [u8; ATTRIBUTE_BITS],
}

impl AttributeVector {
    pub fn from_bits(bits: [u8; ATTRIBUTE_BITS]) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[u8; ATTRIBUTE_BITS] {
        &self.bits
    }

    /// Bits as `0.0 / 1.0`, the form fed to networks and attribute losses.
    pub fn as_f32(&self) -> [f32; ATTRIBUTE_BITS] {
        self.bits.map(f32::from)
    }

    pub fn decode(&self) -> Result<Style> {
        decode_attributes(self)
    }

    /// Index in `0..50` of a valid vector: `angle * 10 + shift * 2 + pupil`.
    pub fn combination_index(&self) -> Result<usize> {
        let (a, s, p) = self.hot_indices()?;
        Ok(a * 10 + s * 2 + p)
    }

    pub fn from_combination_index(index: usize) -> Self {
        assert!(index < COMBINATIONS, "combination index {index} out of range");
        let mut bits = [0u8; ATTRIBUTE_BITS];
        bits[index / 10] = 1;
        bits[5 + (index / 2) % 5] = 1;
        bits[10 + index % 2] = 1;
        Self { bits }
    }

    fn hot_indices(&self) -> Result<(usize, usize, usize)> {
        let group = |range: std::ops::Range<usize>, what: &str| -> Result<usize> {
            let offset = range.start;
            let hot: Vec<usize> = range.filter(|&i| self.bits[i] != 0).collect();
            if let Some(bad) = self.bits.iter().find(|&&b| b > 1) {
                return Err(Error::InvalidAttribute(format!("non-binary bit value {bad}")));
            }
            match hot.as_slice() {
                [i] => Ok(i - offset),
                [] => Err(Error::InvalidAttribute(format!("no {what} bit set in {self}"))),
                _ => Err(Error::InvalidAttribute(format!("{} {what} bits set in {self}", hot.len()))),
            }
        };
        Ok((group(0..5, "angle")?, group(5..10, "shift")?, group(10..12, "pupil")?))
    }
}

/// All 50 valid vectors in combination-index order.
pub fn all_combinations() -> Vec<AttributeVector> {
    (0..COMBINATIONS).map(AttributeVector::from_combination_index).collect()
}

pub fn encode_attributes(angle: f64, shift: [i32; 2], pupil: PupilState) -> Result<AttributeVector> {
    let a = ANGLES
        .iter()
        .position(|&v| (v - angle).abs() < 1e-9)
        .ok_or_else(|| Error::InvalidAttribute(format!("angle {angle} not in {ANGLES:?}")))?;
    let s = SHIFTS
        .iter()
        .position(|&v| v == shift)
        .ok_or_else(|| Error::InvalidAttribute(format!("shift {shift:?} not in {SHIFTS:?}")))?;
    let mut bits = [0u8; ATTRIBUTE_BITS];
    bits[a] = 1;
    bits[5 + s] = 1;
    bits[match pupil {
        PupilState::Contraction => 10,
        PupilState::Dilation => 11,
    }] = 1;
    Ok(AttributeVector { bits })
}

pub fn decode_attributes(v: &AttributeVector) -> Result<Style> {
    let (a, s, p) = v.hot_indices()?;
    Ok(Style {
        angle: ANGLES[a],
        shift: SHIFTS[s],
        pupil: if p == 0 { PupilState::Contraction } else { PupilState::Dilation },
    })
}

impl fmt::Display for AttributeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for AttributeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AttributeVector({self})")
    }
}

impl FromStr for AttributeVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != ATTRIBUTE_BITS {
            return Err(Error::InvalidAttribute(format!("expected {ATTRIBUTE_BITS} bits, got {s:?}")));
        }
        let mut bits = [0u8; ATTRIBUTE_BITS];
        for (b, c) in bits.iter_mut().zip(chars) {
            *b = match c {
                '0' => 0,
                '1' => 1,
                other => return Err(Error::InvalidAttribute(format!("bad character {other:?} in {s:?}"))),
            };
        }
        Ok(Self { bits })
    }
}

impl Serialize for AttributeVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AttributeVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pupil radius multipliers applied for the two pupil states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PupilFactors {
    pub contraction: f64,
    pub dilation: f64,
}

impl Default for PupilFactors {
    fn default() -> Self {
        Self { contraction: 0.8, dilation: 1.25 }
    }
}

impl PupilFactors {
    pub fn factor(&self, state: PupilState) -> f64 {
        match state {
            PupilState::Contraction => self.contraction,
            PupilState::Dilation => self.dilation,
        }
    }
}

/// Boundary radii around the iris center, needed for the pupil remap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrisRadii {
    pub pupil: f64,
    pub limbus: f64,
}

/// Piecewise-linear radial map from output radius to source radius that
/// moves the pupil boundary from `old_pupil` to `new_pupil` while keeping the
/// limbus fixed.
pub fn pupil_remap(r: f64, old_pupil: f64, new_pupil: f64, limbus: f64) -> f64 {
    if r <= new_pupil {
        r * old_pupil / new_pupil
    } else if r < limbus {
        old_pupil + (r - new_pupil) * (limbus - old_pupil) / (limbus - new_pupil)
    } else {
        r
    }
}

/// Rotate about `iris_center`, move the iris center to `crop/2 + shift`,
/// rescale the pupil, and crop a `crop × crop` window.
///
/// Output pixel `p` samples the source at `c + R(-θ)(p - t)` (with the radial
/// pupil remap applied to `|p - t|`), bilinearly, filling 0 outside.
pub fn apply_style_transform(
    image: &Image,
    iris_center: (f64, f64),
    v: &AttributeVector,
    crop: usize,
    radii: Option<IrisRadii>,
    factors: &PupilFactors,
) -> Result<Image> {
    let style = v.decode()?;
    let factor = factors.factor(style.pupil);
    let remap = if (factor - 1.0).abs() > 1e-12 {
        let r = radii.ok_or_else(|| Error::MissingAnnotation("pupil radius required for pupil remap".into()))?;
        if !(r.pupil > 0.0 && r.limbus > r.pupil * factor.max(1.0)) {
            return Err(Error::Geometry(format!(
                "pupil {} / limbus {} incompatible with factor {factor}",
                r.pupil, r.limbus
            )));
        }
        Some((r.pupil, r.pupil * factor, r.limbus))
    } else {
        None
    };

    let half = (crop / 2) as f64;
    let target = (half + style.shift[0] as f64, half + style.shift[1] as f64);
    let (sin, cos) = (-style.angle.to_radians()).sin_cos();
    let (cx, cy) = iris_center;
    let map = |px: f64, py: f64| -> (f64, f64) {
        let (mut dx, mut dy) = (px - target.0, py - target.1);
        if let Some((old_p, new_p, limbus)) = remap {
            let r = (dx * dx + dy * dy).sqrt();
            if r > 0.0 {
                let k = pupil_remap(r, old_p, new_p, limbus) / r;
                dx *= k;
                dy *= k;
            } else {
                dx = 0.0;
                dy = 0.0;
            }
        }
        (cx + dx * cos - dy * sin, cy + dx * sin + dy * cos)
    };

    let last = crop as f64 - 1.0;
    for (px, py) in [(0.0, 0.0), (last, 0.0), (0.0, last), (last, last)] {
        let (sx, sy) = map(px, py);
        if !image.contains(sx, sy) {
            return Err(Error::Geometry(format!(
                "crop corner ({px}, {py}) maps to ({sx:.2}, {sy:.2}) outside {}x{} source",
                image.width(),
                image.height()
            )));
        }
    }

    Ok(Image::from_fn(crop, crop, |x, y| {
        let (sx, sy) = map(x as f64, y as f64);
        image.sample_or(sx, sy, 0.0)
    }))
}
