//! `GSAV1` avatar container.
//!
//! Layout:
//!
//! ```text
//! "GSAV1"                  5 bytes
//! manifest length          u32, little-endian
//! manifest                 UTF-8 JSON
//! payload                  little-endian f32 arrays, in manifest order
//! ```
//!
//! The payload holds the base fields (position, rotation, log_scale, opacity,
//! color) followed by each delta set (position, log_scale, rotation, opacity,
//! color). Field offsets are bytes from the start of the payload, lengths are
//! f32 element counts.

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::avatar::{validate_avatar, BlendShapeAvatar, DeltaSet, PrimitiveSet};

pub const MAGIC: &[u8; 5] = b"GSAV1";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = MAGIC.len() + 4;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    count: usize,
    blend_shapes: usize,
    names: Vec<String>,
    fields: Vec<FieldEntry>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct FieldEntry {
    name: String,
    offset: usize,
    length: usize,
}

/// Field names and per-primitive widths in payload order.
fn layout(k: usize) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = [
        ("base.position", 3),
        ("base.rotation", 4),
        ("base.log_scale", 3),
        ("base.opacity", 1),
        ("base.color", 3),
    ]
    .iter()
    .map(|(n, w)| (n.to_string(), *w))
    .collect();
    for i in 0..k {
        for (n, w) in [("position", 3), ("log_scale", 3), ("rotation", 4), ("opacity", 1), ("color", 3)] {
            out.push((format!("delta[{i}].{n}"), w));
        }
    }
    out
}

fn put<const D: usize>(out: &mut Vec<u8>, values: &[[f32; D]]) {
    for v in values.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_scalar(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a valid avatar.
pub fn save_avatar(avatar: &BlendShapeAvatar) -> Result<Vec<u8>, FormatError> {
    if let Some(v) = validate_avatar(avatar).first() {
        return Err(FormatError::schema("avatar", v.to_string()));
    }
    let n = avatar.len();
    let mut offset = 0;
    let fields = layout(avatar.k())
        .into_iter()
        .map(|(name, width)| {
            let entry = FieldEntry {
                name,
                offset,
                length: n * width,
            };
            offset += entry.length * 4;
            entry
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        count: n,
        blend_shapes: avatar.k(),
        names: avatar.names.clone(),
        fields,
    };
    let text = serde_json::to_vec(&manifest).map_err(|e| FormatError::schema("manifest", e.to_string()))?;

    let mut out = Vec::with_capacity(HEADER_LEN + text.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&text);

    let b = &avatar.base;
    put(&mut out, &b.positions);
    put(&mut out, &b.rotations);
    put(&mut out, &b.log_scales);
    put_scalar(&mut out, &b.opacities);
    put(&mut out, &b.colors);
    for d in &avatar.deltas {
        put(&mut out, &d.positions);
        put(&mut out, &d.log_scales);
        put(&mut out, &d.rotations);
        put_scalar(&mut out, &d.opacities);
        put(&mut out, &d.colors);
    }
    Ok(out)
}

struct Payload<'a> {
    bytes: &'a [u8],
    fields: std::slice::Iter<'a, FieldEntry>,
}

impl Payload<'_> {
    fn next_floats(&mut self) -> Vec<f32> {
        let f = self.fields.next().expect("layout checked");
        self.bytes[f.offset..f.offset + f.length * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    fn next<const D: usize>(&mut self) -> Vec<[f32; D]> {
        self.next_floats()
            .chunks_exact(D)
            .map(|c| std::array::from_fn(|i| c[i]))
            .collect()
    }
}

/// Parses and validates a `GSAV1` container.
pub fn load_avatar(bytes: &[u8]) -> Result<BlendShapeAvatar, FormatError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedPayload {
            field: "manifest length".into(),
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let manifest_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let manifest_end = HEADER_LEN + manifest_len;
    if bytes.len() < manifest_end {
        return Err(FormatError::TruncatedPayload {
            field: "manifest".into(),
            expected: manifest_end,
            actual: bytes.len(),
        });
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
        .map_err(|e| FormatError::schema("manifest", e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(FormatError::schema(
            "format_version",
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    if manifest.names.len() != manifest.blend_shapes {
        return Err(FormatError::schema(
            "names",
            format!("{} names for {} blend shapes", manifest.names.len(), manifest.blend_shapes),
        ));
    }

    let expected = layout(manifest.blend_shapes);
    if manifest.fields.len() != expected.len() {
        return Err(FormatError::schema(
            "fields",
            format!("expected {} field entries, found {}", expected.len(), manifest.fields.len()),
        ));
    }
    let n = manifest.count;
    let mut offset = 0usize;
    for (entry, (name, width)) in manifest.fields.iter().zip(&expected) {
        if &entry.name != name {
            return Err(FormatError::schema(name.as_str(), format!("found field {:?} in its place", entry.name)));
        }
        if entry.length != n * width {
            return Err(FormatError::schema(
                name.as_str(),
                format!("length {} does not match {n} primitives x {width}", entry.length),
            ));
        }
        if entry.offset != offset {
            return Err(FormatError::schema(
                name.as_str(),
                format!("offset {} but previous field ends at {offset}", entry.offset),
            ));
        }
        offset += entry.length * 4;
    }

    let payload = &bytes[manifest_end..];
    if payload.len() < offset {
        let field = manifest
            .fields
            .iter()
            .find(|f| f.offset + f.length * 4 > payload.len())
            .map(|f| f.name.clone())
            .unwrap_or_default();
        return Err(FormatError::TruncatedPayload {
            field,
            expected: offset,
            actual: payload.len(),
        });
    }
    if payload.len() > offset {
        return Err(FormatError::schema(
            "payload",
            format!("{} trailing bytes after declared fields", payload.len() - offset),
        ));
    }

    let mut reader = Payload {
        bytes: payload,
        fields: manifest.fields.iter(),
    };
    let base = PrimitiveSet {
        positions: reader.next(),
        rotations: reader.next(),
        log_scales: reader.next(),
        opacities: reader.next_floats(),
        colors: reader.next(),
    };
    let deltas = (0..manifest.blend_shapes)
        .map(|_| DeltaSet {
            positions: reader.next(),
            log_scales: reader.next(),
            rotations: reader.next(),
            opacities: reader.next_floats(),
            colors: reader.next(),
        })
        .collect();
    let avatar = BlendShapeAvatar {
        base,
        deltas,
        names: manifest.names,
    };
    if let Some(v) = validate_avatar(&avatar).first() {
        return Err(FormatError::schema("avatar", v.to_string()));
    }
    Ok(avatar)
}
