//! Model container: magic, version, a section table of
//! `(id, offset, len, crc32)` entries, the section payloads, and a trailing
//! crc32 over everything before it. Schedules are rebuilt on load.

use std::fs;
use std::path::Path;

use super::{Hypervector, ModelConfig, Projection, TrainedModel};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::landmarks::LandmarkMethod;
use crate::mph::MphTable;
use crate::propkernel::{Codebook, LshParams};
use crate::schedule::SparseMatrixCsr;

pub const MODEL_MAGIC: &[u8; 8] = b"NYHDCMDL";
pub const MODEL_VERSION: u32 = 1;

const SEC_DIMS: u32 = 1;
const SEC_LSH: u32 = 2;
const SEC_CODEBOOKS: u32 = 3;
const SEC_MPH: u32 = 4;
const SEC_HISTS: u32 = 5;
const SEC_PROJECTION: u32 = 6;
const SEC_PROTOTYPES: u32 = 7;
const SEC_META: u32 = 8;
const SECTIONS: [u32; 8] = [
    SEC_DIMS,
    SEC_LSH,
    SEC_CODEBOOKS,
    SEC_MPH,
    SEC_HISTS,
    SEC_PROJECTION,
    SEC_PROTOTYPES,
    SEC_META,
];
const TABLE_ENTRY: usize = 4 + 8 + 8 + 4;

fn section(m: &TrainedModel, id: u32) -> Vec<u8> {
    let mut w = ByteWriter::new();
    match id {
        SEC_DIMS => {
            let c = &m.config;
            w.u64(c.dim as u64);
            w.u64(c.landmarks as u64);
            w.u64(m.num_classes() as u64);
            w.u64(m.feature_dim as u64);
            w.u64(c.hops as u64);
            w.f64(c.width);
            w.f64(c.gamma);
            w.f64(c.pool_factor);
            w.u8(c.dpp as u8);
            w.u64(c.lanes as u64);
        }
        SEC_LSH => {
            w.f64(m.lsh.width());
            for t in 0..m.lsh.hops() {
                w.f64(m.lsh.offset(t));
                for &u in m.lsh.projection(t) {
                    w.f64(u);
                }
            }
        }
        SEC_CODEBOOKS => {
            for t in 0..m.codebook.hops() {
                w.len_prefixed(m.codebook.len(t));
                for &c in m.codebook.codes(t) {
                    w.i64(c);
                }
            }
        }
        SEC_MPH => {
            for t in &m.mph {
                t.write(&mut w);
            }
        }
        SEC_HISTS => {
            for h in &m.landmark_hists {
                w.len_prefixed(h.nnz());
                for r in 0..h.rows() {
                    w.u32(h.row(r).count() as u32);
                }
                for r in 0..h.rows() {
                    for (c, v) in h.row(r) {
                        w.u32(c as u32);
                        w.u32(v as u32);
                    }
                }
            }
        }
        SEC_PROJECTION => {
            for &v in m.projection.data() {
                w.f32(v);
            }
        }
        SEC_PROTOTYPES => {
            for p in &m.prototypes {
                for &x in p.words() {
                    w.u64(x);
                }
            }
        }
        SEC_META => {
            for &i in &m.landmark_indices {
                w.u64(i as u64);
            }
            w.u8(m.method.code());
            for &v in &m.class_values {
                w.i64(v);
            }
            match &m.node_label_values {
                None => w.u8(0),
                Some(v) => {
                    w.u8(1);
                    w.len_prefixed(v.len());
                    for &x in v {
                        w.i64(x);
                    }
                }
            }
        }
        _ => unreachable!("unknown section id"),
    }
    w.into_inner()
}

pub fn model_to_bytes(m: &TrainedModel) -> Vec<u8> {
    let payloads: Vec<Vec<u8>> = SECTIONS.iter().map(|&id| section(m, id)).collect();
    let mut w = ByteWriter::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u32(SECTIONS.len() as u32);
    let mut offset = (8 + 4 + 4 + TABLE_ENTRY * SECTIONS.len()) as u64;
    for (&id, p) in SECTIONS.iter().zip(&payloads) {
        w.u32(id);
        w.u64(offset);
        w.u64(p.len() as u64);
        w.u32(crc32fast::hash(p));
        offset += p.len() as u64;
    }
    for p in &payloads {
        w.bytes(p);
    }
    let mut bytes = w.into_inner();
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    bytes
}

pub fn save_model(m: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    model_from_bytes(&bytes)
}

fn usize_of(v: u64, what: &'static str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::corrupt(what, "value exceeds address space"))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < MODEL_MAGIC.len() + 4 {
        return Err(Error::Checksum("model file truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checksum("model file (truncated or modified)".into()));
    }
    let mut r = ByteReader::new(body, "model");
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::BadMagic("model"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            what: "model",
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let count = r.u32()? as usize;
    if count != SECTIONS.len() {
        return Err(Error::corrupt("model", format!("{count} sections")));
    }
    let mut payloads = Vec::with_capacity(count);
    for &want in &SECTIONS {
        let id = r.u32()?;
        let off = usize_of(r.u64()?, "model")?;
        let len = usize_of(r.u64()?, "model")?;
        let crc = r.u32()?;
        if id != want {
            return Err(Error::corrupt("model", format!("section {id} where {want} expected")));
        }
        let end = off.checked_add(len).filter(|&e| e <= body.len());
        let Some(end) = end else {
            return Err(Error::corrupt("model", format!("section {id} out of bounds")));
        };
        let p = &body[off..end];
        if crc32fast::hash(p) != crc {
            return Err(Error::Checksum(format!("model section {id}")));
        }
        payloads.push(p);
    }

    // dims
    let mut r = ByteReader::new(payloads[0], "model dims");
    let dim = usize_of(r.u64()?, "model dims")?;
    let s = usize_of(r.u64()?, "model dims")?;
    let classes = usize_of(r.u64()?, "model dims")?;
    let f = usize_of(r.u64()?, "model dims")?;
    let hops = usize_of(r.u64()?, "model dims")?;
    let config = ModelConfig {
        dim,
        landmarks: s,
        hops,
        width: r.f64()?,
        gamma: r.f64()?,
        pool_factor: r.f64()?,
        dpp: r.u8()? != 0,
        lanes: usize_of(r.u64()?, "model dims")?,
    };
    r.finish()?;
    config.validate().map_err(|e| Error::corrupt("model dims", e.to_string()))?;
    if f == 0 || classes == 0 {
        return Err(Error::corrupt("model dims", "zero features or classes"));
    }
    let fit = |n: usize, each: usize, p: &[u8]| n.checked_mul(each).is_some_and(|b| b <= p.len());

    // lsh
    let p = payloads[1];
    if !fit(hops, 8 * (f + 1), p) {
        return Err(Error::corrupt("model lsh", "size"));
    }
    let mut r = ByteReader::new(p, "model lsh");
    let width = r.f64()?;
    let mut projections = Vec::with_capacity(hops);
    let mut offsets = Vec::with_capacity(hops);
    for _ in 0..hops {
        offsets.push(r.f64()?);
        projections.push((0..f).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    let lsh = LshParams::new(projections, offsets, width)?;

    // codebooks
    let mut r = ByteReader::new(payloads[2], "model codebooks");
    let mut hop_codes = Vec::with_capacity(hops);
    for _ in 0..hops {
        let n = r.len(8)?;
        hop_codes.push((0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    let codebook = Codebook::from_sorted(hop_codes)?;

    // mph
    let mut r = ByteReader::new(payloads[3], "model mph");
    let mph = (0..hops).map(|_| MphTable::read(&mut r)).collect::<Result<Vec<_>>>()?;
    r.finish()?;

    // landmark histograms
    let mut r = ByteReader::new(payloads[4], "model histograms");
    let mut landmark_hists = Vec::with_capacity(hops);
    for t in 0..hops {
        let nnz = r.len(8)?;
        if !fit(s, 4, payloads[4]) {
            return Err(Error::corrupt("model histograms", "size"));
        }
        let row_len = (0..s).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let mut row_ptr = Vec::with_capacity(s + 1);
        row_ptr.push(0usize);
        for &l in &row_len {
            row_ptr.push(row_ptr.last().expect("nonempty") + l as usize);
        }
        if row_ptr[s] != nnz {
            return Err(Error::corrupt("model histograms", "row lengths disagree with nnz"));
        }
        let mut col_idx = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            col_idx.push(r.u32()? as usize);
            val.push(r.u32()? as f64);
        }
        landmark_hists.push(SparseMatrixCsr::new(s, codebook.len(t), row_ptr, col_idx, val)?);
    }
    r.finish()?;

    // projection
    let p = payloads[5];
    if !fit(dim, 4 * s, p) || p.len() != dim * s * 4 {
        return Err(Error::corrupt("model projection", "size"));
    }
    let mut r = ByteReader::new(p, "model projection");
    let data = (0..dim * s).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    let projection = Projection::from_raw(dim, s, data)?;

    // prototypes
    let words = dim.div_ceil(64);
    let p = payloads[6];
    if p.len() != classes * words * 8 {
        return Err(Error::corrupt("model prototypes", "size"));
    }
    let mut r = ByteReader::new(p, "model prototypes");
    let prototypes = (0..classes)
        .map(|_| {
            let w = (0..words).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            Hypervector::from_words(dim, w)
        })
        .collect::<Result<Vec<_>>>()?;

    // meta
    let p = payloads[7];
    if !fit(s, 8, p) {
        return Err(Error::corrupt("model meta", "size"));
    }
    let mut r = ByteReader::new(p, "model meta");
    let landmark_indices = (0..s)
        .map(|_| r.u64().and_then(|v| usize_of(v, "model meta")))
        .collect::<Result<Vec<_>>>()?;
    let method = LandmarkMethod::from_code(r.u8()?)
        .ok_or_else(|| Error::corrupt("model meta", "unknown landmark method"))?;
    if r.remaining() < classes * 8 {
        return Err(Error::corrupt("model meta", "size"));
    }
    let class_values = (0..classes).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
    let node_label_values = match r.u8()? {
        0 => None,
        1 => {
            let n = r.len(8)?;
            Some((0..n).map(|_| r.i64()).collect::<Result<Vec<_>>>()?)
        }
        _ => return Err(Error::corrupt("model meta", "bad node-label flag")),
    };
    r.finish()?;

    TrainedModel::assemble(
        config,
        lsh,
        codebook,
        mph,
        landmark_hists,
        projection,
        prototypes,
        f,
        (landmark_indices, method, class_values, node_label_values),
    )
}
