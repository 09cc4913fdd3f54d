//! Parameters of the reference classifier and the KPC1 file format.
//!
//! The body projects the 2^18-dimensional feature space to a hidden layer of
//! width 64 through a ReLU; the head maps hidden units to five logits. Body
//! rows are initialized from `N(0, body_std^2)` drawn on ChaCha8 stream `row`
//! of `body_seed`, so only rows touched by training need to be stored.
//!
//! KPC1 layout (little-endian): magic `KPC1`, u32 version, u32 input dim,
//! u32 hidden, u32 K, u64 body seed, f64 body std, u64 head seed, u64 doc
//! count, f64 feature scale, u32 df count and that many (u32 index, u32 df), u32 row count and
//! that many (u32 index, hidden × f32), hidden × K f32 head (row-major), K f32
//! bias.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::featurize::{FeatureVector, Featurizer, FEATURE_DIM};
use super::prob::ProbDist;
use crate::corpus::NUM_LABELS;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

pub const HIDDEN_WIDTH: usize = 64;
pub const HEAD_INIT_STD: f64 = 0.02;
pub const BODY_INIT_STD: f64 = 0.01;

const KPC_MAGIC: &[u8; 4] = b"KPC1";
const KPC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams<T> {
    pub(crate) featurizer: Featurizer,
    pub(crate) hidden: usize,
    pub(crate) body_seed: u64,
    pub(crate) body_std: f64,
    pub(crate) rows: BTreeMap<u32, Vec<T>>,
    pub(crate) head_seed: u64,
    /// `hidden × K`, row-major: `head[j * K + k]`.
    pub(crate) head: Vec<T>,
    pub(crate) bias: Vec<T>,
}

fn draw_f32_rounded<T: Scalar>(rng: &mut rng::SeededRng, len: usize, std: f64) -> Vec<T> {
    rng::gaussian_vec(rng, len, std).into_iter().map(|x| T::of(x as f32 as f64)).collect()
}

impl<T: Scalar> ClassifierParams<T> {
    /// Fresh parameters: body and head both drawn from `seed`.
    pub fn init(featurizer: Featurizer, seed: u64) -> Self {
        Self::with_hidden(featurizer, HIDDEN_WIDTH, seed)
    }

    pub fn with_hidden(featurizer: Featurizer, hidden: usize, seed: u64) -> Self {
        let base = Self {
            featurizer,
            hidden,
            body_seed: seed,
            body_std: BODY_INIT_STD,
            rows: BTreeMap::new(),
            head_seed: 0,
            head: Vec::new(),
            bias: Vec::new(),
        };
        base.reinit_head(seed.wrapping_add(0x9E37_79B9_7F4A_7C15))
    }

    /// Same body; head redrawn from `N(0, 0.02^2)` with `seed`, bias zeroed.
    pub fn reinit_head(&self, seed: u64) -> Self {
        let mut out = Self {
            featurizer: self.featurizer.clone(),
            hidden: self.hidden,
            body_seed: self.body_seed,
            body_std: self.body_std,
            rows: self.rows.clone(),
            head_seed: seed,
            head: Vec::new(),
            bias: vec![T::zero(); NUM_LABELS],
        };
        out.head = draw_f32_rounded(&mut rng::seeded(seed), self.hidden * NUM_LABELS, HEAD_INIT_STD);
        out
    }

    /// Same body and head with a different featurizer.
    pub fn with_featurizer(&self, featurizer: Featurizer) -> Self {
        Self { featurizer, ..self.clone() }
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn head(&self) -> &[T] {
        &self.head
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn featurize(&self, x_s: &str, x_a: &str) -> Result<FeatureVector> {
        self.featurizer.featurize(x_s, x_a)
    }

    pub fn body_row(&self, index: u32) -> Cow<'_, [T]> {
        match self.rows.get(&index) {
            Some(r) => Cow::Borrowed(r.as_slice()),
            None => Cow::Owned(self.initial_row(index)),
        }
    }

    pub(crate) fn initial_row(&self, index: u32) -> Vec<T> {
        draw_f32_rounded(&mut rng::seeded_stream(self.body_seed, index as u64), self.hidden, self.body_std)
    }

    pub(crate) fn row_mut(&mut self, index: u32) -> &mut Vec<T> {
        if !self.rows.contains_key(&index) {
            let init = self.initial_row(index);
            self.rows.insert(index, init);
        }
        self.rows.get_mut(&index).expect("row inserted above")
    }

    /// Hidden activations before the ReLU.
    pub fn pre_activation(&self, f: &FeatureVector) -> Result<Vec<T>> {
        let mut pre = vec![T::zero(); self.hidden];
        for &(i, w) in f.entries() {
            if i as usize >= FEATURE_DIM {
                return Err(Error::DimensionMismatch { expected: FEATURE_DIM, actual: i as usize + 1 });
            }
            let w = T::of(w);
            for (p, &r) in pre.iter_mut().zip(self.body_row(i).iter()) {
                *p += w * r;
            }
        }
        Ok(pre)
    }

    pub fn logits_from_hidden(&self, h: &[T]) -> Vec<T> {
        let mut z = self.bias.clone();
        for (j, &hj) in h.iter().enumerate() {
            if hj == T::zero() {
                continue;
            }
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += hj * self.head[j * NUM_LABELS + k];
            }
        }
        z
    }

    pub fn logits(&self, f: &FeatureVector) -> Result<Vec<T>> {
        let h: Vec<T> = self.pre_activation(f)?.into_iter().map(|x| x.max(T::zero())).collect();
        Ok(self.logits_from_hidden(&h))
    }

    /// `softmax(head^T relu(body^T f) + bias)`.
    pub fn forward(&self, f: &FeatureVector) -> Result<ProbDist> {
        ProbDist::from_logits(&self.logits(f)?)
    }

    pub fn predict(&self, x_s: &str, x_a: &str) -> Result<ProbDist> {
        self.forward(&self.featurize(x_s, x_a)?)
    }

    pub fn is_finite(&self) -> bool {
        self.head.iter().chain(&self.bias).chain(self.rows.values().flatten()).all(|x| x.is_finite())
    }

    /// Converts every weight to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ClassifierParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        ClassifierParams {
            featurizer: self.featurizer.clone(),
            hidden: self.hidden,
            body_seed: self.body_seed,
            body_std: self.body_std,
            rows: self.rows.iter().map(|(&k, v)| (k, conv(v))).collect(),
            head_seed: self.head_seed,
            head: conv(&self.head),
            bias: conv(&self.bias),
        }
    }

    /// SHA-256 over the body (seed, init scale and stored rows).
    pub fn body_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.body_seed.to_le_bytes());
        h.update(self.body_std.to_le_bytes());
        h.update((self.hidden as u64).to_le_bytes());
        for (k, row) in &self.rows {
            h.update(k.to_le_bytes());
            for x in row {
                h.update(x.f64().to_le_bytes());
            }
        }
        hex_digest(h)
    }

    /// SHA-256 over every parameter, including the featurizer statistics.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.body_digest().as_bytes());
        h.update(self.featurizer.n_docs().to_le_bytes());
        h.update(self.featurizer.scale().to_le_bytes());
        for (i, df) in self.featurizer.document_frequencies() {
            h.update(i.to_le_bytes());
            h.update(df.to_le_bytes());
        }
        for x in self.head.iter().chain(&self.bias) {
            h.update(x.f64().to_le_bytes());
        }
        hex_digest(h)
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl ClassifierParams<f32> {
    pub fn write_kpc1(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(KPC_MAGIC)?;
        w.write_u32::<LittleEndian>(KPC_VERSION)?;
        w.write_u32::<LittleEndian>(FEATURE_DIM as u32)?;
        w.write_u32::<LittleEndian>(self.hidden as u32)?;
        w.write_u32::<LittleEndian>(NUM_LABELS as u32)?;
        w.write_u64::<LittleEndian>(self.body_seed)?;
        w.write_f64::<LittleEndian>(self.body_std)?;
        w.write_u64::<LittleEndian>(self.head_seed)?;
        w.write_u64::<LittleEndian>(self.featurizer.n_docs())?;
        w.write_f64::<LittleEndian>(self.featurizer.scale())?;
        let df = self.featurizer.document_frequencies();
        w.write_u32::<LittleEndian>(df.len() as u32)?;
        for (i, d) in df {
            w.write_u32::<LittleEndian>(i)?;
            w.write_u32::<LittleEndian>(d)?;
        }
        w.write_u32::<LittleEndian>(self.rows.len() as u32)?;
        for (&i, row) in &self.rows {
            w.write_u32::<LittleEndian>(i)?;
            for &x in row {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        for &x in self.head.iter().chain(&self.bias) {
            w.write_f32::<LittleEndian>(x)?;
        }
        Ok(())
    }

    pub fn read_kpc1(r: &mut impl Read) -> Result<Self> {
        let fmt = |e: io::Error| Error::Format(format!("KPC1: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != KPC_MAGIC {
            return Err(Error::Format("bad magic, expected KPC1".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(fmt)?;
        if version != KPC_VERSION {
            return Err(Error::Format(format!("unsupported KPC1 version {version}")));
        }
        let input = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        if input != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, actual: input });
        }
        let hidden = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        let k = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        if k != NUM_LABELS {
            return Err(Error::DimensionMismatch { expected: NUM_LABELS, actual: k });
        }
        let body_seed = r.read_u64::<LittleEndian>().map_err(fmt)?;
        let body_std = r.read_f64::<LittleEndian>().map_err(fmt)?;
        let head_seed = r.read_u64::<LittleEndian>().map_err(fmt)?;
        let n_docs = r.read_u64::<LittleEndian>().map_err(fmt)?;
        let scale = r.read_f64::<LittleEndian>().map_err(fmt)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Format(format!("feature scale {scale} is not positive")));
        }
        let n_df = r.read_u32::<LittleEndian>().map_err(fmt)?;
        let mut df = HashMap::with_capacity(n_df as usize);
        for _ in 0..n_df {
            let i = r.read_u32::<LittleEndian>().map_err(fmt)?;
            let d = r.read_u32::<LittleEndian>().map_err(fmt)?;
            df.insert(i, d);
        }
        let n_rows = r.read_u32::<LittleEndian>().map_err(fmt)?;
        let mut rows = BTreeMap::new();
        for _ in 0..n_rows {
            let i = r.read_u32::<LittleEndian>().map_err(fmt)?;
            let mut row = vec![0f32; hidden];
            r.read_f32_into::<LittleEndian>(&mut row).map_err(fmt)?;
            rows.insert(i, row);
        }
        let mut head = vec![0f32; hidden * NUM_LABELS];
        r.read_f32_into::<LittleEndian>(&mut head).map_err(fmt)?;
        let mut bias = vec![0f32; NUM_LABELS];
        r.read_f32_into::<LittleEndian>(&mut bias).map_err(fmt)?;
        let params = Self {
            featurizer: Featurizer::from_parts(n_docs, df, scale),
            hidden,
            body_seed,
            body_std,
            rows,
            head_seed,
            head,
            bias,
        };
        if !params.is_finite() {
            return Err(Error::NonFinite("KPC1 parameters".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_kpc1(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_kpc1(&mut BufReader::new(file))
    }
}
