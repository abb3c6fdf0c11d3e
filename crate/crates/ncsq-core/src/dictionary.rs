//! Sectioned Gaussian dictionaries for the fixed-rate vector quantizer.
//!
//! A dictionary is an `n x (m * l)` matrix split into `m` sections of `l`
//! columns; a codeword is the sum of one column per section, so the index
//! costs `m * log2(l)` bits for `n` symbols. Five families are generated:
//!
//! * `Iid`    - independent Gaussian entries with a given variance;
//! * `Gr`     - columns drawn from the stationary control covariance of
//!   the loop under memoryless dropouts;
//! * `Gsr`    - as `Gr` with geometrically decaying per-section scales,
//!   trading granular against overload distortion;
//! * `Gr2`/`Gsr2` - the same shaped by the two-state-channel covariance,
//!   usable without knowing the current network state.
//!
//! Generation is a pure function of `(family, parameters, seed)`: a ChaCha20
//! stream feeds a fixed layout (column by column, section by section, `n`
//! standard normal draws per column), so the shaped families built from one
//! seed differ only by their deterministic scale factors.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::psd_sqrt;
use crate::scalar::{real, Scalar};

/// Default cap on codewords per section.
pub const DEFAULT_SECTION_CAP: usize = 1 << 24;

/// Magic bytes of the dictionary dump format.
pub const DICT_MAGIC: [u8; 8] = *b"NCSQDICT";
/// Version of the dictionary dump format.
pub const DICT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DictError {
    #[error("target rate must be positive")]
    InvalidRate,
    #[error("sections and horizon must be at least 1")]
    InvalidStructure,
    #[error("codewords per section {required} exceeds cap {cap}")]
    Overflow { required: u128, cap: usize },
    #[error("family {family:?} requires a {expected} shape input")]
    ShapeMismatch {
        family: DictionaryFamily,
        expected: &'static str,
    },
    #[error("covariance must be square of the horizon dimension")]
    ShapeDimension,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes in dictionary dump")]
    BadMagic,
    #[error("unsupported dictionary dump version {0}")]
    BadVersion(u32),
    #[error("unknown dictionary family tag {0}")]
    BadFamilyTag(u8),
    #[error("dictionary dump is truncated or inconsistent")]
    Malformed,
}

/// The five dictionary families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionaryFamily {
    Iid,
    Gr,
    Gsr,
    Gr2,
    Gsr2,
}

impl DictionaryFamily {
    pub fn tag(self) -> u8 {
        match self {
            Self::Iid => 0,
            Self::Gr => 1,
            Self::Gsr => 2,
            Self::Gr2 => 3,
            Self::Gsr2 => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, DictError> {
        Ok(match tag {
            0 => Self::Iid,
            1 => Self::Gr,
            2 => Self::Gsr,
            3 => Self::Gr2,
            4 => Self::Gsr2,
            other => return Err(DictError::BadFamilyTag(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Iid => "IID",
            Self::Gr => "GR",
            Self::Gsr => "GSR",
            Self::Gr2 => "GR2",
            Self::Gsr2 => "GSR2",
        }
    }

    /// Whether sections carry the decaying scale factors.
    pub fn scaled_sections(self) -> bool {
        matches!(self, Self::Gsr | Self::Gsr2)
    }
}

/// Rate bookkeeping for a sectioned dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSpec {
    pub horizon: usize,
    pub sections: usize,
    pub words_per_section: usize,
    /// Achieved rate `sections * log2(words) / horizon` in bit/symbol.
    pub rate: f64,
}

/// Achieved bit rate for the given structure.
pub fn achieved_rate(horizon: usize, sections: usize, words_per_section: usize) -> f64 {
    sections as f64 * (words_per_section as f64).log2() / horizon as f64
}

/// Codewords per section for a target rate: `ceil(2^(horizon * rate /
/// sections))`, with a relative guard so rates that land exactly on an
/// integer power survive floating-point round-off.
pub fn codewords_per_section(
    horizon: usize,
    sections: usize,
    target_rate: f64,
) -> Result<usize, DictError> {
    codewords_per_section_with_cap(horizon, sections, target_rate, DEFAULT_SECTION_CAP)
}

/// As [`codewords_per_section`] with an explicit cap.
pub fn codewords_per_section_with_cap(
    horizon: usize,
    sections: usize,
    target_rate: f64,
    cap: usize,
) -> Result<usize, DictError> {
    if horizon == 0 || sections == 0 {
        return Err(DictError::InvalidStructure);
    }
    if !target_rate.is_finite() || target_rate <= 0.0 {
        return Err(DictError::InvalidRate);
    }
    let exponent = horizon as f64 * target_rate / sections as f64;
    let raw = exponent.exp2();
    let rounded = raw.round();
    let words = if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        raw.ceil()
    };
    if !words.is_finite() || words > cap as f64 {
        return Err(DictError::Overflow {
            required: if words.is_finite() {
                words as u128
            } else {
                u128::MAX
            },
            cap,
        });
    }
    Ok(words as usize)
}

/// Resolve a target rate into a full [`RateSpec`] with the achieved rate.
pub fn rate_spec(horizon: usize, sections: usize, target_rate: f64) -> Result<RateSpec, DictError> {
    let words = codewords_per_section(horizon, sections, target_rate)?;
    Ok(RateSpec {
        horizon,
        sections,
        words_per_section: words,
        rate: achieved_rate(horizon, sections, words),
    })
}

/// Per-section scale factors `(1/m)^(s/m)` for sections `s = 0..m-1`.
/// The first section is unscaled; later sections shrink to match the
/// decreasing residual left to the remaining greedy rounds.
pub fn section_scales<T: Scalar>(sections: usize) -> Vec<T> {
    assert!(sections >= 1);
    let base = 1.0 / sections as f64;
    (0..sections)
        .map(|s| real::<T>(base.powf(s as f64 / sections as f64)))
        .collect()
}

/// Draw `count` columns from a zero-mean Gaussian with the given covariance,
/// realized through its symmetric square root (negative eigenvalues clipped).
pub fn sample_shaped_columns<T: Scalar, R: Rng + ?Sized>(
    covariance: &DMatrix<T>,
    count: usize,
    rng: &mut R,
) -> DMatrix<T> {
    let factor = psd_sqrt(covariance);
    let dim = covariance.nrows();
    let mut out = DMatrix::<T>::zeros(dim, count);
    let mut z = DVector::<T>::zeros(dim);
    for col in 0..count {
        for row in 0..dim {
            z[row] = real::<T>(StandardNormal.sample(rng));
        }
        out.set_column(col, &(&factor * &z));
    }
    out
}

/// Shaping input for dictionary generation: a scalar entry variance for the
/// unshaped family, a control covariance for the shaped families.
#[derive(Debug, Clone)]
pub enum DictionaryShape<T: Scalar> {
    Variance(T),
    Covariance(DMatrix<T>),
}

/// An immutable generated dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T: Scalar> {
    columns: DMatrix<T>,
    sections: usize,
    words_per_section: usize,
    family: DictionaryFamily,
    scale: T,
    seed: u64,
}

impl<T: Scalar> Dictionary<T> {
    /// Codeword dimension (the horizon length).
    pub fn rows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn words_per_section(&self) -> usize {
        self.words_per_section
    }

    /// Total number of columns, `sections * words_per_section`.
    pub fn total_words(&self) -> usize {
        self.sections * self.words_per_section
    }

    pub fn family(&self) -> DictionaryFamily {
        self.family
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn columns(&self) -> &DMatrix<T> {
        &self.columns
    }

    /// Column `index` as a contiguous slice (column-major storage).
    pub fn column_slice(&self, index: usize) -> &[T] {
        let n = self.rows();
        &self.columns.as_slice()[index * n..(index + 1) * n]
    }

    /// Column range owned by `section`.
    pub fn section_range(&self, section: usize) -> std::ops::Range<usize> {
        let start = section * self.words_per_section;
        start..start + self.words_per_section
    }

    /// Section that owns `column`.
    pub fn section_of(&self, column: usize) -> usize {
        column / self.words_per_section
    }

    pub fn achieved_rate(&self) -> f64 {
        achieved_rate(self.rows(), self.sections, self.words_per_section)
    }
}

/// Generate a dictionary. The entries are finally multiplied by `scale`
/// (a factor on standard deviations, not variances).
pub fn build_dictionary<T: Scalar>(
    family: DictionaryFamily,
    horizon: usize,
    sections: usize,
    words_per_section: usize,
    shape: &DictionaryShape<T>,
    scale: T,
    seed: u64,
) -> Result<Dictionary<T>, DictError> {
    if horizon == 0 || sections == 0 || words_per_section == 0 {
        return Err(DictError::InvalidStructure);
    }
    let total = sections * words_per_section;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut columns = DMatrix::<T>::zeros(horizon, total);

    enum Gen<T: Scalar> {
        Entrywise { sd: T },
        Shaped { factor: DMatrix<T> },
    }
    let gen = match (family, shape) {
        (DictionaryFamily::Iid, DictionaryShape::Variance(var)) => {
            Gen::Entrywise { sd: var.sqrt() }
        }
        (DictionaryFamily::Iid, _) => {
            return Err(DictError::ShapeMismatch {
                family,
                expected: "entry variance",
            })
        }
        (_, DictionaryShape::Covariance(cov)) => {
            if cov.nrows() != horizon || cov.ncols() != horizon {
                return Err(DictError::ShapeDimension);
            }
            Gen::Shaped {
                factor: psd_sqrt(cov),
            }
        }
        (_, DictionaryShape::Variance(_)) => {
            return Err(DictError::ShapeMismatch {
                family,
                expected: "control covariance",
            })
        }
    };

    let per_section: Vec<T> = if family.scaled_sections() {
        section_scales(sections)
    } else {
        vec![T::one(); sections]
    };

    let mut z = DVector::<T>::zeros(horizon);
    for (section, &per) in per_section.iter().enumerate() {
        let section_scale = per * scale;
        for word in 0..words_per_section {
            let col = section * words_per_section + word;
            for row in 0..horizon {
                z[row] = real::<T>(StandardNormal.sample(&mut rng));
            }
            match &gen {
                Gen::Entrywise { sd } => {
                    columns.set_column(col, &(&z * (*sd * section_scale)));
                }
                Gen::Shaped { factor } => {
                    columns.set_column(col, &((factor * &z) * section_scale));
                }
            }
        }
    }

    Ok(Dictionary {
        columns,
        sections,
        words_per_section,
        family,
        scale,
        seed,
    })
}

impl<T: Scalar> Dictionary<T> {
    /// Serialize to the flat binary dump format: an eight-byte magic,
    /// little-endian header fields (version, horizon, sections, words per
    /// section as `u32`, family tag as one byte, scale as `f64`, seed as
    /// `u64`) followed by the entries as column-major little-endian `f64`.
    pub fn write_to<W: Write>(&self, writer: &mut W) -> Result<(), DictError> {
        writer.write_all(&DICT_MAGIC)?;
        writer.write_all(&DICT_FORMAT_VERSION.to_le_bytes())?;
        writer.write_all(&(self.rows() as u32).to_le_bytes())?;
        writer.write_all(&(self.sections as u32).to_le_bytes())?;
        writer.write_all(&(self.words_per_section as u32).to_le_bytes())?;
        writer.write_all(&[self.family.tag()])?;
        writer.write_all(&self.scale.to_f64().unwrap().to_le_bytes())?;
        writer.write_all(&self.seed.to_le_bytes())?;
        for value in self.columns.as_slice() {
            writer.write_all(&value.to_f64().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    /// Deserialize from the binary dump format.
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Self, DictError> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if magic != DICT_MAGIC {
            return Err(DictError::BadMagic);
        }
        let version = read_u32(reader)?;
        if version != DICT_FORMAT_VERSION {
            return Err(DictError::BadVersion(version));
        }
        let horizon = read_u32(reader)? as usize;
        let sections = read_u32(reader)? as usize;
        let words = read_u32(reader)? as usize;
        let mut tag = [0u8; 1];
        reader.read_exact(&mut tag)?;
        let family = DictionaryFamily::from_tag(tag[0])?;
        let scale = real::<T>(read_f64(reader)?);
        let mut seed_bytes = [0u8; 8];
        reader.read_exact(&mut seed_bytes)?;
        let seed = u64::from_le_bytes(seed_bytes);
        if horizon == 0 || sections == 0 || words == 0 {
            return Err(DictError::Malformed);
        }
        let total = sections
            .checked_mul(words)
            .and_then(|t| t.checked_mul(horizon))
            .ok_or(DictError::Malformed)?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(real::<T>(read_f64(reader)?));
        }
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing)? != 0 {
            return Err(DictError::Malformed);
        }
        Ok(Dictionary {
            columns: DMatrix::from_column_slice(horizon, sections * words, &data),
            sections,
            words_per_section: words,
            family,
            scale,
            seed,
        })
    }
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32, DictError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(reader: &mut R) -> Result<f64, DictError> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
