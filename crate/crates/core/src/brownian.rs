//! Seeded Wiener increments on a dyadic fine grid and their exact coarsening.
//!
//! Every increment is a pure function of `(master_seed, path_index,
//! component, step)`: a ChaCha8 key is derived from the master seed, the
//! `(path, component)` pair selects the ChaCha stream, and the step is the
//! position within that stream. Uniforms are mapped to normals through the
//! inverse normal CDF, so the output never depends on call order or on how
//! paths are spread across workers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest supported fine-grid exponent.
pub const MAX_EXP: u32 = 30;

/// Which noise family a stream belongs to. `Independent` draws a second,
/// unrelated family from the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoiseFamily {
    #[default]
    Primary,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub horizon: f64,
    pub fine_exp: u32,
    pub dims: usize,
    pub master_seed: u64,
    pub path_index: u64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self { horizon: 1.0, fine_exp: 13, dims: 1, master_seed: 0, path_index: 0 }
    }
}

/// Number of steps `horizon * 2^exp`, if it is a positive integer.
pub fn dyadic_steps(horizon: f64, exp: u32) -> Result<usize> {
    if exp > MAX_EXP {
        return Err(Error::InvalidSpec(format!("grid exponent {exp} exceeds {MAX_EXP}")));
    }
    let n = horizon * 2f64.powi(exp as i32);
    if !(n.is_finite() && n >= 1.0 && n.fract() == 0.0 && n <= (1u64 << 40) as f64) {
        return Err(Error::InvalidSpec(format!(
            "horizon {horizon} is not a positive multiple of 2^-{exp}"
        )));
    }
    Ok(n as usize)
}

impl PathSpec {
    pub fn validate(&self) -> Result<usize> {
        if self.dims != 1 && self.dims != 3 {
            return Err(Error::InvalidSpec(format!("dims must be 1 or 3, got {}", self.dims)));
        }
        dyadic_steps(self.horizon, self.fine_exp)
    }

    pub fn fine_dt(&self) -> f64 {
        2f64.powi(-(self.fine_exp as i32))
    }
}

/// Per-component Wiener increments on a uniform grid of step `2^-exp`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementStream {
    exp: u32,
    components: Vec<Vec<f64>>,
}

impl IncrementStream {
    pub fn from_components(exp: u32, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidSpec("stream needs at least one component".into()));
        }
        let n = components[0].len();
        if components.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidSpec("components have different lengths".into()));
        }
        Ok(Self { exp, components })
    }

    pub fn exp(&self) -> u32 {
        self.exp
    }

    pub fn dt(&self) -> f64 {
        2f64.powi(-(self.exp as i32))
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn steps(&self) -> usize {
        self.components[0].len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Increments of step `2^-coarse_exp`: each coarse increment is the sum
    /// of the `2^(exp - coarse_exp)` fine increments it covers.
    ///
    /// Blocks are summed by repeated pairwise halving, so coarsening in
    /// stages is bit-identical to coarsening in one go.
    pub fn coarsen(&self, coarse_exp: u32) -> Result<IncrementStream> {
        if coarse_exp > self.exp {
            return Err(Error::InvalidSpec(format!(
                "cannot coarsen 2^-{} increments to the finer 2^-{coarse_exp}",
                self.exp
            )));
        }
        let shift = self.exp - coarse_exp;
        if self.steps() % (1usize << shift) != 0 {
            return Err(Error::InvalidSpec(format!(
                "{} steps do not split into blocks of {}",
                self.steps(),
                1usize << shift
            )));
        }
        let components = self
            .components
            .iter()
            .map(|c| {
                let mut v = c.clone();
                for _ in 0..shift {
                    v = halve(&v);
                }
                v
            })
            .collect();
        Ok(IncrementStream { exp: coarse_exp, components })
    }

    /// One halving step, `[a, b, c, d] -> [a + b, c + d]`.
    pub fn halve_once(&self) -> Result<IncrementStream> {
        if self.exp == 0 {
            return Err(Error::InvalidSpec("cannot coarsen below 2^0".into()));
        }
        self.coarsen(self.exp - 1)
    }
}

fn halve(v: &[f64]) -> Vec<f64> {
    v.chunks_exact(2).map(|p| p[0] + p[1]).collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(master_seed: u64, family: NoiseFamily) -> [u8; 32] {
    let tag: u64 = match family {
        NoiseFamily::Primary => 0x5746_424D_0000_0001,
        NoiseFamily::Independent => 0x5746_424D_0000_0002,
    };
    let mut state = master_seed ^ tag.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Counter-based source of standard normal draws.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    key: [u8; 32],
    normal: Normal,
}

impl NoiseSource {
    pub fn new(master_seed: u64, family: NoiseFamily) -> Self {
        Self { key: derive_key(master_seed, family), normal: Normal::standard() }
    }

    fn rng(&self, path_index: u64, component: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        // 4 streams per path; components are at most 3
        rng.set_stream(path_index.wrapping_mul(4).wrapping_add(component as u64));
        rng
    }

    /// Fills `out` with N(0, 1) draws for steps `first_step ..`.
    pub fn fill_standard(&self, path_index: u64, component: usize, first_step: u64, out: &mut [f64]) {
        let mut rng = self.rng(path_index, component);
        // one u64 (two 32-bit words) per draw
        rng.set_word_pos(u128::from(first_step) * 2);
        for x in out.iter_mut() {
            *x = self.normal.inverse_cdf(open_unit(rng.next_u64()));
        }
    }

    /// Draw for one `(path, component, step)` address.
    pub fn standard_at(&self, path_index: u64, component: usize, step: u64) -> f64 {
        let mut v = [0.0];
        self.fill_standard(path_index, component, step, &mut v);
        v[0]
    }
}

/// Maps 64 random bits to the open interval (0, 1) using the top 53 bits.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Fine-grid increments for one path, each N(0, 2^-fine_exp).
pub fn sample_fine_increments(spec: &PathSpec) -> Result<IncrementStream> {
    sample_family(spec, NoiseFamily::Primary)
}

pub fn sample_family(spec: &PathSpec, family: NoiseFamily) -> Result<IncrementStream> {
    let n = spec.validate()?;
    let source = NoiseSource::new(spec.master_seed, family);
    let sd = spec.fine_dt().sqrt();
    let components = (0..spec.dims)
        .map(|c| {
            let mut v = vec![0.0; n];
            source.fill_standard(spec.path_index, c, 0, &mut v);
            v.iter_mut().for_each(|x| *x *= sd);
            v
        })
        .collect();
    Ok(IncrementStream { exp: spec.fine_exp, components })
}

pub fn coarsen(stream: &IncrementStream, coarse_exp: u32) -> Result<IncrementStream> {
    stream.coarsen(coarse_exp)
}

const DUMP_MAGIC: &[u8; 4] = b"WFBM";
pub const DUMP_VERSION: u32 = 1;
const DUMP_HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 8 + 8;

/// Binary dump of one path's fine increments.
///
/// Layout, all little-endian: magic `WFBM`, version `u32`, horizon `f64`,
/// fine exponent `u32`, dims `u32`, master seed `u64`, path index `u64`,
/// then `dims * steps` `f64` values, component after component.
pub fn encode_dump(spec: &PathSpec, stream: &IncrementStream) -> Result<Vec<u8>> {
    let n = spec.validate()?;
    if stream.dims() != spec.dims || stream.steps() != n || stream.exp() != spec.fine_exp {
        return Err(Error::InvalidSpec("stream does not match the path specification".into()));
    }
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN + 8 * n * spec.dims);
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    out.extend_from_slice(&spec.horizon.to_le_bytes());
    out.extend_from_slice(&spec.fine_exp.to_le_bytes());
    out.extend_from_slice(&(spec.dims as u32).to_le_bytes());
    out.extend_from_slice(&spec.master_seed.to_le_bytes());
    out.extend_from_slice(&spec.path_index.to_le_bytes());
    for c in stream.components() {
        for x in c {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dump(bytes: &[u8]) -> Result<(PathSpec, IncrementStream)> {
    let bad = |m: &str| Error::Parse(format!("brownian dump: {m}"));
    if bytes.len() < DUMP_HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != DUMP_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != DUMP_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let spec = PathSpec {
        horizon: f64::from_bits(u64_at(8)),
        fine_exp: u32_at(16),
        dims: u32_at(20) as usize,
        master_seed: u64_at(24),
        path_index: u64_at(32),
    };
    let n = spec.validate().map_err(|e| bad(&e.to_string()))?;
    let body = &bytes[DUMP_HEADER_LEN..];
    let expected = n.checked_mul(spec.dims).and_then(|v| v.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(bad(&format!("body has {} bytes, header implies {n} steps x {} dims", body.len(), spec.dims)));
    }
    let components = body
        .chunks_exact(8 * n)
        .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect();
    Ok((spec, IncrementStream { exp: spec.fine_exp, components }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dims: usize, seed: u64, path: u64) -> PathSpec {
        PathSpec { horizon: 1.0, fine_exp: 13, dims, master_seed: seed, path_index: path }
    }

    #[test]
    fn deterministic_streams() {
        let s = spec(3, 42, 7);
        let a = sample_fine_increments(&s).unwrap();
        let b = sample_fine_increments(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps(), 8192);
        assert_eq!(a.dims(), 3);
        let other = sample_fine_increments(&spec(3, 42, 8)).unwrap();
        assert_ne!(a.component(0), other.component(0));
    }

    #[test]
    fn random_access_matches_sequential() {
        let s = spec(1, 9, 3);
        let a = sample_fine_increments(&s).unwrap();
        let src = NoiseSource::new(9, NoiseFamily::Primary);
        let sd = s.fine_dt().sqrt();
        for step in [0u64, 1, 100, 8191] {
            assert_eq!(src.standard_at(3, 0, step) * sd, a.component(0)[step as usize]);
        }
    }

    #[test]
    fn components_are_uncorrelated() {
        let a = sample_fine_increments(&spec(3, 1, 0)).unwrap();
        let corr = |x: &[f64], y: &[f64]| {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (a, b) in x.iter().zip(y) {
                sxy += (a - mx) * (b - my);
                sxx += (a - mx).powi(2);
                syy += (b - my).powi(2);
            }
            sxy / (sxx * syy).sqrt()
        };
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(corr(a.component(i), a.component(j)).abs() < 0.05);
        }
    }

    #[test]
    fn empirical_variance() {
        let a = sample_fine_increments(&spec(1, 2024, 0)).unwrap();
        let x = a.component(0);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let dt = 2f64.powi(-13);
        assert!((0.9 * dt..=1.1 * dt).contains(&var), "{var}");
    }

    #[test]
    fn non_dyadic_horizon_rejected() {
        let s = PathSpec { horizon: 0.3, ..spec(1, 0, 0) };
        assert!(matches!(sample_fine_increments(&s), Err(Error::InvalidSpec(_))));
        let s = PathSpec { dims: 2, ..spec(1, 0, 0) };
        assert!(sample_fine_increments(&s).is_err());
        let s = PathSpec { horizon: 2.5, fine_exp: 1, ..spec(1, 0, 0) };
        assert_eq!(s.validate().unwrap(), 5);
    }

    #[test]
    fn coarsen_definition() {
        let s = IncrementStream::from_components(2, vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(s.coarsen(1).unwrap().component(0), &[3.0, 7.0]);
        assert_eq!(s.coarsen(0).unwrap().component(0), &[10.0]);
        assert_eq!(s.coarsen(2).unwrap(), s);
        assert!(s.coarsen(3).is_err());
        assert_eq!(s.coarsen(1).unwrap().dt(), 0.5);
    }

    #[test]
    fn coarsen_preserves_total() {
        let a = sample_fine_increments(&spec(1, 5, 5)).unwrap();
        let total: f64 = a.component(0).iter().sum();
        for k in 0..=13 {
            let c = a.coarsen(k).unwrap();
            assert_eq!(c.steps(), 1 << k);
            let s: f64 = c.component(0).iter().sum();
            assert!((s - total).abs() < 1e-13);
        }
    }

    #[test]
    fn dump_round_trip() {
        let s = PathSpec { fine_exp: 4, ..spec(3, 11, 2) };
        let a = sample_fine_increments(&s).unwrap();
        let bytes = encode_dump(&s, &a).unwrap();
        assert_eq!(&bytes[..4], b"WFBM");
        assert_eq!(bytes.len(), DUMP_HEADER_LEN + 3 * 16 * 8);
        let (s2, b) = decode_dump(&bytes).unwrap();
        assert_eq!(s2, s);
        assert_eq!(b, a);
    }

    #[test]
    fn dump_rejects_corruption() {
        let s = PathSpec { fine_exp: 3, ..spec(1, 1, 0) };
        let a = sample_fine_increments(&s).unwrap();
        let bytes = encode_dump(&s, &a).unwrap();
        assert!(decode_dump(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_dump(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_dump(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_dump(&bad).is_err());
        let mut bad = bytes;
        bad[20] = 2;
        assert!(decode_dump(&bad).is_err());
    }
}
