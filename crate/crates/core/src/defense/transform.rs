use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::seed::{self, StableHasher};

/// Scale of the per-account offset `b`.
pub const OFFSET_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformKind {
    #[default]
    None,
    Affine,
    Shuffle,
    AffineShuffle,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] =
        [Self::None, Self::Affine, Self::Shuffle, Self::AffineShuffle];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Affine => "affine",
            Self::Shuffle => "shuffle",
            Self::AffineShuffle => "affine_shuffle",
        }
    }

    fn shuffles(self) -> bool {
        matches!(self, Self::Shuffle | Self::AffineShuffle)
    }

    fn rotates(self) -> bool {
        matches!(self, Self::Affine | Self::AffineShuffle)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown transform `{s}`")))
    }
}

/// Fixed invertible map `y = Q (P e) + b` owned by one account.
///
/// `P` permutes coordinates (`(P e)_i = e_{perm[i]}`), `Q` is a proper rotation.
/// Either part is the identity when the kind does not use it.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountTransform {
    kind: TransformKind,
    perm: Vec<usize>,
    rotation: Option<Array2<f64>>,
    offset: Array1<f64>,
}

/// Haar-distributed rotation: QR of a Gaussian matrix with column signs fixed
/// by `diag(R)`, then one column negated if needed to make `det = +1`.
pub fn random_rotation(dim: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if dim > 0 && q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Array2::from_shape_fn((dim, dim), |(i, j)| q[(i, j)])
}

impl AccountTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: TransformKind::None,
            perm: (0..dim).collect(),
            rotation: None,
            offset: Array1::zeros(dim),
        }
    }

    /// Builds the map for `dim`-wide outputs. Different widths derive
    /// independent maps from the same account seed.
    pub fn new(kind: TransformKind, dim: usize, transform_seed: u64) -> Self {
        let mut out = Self::identity(dim);
        out.kind = kind;
        let mut rng = seed::rng(
            StableHasher::new()
                .u64(transform_seed)
                .u64(dim as u64)
                .finish(),
        );
        if kind.shuffles() {
            out.perm.shuffle(&mut rng);
        }
        if kind.rotates() {
            out.rotation = Some(random_rotation(dim, &mut rng));
            out.offset =
                Array1::from_shape_fn(dim, |_| OFFSET_SCALE * rng.sample::<f64, _>(StandardNormal));
        }
        out
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// The map as `(M, b)` with `y = M e + b`.
    pub fn matrix(&self) -> (Array2<f64>, Array1<f64>) {
        let d = self.dim();
        let mut p = Array2::zeros((d, d));
        for (i, &src) in self.perm.iter().enumerate() {
            p[[i, src]] = 1.0;
        }
        let m = match &self.rotation {
            Some(q) => q.dot(&p),
            None => p,
        };
        (m, self.offset.clone())
    }

    fn check(&self, e: ArrayView1<'_, f64>) -> Result<()> {
        if e.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "transform expects width {}, got {}",
                self.dim(),
                e.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, e: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check(e)?;
        let shuffled = Array1::from_shape_fn(self.dim(), |i| e[self.perm[i]]);
        Ok(match &self.rotation {
            Some(q) => q.dot(&shuffled) + &self.offset,
            None => shuffled,
        })
    }

    pub fn invert(&self, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check(y)?;
        let shuffled = match &self.rotation {
            Some(q) => q.t().dot(&(&y - &self.offset)),
            None => y.to_owned(),
        };
        let mut e = Array1::zeros(self.dim());
        for (i, &src) in self.perm.iter().enumerate() {
            e[src] = shuffled[i];
        }
        Ok(e)
    }
}
