use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Bijection `π` on `0..n`; element `t` of the input lands at `π(t)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl Interleaver {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut inv = vec![usize::MAX; perm.len()];
        for (t, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inv[p] != usize::MAX {
                return Err(Error::InvalidConfig("interleaver is not a permutation".into()));
            }
            inv[p] = t;
        }
        Ok(Self { perm, inv })
    }

    pub fn identity(n: usize) -> Self {
        Self::new((0..n).collect()).expect("identity is a permutation")
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self::new(perm).expect("shuffle is a permutation")
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn forward(&self, t: usize) -> usize {
        self.perm[t]
    }

    pub fn inverse(&self, p: usize) -> usize {
        self.inv[p]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Clone>(&self, input: &[T]) -> Vec<T> {
        assert_eq!(input.len(), self.len(), "interleaver length");
        self.inv.iter().map(|&t| input[t].clone()).collect()
    }

    pub fn deinterleave<T: Clone>(&self, input: &[T]) -> Vec<T> {
        assert_eq!(input.len(), self.len(), "interleaver length");
        self.perm.iter().map(|&p| input[p].clone()).collect()
    }
}
