//! Weekly lead bins and the 5-bin probability vector every model emits.

use chrono::NaiveDate;
use std::fmt;

/// Weeks 1-4 after initialization plus "later".
pub const NUM_BINS: usize = 5;
/// Days per lead-week bin.
pub const BIN_DAYS: i64 = 7;
/// Last lead day covered by bins 1-4.
pub const LAST_BINNED_DAY: i64 = 4 * BIN_DAYS;

/// Tolerance on `sum(p) == 1` accepted by [`BinProbs::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// An outcome bin, 1-based: 1..=4 are lead weeks, 5 is "after week 4".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bin(u8);

impl Bin {
    pub const LATER: Bin = Bin(5);

    pub fn new(b: u8) -> Option<Self> {
        (1..=NUM_BINS as u8).contains(&b).then_some(Bin(b))
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < NUM_BINS, "bin index {i} out of range");
        Bin(i as u8 + 1)
    }

    /// 1-based bin number.
    pub fn number(self) -> u8 {
        self.0
    }

    /// 0-based index into a [`BinProbs`].
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// Bin holding lead day `lead` (1-based days after init). Lead days
    /// 1..=7 are bin 1, ..., 22..=28 bin 4, anything later bin 5.
    pub fn from_lead_day(lead: i64) -> Self {
        assert!(lead >= 1, "lead day must be positive, got {lead}");
        if lead > LAST_BINNED_DAY {
            Bin::LATER
        } else {
            Bin(((lead - 1) / BIN_DAYS) as u8 + 1)
        }
    }

    /// Outcome bin of an onset relative to an init date. `None` when the
    /// onset is on or before the init date (such instances are excluded).
    pub fn for_onset(init: NaiveDate, onset: Option<NaiveDate>) -> Option<Self> {
        match onset {
            None => Some(Bin::LATER),
            Some(d) => {
                let lead = (d - init).num_days();
                (lead >= 1).then(|| Bin::from_lead_day(lead))
            }
        }
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinProbsError {
    #[error("probability {value} in bin {bin} outside [0, 1]")]
    OutOfRange { bin: usize, value: f64 },
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
}

/// Probabilities for the five outcome bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinProbs([f64; NUM_BINS]);

impl BinProbs {
    pub fn new(p: [f64; NUM_BINS]) -> Result<Self, BinProbsError> {
        for (i, &v) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(BinProbsError::OutOfRange { bin: i + 1, value: v });
            }
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(BinProbsError::NotNormalized(s));
        }
        Ok(Self(p))
    }

    /// Scales nonnegative weights onto the simplex.
    pub fn normalized(w: [f64; NUM_BINS]) -> Result<Self, BinProbsError> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0 && s.is_finite()) || w.iter().any(|&v| v < 0.0) {
            return Err(BinProbsError::NotNormalized(s));
        }
        Self::new(w.map(|v| v / s))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_BINS as f64; NUM_BINS])
    }

    pub fn one_hot(bin: Bin) -> Self {
        let mut p = [0.0; NUM_BINS];
        p[bin.index()] = 1.0;
        Self(p)
    }

    pub fn as_array(&self) -> &[f64; NUM_BINS] {
        &self.0
    }

    pub fn get(&self, bin: Bin) -> f64 {
        self.0[bin.index()]
    }

    /// Cumulative probabilities through each bin.
    pub fn cumulative(&self) -> [f64; NUM_BINS] {
        let mut c = [0.0; NUM_BINS];
        let mut acc = 0.0;
        for (ci, &p) in c.iter_mut().zip(&self.0) {
            acc += p;
            *ci = acc;
        }
        c
    }
}

impl std::ops::Index<usize> for BinProbs {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
