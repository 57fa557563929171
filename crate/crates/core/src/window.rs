//! Functions on the shift that read a fixed window of coordinates.

use thiserror::Error;

use crate::symbolic::{PointRep, SubshiftSpec, Symbol, WordError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("window [{lo}, {hi}) is empty")]
    EmptyWindow { lo: i64, hi: i64 },
    #[error("word {word:?} has length {len}, window width is {width}")]
    Length { word: Vec<Symbol>, len: usize, width: usize },
    #[error("word {word:?} is not admissible: {source}")]
    Inadmissible { word: Vec<Symbol>, source: WordError },
    #[error("word {0:?} appears twice")]
    Duplicate(Vec<Symbol>),
    #[error("admissible window word {0:?} has no entry")]
    Missing(Vec<Symbol>),
    #[error("entry for {word:?} is invalid: {reason}")]
    Value { word: Vec<Symbol>, reason: String },
}

/// Table indexed by admissible words on the coordinate window `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Windowed<T> {
    spec: SubshiftSpec,
    lo: i64,
    hi: i64,
    values: Vec<Option<T>>,
}

impl<T: Clone> Windowed<T> {
    /// Table from `(word, value)` pairs; must cover exactly the admissible window words.
    pub fn from_entries(
        spec: &SubshiftSpec,
        lo: i64,
        hi: i64,
        entries: impl IntoIterator<Item = (Vec<Symbol>, T)>,
    ) -> Result<Self, TableError> {
        if hi <= lo {
            return Err(TableError::EmptyWindow { lo, hi });
        }
        let width = (hi - lo) as usize;
        let l = spec.alphabet_size();
        let mut values = vec![None; l.pow(width as u32)];
        for (word, v) in entries {
            if word.len() != width {
                let len = word.len();
                return Err(TableError::Length { word, len, width });
            }
            if let Err(source) = spec.check_word(&word) {
                return Err(TableError::Inadmissible { word, source });
            }
            let i = code(l, &word);
            if values[i].is_some() {
                return Err(TableError::Duplicate(word));
            }
            values[i] = Some(v);
        }
        let table = Self { spec: spec.clone(), lo, hi, values };
        if let Some(w) = table.words().into_iter().find(|w| table.get(w).is_none()) {
            return Err(TableError::Missing(w));
        }
        Ok(table)
    }

    /// Table filled by evaluating `f` on every admissible window word.
    pub fn from_fn(spec: &SubshiftSpec, lo: i64, hi: i64, mut f: impl FnMut(&[Symbol]) -> T) -> Self {
        assert!(hi > lo, "window must be nonempty");
        let words = spec.words((hi - lo) as usize);
        Self::from_entries(
            spec,
            lo,
            hi,
            words.into_iter().map(|w| {
                let v = f(&w);
                (w, v)
            }),
        )
        .expect("generated table is total")
    }

    pub fn constant(spec: &SubshiftSpec, v: T) -> Self {
        Self::from_fn(spec, 0, 1, |_| v.clone())
    }

    pub fn spec(&self) -> &SubshiftSpec {
        &self.spec
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn width(&self) -> usize {
        (self.hi - self.lo) as usize
    }

    /// Reads only coordinates `n ≥ 0`.
    pub fn future_only(&self) -> bool {
        self.lo >= 0
    }

    pub fn words(&self) -> Vec<Vec<Symbol>> {
        self.spec.words(self.width())
    }

    pub fn get(&self, w: &[Symbol]) -> Option<&T> {
        self.values.get(code(self.spec.alphabet_size(), w)).and_then(|v| v.as_ref())
    }

    pub fn entries(&self) -> impl Iterator<Item = (Vec<Symbol>, &T)> + '_ {
        self.words().into_iter().map(move |w| {
            let v = self.get(&w).expect("total table");
            (w, v)
        })
    }

    /// Value at `f^j(x)`.
    pub fn at(&self, x: &PointRep, j: i64) -> &T {
        let l = self.spec.alphabet_size();
        let mut i = 0usize;
        for n in self.lo..self.hi {
            i = i * l + x.at(j + n) as usize;
        }
        self.values[i].as_ref().expect("admissible point reads admissible window")
    }

    /// Value read from a word `w` placed so that `w[start]` is coordinate `lo`.
    pub fn at_word(&self, w: &[Symbol], start: usize) -> &T {
        self.get(&w[start..start + self.width()]).expect("admissible window word")
    }

    pub fn eval(&self, x: &PointRep) -> &T {
        self.at(x, 0)
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(&[Symbol], &T) -> U) -> Windowed<U> {
        Windowed::from_fn(&self.spec, self.lo, self.hi, |w| f(w, self.get(w).expect("total")))
    }

    /// Same function on a wider window `[lo, hi)` containing the current one.
    pub fn widen(&self, lo: i64, hi: i64) -> Windowed<T> {
        assert!(lo <= self.lo && hi >= self.hi, "widening must contain the window");
        let off = (self.lo - lo) as usize;
        Windowed::from_fn(&self.spec, lo, hi, |w| self.at_word(w, off).clone())
    }
}

pub(crate) fn code(l: usize, w: &[Symbol]) -> usize {
    w.iter().fold(0usize, |acc, &s| acc * l + s as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totality_enforced() {
        let gm = SubshiftSpec::golden_mean(0.5);
        let ok = Windowed::from_entries(&gm, 0, 2, [(vec![0, 0], 1.0), (vec![0, 1], 2.0), (vec![1, 0], 3.0)]);
        assert!(ok.is_ok());
        let missing = Windowed::from_entries(&gm, 0, 2, [(vec![0, 0], 1.0), (vec![0, 1], 2.0)]);
        assert_eq!(missing, Err(TableError::Missing(vec![1, 0])));
        let bad = Windowed::from_entries(&gm, 0, 2, [(vec![1, 1], 1.0)]);
        assert!(matches!(bad, Err(TableError::Inadmissible { .. })));
    }

    #[test]
    fn evaluation_reads_window() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let t = Windowed::from_fn(&s, -1, 1, |w| (w[0] * 2 + w[1]) as f64);
        let x = PointRep::new(&s, vec![0], vec![1, 0, 1, 1], vec![0], 1).unwrap();
        assert_eq!(*t.eval(&x), 2.0);
        assert_eq!(*t.at(&x, 1), 1.0);
        assert_eq!(*t.at(&x, 2), 3.0);
        let wide = t.widen(-2, 2);
        assert_eq!(wide.eval(&x), t.eval(&x));
    }
}
