//! Day-based train/validation/test splitting.

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Day positions (0-based, chronological) assigned to each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_days: Vec<usize>,
    pub val_days: Vec<usize>,
    pub test_days: Vec<usize>,
}

impl SplitSpec {
    /// Consecutive blocks of `train`, `val` and `test` days.
    pub fn from_counts(train: usize, val: usize, test: usize) -> Self {
        Self {
            train_days: (0..train).collect(),
            val_days: (train..train + val).collect(),
            test_days: (train + val..train + val + test).collect(),
        }
    }

    /// Six training days, two validation days, two test days.
    pub fn six_two_two() -> Self {
        Self::from_counts(6, 2, 2)
    }

    pub fn total(&self) -> usize {
        self.train_days.len() + self.val_days.len() + self.test_days.len()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let ordered = [&self.train_days, &self.val_days, &self.test_days];
        let all: Vec<usize> = ordered.iter().flat_map(|d| d.iter().copied()).collect();
        if all.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidSplit(
                "day lists must be disjoint and ordered train < val < test".into(),
            ));
        }
        if self.train_days.is_empty() || self.test_days.is_empty() {
            return Err(DatasetError::InvalidSplit(
                "train and test need at least one day".into(),
            ));
        }
        Ok(())
    }
}

/// A contiguous run of items from one day; windows never span segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment<R> {
    pub day: usize,
    /// Position of `items[0]` within its day.
    pub offset: usize,
    pub items: Vec<R>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits<R> {
    pub train: Vec<Segment<R>>,
    pub val: Vec<Segment<R>>,
    pub test: Vec<Segment<R>>,
}

impl<R> Splits<R> {
    pub fn get(&self, split: Split) -> &[Segment<R>] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn map<S>(self, mut f: impl FnMut(Segment<R>) -> Segment<S>) -> Splits<S> {
        Splits {
            train: self.train.into_iter().map(&mut f).collect(),
            val: self.val.into_iter().map(&mut f).collect(),
            test: self.test.into_iter().map(&mut f).collect(),
        }
    }
}

fn whole_day<R>(day: usize, items: Vec<R>) -> Segment<R> {
    Segment {
        day,
        offset: 0,
        items,
    }
}

/// Assigns whole trading days to splits.
pub fn split_by_days<R>(days: Vec<Vec<R>>, spec: &SplitSpec) -> Result<Splits<R>, DatasetError> {
    spec.validate()?;
    let needed = spec.test_days.last().map_or(0, |d| d + 1);
    if days.len() < needed {
        return Err(DatasetError::InsufficientDays {
            needed,
            found: days.len(),
        });
    }
    let mut slots: Vec<Option<Vec<R>>> = days.into_iter().map(Some).collect();
    let mut take = |list: &[usize]| -> Vec<Segment<R>> {
        list.iter()
            .map(|d| whole_day(*d, slots[*d].take().expect("days are disjoint")))
            .collect()
    };
    Ok(Splits {
        train: take(&spec.train_days),
        val: take(&spec.val_days),
        test: take(&spec.test_days),
    })
}

/// FI-2010 protocol: the first `train_val_days` days are cut by sample into
/// train (first `1 - val_fraction`) and validation (the rest); the following
/// `test_days` days are the test split.
pub fn split_train_val_by_sample<R>(
    days: Vec<Vec<R>>,
    train_val_days: usize,
    test_days: usize,
    val_fraction: f64,
) -> Result<Splits<R>, DatasetError> {
    let needed = train_val_days + test_days;
    if days.len() < needed {
        return Err(DatasetError::InsufficientDays {
            needed,
            found: days.len(),
        });
    }
    if !(0.0..1.0).contains(&val_fraction) || train_val_days == 0 || test_days == 0 {
        return Err(DatasetError::InvalidSplit(
            "need train/val days, test days and a fraction in [0, 1)".into(),
        ));
    }
    let mut days = days;
    days.truncate(needed);
    let test_raw = days.split_off(train_val_days);
    let total: usize = days.iter().map(Vec::len).sum();
    let train_count = total - (val_fraction * total as f64).floor() as usize;

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut seen = 0usize;
    for (d, items) in days.into_iter().enumerate() {
        let len = items.len();
        if seen + len <= train_count {
            train.push(whole_day(d, items));
        } else if seen >= train_count {
            val.push(whole_day(d, items));
        } else {
            let cut = train_count - seen;
            let mut items = items;
            let tail = items.split_off(cut);
            train.push(whole_day(d, items));
            val.push(Segment {
                day: d,
                offset: cut,
                items: tail,
            });
        }
        seen += len;
    }
    let test = test_raw
        .into_iter()
        .enumerate()
        .map(|(i, items)| whole_day(train_val_days + i, items))
        .collect();
    Ok(Splits { train, val, test })
}
