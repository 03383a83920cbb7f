//! Eventually periodic words `prefix · cycle^ω`.

use num_integer::Integer;

/// Largest common frame (prefix + period) materialised by Boolean and
/// pointwise operations before they degrade to sampled windows.
pub(crate) const MAX_FRAME: u64 = 1 << 20;

/// Prefix length and period shared by several eventually periodic words.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Frame {
    pub prefix: u64,
    pub period: u64,
}

impl Frame {
    pub fn new(prefix: usize, period: usize) -> Self {
        Frame {
            prefix: prefix as u64,
            period: period as u64,
        }
    }

    /// The smallest frame both words can be unrolled over, or `None` when it
    /// exceeds [`MAX_FRAME`].
    pub fn merge(self, other: Frame) -> Option<Frame> {
        let period = self.period.checked_mul(other.period / self.period.gcd(&other.period))?;
        let frame = Frame {
            prefix: self.prefix.max(other.prefix),
            period,
        };
        (frame.len() <= MAX_FRAME).then_some(frame)
    }

    pub fn merge_all(frames: impl IntoIterator<Item = Frame>) -> Option<Frame> {
        frames
            .into_iter()
            .try_fold(Frame::new(0, 1), |acc, f| acc.merge(f))
    }

    pub fn len(self) -> u64 {
        self.prefix + self.period
    }
}

pub(crate) fn at<V: Clone>(prefix: &[V], cycle: &[V], n: u64) -> V {
    let pl = prefix.len() as u64;
    if n < pl {
        prefix[n as usize].clone()
    } else {
        cycle[((n - pl) % cycle.len() as u64) as usize].clone()
    }
}

/// Shortest representation of `prefix · cycle^ω`: minimal period first, then
/// the prefix is shortened by rotating the cycle while their tails agree.
pub(crate) fn canonicalize<V: PartialEq>(mut prefix: Vec<V>, mut cycle: Vec<V>) -> (Vec<V>, Vec<V>) {
    assert!(!cycle.is_empty(), "cycle must be nonempty");
    let p = cycle.len();
    if let Some(d) = (1..=p).find(|&d| p.is_multiple_of(d) && (d..p).all(|i| cycle[i] == cycle[i - d])) {
        cycle.truncate(d);
    }
    while prefix.last().is_some_and(|last| *last == cycle[cycle.len() - 1]) {
        prefix.pop();
        cycle.rotate_right(1);
    }
    (prefix, cycle)
}
