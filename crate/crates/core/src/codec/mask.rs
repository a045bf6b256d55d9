/// Fixed-width bitset over token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenMask {
    words: Vec<u64>,
    len: usize,
}

impl TokenMask {
    pub fn new(len: usize) -> Self {
        TokenMask { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn insert(&mut self, id: u32) {
        let i = id as usize;
        assert!(i < self.len, "token {id} outside mask of {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, id: u32) {
        let i = id as usize;
        if i < self.len {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Sets ids in `lo..hi`.
    pub fn insert_range(&mut self, lo: u32, hi: u32) {
        let (mut i, hi) = (lo as usize, (hi as usize).min(self.len));
        while i < hi {
            if i % 64 == 0 && i + 64 <= hi {
                self.words[i / 64] = u64::MAX;
                i += 64;
            } else {
                self.words[i / 64] |= 1 << (i % 64);
                i += 1;
            }
        }
    }

    pub fn contains(&self, id: u32) -> bool {
        let i = id as usize;
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros();
                bits &= bits - 1;
                Some((wi * 64) as u32 + b)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_iteration() {
        let mut m = TokenMask::new(200);
        m.insert_range(3, 150);
        m.insert(199);
        m.remove(10);
        assert_eq!(m.count(), 147 - 1 + 1);
        assert!(m.contains(3) && !m.contains(2) && !m.contains(10) && m.contains(149) && !m.contains(150));
        let ids: Vec<u32> = m.iter().collect();
        assert_eq!(ids.len(), m.count());
        assert_eq!(ids.first(), Some(&3));
        assert_eq!(ids.last(), Some(&199));
        assert!(!m.contains(500));
    }

    proptest::proptest! {
        #[test]
        fn range_matches_naive(lo in 0u32..300, width in 0u32..300) {
            let mut m = TokenMask::new(300);
            m.insert_range(lo, lo + width);
            for id in 0..300u32 {
                proptest::prop_assert_eq!(m.contains(id), id >= lo && id < lo + width);
            }
        }
    }
}
