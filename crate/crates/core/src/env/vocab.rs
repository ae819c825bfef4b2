/// Token id within a code grid.
pub type Token = u32;

/// Partition of the token space into silence, event, sketch and texture roles.
///
/// Layout: `0` is silence, then one event token per category, one sketch token
/// per category, then the texture tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    n_categories: usize,
    n_texture: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Silence,
    Event(usize),
    Sketch(usize),
    Texture(usize),
}

impl Vocab {
    pub fn new(n_categories: usize, n_texture: usize) -> Self {
        assert!(n_categories >= 2, "need at least two event categories");
        assert!(n_texture >= 1, "need at least one texture token");
        Self {
            n_categories,
            n_texture,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_texture(&self) -> usize {
        self.n_texture
    }

    /// Total vocabulary size `V`.
    pub fn size(&self) -> usize {
        1 + 2 * self.n_categories + self.n_texture
    }

    pub fn silence(&self) -> Token {
        0
    }

    pub fn event(&self, category: usize) -> Token {
        debug_assert!(category < self.n_categories);
        (1 + category) as Token
    }

    pub fn sketch(&self, category: usize) -> Token {
        debug_assert!(category < self.n_categories);
        (1 + self.n_categories + category) as Token
    }

    pub fn texture(&self, index: usize) -> Token {
        debug_assert!(index < self.n_texture);
        (1 + 2 * self.n_categories + index) as Token
    }

    pub fn role(&self, token: Token) -> Option<TokenRole> {
        let t = token as usize;
        let n = self.n_categories;
        match t {
            0 => Some(TokenRole::Silence),
            t if t <= n => Some(TokenRole::Event(t - 1)),
            t if t <= 2 * n => Some(TokenRole::Sketch(t - 1 - n)),
            t if t < self.size() => Some(TokenRole::Texture(t - 1 - 2 * n)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_partition_the_vocabulary() {
        let v = Vocab::new(10, 8);
        assert_eq!(v.size(), 29);
        let mut counts = [0usize; 4];
        for tok in 0..v.size() as Token {
            match v.role(tok).unwrap() {
                TokenRole::Silence => counts[0] += 1,
                TokenRole::Event(c) => {
                    assert_eq!(v.event(c), tok);
                    counts[1] += 1
                }
                TokenRole::Sketch(c) => {
                    assert_eq!(v.sketch(c), tok);
                    counts[2] += 1
                }
                TokenRole::Texture(i) => {
                    assert_eq!(v.texture(i), tok);
                    counts[3] += 1
                }
            }
        }
        assert_eq!(counts, [1, 10, 10, 8]);
        assert_eq!(v.role(29), None);
    }
}
