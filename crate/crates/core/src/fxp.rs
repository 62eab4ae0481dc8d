//! Fixed-point scalar and packed-lane primitives.
//!
//! Everything above this module is built from four operations: the 4-lane
//! signed dot product ([`sdot4`]), the byte realignment of an unaligned
//! window ([`shuffle_shift`]), rounding integer division ([`div_round`]) and
//! saturation to 8 bits ([`sat8`]). Packed words are modelled with scalar
//! code; lane 0 sits at the lowest byte address.

/// 8-bit quantized lane.
pub type Q8 = i8;

/// 32-bit accumulator.
///
/// Any sum of at most 65,536 products of two [`Q8`] values fits: the worst
/// case is 65,536 * 128 * 128 = 2^30.
pub type Acc32 = i32;

/// Largest number of Q8 x Q8 products an [`Acc32`] can absorb without wrapping.
pub const ACC32_SAFE_TERMS: usize = 65_536;

/// Rounding rule applied by every requantizing division in the engine.
///
/// Half-way quotients round away from zero. All execution strategies share
/// this single rule, which is what makes them bit-identical.
pub const ROUNDING: Rounding = Rounding::HalfAwayFromZero;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    HalfAwayFromZero,
}

/// Four Q8 lanes packed into one little-endian 32-bit word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PackedWord(pub u32);

impl PackedWord {
    pub fn pack(lanes: [Q8; 4]) -> Self {
        PackedWord(u32::from_le_bytes(lanes.map(|v| v as u8)))
    }

    pub fn unpack(self) -> [Q8; 4] {
        self.0.to_le_bytes().map(|b| b as i8)
    }

    /// Loads the word starting at byte `idx` of `buf`.
    ///
    /// `idx` must be word aligned; unaligned windows go through
    /// [`shuffle_shift`] or a replicated copy instead.
    #[inline(always)]
    pub fn load(buf: &[Q8], idx: usize) -> Self {
        debug_assert_eq!(idx % 4, 0, "unaligned packed load at byte {idx}");
        let b = &buf[idx..idx + 4];
        PackedWord(u32::from_le_bytes([b[0] as u8, b[1] as u8, b[2] as u8, b[3] as u8]))
    }

    /// Lane order reversed, i.e. the shuffle a convolution needs to flip its
    /// weight vector one word at a time.
    #[inline(always)]
    pub fn reverse_lanes(self) -> Self {
        PackedWord(self.0.swap_bytes())
    }
}

/// `acc + sum(a[i] * b[i])` over the four lanes, exact signed arithmetic.
#[inline(always)]
pub fn sdot4(a: PackedWord, b: PackedWord, acc: Acc32) -> Acc32 {
    let x = a.0.to_le_bytes();
    let y = b.0.to_le_bytes();
    let s = (x[0] as i8 as i32) * (y[0] as i8 as i32)
        + (x[1] as i8 as i32) * (y[1] as i8 as i32)
        + (x[2] as i8 as i32) * (y[2] as i8 as i32)
        + (x[3] as i8 as i32) * (y[3] as i8 as i32);
    // overflow-checked builds trap here on wrap
    acc + s
}

/// The word formed by bytes `k..k + 4` of the eight-byte sequence `lo || hi`.
///
/// # Panics
///
/// If `k` is not in `1..=3`.
#[inline(always)]
pub fn shuffle_shift(lo: PackedWord, hi: PackedWord, k: u32) -> PackedWord {
    assert!((1..=3).contains(&k), "shuffle offset {k} outside 1..=3");
    let wide = (lo.0 as u64) | ((hi.0 as u64) << 32);
    PackedWord((wide >> (8 * k)) as u32)
}

/// `num / den` rounded half away from zero.
///
/// # Panics
///
/// If `den <= 0`.
#[inline]
pub fn div_round(num: i32, den: i32) -> i32 {
    assert!(den > 0, "non-positive divisor {den}");
    div_round_wide(num as i64, den as i64) as i32
}

/// 64-bit variant of [`div_round`], used where post-spatial sums exceed 32 bits.
#[inline]
pub fn div_round_wide(num: i64, den: i64) -> i64 {
    assert!(den > 0, "non-positive divisor {den}");
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den {
        q + num.signum()
    } else {
        q
    }
}

/// Half-away rounding by `2^shift`, the division-free requantizer.
#[inline]
pub fn shift_round(num: i32, shift: u32) -> i32 {
    if shift == 0 {
        return num;
    }
    let half = 1i32 << (shift - 1);
    if num >= 0 {
        (num + half) >> shift
    } else {
        -((-num + half) >> shift)
    }
}

/// Clamps to the Q8 range.
#[inline(always)]
pub fn sat8(x: i32) -> Q8 {
    x.clamp(-128, 127) as Q8
}

#[inline(always)]
pub fn sat8_wide(x: i64) -> Q8 {
    x.clamp(-128, 127) as Q8
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(l: [i8; 4]) -> PackedWord {
        PackedWord::pack(l)
    }

    #[test]
    fn sdot4_examples() {
        assert_eq!(sdot4(w([1, 2, 3, 4]), w([1, 1, 1, 1]), 0), 10);
        assert_eq!(sdot4(w([0, 0, 0, 0]), w([5, -6, 7, 8]), 7), 7);
        assert_eq!(sdot4(w([-128; 4]), w([-128; 4]), 0), 65_536);
    }

    #[test]
    fn shuffle_examples() {
        let lo = w([0, 1, 2, 3]);
        let hi = w([4, 5, 6, 7]);
        assert_eq!(shuffle_shift(lo, hi, 1).unpack(), [1, 2, 3, 4]);
        assert_eq!(shuffle_shift(lo, hi, 2).unpack(), [2, 3, 4, 5]);
        assert_eq!(shuffle_shift(lo, hi, 3).unpack(), [3, 4, 5, 6]);
        let c = w([-9; 4]);
        for k in 1..=3 {
            assert_eq!(shuffle_shift(c, c, k), c);
        }
    }

    #[test]
    #[should_panic]
    fn shuffle_rejects_zero_offset() {
        shuffle_shift(w([0; 4]), w([0; 4]), 0);
    }

    #[test]
    #[should_panic]
    fn shuffle_rejects_full_word_offset() {
        shuffle_shift(w([0; 4]), w([0; 4]), 4);
    }

    #[test]
    fn div_round_examples() {
        assert_eq!(div_round(16, 8), 2);
        assert_eq!(div_round(12, 8), 2);
        assert_eq!(div_round(-12, 8), -2);
        assert_eq!(div_round(11, 8), 1);
        assert_eq!(div_round(-11, 8), -1);
        assert_eq!(div_round(7, 3), 2);
        assert_eq!(div_round(8, 3), 3);
        assert_eq!(div_round(-8, 3), -3);
        assert_eq!(div_round(i32::MIN, 1), i32::MIN);
    }

    #[test]
    #[should_panic]
    fn div_round_rejects_zero() {
        div_round(1, 0);
    }

    #[test]
    #[should_panic]
    fn div_round_rejects_negative() {
        div_round(1, -3);
    }

    #[test]
    fn sat8_examples() {
        assert_eq!(sat8(200), 127);
        assert_eq!(sat8(-300), -128);
        assert_eq!(sat8(5), 5);
    }

    #[test]
    fn reverse_lanes_flips() {
        assert_eq!(w([1, 2, 3, 4]).reverse_lanes().unpack(), [4, 3, 2, 1]);
    }

    fn round_half_away_oracle(num: i64, den: i64) -> i64 {
        // exact: compare 2|r| against den
        let q = num.div_euclid(den);
        let r = num.rem_euclid(den);
        // value = q + r/den with 0 <= r < den
        match (2 * r).cmp(&den) {
            std::cmp::Ordering::Less => q,
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal => {
                if q >= 0 {
                    q + 1
                } else {
                    q
                }
            }
        }
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(bits in any::<u32>()) {
            let p = PackedWord(bits);
            prop_assert_eq!(PackedWord::pack(p.unpack()), p);
        }

        #[test]
        fn sdot4_matches_wide_reference(a in any::<[i8; 4]>(), b in any::<[i8; 4]>()) {
            let want: i64 = a.iter().zip(&b).map(|(&x, &y)| x as i64 * y as i64).sum();
            prop_assert_eq!(sdot4(w(a), w(b), 0) as i64, want);
        }

        #[test]
        fn shuffle_is_byte_window(s in any::<[i8; 8]>(), k in 1u32..=3) {
            let lo = w([s[0], s[1], s[2], s[3]]);
            let hi = w([s[4], s[5], s[6], s[7]]);
            let k_ = k as usize;
            prop_assert_eq!(shuffle_shift(lo, hi, k).unpack(), [s[k_], s[k_ + 1], s[k_ + 2], s[k_ + 3]]);
        }

        #[test]
        fn div_round_residual_bound(num in -1_000_000_000i32..1_000_000_000, den in 1i32..100_000) {
            let q = div_round(num, den) as i64;
            let resid = (num as i64 - q * den as i64).abs();
            prop_assert!(resid <= (den as i64 + 1) / 2);
            // half-away: for the tie case, the quotient is the one farther from zero
            let want = if num >= 0 {
                round_half_away_oracle(num as i64, den as i64)
            } else {
                -round_half_away_oracle(-(num as i64), den as i64)
            };
            prop_assert_eq!(q, want);
        }

        #[test]
        fn shift_round_matches_div_round(num in -(1i32 << 24)..(1i32 << 24), shift in 0u32..12) {
            prop_assert_eq!(shift_round(num, shift), div_round(num, 1 << shift));
        }

        #[test]
        fn sat8_idempotent_and_monotone(x in any::<i32>(), y in any::<i32>()) {
            prop_assert_eq!(sat8(sat8(x) as i32), sat8(x));
            if x <= y {
                prop_assert!(sat8(x) <= sat8(y));
            }
        }
    }
}
