use netform_core::galois::{self, peasant_mul, GfElement, GfMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn e8(v: u8) -> GfElement {
    GfElement::gf256(v)
}

#[test]
fn gf16_axioms_exhaustive() {
    let f = galois::field(4).unwrap();
    let all: Vec<GfElement> = f.elements().collect();
    assert_eq!(all.len(), 16);
    for &a in &all {
        for &b in &all {
            assert_eq!(a * b, b * a);
            assert_eq!(a + b, b + a);
            for &c in &all {
                assert_eq!((a * b) * c, a * (b * c));
                assert_eq!((a + b) + c, a + (b + c));
                assert_eq!(a * (b + c), a * b + a * c);
            }
        }
    }
}

#[test]
fn gf256_axioms_sampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let (a, b, c) = (e8(rng.gen()), e8(rng.gen()), e8(rng.gen()));
        assert_eq!((a * b) * c, a * (b * c));
        assert_eq!(a * (b + c), a * b + a * c);
        assert_eq!(a * b, b * a);
    }
}

#[test]
fn table_product_matches_carryless_for_every_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for order in 1..=galois::MAX_ORDER {
        let f = galois::field(order).unwrap();
        let q = 1u32 << order;
        for _ in 0..2000 {
            let (a, b) = (rng.gen_range(0..q), rng.gen_range(0..q));
            let got = f.mul(f.element(a).unwrap(), f.element(b).unwrap()).unwrap();
            assert_eq!(got.value() as u32, peasant_mul(a, b, f.poly(), order), "order {order}");
        }
    }
}

fn random_full_rank(n: usize, rng: &mut ChaCha8Rng) -> GfMatrix {
    loop {
        let m = GfMatrix::random(8, n, n, rng).unwrap();
        if m.rank() == n {
            return m;
        }
    }
}

proptest! {
    #[test]
    fn inverse_is_two_sided(v in 1u8..=255) {
        let a = e8(v);
        let i = galois::gf_inv(a).unwrap();
        prop_assert_eq!(a * i, GfElement::one(8));
        prop_assert_eq!(i * a, GfElement::one(8));
    }

    #[test]
    fn rank_survives_row_swaps_and_scaling(
        seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7,
        swaps in proptest::collection::vec((0usize..7, 0usize..7, 1u8..=255), 0..10),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GfMatrix::random(8, rows, cols, &mut rng).unwrap();
        // Duplicate a row now and then so rank-deficient cases appear.
        if rows > 1 && seed % 2 == 0 {
            let r0 = m.row(0).to_vec();
            for (c, v) in r0.into_iter().enumerate() {
                m.set(rows - 1, c, v);
            }
        }
        let before = m.rank();
        for (a, b, k) in swaps {
            m.swap_rows(a % rows, b % rows);
            m.scale_row(b % rows, e8(k)).unwrap();
        }
        prop_assert_eq!(m.rank(), before);
    }

    #[test]
    fn solve_inverts_multiply(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_full_rank(n, &mut rng);
        let x: Vec<GfElement> = (0..n).map(|_| e8(rng.gen())).collect();
        let y = a.mul_vec(&x).unwrap();
        prop_assert_eq!(a.solve(&y).unwrap(), x);
    }
}
