mod common;

use common::{indices, lin, mode_product_oracle, random_matrix, random_tensor, rng};
use proptest::prelude::*;
use tenips::tensor::{square_set, DenseTensor, Shape, UnfoldingSpec};

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    (2usize..=5).prop_flat_map(|n| prop::collection::vec(1usize..=6, n))
}

fn subset_of(order: usize, bits: u32) -> Vec<usize> {
    (0..order).filter(|&n| bits & (1 << n) != 0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_unfolding_round_trips_exactly(dims in shape_strategy(), seed in any::<u64>(), pick in any::<u32>()) {
        let shape = Shape::new(dims.clone()).unwrap();
        let t = random_tensor(&shape, &mut rng(seed));
        let order = dims.len();
        for n in 0..order {
            let m = t.mode_unfold(n).unwrap();
            prop_assert_eq!(DenseTensor::fold_mode(m.as_ref(), n, &shape).unwrap(), t.clone());
        }
        let bits = pick % ((1 << order) - 1) + 1;
        if bits != (1 << order) - 1 {
            let spec = UnfoldingSpec::new(&shape, &subset_of(order, bits)).unwrap();
            let m = t.unfold(&spec).unwrap();
            prop_assert_eq!(m.nrows() * m.ncols(), shape.len());
            prop_assert_eq!(DenseTensor::fold(m.as_ref(), &spec, &shape).unwrap(), t.clone());
        }
    }

    #[test]
    fn unfolding_places_entries_by_definition(dims in shape_strategy(), seed in any::<u64>(), pick in any::<u32>()) {
        let shape = Shape::new(dims.clone()).unwrap();
        let order = dims.len();
        let bits = pick % ((1 << order) - 2) + 1;
        let rows = subset_of(order, bits);
        let cols: Vec<usize> = (0..order).filter(|n| !rows.contains(n)).collect();
        let spec = UnfoldingSpec::new(&shape, &rows).unwrap();
        let t = random_tensor(&shape, &mut rng(seed));
        let m = t.unfold(&spec).unwrap();
        let rdims: Vec<usize> = rows.iter().map(|&n| dims[n]).collect();
        let cdims: Vec<usize> = cols.iter().map(|&n| dims[n]).collect();
        for idx in indices(&dims) {
            let ri: Vec<usize> = rows.iter().map(|&n| idx[n]).collect();
            let ci: Vec<usize> = cols.iter().map(|&n| idx[n]).collect();
            prop_assert_eq!(m[(lin(&rdims, &ri), lin(&cdims, &ci))], t.data()[lin(&dims, &idx)]);
        }
    }

    #[test]
    fn mode_product_matches_the_defining_sum(dims in shape_strategy(), seed in any::<u64>(), n in 0usize..5, j in 1usize..=6) {
        let shape = Shape::new(dims.clone()).unwrap();
        let n = n % dims.len();
        let mut r = rng(seed);
        let t = random_tensor(&shape, &mut r);
        let u = random_matrix(j, dims[n], &mut r);
        let got = t.n_mode_product(u.as_ref(), n).unwrap();
        let want = mode_product_oracle(&t, &u, n);
        let scale = want.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let diff = got.data().iter().zip(&want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-12 * scale, "relative deviation {}", diff / scale);
        let mut out_dims = dims.clone();
        out_dims[n] = j;
        prop_assert_eq!(got.dims(), &out_dims[..]);
    }

    #[test]
    fn mode_product_equals_unfolded_form(dims in shape_strategy(), seed in any::<u64>(), n in 0usize..5) {
        let shape = Shape::new(dims.clone()).unwrap();
        let n = n % dims.len();
        let mut r = rng(seed);
        let t = random_tensor(&shape, &mut r);
        let u = random_matrix(3, dims[n], &mut r);
        let via_product = t.n_mode_product(u.as_ref(), n).unwrap().mode_unfold(n).unwrap();
        let via_matrix = &u * t.mode_unfold(n).unwrap();
        for i in 0..via_matrix.nrows() {
            for k in 0..via_matrix.ncols() {
                prop_assert!((via_product[(i, k)] - via_matrix[(i, k)]).abs() <= 1e-12 * (1.0 + via_matrix[(i, k)].abs()));
            }
        }
    }

    #[test]
    fn square_set_is_minimal_with_documented_ties(dims in shape_strategy()) {
        let shape = Shape::new(dims.clone()).unwrap();
        let order = dims.len();
        let total: usize = dims.iter().product();
        let sq = square_set(&shape).unwrap();
        let gap = |s: &[usize]| {
            let rows: usize = s.iter().map(|&n| dims[n]).product();
            (rows as i64 - (total / rows) as i64).unsigned_abs()
        };
        let best = (1..(1u32 << order) - 1)
            .map(|b| subset_of(order, b))
            .min_by(|a, b| gap(a).cmp(&gap(b)).then(a.len().cmp(&b.len())).then(a.cmp(b)))
            .unwrap();
        prop_assert_eq!(sq.subset(), &best[..]);
    }
}

#[test]
fn permuting_modes_moves_entries() {
    let shape = Shape::new(vec![2, 3, 4]).unwrap();
    let t = random_tensor(&shape, &mut rng(9));
    let p = t.permute_modes(&[2, 0, 1]).unwrap();
    assert_eq!(p.dims(), &[4, 2, 3]);
    for idx in indices(&[2, 3, 4]) {
        assert_eq!(p.get(&[idx[2], idx[0], idx[1]]), t.get(&idx));
    }
}
