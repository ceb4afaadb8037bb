use distill_core::mask::{connected_components, dilate, gaussian_blur, iou, label_components};
use distill_core::{compose_gate, compose_inpaint_mask, BinaryMask, Connectivity, GatingConfig, RleMask};
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max)
        .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<bool>(), w * h)))
        .prop_map(|(w, h, bits)| BinaryMask::from_bits(w, h, bits).unwrap())
}

fn sparse_mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(prop::bool::weighted(0.15), w * h)
        .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
}

fn pair(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| (sparse_mask(w, h), sparse_mask(w, h)))
}

/// Chebyshev-ball dilation, pixel by pixel.
fn dilate_oracle(m: &BinaryMask, r: usize) -> BinaryMask {
    let (w, h) = m.dims();
    let r = r as isize;
    BinaryMask::from_fn(w, h, |x, y| {
        (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && m.get(nx as usize, ny as usize)
            })
        })
    })
}

/// Union-find labelling; returns a root per pixel (usize::MAX for unset).
fn union_find_roots(m: &BinaryMask, eight: bool) -> Vec<usize> {
    let (w, h) = m.dims();
    let mut parent: Vec<usize> = (0..w * h).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut offsets = vec![(1isize, 0isize), (0, 1)];
    if eight {
        offsets.extend([(1, 1), (-1, 1)]);
    }
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h || !m.get(nx as usize, ny as usize) {
                    continue;
                }
                let a = find(&mut parent, y * w + x);
                let b = find(&mut parent, ny as usize * w + nx as usize);
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..w * h)
        .map(|i| {
            if m.get_index(i) {
                find(&mut parent, i)
            } else {
                usize::MAX
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dilation_matches_the_chebyshev_oracle(m in mask_strategy(24), r in 0usize..5) {
        prop_assert_eq!(dilate(&m, r), dilate_oracle(&m, r));
    }

    #[test]
    fn dilation_is_extensive_and_monotone(m in mask_strategy(24), r1 in 0usize..5, extra in 0usize..4) {
        let small = dilate(&m, r1);
        let large = dilate(&m, r1 + extra);
        prop_assert!(m.is_subset_of(&small).unwrap());
        prop_assert!(small.is_subset_of(&large).unwrap());
    }

    #[test]
    fn subtraction_is_disjoint_from_the_subtrahend((a, b) in pair(20)) {
        let d = a.subtract(&b).unwrap();
        prop_assert!(!d.intersects(&b).unwrap());
        prop_assert!(d.is_subset_of(&a).unwrap());
        prop_assert_eq!(d.union(&a.intersect(&b).unwrap()).unwrap(), a);
    }

    #[test]
    fn iou_is_symmetric_and_bounded((a, b) in pair(20)) {
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if !a.is_empty() {
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn components_partition_the_mask(m in mask_strategy(20), eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let comps = connected_components(&m, conn);
        let (w, h) = m.dims();
        let mut cover = vec![0u8; w * h];
        for c in &comps {
            prop_assert_eq!(c.area, c.mask.count());
            prop_assert_eq!(c.mask.first_set(), Some(c.min_index));
            for (i, &b) in c.mask.bits().iter().enumerate() {
                cover[i] += b as u8;
            }
        }
        for (i, &c) in cover.iter().enumerate() {
            prop_assert_eq!(c, m.get_index(i) as u8);
        }
        prop_assert!(comps.windows(2).all(|p| p[0].min_index < p[1].min_index));
    }

    #[test]
    fn component_labels_agree_with_union_find(m in mask_strategy(20), eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let (labels, n) = label_components(&m, conn);
        let roots = union_find_roots(&m, eight);
        let mut distinct: Vec<usize> = roots.iter().copied().filter(|&r| r != usize::MAX).collect();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(n, distinct.len());
        // same partition: two pixels share a label iff they share a root
        let set: Vec<usize> = (0..labels.len()).filter(|&i| m.get_index(i)).collect();
        for (k, &i) in set.iter().enumerate() {
            for &j in set.iter().skip(k + 1).step_by(3) {
                prop_assert_eq!(labels[i] == labels[j], roots[i] == roots[j]);
            }
        }
    }

    #[test]
    fn rle_round_trips(m in mask_strategy(32)) {
        let rle = m.to_rle();
        prop_assert_eq!(rle.counts.iter().sum::<u64>() as usize, m.bits().len());
        prop_assert_eq!(rle.decode().unwrap(), m.clone());
        let back = RleMask::from_json(&rle.to_json()).unwrap();
        prop_assert_eq!(back.decode().unwrap(), m);
    }

    #[test]
    fn gate_avoids_the_dilated_safe_set((dist, safe) in pair(24), rd in 0usize..4, extra in 0usize..4) {
        let cfg = GatingConfig { r_d: rd, r_s: rd + extra, ..Default::default() };
        let gate = compose_gate(&dist, &safe, &cfg).unwrap();
        prop_assert!(!gate.intersects(&dilate(&safe, cfg.r_s)).unwrap());
        prop_assert!(gate.is_subset_of(&dilate(&dist, cfg.r_d)).unwrap());
        // a wider safe buffer can only shrink the gate
        let wider = GatingConfig { r_s: cfg.r_s + 1, ..cfg };
        prop_assert!(compose_gate(&dist, &safe, &wider).unwrap().is_subset_of(&gate).unwrap());
    }

    #[test]
    fn inpaint_mask_covers_gate_and_dilated_robot((gate, robot) in pair(24), re in 0usize..4) {
        let cfg = GatingConfig { r_e: re, ..Default::default() };
        let m = compose_inpaint_mask(&gate, &robot, &cfg).unwrap();
        prop_assert_eq!(m, gate.union(&dilate(&robot, re)).unwrap());
    }

    #[test]
    fn blurred_alpha_stays_in_unit_range(m in mask_strategy(24), sigma in 0.0f64..4.0) {
        let a = gaussian_blur(&m, sigma);
        prop_assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        if m.is_empty() {
            prop_assert!(a.values().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn gate_rejects_a_safe_radius_below_the_distractor_radius() {
    let m = BinaryMask::empty(4, 4);
    let cfg = GatingConfig {
        r_d: 3,
        r_s: 2,
        ..Default::default()
    };
    assert!(compose_gate(&m, &m, &cfg).is_err());
}
