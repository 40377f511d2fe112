use labelprop::dirichlet::{assemble, solve_all, SolverConfig};
use labelprop::lattice::build_lattice;
use labelprop::nifti;
use labelprop::propagation::{propagate, PropagationError, PropagationRequest, SeedlessPolicy};
use labelprop::volume::{
    argmax_labels, AnyVolume, ElementKind, Geometry, IntensityVolume, LabelSet, MaskVolume, MultiLabelAnnotation,
    Volume,
};
use proptest::prelude::*;

const BETAS: [f64; 3] = [0.0, 1.0, 1e4];

#[derive(Debug, Clone)]
struct Case {
    dims: [usize; 3],
    guide: Vec<f64>,
    roi: Vec<bool>,
    sets: Vec<Vec<u16>>,
    m: u16,
    beta: f64,
}

impl Case {
    fn geometry(&self) -> Geometry {
        Geometry::with_dims(self.dims).unwrap()
    }

    fn volumes(&self) -> (IntensityVolume, MaskVolume, MultiLabelAnnotation) {
        let g = self.geometry();
        let labels = LabelSet::numbered(self.m).unwrap();
        (
            Volume::new(g, self.guide.clone()).unwrap(),
            Volume::new(g, self.roi.clone()).unwrap(),
            MultiLabelAnnotation::from_sets(g, labels, &self.sets).unwrap(),
        )
    }
}

fn case(max_side: usize) -> impl Strategy<Value = Case> {
    (prop::array::uniform3(1..=max_side), 2u16..=4, 0usize..3).prop_flat_map(|(dims, m, bi)| {
        let n = dims.iter().product::<usize>();
        let set = prop::collection::btree_set(1..=m, 0..3).prop_map(|s| s.into_iter().collect::<Vec<u16>>());
        let sparse_set = prop_oneof![3 => Just(Vec::new()), 2 => set];
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(prop::bool::weighted(0.85), n),
            prop::collection::vec(sparse_set, n),
        )
            .prop_map(move |(guide, roi, sets)| Case { dims, guide, roi, sets, m, beta: BETAS[bi] })
    })
}

/// Random lattice problem with every label seeded at least once.
fn system_case() -> impl Strategy<Value = Case> {
    case(6).prop_map(|mut c| {
        c.roi = vec![true; c.roi.len()];
        let n = c.sets.len();
        for l in 1..=c.m {
            let at = (l as usize * 7919) % n;
            c.sets[at] = vec![l];
        }
        c
    })
}

fn seeds_of(c: &Case) -> Vec<Option<u16>> {
    c.sets.iter().map(|s| if s.len() == 1 { Some(s[0]) } else { None }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn solved_field_has_mean_value_property_and_sums_to_one(c in system_case()) {
        prop_assume!(c.sets.iter().any(|s| s.len() != 1));
        let (guide, roi, _) = c.volumes();
        let graph = build_lattice(&guide, &roi, c.beta).unwrap();
        let seeds = seeds_of(&c);
        let labels = LabelSet::numbered(c.m).unwrap();
        let sys = assemble(&graph, &seeds, &labels).unwrap();
        let cfg = SolverConfig::default();
        let out = solve_all(&sys, &cfg).unwrap();
        let m = c.m as usize;
        for l in 0..m {
            let norm = (0..graph.n_nodes()).map(|u| out.field.get(u, l).abs()).fold(0.0, f64::max);
            for u in (0..graph.n_nodes()).filter(|&u| seeds[u].is_none()) {
                let nb = graph.neighbors(u);
                if nb.is_empty() {
                    continue;
                }
                let avg = nb.iter().map(|&(v, w)| w * out.field.get(v, l)).sum::<f64>() / graph.strength(u);
                let dev = (out.field.get(u, l) - avg).abs();
                prop_assert!(dev <= 10.0 * cfg.rel_tol * norm, "label {} node {}: deviation {:e}", l, u, dev);
            }
        }
        for u in 0..graph.n_nodes() {
            let p = out.field.node(u);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)));
        }
    }

    #[test]
    fn permuting_label_ids_permutes_columns(c in system_case(), rot in 1usize..4) {
        let (guide, roi, _) = c.volumes();
        let graph = build_lattice(&guide, &roi, c.beta).unwrap();
        let m = c.m;
        let sigma = |l: u16| ((l as usize - 1 + rot) % m as usize) as u16 + 1;
        let labels = LabelSet::numbered(m).unwrap();
        let seeds = seeds_of(&c);
        let moved: Vec<Option<u16>> = seeds.iter().map(|s| s.map(sigma)).collect();
        let cfg = SolverConfig::default();
        let a = solve_all(&assemble(&graph, &seeds, &labels).unwrap(), &cfg).unwrap();
        let b = solve_all(&assemble(&graph, &moved, &labels).unwrap(), &cfg).unwrap();
        for u in 0..graph.n_nodes() {
            for l in 1..=m {
                let (x, y) = (a.field.get(u, l as usize - 1), b.field.get(u, sigma(l) as usize - 1));
                prop_assert!((x - y).abs() <= 1e-9, "node {} label {}: {} vs {}", u, l, x, y);
            }
        }
    }

    #[test]
    fn propagation_invariants(c in case(6)) {
        let (guide, roi, ann) = c.volumes();
        let req = PropagationRequest::new(&guide, &roi, &ann).beta(c.beta);
        let seeded = (0..roi.len()).any(|i| c.roi[i] && c.sets[i].len() == 1);
        let res = match propagate(&req) {
            Err(PropagationError::NoSeedsInRoi) => {
                prop_assert!(!seeded);
                return Ok(());
            }
            other => other.unwrap(),
        };
        prop_assert!(seeded);
        prop_assert_eq!(&argmax_labels(&res.soft, &roi).unwrap(), &res.hard);
        for i in 0..roi.len() {
            let p = res.soft.at(i);
            if !c.roi[i] {
                prop_assert_eq!(res.hard.data()[i], 0);
                prop_assert!(p.iter().all(|&v| v == 0.0));
                continue;
            }
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            prop_assert!(res.hard.data()[i] != 0, "roi voxel {} unlabeled", i);
            if c.sets[i].len() == 1 {
                prop_assert_eq!(res.hard.data()[i], c.sets[i][0]);
            }
        }
    }

    #[test]
    fn beta_zero_ignores_guidance(c in case(5), other in prop::collection::vec(-10.0f64..10.0, 125)) {
        let (guide, roi, ann) = c.volumes();
        let alt = Volume::new(*guide.geometry(), other[..guide.len()].to_vec()).unwrap();
        let run = |g: &IntensityVolume| propagate(&PropagationRequest::new(g, &roi, &ann).beta(0.0).policy(SeedlessPolicy::Background));
        match (run(&guide), run(&alt)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.hard, b.hard);
                prop_assert_eq!(a.soft, b.soft);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.err(), b.err()),
        }
    }

    #[test]
    fn nifti_write_read_write_is_byte_identical(
        dims in prop::array::uniform3(1usize..6),
        spacing in prop::array::uniform3(0.1f64..4.0),
        origin in prop::array::uniform3(-100.0f64..100.0),
        kind in 0usize..4,
        raw in prop::collection::vec(0u16..=u16::MAX, 125),
    ) {
        let g = Geometry::new(dims, spacing, origin).unwrap();
        let n = g.len();
        let v = match kind {
            0 => AnyVolume::Intensity(Volume::new(g, raw[..n].iter().map(|&r| r as f64 / 7.0 - 4000.0).collect()).unwrap()),
            1 => AnyVolume::Probability(Volume::new(g, raw[..n].iter().map(|&r| r as f64 / 65535.0).collect()).unwrap()),
            2 => AnyVolume::Label(Volume::new(g, raw[..n].to_vec()).unwrap()),
            _ => AnyVolume::Mask(Volume::new(g, raw[..n].iter().map(|&r| r % 3 == 0).collect()).unwrap()),
        };
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.nii"), dir.path().join("b.nii"));
        nifti::write_any(&v, &p1).unwrap();
        let back = nifti::read_volume(&p1, v.kind()).unwrap();
        nifti::write_any(&back, &p2).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        prop_assert_eq!(back.geometry().dims(), dims);
        prop_assert_eq!(back.geometry().spacing(), spacing.map(|s| f64::from(s as f32)));
        match (&v, &back) {
            (AnyVolume::Label(a), AnyVolume::Label(b)) => prop_assert_eq!(a.data(), b.data()),
            (AnyVolume::Mask(a), AnyVolume::Mask(b)) => prop_assert_eq!(a.data(), b.data()),
            _ => prop_assert!(matches!(back.kind(), ElementKind::Intensity | ElementKind::Probability)),
        }
    }
}
