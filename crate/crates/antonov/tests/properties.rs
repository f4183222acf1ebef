use std::f64::consts::PI;
use std::sync::{Arc, LazyLock};

use antonov::band_structure::BandStructure;
use antonov::dynamics::{self, XGrid};
use antonov::io::{self, Dense};
use antonov::operators::{AntonovOperator, EigenReport, GridOptions, ModeGrid};
use antonov::scattering::{exclusion_zones, AcProjector, BetaGrid};
use antonov::steady_state::{solve_steady_state, AnsatzProfile, SolveOptions};
use faer::Mat;
use proptest::prelude::*;

struct Fixture {
    op: AntonovOperator,
    eig: EigenReport,
    xg: XGrid,
}

static FIX: LazyLock<Fixture> = LazyLock::new(|| {
    let st = Arc::new(solve_steady_state(AnsatzProfile::king(), 1.5, SolveOptions::default()).unwrap());
    let bands = Arc::new(BandStructure::build(st, 3).unwrap());
    let opts = GridOptions {
        lmax: 3,
        n_energy: 24,
        ..Default::default()
    };
    let op = AntonovOperator::new(Arc::new(ModeGrid::new(bands, opts).unwrap()), 1.0).unwrap();
    let eig = op.eigen().unwrap();
    let xg = XGrid::new(&op.grid, 201).unwrap();
    Fixture { op, eig, xg }
});

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad(m: &Mat<f64>, h: &[f64]) -> f64 {
    (0..h.len())
        .map(|i| h[i] * (0..h.len()).map(|j| m[(i, j)] * h[j]).sum::<f64>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steady_state_identities(depth in 0.2f64..4.0, k in 1.0f64..3.0, king in any::<bool>()) {
        let profile = if king { AnsatzProfile::king() } else { AnsatzProfile::polytrope(k).unwrap() };
        let st = solve_steady_state(profile, depth, SolveOptions::default()).unwrap();
        prop_assert!((st.e0 - 2.0 * PI * st.m0 * st.r0).abs() <= 1e-9 * st.e0.abs());
        prop_assert!((st.e0 - st.emin - depth).abs() <= 1e-12 * depth.max(1.0));
        prop_assert!((st.du0(st.r0) - 2.0 * PI * st.m0).abs() <= 1e-8 * st.m0);
        for i in 0..20 {
            let x = 1.5 * st.r0 * i as f64 / 19.0;
            prop_assert!((st.u0(x) - st.u0(-x)).abs() <= 1e-12 * st.e0.abs().max(1.0));
            prop_assert!(st.rho0(x) >= 0.0);
            if x > st.r0 {
                prop_assert_eq!(st.rho0(x), 0.0);
            }
        }
    }

    #[test]
    fn quadratic_forms_are_consistent_and_bounded_below(h in vector(72)) {
        let f = &*FIX;
        let b = quad(&f.op.b, &h);
        let hh = dot(&h, &h);
        prop_assert!(b >= -1e-12 * hh * f.op.b.norm_l2());
        let a = quad(&f.op.a, &h);
        prop_assert!(a >= f.eig.values[0] * hh * (1.0 - 1e-10));
        let a0: f64 = h.iter().zip(&f.op.a0).map(|(x, d)| d * x * x).sum();
        prop_assert!((a0 - b - a).abs() <= 1e-9 * a0);
    }

    #[test]
    fn force_is_odd_and_its_norm_is_the_quadratic_form(h in vector(72)) {
        let f = &*FIX;
        let force = f.xg.force(&h);
        let n = force.len();
        for i in 0..n {
            prop_assert!((force[i] + force[n - 1 - i]).abs() <= 1e-10 * force.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300));
        }
        let norm2 = f.xg.l2_norm(&force).powi(2);
        let b = 4.0 * PI * quad(&f.op.b, &h);
        prop_assert!((norm2 - b).abs() <= 2e-2 * b.max(1e-300));
    }

    #[test]
    fn ac_projector_is_an_orthogonal_projection(u in vector(72), v in vector(72)) {
        let f = &*FIX;
        let grids: Vec<BetaGrid> = (1..=f.op.grid.lmax).map(|l| BetaGrid::new(&f.op.grid, l, 48).unwrap()).collect();
        let zones = exclusion_zones(&f.op.grid, &grids, &[], &Default::default());
        let p = AcProjector::new(&f.op, &f.eig, &zones);
        let (pu, pv) = (p.apply(&u), p.apply(&v));
        let ppu = p.apply(&pu);
        let scale = dot(&u, &u).sqrt() * dot(&v, &v).sqrt();
        prop_assert!(pu.iter().zip(&ppu).all(|(a, b)| (a - b).abs() <= 1e-12 * scale.max(1.0)));
        prop_assert!((dot(&pu, &v) - dot(&u, &pv)).abs() <= 1e-12 * scale);
        prop_assert!(dot(&pu, &pu) <= dot(&u, &u) * (1.0 + 1e-12));
    }

    #[test]
    fn evolution_conserves_energy_and_obeys_potential_bound(seed in any::<u64>(), t_end in 0.5f64..40.0) {
        let f = &*FIX;
        let f0 = dynamics::initial_data(&f.op, &f.eig, dynamics::InitialData::Random { seed }).unwrap();
        let times = dynamics::time_grid(t_end, 17);
        let res = dynamics::evolve(&f.op, &f.eig, &f.xg, &f0, &times, false).unwrap();
        let e0 = res.energy[0];
        prop_assert!(res.energy.iter().all(|e| (e - e0).abs() <= 1e-10 * e0));
        prop_assert_eq!(res.force_norm[0], 0.0);
        let bound = (2.0 * f.op.grid.state().r0).sqrt();
        for i in 0..times.len() {
            prop_assert!(res.potential_sup[i] <= bound * res.force_norm[i] * (1.0 + 1e-9) + 1e-14);
        }
    }

    #[test]
    fn cesaro_average_of_a_decreasing_signal_is_decreasing(rate in 0.01f64..2.0, n in 8usize..200) {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let s: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
        let c = dynamics::cesaro(&times, &s);
        prop_assert!(c.windows(2).skip(1).all(|w| w[1] <= w[0] + 1e-15));
        prop_assert!(c.iter().zip(&s).skip(1).all(|(a, b)| a >= b));
    }

    #[test]
    fn dense_files_round_trip_bitwise(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let m = Mat::from_fn(rows, cols, |i, j| ((seed.wrapping_mul(31 + i as u64 * 7 + j as u64) % 1000) as f64 - 500.0) / 7.0);
        let dir = std::env::temp_dir().join(format!("antonov-prop-{seed}-{rows}-{cols}.bin"));
        io::write_real(&dir, &m).unwrap();
        let back = io::read(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        match back {
            Dense::Real(b) => {
                prop_assert_eq!((b.nrows(), b.ncols()), (rows, cols));
                for i in 0..rows {
                    for j in 0..cols {
                        prop_assert_eq!(b[(i, j)].to_bits(), m[(i, j)].to_bits());
                    }
                }
            }
            Dense::Complex(_) => prop_assert!(false, "kind changed"),
        }
    }
}
