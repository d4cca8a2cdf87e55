//! Property tests of identities that hold for every input.

use metalattice::cellsolver::replicate;
use metalattice::energy::{averaged_energy, energy_breakdown, penalty_energy};
use metalattice::geometry::{averaged_vectors, commutator_closed_form, commutator_norm, lower_bracket, principal_stretches, Orientation};
use metalattice::lattice::{builtin, LatticeSpec, PeriodicDeformation, Supercell, BUILTIN_NAMES};
use metalattice::mechanisms::TwistFamily;
use metalattice::{Mat2, Vec2};
use proptest::prelude::*;

fn mat(r: f64) -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-r..r).prop_map(|a| Mat2::new(a[0], a[1], a[2], a[3]))
}

fn specs() -> Vec<LatticeSpec> {
    BUILTIN_NAMES.iter().map(|n| builtin(n).unwrap()).collect()
}

fn field(seed: u64, n: usize, amp: f64) -> Vec<Vec2> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Vec2::new(rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn svd_reconstructs(lam in mat(5.0)) {
        let s = principal_stretches(lam);
        prop_assert!(s.l1 >= s.l2 && s.l2 >= 0.0);
        prop_assert!(s.reconstruct().max_abs_diff(lam) <= 1e-12 * (1.0 + lam.frobenius()));
        prop_assert!((s.v.det() - 1.0).abs() < 1e-12);
        let want = if lam.det() >= 0.0 { Orientation::Preserving } else { Orientation::Reversing };
        if lam.det().abs() > 1e-9 {
            prop_assert_eq!(s.orientation, want);
        }
        prop_assert!((s.l1 * s.l2 - lam.det().abs()).abs() <= 1e-10 * (1.0 + lam.frobenius_sq()));
    }

    #[test]
    fn commutator_matches_closed_form(lam in mat(5.0), t in 0.0..std::f64::consts::TAU, pick in 0usize..2) {
        let alpha = [std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_2][pick];
        let direct = commutator_norm(lam, alpha, Vec2::polar(t));
        let closed = commutator_closed_form(lam, alpha);
        prop_assert!((direct - closed).abs() <= 1e-10 * closed.max(1e-300) + 1e-13 * lam.frobenius());
    }

    #[test]
    fn bracket_vanishes_on_isotropic_compressions(c in 0.0..1.0f64, phi in -4.0..4.0f64) {
        prop_assert!(lower_bracket(Mat2::rotation(phi) * c) < 1e-24);
    }

    #[test]
    fn averaged_vectors_follow_lambda(lam in mat(3.0), seed in any::<u64>(), ki in 0usize..4, si in 0usize..6) {
        let spec = &specs()[si];
        let k = [1, 2, 3, 5][ki];
        let cell = Supercell::new(spec, k).unwrap();
        let psi = field(seed, cell.num_nodes(), 1.0);
        let def = PeriodicDeformation::new(cell, lam, psi).unwrap();
        let av = averaged_vectors(&def);
        prop_assert!(av.affine_defect(lam) <= 1e-12 * (1.0 + lam.frobenius()));
    }

    #[test]
    fn energy_is_translation_invariant_and_frame_indifferent(
        lam in mat(2.0), seed in any::<u64>(), shift in prop::array::uniform2(-5.0..5.0f64),
        phi in -3.2..3.2f64, si in 0usize..2, k in 1usize..3,
    ) {
        let spec = &specs()[si];
        let cell = Supercell::new(spec, k).unwrap();
        let psi = field(seed, cell.num_nodes(), 0.4);
        let base = averaged_energy(&PeriodicDeformation::new(cell, lam, psi.clone()).unwrap(), 0.1).unwrap();
        prop_assert!(base >= 0.0);
        let t = Vec2::new(shift[0], shift[1]);
        let moved: Vec<Vec2> = psi.iter().map(|p| *p + t).collect();
        let e1 = averaged_energy(&PeriodicDeformation::new(cell, lam, moved).unwrap(), 0.1).unwrap();
        let r = Mat2::rotation(phi);
        let turned: Vec<Vec2> = psi.iter().map(|p| r * *p).collect();
        let e2 = averaged_energy(&PeriodicDeformation::new(cell, r * lam, turned).unwrap(), 0.1).unwrap();
        prop_assert!((e1 - base).abs() <= 1e-10 * (1.0 + base));
        prop_assert!((e2 - base).abs() <= 1e-10 * (1.0 + base));
    }

    #[test]
    fn penalty_is_quantized(lam in mat(2.0), seed in any::<u64>(), si in 0usize..6, eta in 0.01..1.0f64) {
        let spec = &specs()[si];
        let cell = Supercell::new(spec, 2).unwrap();
        let psi = field(seed, cell.num_nodes(), 0.8);
        let def = PeriodicDeformation::new(cell, lam, psi).unwrap();
        let b = energy_breakdown(&def, eta).unwrap();
        let flipped: f64 = b.per_triangle.iter().zip(spec.triangles.iter().cycle())
            .filter(|(t, _)| !t.preserved).map(|(t, _)| spec.triangles[t.triangle].area).sum();
        prop_assert!((b.penalty_total - flipped / eta).abs() <= 1e-12 * (1.0 + b.penalty_total));
        prop_assert!((penalty_energy(&def, eta).unwrap() - b.penalty_total).abs() <= 1e-12 * (1.0 + b.penalty_total));
        let attributed: f64 = b.per_triangle.iter().map(|t| t.spring).sum::<f64>() + b.unattributed_spring;
        prop_assert!((attributed - b.spring_total).abs() <= 1e-10 * (1.0 + b.spring_total));
    }

    #[test]
    fn replication_preserves_average(lam in mat(2.0), seed in any::<u64>(), si in 0usize..6) {
        let spec = &specs()[si];
        let c1 = Supercell::new(spec, 1).unwrap();
        let psi = field(seed, c1.num_nodes(), 0.5);
        let e1 = averaged_energy(&PeriodicDeformation::new(c1, lam, psi.clone()).unwrap(), 0.2).unwrap();
        let c2 = Supercell::new(spec, 2).unwrap();
        let e2 = averaged_energy(&PeriodicDeformation::new(c2, lam, replicate(spec, 1, &psi, 2)).unwrap(), 0.2).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-10 * (1.0 + e1));
    }
}

#[test]
fn marker_relation_at_mechanisms() {
    for spec in specs() {
        let Ok(fam) = TwistFamily::new(&spec) else { continue };
        for i in 1..10 {
            let theta = fam.theta_max * i as f64 / 10.0;
            let tw = fam.at(theta).unwrap();
            let av = averaged_vectors(&tw.deformation(&spec));
            let want = Mat2::rotation(spec.alpha) * av.a1_deformed * spec.c_marker;
            assert!((av.a2_deformed - want).norm() < 1e-10, "{} at {theta}", spec.name);
        }
    }
}
