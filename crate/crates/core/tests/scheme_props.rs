mod common;

use lbm_ce::number::{rat, Rational};
use lbm_ce::scheme::builtin;
use lbm_ce::scheme_file::{parse_scheme, to_toml};
use lbm_ce::simulator::{exact_step, Lattice};
use num_traits::Zero;

use common::{random_batch, rational_vector, rng, small_rational};

#[test]
fn moment_particle_round_trip_on_random_vectors() {
    let schemes = random_batch(11, 10);
    let mut r = rng(12);
    for i in 0..100 {
        let s = &schemes[i % schemes.len()];
        let f = rational_vector(&mut r, s.q());
        let m = s.moments_of(&f).unwrap();
        assert_eq!(s.particles_of(&m).unwrap(), f);
        assert_eq!(s.moments_of(&s.particles_of(&f).unwrap()).unwrap(), f);
    }
}

#[test]
fn equilibrium_is_fixed_by_relaxation() {
    let mut r = rng(21);
    for s in random_batch(22, 12) {
        let w: Vec<Rational> = (0..s.conserved).map(|_| small_rational(&mut r, 5, 3)).collect();
        let mut m = w.clone();
        m.extend(s.equilibrium(&w).unwrap());
        assert_eq!(s.relax(&m).unwrap(), m, "{}", s.name);
        let f_eq = s.particles_of(&m).unwrap();
        assert_eq!(s.moments_of(&f_eq).unwrap(), m);
    }
}

#[test]
fn exact_step_conserves_each_conserved_moment() {
    let mut r = rng(31);
    for s in random_batch(32, 12) {
        let lattice = Lattice::cubic(s.dim, 5);
        let mut f: Vec<Rational> = (0..lattice.sites() * s.q()).map(|_| small_rational(&mut r, 4, 5)).collect();
        let totals = |f: &[Rational]| -> Vec<Rational> {
            f.chunks(s.q()).fold(vec![Rational::zero(); s.conserved], |mut acc, site| {
                let m = s.moments_of(site).unwrap();
                acc.iter_mut().zip(&m).for_each(|(a, x)| *a += x);
                acc
            })
        };
        let before = totals(&f);
        for _ in 0..3 {
            f = exact_step(&s, &lattice, &f).unwrap();
            assert_eq!(totals(&f), before, "{}", s.name);
        }
    }
}

#[test]
fn random_schemes_round_trip_through_files() {
    for s in random_batch(41, 12) {
        let back = parse_scheme(&to_toml(&s)).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn rates_at_two_and_a_half_warn() {
    let mut s = builtin("d2q9-diffusion").unwrap();
    s.rates[3] = rat(5, 2);
    let report = s.validate();
    assert!(report.is_valid());
    assert!(report.warnings().any(|w| w.message.contains("outside (0,2)")));
}

#[test]
fn duplicated_moment_rows_are_singular() {
    let mut s = builtin("d1q3-advection").unwrap();
    let row0 = s.moment_matrix.row(0).to_vec();
    for (j, x) in row0.into_iter().enumerate() {
        s.moment_matrix[(2, j)] = x;
    }
    let report = s.validate();
    assert!(report.errors().any(|e| e.message.contains("M singular")));
}
