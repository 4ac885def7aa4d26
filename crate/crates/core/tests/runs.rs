use proptest::prelude::*;

use timolab::energy::{audit_dissipation, total_energy};
use timolab::laws::DampingLaw;
use timolab::solver::{run, DampingProfile, DefaultInitialData, Grid, PhysicalParams, RunSetup, Semidiscrete};

fn setup(law: DampingLaw, profile: fn(&Grid) -> DampingProfile, params: PhysicalParams) -> RunSetup {
    let grid = Grid::new(24).unwrap();
    let profile = profile(&grid);
    RunSetup {
        semidiscrete: Semidiscrete::new(params, grid, profile).unwrap(),
        law,
        dt: 0.02,
        final_time: 2.0,
        sample_every: 1,
        theta_ref: None,
        snapshot_times: vec![],
    }
}

fn bump(grid: &Grid) -> DampingProfile {
    DampingProfile::bump(grid, 0.3, 0.7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dissipative_runs_obey_the_energy_laws(
        amplitude in 0.0..0.5f64,
        heat in 0.0..0.5f64,
        mean in -1.0..1.0f64,
        p in prop::sample::select(vec![1.0, 2.0, 3.0]),
        localized in any::<bool>(),
        k in 0.5..4.0f64,
    ) {
        let law = if p == 1.0 { DampingLaw::linear(1.0) } else { DampingLaw::power(p).unwrap() };
        let params = PhysicalParams { k, ..PhysicalParams::default() };
        let s = setup(law, if localized { bump } else { DampingProfile::global }, params);
        let init = DefaultInitialData { amplitude, heat_amplitude: heat, theta_mean: mean }
            .state(s.semidiscrete.grid());
        let out = run(&s, &init).unwrap();
        let e0 = out.records[0].e;
        for w in out.records.windows(2) {
            prop_assert!(w[1].e <= w[0].e + 1e-12 * e0.max(1e-300));
            prop_assert!((w[1].theta_mean - out.records[0].theta_mean).abs() <= 1e-12);
        }
        for r in &out.records {
            // E = 𝓔 + ρ3 θ_ref² / 2 when θ_ref is the conserved mean.
            let split = r.ecal + 0.5 * out.theta_ref * out.theta_ref;
            prop_assert!((r.e - split).abs() <= 1e-12 * r.e.max(1e-12));
        }
        let audit = audit_dissipation(&out.balances, 1e-6);
        prop_assert!(audit.passed, "{audit:?}");
        prop_assert!(out.final_state.satisfies_boundary());
        prop_assert!((total_energy(&out.final_state, &params) - out.records.last().unwrap().e).abs() <= 1e-14);
    }

    #[test]
    fn undamped_runs_conserve_energy(amplitude in 0.01..0.5f64, k in 0.5..4.0f64) {
        let params = PhysicalParams { k, delta: 0.0, ..PhysicalParams::default() };
        let s = setup(DampingLaw::linear(1.0), DampingProfile::none, params);
        let init = DefaultInitialData { amplitude, heat_amplitude: 0.0, theta_mean: 0.0 }
            .state(s.semidiscrete.grid());
        let out = run(&s, &init).unwrap();
        let e0 = out.records[0].e;
        for r in &out.records {
            prop_assert!((r.e - e0).abs() <= 1e-10 * e0);
        }
    }
}

#[test]
fn linear_damping_scales_quadratically() {
    let s = setup(DampingLaw::linear(1.0), DampingProfile::global, PhysicalParams::default());
    let base = DefaultInitialData::default().state(s.semidiscrete.grid());
    let a = run(&s, &base).unwrap();
    let b = run(&s, &base.scaled(3.0)).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!((y.e - 9.0 * x.e).abs() <= 1e-11 * y.e, "{} vs {}", y.e, 9.0 * x.e);
    }
}
