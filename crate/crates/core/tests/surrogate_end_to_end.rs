//! Full-pipeline checks on the two bundled models at scales small enough
//! for the regular test run; the acceptance suite in the cli crate covers
//! the headline configurations.

use ctesn_core::models::{
    heating_family, heating_param_space, robertson_family, robertson_param_space, HeatingParams,
    RobertsonParams, HEATING_SPAN, ROBERTSON_SPAN,
};
use ctesn_core::ode::SolverConfig;
use ctesn_core::params::SobolSequencer;
use ctesn_core::readout::FitConfig;
use ctesn_core::surrogate::{train, validate, TrainingConfig};

fn unseen_params(space: &ctesn_core::params::BoxSpace, count: usize) -> Vec<Vec<f64>> {
    let mut seq = SobolSequencer::from_index(space.dim(), 101).unwrap();
    (0..count).map(|_| space.map_from_unit(&seq.next_point())).collect()
}

#[test]
fn robertson_minimum_training_runs_end_to_end() {
    let space = robertson_param_space(&RobertsonParams::default());
    let cfg = TrainingConfig { n_train: space.dim() + 2, ..TrainingConfig::default() };
    let s = train("robertson", robertson_family(), &space, ROBERTSON_SPAN, &cfg).unwrap();
    for m in &s.matrices {
        assert!(m.fit_residual < 1e-2, "sample at {:?}: residual {}", m.param, m.fit_residual);
    }
    let report = validate(&s, robertson_family(), &[space.midpoint()], &SolverConfig::default());
    assert_eq!(report.failures(), 0);
    assert!(
        report.max_overall().unwrap() < 1e-2,
        "midpoint error {} with minimum training set",
        report.max_overall().unwrap()
    );
}

#[test]
fn robertson_box_surrogate_is_accurate_at_unseen_rates() {
    let space = robertson_param_space(&RobertsonParams::default());
    let cfg = TrainingConfig { n_train: 30, ..TrainingConfig::default() };
    let s = train("robertson", robertson_family(), &space, ROBERTSON_SPAN, &cfg).unwrap();
    let report =
        validate(&s, robertson_family(), &unseen_params(&space, 4), &SolverConfig::default());
    assert_eq!(report.failures(), 0);
    assert!(
        report.max_overall().unwrap() < 1e-2,
        "worst unseen error {}",
        report.max_overall().unwrap()
    );
}

#[test]
fn heating_small_network_surrogate_tracks_unseen_setpoints() {
    let base = HeatingParams { n_rooms: 3, ..HeatingParams::default() };
    let space = heating_param_space();
    let cfg = TrainingConfig {
        n_train: 50,
        fit: FitConfig { n_samples: 512, ..FitConfig::default() },
        ..TrainingConfig::default()
    };
    let s = train("heating", heating_family(base.clone()), &space, HEATING_SPAN, &cfg).unwrap();
    let report =
        validate(&s, heating_family(base), &unseen_params(&space, 5), &SolverConfig::default());
    assert_eq!(report.failures(), 0);
    assert!(
        report.max_overall().unwrap() < 5e-2,
        "worst unseen error {}",
        report.max_overall().unwrap()
    );
}
