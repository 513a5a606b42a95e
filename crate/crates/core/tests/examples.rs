macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(fpk_reference);
example!(kde_observation);
example!(central_filter);
example!(pi_consensus);
example!(distributed_filter);
example!(scenario_config);

#[test]
fn fpk_reference_conserves_and_concentrates() {
    let r = fpk_reference::run_example().unwrap();
    assert!(r.worst_column_sum == 0.0);
    assert!(r.worst_mass_dev < 1e-10);
    assert!(r.min_value >= -1e-10);
    assert!(r.final_peak > 2.0 * r.initial_peak);
}

#[test]
fn kde_observation_is_a_density() {
    let r = kde_observation::run_example().unwrap();
    assert!((r.kbar - 1.0 / (4.0 * std::f64::consts::PI * 100.0 * 0.08 * 0.08)).abs() < 1e-12);
    assert!((r.mass - 1.0).abs() < 1e-12);
    assert!(r.min_value > 0.0);
    assert!(r.max_variance > 1e-6);
}

#[test]
fn central_filter_beats_kde() {
    let row = central_filter::run_example().unwrap();
    assert!(row.filter_wins(), "{row:?}");
}

#[test]
fn pi_consensus_converges() {
    let h = pi_consensus::run_example().unwrap();
    assert!(h.windows(2).all(|w| w[1] <= w[0]));
    assert!(*h.last().unwrap() < 1e-6 * h[0]);
}

#[test]
fn distributed_filter_runs() {
    let r = distributed_filter::run_example().unwrap();
    assert_eq!(r.local_l2.len(), 3);
    assert!(r.local_l2.iter().all(|e| e.is_finite() && *e < r.kde_l2));
    assert!(r.worst_mass_dev < 1e-8);
    assert!(r.min_output > 0.0);
}

#[test]
fn scenario_config_round_trips() {
    // 21 steps, kde and filter rows each
    assert_eq!(scenario_config::run_example().unwrap(), 42);
}
