use proptest::prelude::*;
use rollstab::rollover::*;
use rollstab::vehicle::{VehicleConfig, VehicleState};

#[test]
fn symmetric_loads_give_zero() {
    assert_eq!(rollover_index([3548.28, 3548.28, 3311.72, 3311.72]).unwrap(), 0.0);
}

#[test]
fn unloaded_left_side_is_the_boundary() {
    assert_eq!(rollover_index([0.0, 4000.0, 0.0, 3500.0]).unwrap(), 1.0);
    let r = rollover_index([100.0, 4000.0, 100.0, 3500.0]).unwrap();
    assert!((r - 7300.0 / 7700.0).abs() < 1e-15);
    assert!((r - 0.9481).abs() < 5e-5);
}

#[test]
fn zero_total_load_is_undefined() {
    assert!(matches!(rollover_index([1.0, -1.0, 0.0, 0.0]), Err(RolloverError::UndefinedIndex { .. })));
}

#[test]
fn negative_reaction_exceeds_one() {
    let r = rollover_index([-708.0, 7804.0, -944.0, 7568.0]).unwrap();
    assert!(r > 1.0);
}

fn rolled(roll: f64) -> VehicleState {
    let mut s = VehicleState::initial(&VehicleConfig::default(), 20.0);
    s.0[3] = roll;
    s
}

#[test]
fn straight_run_is_stabilized() {
    let times = [0.0, 0.5, 1.0];
    let loads = [[3548.28, 3548.28, 3311.72, 3311.72]; 3];
    let states = [rolled(0.0), rolled(0.0), rolled(0.0)];
    let (series, summary) = classify(&times, &loads, &states, DEFAULT_ROLL_CAP).unwrap();
    assert_eq!(series.index, vec![0.0; 3]);
    assert_eq!(summary.max_abs_index, 0.0);
    assert!(!summary.lifted_off());
    assert!(summary.stabilized);
}

#[test]
fn lift_off_intervals_are_contiguous_runs() {
    let times = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let ok = [3000.0, 3000.0, 3000.0, 3000.0];
    let off = [-200.0, 6000.0, -100.0, 6000.0];
    let loads = [ok, off, off, ok, off, ok];
    let states = [rolled(0.0), rolled(0.1), rolled(0.2), rolled(0.1), rolled(0.15), rolled(0.05)];
    let (series, summary) = classify(&times, &loads, &states, DEFAULT_ROLL_CAP).unwrap();
    assert_eq!(series.lift_off, vec![false, true, true, false, true, false]);
    assert_eq!(summary.lift_off_intervals, vec![(0.1, 0.2), (0.4, 0.4)]);
    assert_eq!(summary.roll_at_lift_off_peak, Some(0.1));
    assert!(summary.stabilized);

    // roll that keeps growing after the lift-off peak
    let states = [rolled(0.0), rolled(0.1), rolled(0.2), rolled(0.25), rolled(0.3), rolled(0.34)];
    let (_, summary) = classify(&times, &loads, &states, DEFAULT_ROLL_CAP).unwrap();
    assert!(summary.roll_bounded);
    assert!(!summary.stabilized);

    let (_, summary) = classify(&times, &loads, &states, 0.3).unwrap();
    assert!(!summary.roll_bounded);
}

#[test]
fn mismatched_series_are_rejected() {
    let err = classify(&[0.0, 1.0], &[[1.0; 4]], &[rolled(0.0), rolled(0.0)], 0.35).unwrap_err();
    assert!(matches!(err, RolloverError::Length { .. }));
    assert!(matches!(classify(&[], &[], &[], 0.35), Err(RolloverError::Empty)));
}

proptest! {
    #[test]
    fn nonnegative_loads_stay_in_unit_interval(l in prop::array::uniform4(0.0f64..1e4)) {
        prop_assume!(l.iter().sum::<f64>() > 0.0);
        let r = rollover_index(l).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn swapping_sides_negates(l in prop::array::uniform4(-1e4f64..1e4)) {
        prop_assume!(l.iter().sum::<f64>().abs() > 1e-3);
        let r = rollover_index(l).unwrap();
        let s = rollover_index([l[1], l[0], l[3], l[2]]).unwrap();
        prop_assert!((r + s).abs() <= 1e-12 * (1.0 + r.abs()));
    }
}
