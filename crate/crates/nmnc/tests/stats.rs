use nmnc::stats::{mean, paired_t_test, std_dev};

#[test]
fn moments() {
    assert_eq!(mean(&[1.0, 2.0, 3.0, 6.0]), 3.0);
    // sample standard deviation, n − 1 denominator
    assert!((std_dev(&[1.0, 2.0, 3.0, 6.0]) - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn paired_t_matches_hand_computation() {
    // differences 1, 2, 3, 4, 5: mean 3, sd √2.5, t = 3/(√2.5/√5) = 3√2
    let a = [2.0, 4.0, 6.0, 8.0, 10.0];
    let b = [1.0, 2.0, 3.0, 4.0, 5.0];
    let t = paired_t_test(&a, &b).unwrap();
    assert!((t.mean_diff - 3.0).abs() < 1e-12);
    assert!((t.t - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(t.df, 4.0);
    // one-sided tail of Student t with 4 df at 4.2426 is 0.006618
    assert!((t.p_greater - 0.006618).abs() < 2e-5, "{}", t.p_greater);
    let rev = paired_t_test(&b, &a).unwrap();
    assert!((rev.p_greater + t.p_greater - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_inputs() {
    assert!(paired_t_test(&[1.0], &[0.0]).is_none());
    assert!(paired_t_test(&[1.0, 2.0], &[0.0]).is_none());
    let constant = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(constant.p_greater, 0.0);
    let zero = paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
    assert_eq!(zero.p_greater, 0.5);
}
