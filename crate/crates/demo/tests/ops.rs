use ccm_demo::ops::{cut_catalog, glucose_day, reward_curve};

#[test]
fn reward_curve_peaks_at_the_center() {
    let r = reward_curve(10.0, 2.0, 24.0, 0.1, 0.0, 20.0, 21).unwrap();
    assert_eq!(r.len(), 21);
    assert_eq!(r[10], 24.0);
    assert!((r[13] - 22.8).abs() < 1e-12);
    assert!(r.iter().all(|x| *x <= 24.0));
    assert!(reward_curve(0.0, 0.0, 24.0, 0.1, 0.0, 1.0, 5).is_err());
}

#[test]
fn glucose_day_covers_one_day() {
    let day = glucose_day("base", 0, 1.0, 0.02, false).unwrap();
    assert_eq!(day.glucose.len(), 1440);
    assert_eq!(day.meals.len(), 3);
    assert!((0.0..=1.0).contains(&day.time_in_range));
    assert!(day.infusion.iter().all(|u| (0.0..=5.0).contains(u)));
    let child = glucose_day("child", 3, 1.0, 0.02, true).unwrap();
    assert!(child.individual.starts_with("child"));
    assert_eq!(glucose_day("child", 3, 1.0, 0.02, true).unwrap().glucose, child.glucose);
    assert!(glucose_day("elder", 0, 1.0, 0.0, false).is_err());
}

#[test]
fn catalog_lists_cuts() {
    let cat = cut_catalog("env3").unwrap();
    assert!(cat.cuts.iter().all(|c| c.num == 2 && c.nodes.len() == 2));
    assert!(cat.nodes.iter().any(|(_, r)| *r == "modifiable"));
    assert!(cut_catalog("env9").is_err());
}
