use std::collections::BTreeMap;

use srf_pal::archetype::{default_templates, generate_subject, subject_to_records, PalClass, SubjectConfig, Timeline};
use srf_pal::model::{load_model, save_model};
use srf_pal::pipeline::{assess_records, evaluate_msd, labeled_examples, train_model, ModelTrainingConfig};

#[test]
fn synthetic_subject_round_trip() {
    let subject = generate_subject(&SubjectConfig::default(), &default_templates(), 7).unwrap();
    let (records, labels) = subject_to_records(&subject, &Timeline::default()).unwrap();
    let cfg = ModelTrainingConfig::default();
    let first_day = labels[0].day;
    let train: Vec<_> = labels.iter().filter(|l| l.day < first_day + 9).cloned().collect();
    let examples = labeled_examples(&records, &train, &cfg.ranges, &cfg.window).unwrap();
    assert_eq!(examples.len(), train.len());
    let (model, reports) = train_model(&examples, &cfg, 7).unwrap();
    assert_eq!(reports.len(), 18);
    assert!(reports.iter().all(|r| r.fitness.is_finite() && r.fitness >= 0.0));

    let a = assess_records(&records, &model).unwrap();
    assert_eq!(a.windows.len(), labels.len());
    let expected: BTreeMap<(i64, i64), f64> = labels.iter().map(|l| ((l.day, l.window_index), l.expected_pal)).collect();
    let test: Vec<_> = a.windows.iter().filter(|w| w.day >= first_day + 9).collect();
    let pred: Vec<f64> = test.iter().map(|w| w.pal).collect();
    let exp: Vec<f64> = test.iter().map(|w| expected[&(w.day, w.window_index)]).collect();
    let msd = evaluate_msd(&pred, &exp).unwrap();

    let mut wrong = 0;
    let mut dp = Vec::new();
    let mut de = Vec::new();
    for d in a.days.iter().filter(|d| d.day >= first_day + 9) {
        let e: Vec<f64> = labels.iter().filter(|l| l.day == d.day).map(|l| l.expected_pal).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        dp.push(d.average);
        de.push(mean);
        if d.class != PalClass::from_pal(mean) {
            wrong += 1;
        }
    }
    let dmsd = evaluate_msd(&dp, &de).unwrap();
    assert!(msd <= 0.35, "window msd {msd}");
    assert!(dmsd <= 0.20, "daily msd {dmsd}");
    assert!(wrong <= 2, "{wrong} days misclassified");

    for d in &a.days {
        let pals: Vec<f64> = a.windows.iter().filter(|w| w.day == d.day).map(|w| w.pal).collect();
        assert_eq!(d.average, pals.iter().sum::<f64>() / pals.len() as f64);
        assert!((1.0..=3.0).contains(&d.macro_pal));
    }

    // a 90 s hole in the first window of the second day drops only that window
    let day = first_day + 1;
    let t0 = day * 86_400 + 8 * 3600 + 100;
    let gappy: Vec<_> = records.iter().filter(|r| r.timestamp < t0 || r.timestamp >= t0 + 90).copied().collect();
    let b = assess_records(&gappy, &model).unwrap();
    assert_eq!(b.windows.len(), a.windows.len() - 1);
    assert!(!b.windows.iter().any(|w| w.day == day && w.window_index == 80));
    let kept: Vec<f64> = b.windows.iter().filter(|w| w.day == day).map(|w| w.pal).collect();
    let avg = b.days.iter().find(|d| d.day == day).unwrap().average;
    assert_eq!(avg, kept.iter().sum::<f64>() / kept.len() as f64);

    let mut buf = Vec::new();
    save_model(&model, &mut buf).unwrap();
    assert_eq!(load_model(buf.as_slice()).unwrap(), model);
}
