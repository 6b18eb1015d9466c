use arrtoc::plants::BioreactorParams;
use arrtoc::problems::bioreactor_training_data;
use arrtoc::surrogate::{fit, read_training_csv, write_training_csv};

#[test]
fn posterior_mean_reproduces_training_targets() {
    let (x, y) = bioreactor_training_data(20.0, &BioreactorParams::default());
    let gp = fit(&x, &y).unwrap();
    let tol = 3.0 * gp.noise_std();
    for (xi, yi) in x.iter().zip(&y) {
        assert!((gp.predict_mean(*xi) - yi).abs() <= tol.max(1e-6), "{xi}: {} vs {yi}", gp.predict_mean(*xi));
    }
}

#[test]
fn bioreactor_fit_has_no_blowup() {
    let (x, y) = bioreactor_training_data(20.0, &BioreactorParams::default());
    let gp = fit(&x, &y).unwrap();
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = ymax - ymin;
    let bound = 4.0 * range / (gp.lengthscale * gp.lengthscale);
    let h = 1e-3;
    let n = 2000;
    for k in 1..n {
        let t = lo + (hi - lo) * k as f64 / n as f64;
        let m = gp.predict_mean(t);
        assert!(m >= ymin - 0.25 * range && m <= ymax + 0.25 * range, "mean {m} at {t}");
        let d2 = (gp.predict_mean(t + h) - 2.0 * m + gp.predict_mean(t - h)) / (h * h);
        assert!(d2.is_finite() && d2.abs() <= bound, "second derivative {d2} at {t}");
    }
}

#[test]
fn training_csv_survives_round_trip() {
    let (x, y) = bioreactor_training_data(20.0, &BioreactorParams::default());
    let dir = std::env::temp_dir().join(format!("gp-train-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("train.csv");
    write_training_csv(&path, &x, &y).unwrap();
    let (a, b) = read_training_csv(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!((a, b), (x, y));
}
