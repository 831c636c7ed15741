use trixlab::data::{load_idx, parse_idx, write_idx};
use trixlab::{synth_gaussian_mixture, Dataset64, Error, SynthConfig};

#[test]
fn idx_round_trip_quantizes_to_bytes() {
    let data: Dataset64 = synth_gaussian_mixture(&SynthConfig { samples_per_class: 25, ..SynthConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("x.idx"), dir.path().join("y.idx"));
    write_idx(&data, &img, &lab).unwrap();
    let back: Dataset64 = load_idx(&img, &lab).unwrap();
    assert_eq!(back.labels(), data.labels());
    assert_eq!(back.num_classes(), 4);
    assert_eq!(back.input_dim(), 8);
    for (a, b) in data.inputs().data().iter().zip(back.inputs().data()) {
        assert_eq!(*b, (a * 255.0).round() / 255.0);
    }
}

fn header(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_be_bytes()).collect()
}

#[test]
fn malformed_idx_is_a_format_error() {
    let mut images = header(&[0x0803, 2, 1, 3]);
    images.extend([0, 128, 255, 1, 2, 3]);
    let labels = {
        let mut l = header(&[0x0801, 2]);
        l.extend([1, 0]);
        l
    };
    let ok: Dataset64 = parse_idx(&images, &labels).unwrap();
    assert_eq!(ok.inputs().row(0), &[0.0, 128.0 / 255.0, 1.0]);
    assert_eq!(ok.num_classes(), 2);

    let bad_magic = [&header(&[0x0802])[..], &images[4..]].concat();
    assert!(matches!(parse_idx::<f64>(&bad_magic, &labels), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(parse_idx::<f64>(&images[..images.len() - 1], &labels), Err(Error::Format { .. })));
    assert!(matches!(parse_idx::<f64>(&images[..6], &labels), Err(Error::Format { .. })));
    let short_labels = [&header(&[0x0801, 3])[..], &[1, 0, 0]].concat();
    assert!(matches!(parse_idx::<f64>(&images, &short_labels), Err(Error::Format { .. })));
}

/// Multinomial logistic regression by full-batch gradient descent on
/// standardized inputs; returns per-class accuracy on `test`.
fn logistic_probe(train: &Dataset64, test: &Dataset64) -> Vec<f64> {
    let (d, c) = (train.input_dim(), train.num_classes());
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| (0..train.len()).map(|i| train.inputs().get(i, j)).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| ((0..train.len()).map(|i| (train.inputs().get(i, j) - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let features = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect() };
    let scores = |w: &[Vec<f64>], b: &[f64], f: &[f64]| -> Vec<f64> {
        (0..c).map(|k| b[k] + f.iter().zip(&w[k]).map(|(a, b)| a * b).sum::<f64>()).collect()
    };

    let xs: Vec<Vec<f64>> = (0..train.len()).map(|i| features(train.inputs().row(i))).collect();
    let mut w = vec![vec![0.0; d]; c];
    let mut b = vec![0.0; c];
    for _ in 0..500 {
        let mut gw = vec![vec![0.0; d]; c];
        let mut gb = vec![0.0; c];
        for (f, &y) in xs.iter().zip(train.labels()) {
            let z = scores(&w, &b, f);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for k in 0..c {
                let g = e[k] / s - if k == y { 1.0 } else { 0.0 };
                gb[k] += g;
                for j in 0..d {
                    gw[k][j] += g * f[j];
                }
            }
        }
        for k in 0..c {
            b[k] -= 0.5 * gb[k] / n;
            for j in 0..d {
                w[k][j] -= 0.5 * gw[k][j] / n;
            }
        }
    }

    let mut hits = vec![0usize; c];
    for (i, &y) in test.labels().iter().enumerate() {
        let z = scores(&w, &b, &features(test.inputs().row(i)));
        let pred = (0..c).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();
        hits[y] += usize::from(pred == y);
    }
    let counts = test.class_counts();
    hits.iter().zip(&counts).map(|(&h, &n)| h as f64 / n as f64).collect()
}

#[test]
fn default_layout_has_strong_and_weak_classes() {
    let train: Dataset64 = synth_gaussian_mixture(&SynthConfig::default()).unwrap();
    let test: Dataset64 = synth_gaussian_mixture(&SynthConfig { seed: 1, ..SynthConfig::default() }).unwrap();
    let acc = logistic_probe(&train, &test);
    println!("probe accuracy per class: {acc:?}");
    assert!(acc[0] >= 0.95 && acc[1] >= 0.95, "{acc:?}");
    assert!(acc[2] <= 0.85 && acc[3] <= 0.85, "{acc:?}");
}

#[test]
fn csv_export_has_label_and_coordinates() {
    let data: Dataset64 = synth_gaussian_mixture(&SynthConfig { samples_per_class: 2, ..SynthConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    data.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "label,x0,x1,x2,x3,x4,x5,x6,x7");
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("0,"));
}
