use super::GcnError;
use crate::forecast_lstm::WorkloadSeries;
use crate::tensor::Matrix;

/// One GCN training example.
///
/// Row `i` of `features` is `[a_i(t−k+2), …, a_i(t), ã_i(t+1)]`: the last
/// `k − 1` observed workloads followed by the forecast of the next minute.
/// `target[i]` is the maximum vCPU consumption of service `i` over the
/// `k`-minute window ending at `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSample {
    /// 0-based index of minute `t` within the aligned series.
    pub t: usize,
    pub features: Matrix,
    pub target: Vec<f64>,
}

/// Builds the `T − k` samples aligned one-to-one with
/// [`make_windows`](crate::forecast_lstm::make_windows): sample `j` uses the
/// forecast made from window `j`, i.e. `forecasts[i][j]` predicts
/// `workloads[i].values[j + k]`.
pub fn build_resource_dataset(
    workloads: &[WorkloadSeries],
    resources: &[Vec<f64>],
    forecasts: &[Vec<f64>],
    k: usize,
) -> Result<Vec<ResourceSample>, GcnError> {
    let n = workloads.len();
    if n == 0 || k == 0 {
        return Err(GcnError::Misaligned("no services or zero window".into()));
    }
    if resources.len() != n || forecasts.len() != n {
        return Err(GcnError::Misaligned(format!(
            "{n} workload series, {} resource series, {} forecast series",
            resources.len(),
            forecasts.len()
        )));
    }
    let len = workloads[0].len();
    let start = workloads[0].start_minute;
    for (i, w) in workloads.iter().enumerate() {
        if w.len() != len || w.start_minute != start {
            return Err(GcnError::Misaligned(format!(
                "workload series '{}' does not share the minute grid of '{}'",
                w.service, workloads[0].service
            )));
        }
        if resources[i].len() != len {
            return Err(GcnError::Misaligned(format!(
                "resource series {i} has {} points, expected {len}",
                resources[i].len()
            )));
        }
        if let Some(v) = resources[i].iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(GcnError::Misaligned(format!(
                "resource series {i} contains invalid value {v}"
            )));
        }
    }
    if len < k + 1 {
        return Err(GcnError::Misaligned(format!(
            "series of length {len} too short for window {k}"
        )));
    }
    let count = len - k;
    for (i, f) in forecasts.iter().enumerate() {
        if f.len() != count {
            return Err(GcnError::Misaligned(format!(
                "forecast series {i} has {} points, expected {count}",
                f.len()
            )));
        }
    }

    let mut samples = Vec::with_capacity(count);
    for j in 0..count {
        let t = j + k - 1;
        let mut features = Matrix::zeros(n, k);
        let mut target = Vec::with_capacity(n);
        for i in 0..n {
            let row = features.row_mut(i);
            row[..k - 1].copy_from_slice(&workloads[i].values[j + 1..j + k]);
            row[k - 1] = forecasts[i][j];
            let peak = resources[i][j + 1..=j + k]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            target.push(peak);
        }
        samples.push(ResourceSample { t, features, target });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast_lstm::make_windows;

    fn series(name: &str, values: Vec<f64>) -> WorkloadSeries {
        WorkloadSeries::new(name, 0, values).unwrap()
    }

    #[test]
    fn target_is_window_max() {
        let w = vec![series("a", vec![1.0, 2.0, 3.0, 4.0])];
        let r = vec![vec![9.0, 0.2, 0.5, 0.3]];
        let f = vec![vec![3.5]];
        let s = build_resource_dataset(&w, &r, &f, 3).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].target, vec![0.5]);
        assert_eq!(s[0].features.row(0), &[2.0, 3.0, 3.5]);
        assert_eq!(s[0].t, 2);
    }

    #[test]
    fn constant_resource_gives_constant_target() {
        let w = vec![series("a", vec![1.0; 20]), series("b", vec![2.0; 20])];
        let r = vec![vec![0.7; 20], vec![1.3; 20]];
        let f = vec![vec![1.0; 16], vec![2.0; 16]];
        let s = build_resource_dataset(&w, &r, &f, 4).unwrap();
        assert!(s.iter().all(|x| x.target == vec![0.7, 1.3]));
    }

    #[test]
    fn aligned_with_lstm_windows() {
        let values: Vec<f64> = (0..800).map(|i| (i % 37) as f64).collect();
        let windows = make_windows(&values, 10).unwrap();
        let forecasts: Vec<f64> = windows.iter().map(|w| w.target + 0.5).collect();
        let w = vec![series("a", values.clone())];
        let r = vec![values.iter().map(|v| v * 0.01).collect()];
        let s = build_resource_dataset(&w, &r, &[forecasts], 10).unwrap();
        assert_eq!(s.len(), 790);
        for (sample, win) in s.iter().zip(&windows) {
            // last k−1 inputs of the window, then the forecast of its target
            assert_eq!(&sample.features.row(0)[..9], &win.inputs[1..]);
            assert_eq!(sample.features.get(0, 9), win.target + 0.5);
        }
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let w = vec![series("a", vec![1.0; 10])];
        assert!(build_resource_dataset(&w, &[vec![1.0; 9]], &[vec![1.0; 7]], 3).is_err());
        assert!(build_resource_dataset(&w, &[vec![1.0; 10]], &[vec![1.0; 6]], 3).is_err());
        let shifted = vec![
            series("a", vec![1.0; 10]),
            WorkloadSeries::new("b", 5, vec![1.0; 10]).unwrap(),
        ];
        assert!(matches!(
            build_resource_dataset(
                &shifted,
                &[vec![1.0; 10], vec![1.0; 10]],
                &[vec![1.0; 7], vec![1.0; 7]],
                3
            ),
            Err(GcnError::Misaligned(_))
        ));
    }
}
