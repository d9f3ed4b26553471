use crate::error::Result;
use crate::model::{logit, Measurement, MeasurementSpec, ModelParams, ModelSpec, PanelDataset, N_GAMMA};

/// One-state starting point from observed frequencies, with half-count
/// smoothing so no probability starts at zero.
pub fn frequency_start(spec: &ModelSpec, data: &PanelDataset) -> Result<ModelParams> {
    spec.validate()?;
    let (n, t_count) = (data.n(), data.occasions());
    let count = |j: usize, t: Option<usize>, y: usize| -> f64 {
        let mut c = 0usize;
        for i in 0..n {
            for tt in 0..t_count {
                if t.is_none_or(|t| t == tt) && data.response(i, tt, j) as usize == y {
                    c += 1;
                }
            }
        }
        c as f64 + 0.5
    };
    let measurement = match &spec.measurement {
        MeasurementSpec::Basic { homogeneous } => Measurement::Basic {
            psi: spec
                .levels
                .iter()
                .enumerate()
                .map(|(j, &l)| {
                    (0..spec.slots())
                        .map(|slot| {
                            let t = (!homogeneous).then_some(slot);
                            let counts: Vec<f64> = (0..l).map(|y| count(j, t, y)).collect();
                            let total: f64 = counts.iter().sum();
                            counts.iter().map(|c| vec![c / total]).collect()
                        })
                        .collect()
                })
                .collect(),
        },
        MeasurementSpec::Cutpoint => {
            let pooled: Vec<f64> = (0..spec.levels[0])
                .map(|y| (0..spec.variables()).map(|j| count(j, None, y)).sum())
                .collect();
            Measurement::Cutpoint {
                zeta: vec![0.0],
                omega: pooled.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
            }
        }
        MeasurementSpec::Covariate { .. } => {
            let mut cells = [0.5f64; 4];
            for i in 0..n {
                for t in 0..t_count {
                    let (a, b) = (data.response(i, t, 0) as usize, data.response(i, t, 1) as usize);
                    cells[2 * a + b] += 1.0;
                }
            }
            let total: f64 = cells.iter().sum();
            let p1 = (cells[2] + cells[3]) / total;
            let p2 = (cells[1] + cells[3]) / total;
            Measurement::Covariate {
                xi: vec![vec![logit(p1)], vec![logit(p2)]],
                beta: vec![0.0; spec.n_beta()],
                gamma: vec![(cells[0] * cells[3] / (cells[1] * cells[2])).ln(); N_GAMMA],
            }
        }
    };
    let params = ModelParams { initial: vec![1.0], transition: vec![vec![1.0]], measurement };
    params.validate(spec)?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_start_is_smoothed_frequency() {
        let spec = ModelSpec::basic(vec![2], 2, true);
        let data = PanelDataset::new(vec![2], 2, 2, vec![0, 0, 0, 1]).unwrap();
        let p = frequency_start(&spec, &data).unwrap();
        let Measurement::Basic { psi } = &p.measurement else { unreachable!() };
        assert!((psi[0][0][0][0] - 3.5 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn cutpoint_start_reproduces_pooled_frequencies() {
        let spec = ModelSpec::cutpoint(3, 1, 3);
        let data = PanelDataset::new(vec![3], 2, 3, vec![0, 1, 1, 2, 2, 2]).unwrap();
        let p = frequency_start(&spec, &data).unwrap();
        let Measurement::Cutpoint { zeta, omega } = &p.measurement else { unreachable!() };
        let probs = crate::model::cutpoint_probs(zeta[0], omega);
        assert!((probs[2] - 3.5 / 7.5).abs() < 1e-12);
    }
}
