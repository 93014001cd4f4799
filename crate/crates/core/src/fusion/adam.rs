use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FusionNetParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: FusionNetParams,
    pub second_moment: FusionNetParams,
}

impl AdamState {
    pub fn new(params: &FusionNetParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut FusionNetParams, grads: &FusionNetParams) {
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        let p_slices = params.slices_mut();
        let g_slices = grads.slices();
        let m_slices = self.first_moment.slices_mut();
        let v_slices = self.second_moment.slices_mut();
        for (((p, g), m), v) in p_slices
            .into_iter()
            .zip(g_slices)
            .zip(m_slices)
            .zip(v_slices)
        {
            assert_eq!(p.len(), g.len(), "gradient shape");
            p.par_iter_mut()
                .with_min_len(4096)
                .zip(g.par_iter())
                .zip(m.par_iter_mut())
                .zip(v.par_iter_mut())
                .for_each(|(((p, &g), m), v)| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / correction1;
                    let v_hat = *v / correction2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{init_params, FusionNetConfig};

    fn params() -> FusionNetParams {
        init_params(&FusionNetConfig {
            deep_dim: 6,
            use_sun: false,
            use_yolo: false,
            hidden: [5, 4, 3],
            n_classes: 3,
            seed: 21,
        })
        .unwrap()
    }

    fn constant_grads(p: &FusionNetParams) -> FusionNetParams {
        let mut g = p.zeros_like();
        for (i, v) in g.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.37 } else { -2.5 };
        }
        g
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let g = constant_grads(&p);
        let mut state = AdamState::new(
            &p,
            AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::default()
            },
        );
        state.step(&mut p, &g);
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut p = params();
        let before = p.clone();
        let g = constant_grads(&p);
        let mut state = AdamState::new(&p, AdamConfig::default());
        state.step(&mut p, &g);
        for ((after, before), g) in p.iter().zip(before.iter()).zip(g.iter()) {
            let moved = after - before;
            assert!((moved + 1e-4 * g.signum()).abs() < 1e-10, "moved {moved}");
        }
    }

    #[test]
    fn steps_are_bit_reproducible() {
        let run = || {
            let mut p = params();
            let g = constant_grads(&p);
            let mut state = AdamState::new(&p, AdamConfig::default());
            for _ in 0..5 {
                state.step(&mut p, &g);
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
