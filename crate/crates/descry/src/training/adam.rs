//! Bias-corrected Adam over the model's four parameter blocks.

use crate::descriptor::{GradBuffer, ModelParams};

use super::{TrainConfig, TrainError};

/// First and second moment estimates plus the step counter. Second moments
/// stay non-negative because they only accumulate squares.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: GradBuffer,
    pub v: GradBuffer,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: GradBuffer::zeros_like(params),
            v: GradBuffer::zeros_like(params),
            t: 0,
        }
    }
}

/// One optimizer step. Gradients must be finite everywhere; a NaN or
/// infinity anywhere aborts before touching the parameters.
pub fn adam_update(
    params: &mut ModelParams,
    grads: &GradBuffer,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let blocks: [(&str, &[f64]); 4] = [
        ("w1", &grads.w1),
        ("b1", &grads.b1),
        ("w2", &grads.w2),
        ("b2", &grads.b2),
    ];
    for (name, g) in blocks {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient(name));
        }
    }
    assert_eq!(grads.w1.len(), params.w1.len(), "gradient shape drift");
    assert_eq!(grads.w2.len(), params.w2.len(), "gradient shape drift");

    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);
    let step = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..theta.len() {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    };
    step(&mut params.w1, &grads.w1, &mut state.m.w1, &mut state.v.w1);
    step(&mut params.b1, &grads.b1, &mut state.m.b1, &mut state.v.b1);
    step(&mut params.w2, &grads.w2, &mut state.m.w2, &mut state.v.w2);
    step(&mut params.b2, &grads.b2, &mut state.m.b2, &mut state.v.b2);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::init_params;

    fn tiny() -> ModelParams {
        init_params(8, 8, 8, 1).unwrap()
    }

    fn ones_like(p: &ModelParams) -> GradBuffer {
        let mut g = GradBuffer::zeros_like(p);
        for block in [&mut g.w1, &mut g.b1, &mut g.w2, &mut g.b2] {
            block.iter_mut().for_each(|v| *v = 1.0);
        }
        g
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = tiny();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = GradBuffer::zeros_like(&p);
        for _ in 0..3 {
            adam_update(&mut p, &g, &mut st, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 3);
        assert!(st.m.w1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_almost_lr() {
        // At t = 1 the bias corrections cancel: m_hat = 1, v_hat = 1, so
        // every coordinate moves by -lr / (1 + eps).
        let mut p = tiny();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let cfg = TrainConfig::default();
        adam_update(&mut p, &ones_like(&before), &mut st, &cfg).unwrap();
        for (a, b) in p.w1.iter().zip(&before.w1) {
            assert!((a - b + 0.001).abs() < 1e-6, "step was {}", a - b);
        }
        for (a, b) in p.b2.iter().zip(&before.b2) {
            assert!((a - b + 0.001).abs() < 1e-6);
        }
    }

    #[test]
    fn updates_scale_linearly_in_lr() {
        let base = tiny();
        let g = ones_like(&base);
        let run = |lr: f64| {
            let mut p = base.clone();
            let mut st = AdamState::new(&p);
            let cfg = TrainConfig { lr, ..TrainConfig::default() };
            adam_update(&mut p, &g, &mut st, &cfg).unwrap();
            p
        };
        let p1 = run(1e-3);
        let p2 = run(2e-3);
        for i in 0..base.w1.len() {
            let d1 = p1.w1[i] - base.w1[i];
            let d2 = p2.w1[i] - base.w1[i];
            assert!((d2 - 2.0 * d1).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradients_are_refused_before_any_change() {
        let mut p = tiny();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let mut g = ones_like(&p);
        g.w2[3] = f64::NAN;
        let err = adam_update(&mut p, &g, &mut st, &TrainConfig::default());
        assert!(matches!(err, Err(TrainError::NonFiniteGradient("w2"))));
        assert_eq!(p, before);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn second_moments_stay_non_negative() {
        let mut p = tiny();
        let mut st = AdamState::new(&p);
        let cfg = TrainConfig::default();
        let mut g = ones_like(&p);
        g.w1.iter_mut().enumerate().for_each(|(i, v)| {
            *v = if i % 2 == 0 { -3.5 } else { 0.25 };
        });
        for _ in 0..5 {
            adam_update(&mut p, &g, &mut st, &cfg).unwrap();
        }
        assert!(st.v.w1.iter().chain(&st.v.b2).all(|&v| v >= 0.0));
    }
}
