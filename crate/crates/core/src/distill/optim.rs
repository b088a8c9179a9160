use crate::nn::{ModelParams, ParamGrads};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction and a constant learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ParamGrads,
    v: ParamGrads,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m: ParamGrads::zeros_like(params),
            v: ParamGrads::zeros_like(params),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ParamGrads) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.learning_rate;
        let eps = self.eps;

        let ms = self.m.groups_mut();
        let vs = self.v.groups_mut();
        for ((group, m), (_, v)) in ms.zip(vs) {
            let g = grads.group(group);
            for ((param, (mt, vt)), gt) in params
                .group_mut(group)
                .iter_mut()
                .zip(m.iter_mut().zip(v.iter_mut()))
                .zip(g)
            {
                let p = param.value.data_mut();
                let (md, vd) = (mt.data_mut(), vt.data_mut());
                for i in 0..p.len() {
                    let gi = gt.data()[i];
                    md[i] = b1 * md[i] + (1.0 - b1) * gi;
                    vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
                    let m_hat = md[i] / c1;
                    let v_hat = vd[i] / c2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
