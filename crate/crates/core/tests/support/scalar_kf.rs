//! Hand-written Kalman recursion for a one-dimensional AR(2) signal with a
//! stacked state `(x_t, x_{t−1})`, used as an independent reference.

#[derive(Clone, Copy, Debug)]
pub struct ScalarModel {
    pub a1: f64,
    pub a2: f64,
    pub q: f64,
    pub r: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ScalarState {
    pub m: [f64; 2],
    /// `[p11, p12, p22]` of the symmetric 2×2 covariance.
    pub p: [f64; 3],
}

impl ScalarState {
    pub fn initial(x0: f64, model: &ScalarModel) -> Self {
        let level = model.r + model.q;
        Self {
            m: [x0, x0],
            p: [level, 0.0, level],
        }
    }

    pub fn predict(self, k: &ScalarModel) -> Self {
        let [m1, m2] = self.m;
        let [p11, p12, p22] = self.p;
        Self {
            m: [k.a1 * m1 + k.a2 * m2, m1],
            p: [
                k.a1 * k.a1 * p11 + 2.0 * k.a1 * k.a2 * p12 + k.a2 * k.a2 * p22 + k.q,
                k.a1 * p11 + k.a2 * p12,
                p11,
            ],
        }
    }

    pub fn update_current(self, o: f64, r: f64) -> Self {
        let [m1, m2] = self.m;
        let [p11, p12, p22] = self.p;
        let s = p11 + r;
        let (k1, k2) = (p11 / s, p12 / s);
        let e = o - m1;
        Self {
            m: [m1 + k1 * e, m2 + k2 * e],
            p: [p11 - k1 * p11, p12 - k1 * p12, p22 - k2 * p12],
        }
    }

    pub fn update_both(self, o: f64, o_prev: f64, r: f64, r_prev: f64) -> Self {
        let [m1, m2] = self.m;
        let [p11, p12, p22] = self.p;
        let (s11, s12, s22) = (p11 + r, p12, p22 + r_prev);
        let det = s11 * s22 - s12 * s12;
        let (i11, i12, i22) = (s22 / det, -s12 / det, s11 / det);
        // K = P·S⁻¹
        let k11 = p11 * i11 + p12 * i12;
        let k12 = p11 * i12 + p12 * i22;
        let k21 = p12 * i11 + p22 * i12;
        let k22 = p12 * i12 + p22 * i22;
        let (e1, e2) = (o - m1, o_prev - m2);
        Self {
            m: [m1 + k11 * e1 + k12 * e2, m2 + k21 * e1 + k22 * e2],
            p: [
                p11 - (k11 * p11 + k12 * p12),
                p12 - (k11 * p12 + k12 * p22),
                p22 - (k21 * p12 + k22 * p22),
            ],
        }
    }
}

/// Filtered `x̂_t` for every step, mirroring the library's conventions: step 0
/// reports the prior mean, later steps predict and update at pilots, using
/// both blocks when the previous symbol was also a pilot.
pub fn scalar_filter(model: &ScalarModel, obs: &[f64], mask: &[bool]) -> Vec<f64> {
    let x0 = if mask[0] { obs[0] } else { 0.0 };
    let mut st = ScalarState::initial(x0, model);
    let mut out = vec![st.m[0]];
    for t in 1..obs.len() {
        st = st.predict(model);
        if mask[t] {
            st = if mask[t - 1] {
                st.update_both(obs[t], obs[t - 1], model.r, model.r)
            } else {
                st.update_current(obs[t], model.r)
            };
        }
        out.push(st.m[0]);
    }
    out
}
