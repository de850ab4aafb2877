use std::io::{self, Write};

use super::OdeSettings;
use crate::rates::interaction::ModelSpec;
use crate::state::Norms;

/// Interior points per step at which the running sups are also evaluated.
const SUP_PROBES: [f64; 3] = [0.25, 0.5, 0.75];

/// Accepted-step trajectory of the truncated limit equation with cubic
/// Hermite dense output.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    model: ModelSpec,
    truncation: usize,
    settings: OdeSettings,
    horizon: f64,
    cap: f64,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
    m_t: f64,
    g_t: f64,
    blow_up: Option<f64>,
}

impl OdeSolution {
    pub(crate) fn start(
        model: ModelSpec,
        truncation: usize,
        settings: OdeSettings,
        horizon: f64,
        cap: f64,
        y0: Vec<f64>,
        f0: Vec<f64>,
    ) -> Self {
        let m_t = y0.l11_norm();
        let g_t = y0.l1_norm();
        Self {
            model,
            truncation,
            settings,
            horizon,
            cap,
            times: vec![0.0],
            values: vec![y0],
            derivs: vec![f0],
            m_t,
            g_t,
            blow_up: None,
        }
    }

    pub(crate) fn push(&mut self, t: f64, y: Vec<f64>, f: Vec<f64>) {
        self.times.push(t);
        self.values.push(y);
        self.derivs.push(f);
        let k = self.times.len() - 2;
        let mut buf = vec![0.0; self.truncation + 1];
        for s in SUP_PROBES {
            let t = self.times[k] + s * (self.times[k + 1] - self.times[k]);
            self.interpolate(k, t, &mut buf);
            self.m_t = self.m_t.max(buf.l11_norm());
            self.g_t = self.g_t.max(buf.l1_norm());
        }
        let y = &self.values[k + 1];
        self.m_t = self.m_t.max(y.l11_norm());
        self.g_t = self.g_t.max(y.l1_norm());
    }

    pub(crate) fn mark_blow_up(&mut self, t: f64) {
        self.blow_up = Some(t);
    }

    pub(crate) fn finish(&mut self) {}

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn settings(&self) -> &OdeSettings {
        &self.settings
    }

    /// Requested horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Last time covered: `T`, or the blow-up time.
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("solution has at least one node")
    }

    pub fn blow_up_cap(&self) -> f64 {
        self.cap
    }

    pub fn blow_up(&self) -> Option<f64> {
        self.blow_up
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn derivatives(&self) -> &[Vec<f64>] {
        &self.derivs
    }

    /// `sup_t ‖x(t)‖₁₁` over the dense output.
    pub fn m_t(&self) -> f64 {
        self.m_t
    }

    /// `sup_t ‖x(t)‖₁` over the dense output.
    pub fn g_t(&self) -> f64 {
        self.g_t
    }

    /// Index `k` with `times[k] ≤ t ≤ times[k+1]`.
    fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(n - 2)
    }

    fn interpolate(&self, k: usize, t: f64, out: &mut [f64]) {
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1) = (&self.values[k], &self.values[k + 1]);
        let (f0, f1) = (&self.derivs[k], &self.derivs[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h11 = (s3 - s2) * h;
        for i in 0..out.len() {
            out[i] = y0[i] + (y1[i] - y0[i]) * h01 + h10 * f0[i] + h11 * f1[i];
        }
    }

    /// Dense output at `t`, clamped to `[0, end_time]`. Exact at nodes.
    pub fn eval_into(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.truncation + 1, 0.0);
        if self.times.len() == 1 || t <= 0.0 {
            out.copy_from_slice(&self.values[0]);
            return;
        }
        let k = self.segment(t);
        if t == self.times[k] {
            out.copy_from_slice(&self.values[k]);
        } else if t >= self.times[k + 1] {
            out.copy_from_slice(&self.values[k + 1]);
        } else {
            self.interpolate(k, t, out);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        self.eval_into(t, &mut out);
        out
    }

    /// `‖x'‖₁` bound on `[a, b]` from the node derivatives of the steps
    /// overlapping the interval, used to bound the motion of the solution
    /// between evaluation points.
    pub fn speed_bound(&self, a: f64, b: f64) -> f64 {
        let ka = self.segment(a);
        let kb = (self.segment(b) + 1).min(self.times.len() - 1);
        (ka..=kb)
            .map(|k| self.derivs[k].l1_norm())
            .fold(0.0, f64::max)
    }

    /// `(J+1) Σ_{i > 0.9J} xⁱ` at the final node.
    pub fn terminal_tail_mass(&self) -> f64 {
        let j = self.truncation;
        let start = (9 * j) / 10 + 1;
        let last = self.values.last().expect("nonempty");
        (j as f64 + 1.0) * last.iter().skip(start).map(|v| v.abs()).sum::<f64>()
    }

    /// True when the terminal tail mass is below `1e-8`.
    pub fn tail_ok(&self) -> bool {
        self.terminal_tail_mass() < 1e-8
    }

    /// Most negative component over all nodes.
    pub fn min_component(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `time, x0, …, xJ` rows at the nodes. The first line is a
    /// `#`-prefixed header with model and integrator metadata.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &str) -> io::Result<()> {
        writeln!(
            w,
            "# {header} model={} J={} atol={} rtol={} M_T={} G_T={} blow_up={}",
            self.model.name(),
            self.truncation,
            self.settings.atol,
            self.settings.rtol,
            self.m_t,
            self.g_t,
            self.blow_up.is_some()
        )?;
        write!(w, "time")?;
        for i in 0..=self.truncation {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for (t, y) in self.times.iter().zip(&self.values) {
            write!(w, "{t}")?;
            for v in y {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
