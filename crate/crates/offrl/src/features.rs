//! Feature maps phi(s, a) for linear function classes.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateVec};

/// A feature map phi: S x A -> R^d with ||phi(s,a)|| <= 1.
pub trait FeatureMap: Send + Sync {
    fn dim(&self) -> usize;
    fn num_actions(&self) -> usize;

    /// Writes phi(s, a) into `out` (length `dim()`).
    fn eval_into(&self, s: &StateVec, a: ActionId, out: &mut [f64]) -> Result<()>;

    fn eval(&self, s: &StateVec, a: ActionId) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(s, a, out.as_mut_slice())?;
        Ok(out)
    }

    /// phi(s, a) . w without allocating. Implementations override this on
    /// hot paths.
    fn dot_weights(&self, s: &StateVec, a: ActionId, w: &[f64]) -> Result<f64> {
        debug_assert_eq!(w.len(), self.dim());
        let mut buf = vec![0.0; self.dim()];
        self.eval_into(s, a, &mut buf)?;
        Ok(buf.iter().zip(w).map(|(p, w)| p * w).sum())
    }
}

/// Indicator features over a finite state-action grid. Feature index of
/// (s, a) is `s * num_actions + a`, so d = |S| * |A|.
#[derive(Clone, Copy, Debug)]
pub struct OneHotFeatures {
    pub num_states: usize,
    pub num_actions: usize,
}

impl OneHotFeatures {
    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }
}

impl FeatureMap for OneHotFeatures {
    fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn eval_into(&self, s: &StateVec, a: ActionId, out: &mut [f64]) -> Result<()> {
        let si = s.index();
        if si >= self.num_states || a.0 >= self.num_actions {
            return Err(Error::InvalidArgument(format!(
                "state {si} or action {a} outside {}x{} grid",
                self.num_states, self.num_actions
            )));
        }
        out.fill(0.0);
        out[self.index(si, a.0)] = 1.0;
        Ok(())
    }

    fn dot_weights(&self, s: &StateVec, a: ActionId, w: &[f64]) -> Result<f64> {
        let si = s.index();
        if si >= self.num_states || a.0 >= self.num_actions {
            return Err(Error::InvalidArgument(format!(
                "state {si} or action {a} outside {}x{} grid",
                self.num_states, self.num_actions
            )));
        }
        Ok(w[self.index(si, a.0)])
    }
}
