use std::fmt;
use std::sync::Arc;

type Closure = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A field given by a closure, identified by name.
#[derive(Clone)]
pub struct AnalyticField {
    name: String,
    din: usize,
    dout: usize,
    mirror: bool,
    f: Arc<Closure>,
}

impl AnalyticField {
    /// Mirror extension outside the unit box is on by default.
    pub fn new(
        name: impl Into<String>,
        din: usize,
        dout: usize,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            din,
            dout,
            mirror: true,
            f: Arc::new(f),
        }
    }

    /// Evaluates the closure everywhere instead of mirroring.
    pub fn unbounded(mut self) -> Self {
        self.mirror = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn din(&self) -> usize {
        self.din
    }

    pub fn dout(&self) -> usize {
        self.dout
    }

    pub fn mirrors(&self) -> bool {
        self.mirror
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

impl fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticField")
            .field("name", &self.name)
            .field("din", &self.din)
            .field("dout", &self.dout)
            .field("mirror", &self.mirror)
            .finish()
    }
}
