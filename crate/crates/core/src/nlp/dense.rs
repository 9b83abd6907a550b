use super::NlpProblem;
use crate::error::{Error, Result};

type Scalar<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;
type Vector<'a> = Box<dyn Fn(&[f64], &mut [f64]) + Sync + 'a>;

/// Small problem given by closures, with a dense row-major Jacobian.
///
/// ```
/// use fatigue_ocp::nlp::{solve, DenseNlp, SolverConfig};
///
/// // min x² + y²  s.t.  x + y = 1
/// let p = DenseNlp::new(2, |x| x[0] * x[0] + x[1] * x[1], |x, g| {
///     g[0] = 2.0 * x[0];
///     g[1] = 2.0 * x[1];
/// })
/// .constraints(
///     vec![1.0],
///     vec![1.0],
///     |x, c| c[0] = x[0] + x[1],
///     |_, j| j.copy_from_slice(&[1.0, 1.0]),
/// );
/// let sol = solve(&p, &[0.0, 0.0], &SolverConfig::default()).unwrap();
/// assert!((sol.x[0] - 0.5).abs() < 1e-6);
/// ```
pub struct DenseNlp<'a> {
    n: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cl: Vec<f64>,
    cu: Vec<f64>,
    f: Scalar<'a>,
    grad: Vector<'a>,
    cons: Option<(Vector<'a>, Vector<'a>)>,
}

impl<'a> DenseNlp<'a> {
    pub fn new(n: usize, f: impl Fn(&[f64]) -> f64 + Sync + 'a, grad: impl Fn(&[f64], &mut [f64]) + Sync + 'a) -> Self {
        DenseNlp {
            n,
            lb: vec![f64::NEG_INFINITY; n],
            ub: vec![f64::INFINITY; n],
            cl: Vec::new(),
            cu: Vec::new(),
            f: Box::new(f),
            grad: Box::new(grad),
            cons: None,
        }
    }

    pub fn bounds(mut self, lb: Vec<f64>, ub: Vec<f64>) -> Self {
        assert_eq!(lb.len(), self.n);
        assert_eq!(ub.len(), self.n);
        self.lb = lb;
        self.ub = ub;
        self
    }

    /// Adds `cl ≤ c(x) ≤ cu`. `jac` fills an `m × n` row-major matrix.
    pub fn constraints(
        mut self,
        cl: Vec<f64>,
        cu: Vec<f64>,
        c: impl Fn(&[f64], &mut [f64]) + Sync + 'a,
        jac: impl Fn(&[f64], &mut [f64]) + Sync + 'a,
    ) -> Self {
        assert_eq!(cl.len(), cu.len());
        self.cl = cl;
        self.cu = cu;
        self.cons = Some((Box::new(c), Box::new(jac)));
        self
    }
}

fn finite(what: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::EvaluationFailure { what, node: None })
    }
}

impl NlpProblem for DenseNlp<'_> {
    fn num_vars(&self) -> usize {
        self.n
    }

    fn num_constraints(&self) -> usize {
        self.cl.len()
    }

    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.cl.clone(), self.cu.clone())
    }

    fn objective(&self, x: &[f64]) -> Result<f64> {
        let f = (self.f)(x);
        finite("objective", &[f])?;
        Ok(f)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
        (self.grad)(x, grad);
        finite("gradient", grad)
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<()> {
        if let Some((cons, _)) = &self.cons {
            cons(x, c);
        }
        finite("constraints", c)
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let m = self.num_constraints();
        (0..m).flat_map(|i| (0..self.n).map(move |j| (i, j))).collect()
    }

    fn jacobian_values(&self, x: &[f64], values: &mut [f64]) -> Result<()> {
        if let Some((_, jac)) = &self.cons {
            jac(x, values);
        }
        finite("jacobian", values)
    }
}
