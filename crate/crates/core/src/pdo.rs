//! Frequency-domain operator engine: apply an operator-valued symbol
//! sigma(x, xi) to sampled vector fields through the discrete Fourier
//! transform, split a symbol into a smooth part plus a small remainder by
//! mollifying in x at frequency-dependent scale, measure symbol smoothness
//! conditions by finite differences, and estimate discrete L2 operator
//! norms by randomized power iteration.

use std::sync::Arc;

use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{FormFamily, Modulus};
use crate::metrics::modulus_power_integral;
use crate::probe::{random_cvec, seeded_rng};
use crate::space::GalerkinSpace;
use crate::quad::{GL8_NODES, GL8_WEIGHTS};
use crate::{c, C64, CMat, CVec};

/// seed stream offset for operator-norm probe vectors
const PDO_STREAM: u64 = 0x9d_0000;
/// power-iteration sweeps per probe
const POWER_ITERS: usize = 80;
/// relative boundary-decay threshold beyond which a transform is flagged
const ALIAS_THRESHOLD: f64 = 1e-8;
/// symbol tables larger than this many bytes are not precomputed
const TABLE_BYTE_CAP: usize = 1 << 27;

/// Symbol evaluator: (x, xi) -> matrix.
pub type SymbolFn = Arc<dyn Fn(&[f64], &[f64]) -> CMat + Send + Sync>;
/// Evaluator for x-independent symbols: xi -> matrix.
pub type MultiplierFn = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;
/// Scalar window / bump function on R^n.
pub type BumpFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Matrix-valued symbol sigma(x, xi) acting on m-vectors, x and xi running
/// over R^n with n = dim_x in {1, 2}.
#[derive(Clone)]
pub struct Symbol {
    /// spatial dimension n
    pub dim_x: usize,
    /// matrix size
    pub m: usize,
    /// evaluator; must be defined for every (x, xi)
    pub value_at: SymbolFn,
    /// declared derivative constants: deriv_bounds[k] bounds
    /// sup ||d^k_xi sigma|| <xi>^k over multi-indices of total order k
    pub deriv_bounds: Vec<f64>,
    /// declared modulus of continuity in x, uniform over xi after scaling
    pub modulus: Modulus,
    /// mollification exponent in (0, 1) used by the splitting
    pub smoothing_delta: f64,
    /// when true the evaluator ignores x and the fast multiplier path is used
    pub x_independent: bool,
}

impl Symbol {
    pub fn new(
        dim_x: usize,
        m: usize,
        value_at: SymbolFn,
        deriv_bounds: Vec<f64>,
        modulus: Modulus,
        smoothing_delta: f64,
        x_independent: bool,
    ) -> Result<Symbol> {
        if !(1..=2).contains(&dim_x) {
            return Err(Error::invalid("supported spatial dimensions are 1 and 2"));
        }
        if m == 0 {
            return Err(Error::invalid("symbol matrices need size >= 1"));
        }
        if !(smoothing_delta > 0.0 && smoothing_delta < 1.0) {
            return Err(Error::invalid("smoothing exponent must lie in (0, 1)"));
        }
        Ok(Symbol { dim_x, m, value_at, deriv_bounds, modulus, smoothing_delta, x_independent })
    }

    /// x-independent symbol (Fourier multiplier).
    pub fn multiplier(
        dim_x: usize,
        m: usize,
        value: MultiplierFn,
        deriv_bounds: Vec<f64>,
    ) -> Result<Symbol> {
        Symbol::new(
            dim_x,
            m,
            Arc::new(move |_x: &[f64], xi: &[f64]| value(xi)),
            deriv_bounds,
            Modulus::Hoelder { exponent: 1.0, constant: 0.0 },
            0.5,
            true,
        )
    }

    /// identity symbol
    pub fn identity(dim_x: usize, m: usize) -> Result<Symbol> {
        Symbol::multiplier(dim_x, m, Arc::new(move |_| CMat::identity(m, m)), vec![1.0, 0.0, 0.0])
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> CMat {
        (self.value_at)(x, xi)
    }
}

/// <xi> = (1 + |xi|^2)^{1/2}
pub fn bracket(xi: &[f64]) -> f64 {
    (1.0 + xi.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Vector field sampled on a uniform periodic grid over [-X, X]^n with a
/// power-of-two point count per axis.
#[derive(Clone, Debug)]
pub struct SampledField {
    half_width: f64,
    points_per_axis: usize,
    dim_x: usize,
    m: usize,
    values: Vec<CVec>,
}

impl SampledField {
    pub fn new(
        half_width: f64,
        points_per_axis: usize,
        dim_x: usize,
        m: usize,
        values: Vec<CVec>,
    ) -> Result<SampledField> {
        if !(1..=2).contains(&dim_x) || m == 0 {
            return Err(Error::invalid("supported spatial dimensions are 1 and 2, m >= 1"));
        }
        if !(half_width > 0.0) {
            return Err(Error::invalid("the sampling box needs positive half-width"));
        }
        if points_per_axis < 2 || !points_per_axis.is_power_of_two() {
            return Err(Error::invalid("points per axis must be a power of two >= 2"));
        }
        let total = points_per_axis.pow(dim_x as u32);
        if values.len() != total {
            return Err(Error::invalid(format!(
                "expected {total} grid values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::invalid("every grid value must be an m-vector"));
        }
        Ok(SampledField { half_width, points_per_axis, dim_x, m, values })
    }

    pub fn zeros(half_width: f64, points_per_axis: usize, dim_x: usize, m: usize) -> Result<SampledField> {
        let total = points_per_axis.pow(dim_x as u32);
        SampledField::new(
            half_width,
            points_per_axis,
            dim_x,
            m,
            vec![CVec::zeros(m); total],
        )
    }

    /// Sample a function of the grid point coordinates.
    pub fn sample(
        half_width: f64,
        points_per_axis: usize,
        dim_x: usize,
        m: usize,
        f: impl Fn(&[f64]) -> CVec,
    ) -> Result<SampledField> {
        let mut field = SampledField::zeros(half_width, points_per_axis, dim_x, m)?;
        let total = field.total_points();
        for k in 0..total {
            let x = field.point(k);
            let v = f(&x);
            if v.len() != m {
                return Err(Error::invalid("sampled values must be m-vectors"));
            }
            field.values[k] = v;
        }
        Ok(field)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }
    pub fn dim_x(&self) -> usize {
        self.dim_x
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dim_x as u32)
    }
    pub fn values(&self) -> &[CVec] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [CVec] {
        &mut self.values
    }
    /// grid spacing per axis
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }
    /// frequency spacing per axis
    pub fn dxi(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }

    fn axis_indices(&self, flat: usize) -> Vec<usize> {
        let g = self.points_per_axis;
        let mut out = vec![0usize; self.dim_x];
        let mut rest = flat;
        for a in (0..self.dim_x).rev() {
            out[a] = rest % g;
            rest /= g;
        }
        out
    }

    /// coordinates of grid point `flat`
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let dx = self.dx();
        self.axis_indices(flat)
            .into_iter()
            .map(|k| -self.half_width + k as f64 * dx)
            .collect()
    }

    /// frequency associated with transform index `flat` (signed ordering)
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let g = self.points_per_axis as i64;
        let dxi = self.dxi();
        self.axis_indices(flat)
            .into_iter()
            .map(|j| {
                let j = j as i64;
                let signed = if j < g / 2 { j } else { j - g };
                signed as f64 * dxi
            })
            .collect()
    }

    /// discrete L2 norm (Euclidean sum weighted by the cell volume)
    pub fn l2_norm(&self) -> f64 {
        let w = self.dx().powi(self.dim_x as i32);
        (w * self.values.iter().map(|v| v.norm_squared()).sum::<f64>()).sqrt()
    }

    /// largest value norm on the outermost grid layer relative to the
    /// global maximum; the transform treats the box periodically, so mass
    /// at the boundary signals wrap-around contamination
    fn boundary_ratio(&self) -> f64 {
        let g = self.points_per_axis;
        let mut global: f64 = 0.0;
        let mut boundary: f64 = 0.0;
        for k in 0..self.total_points() {
            let n = self.values[k].norm();
            global = global.max(n);
            if self.axis_indices(k).iter().any(|&i| i == 0 || i == g - 1) {
                boundary = boundary.max(n);
            }
        }
        if global == 0.0 {
            0.0
        } else {
            boundary / global
        }
    }
}

/// in-place unnormalized DFT (or inverse DFT) along every axis of a scalar
/// field stored row-major with `g` points per axis
fn fft_scalar(data: &mut [C64], g: usize, dims: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(g) } else { planner.plan_fft_forward(g) };
    let total = data.len();
    let mut line = vec![C64::new(0.0, 0.0); g];
    for axis in 0..dims {
        let stride = g.pow((dims - 1 - axis) as u32);
        let block = stride * g;
        let mut base = 0;
        while base < total {
            for off in 0..stride {
                for t in 0..g {
                    line[t] = data[base + off + t * stride];
                }
                fft.process(&mut line);
                for t in 0..g {
                    data[base + off + t * stride] = line[t];
                }
            }
            base += block;
        }
    }
}

/// forward (or inverse) transform of every component of a vector field
fn fft_field(values: &[CVec], g: usize, dims: usize, m: usize, inverse: bool) -> Vec<CVec> {
    let total = values.len();
    let mut out = vec![CVec::zeros(m); total];
    let mut scratch = vec![C64::new(0.0, 0.0); total];
    for comp in 0..m {
        for k in 0..total {
            scratch[k] = values[k][comp];
        }
        fft_scalar(&mut scratch, g, dims, inverse);
        for k in 0..total {
            out[k][comp] = scratch[k];
        }
    }
    out
}

/// precomputed symbol samples on the (point, frequency) product grid
enum SymbolTable {
    /// one matrix per frequency (x-independent)
    PerFrequency(Vec<CMat>),
    /// row-major (point, frequency) matrices
    Full(Vec<CMat>),
    /// evaluate on demand
    Direct,
}

impl SymbolTable {
    fn build(symbol: &Symbol, geometry: &SampledField) -> SymbolTable {
        let total = geometry.total_points();
        if symbol.x_independent {
            let origin = vec![0.0; symbol.dim_x];
            let mats = (0..total)
                .map(|j| symbol.eval(&origin, &geometry.frequency(j)))
                .collect();
            return SymbolTable::PerFrequency(mats);
        }
        let bytes = total * total * symbol.m * symbol.m * 16;
        if bytes > TABLE_BYTE_CAP {
            return SymbolTable::Direct;
        }
        let freqs: Vec<Vec<f64>> = (0..total).map(|j| geometry.frequency(j)).collect();
        let mut mats = Vec::with_capacity(total * total);
        for k in 0..total {
            let x = geometry.point(k);
            for f in &freqs {
                mats.push(symbol.eval(&x, f));
            }
        }
        SymbolTable::Full(mats)
    }

    fn eval(&self, symbol: &Symbol, geometry: &SampledField, k: usize, j: usize) -> CMat {
        match self {
            SymbolTable::PerFrequency(mats) => mats[j].clone(),
            SymbolTable::Full(mats) => mats[k * geometry.total_points() + j].clone(),
            SymbolTable::Direct => symbol.eval(&geometry.point(k), &geometry.frequency(j)),
        }
    }
}

fn apply_values(
    symbol: &Symbol,
    field: &SampledField,
    table: &SymbolTable,
) -> Vec<CVec> {
    let g = field.points_per_axis;
    let n = field.dim_x;
    let m = field.m;
    let total = field.total_points();
    let fhat = fft_field(&field.values, g, n, m, false);
    let scale = 1.0 / total as f64;
    if symbol.x_independent {
        let mut uhat = vec![CVec::zeros(m); total];
        for j in 0..total {
            uhat[j] = table.eval(symbol, field, 0, j) * &fhat[j];
        }
        let mut out = fft_field(&uhat, g, n, m, true);
        for v in &mut out {
            *v *= c(scale);
        }
        return out;
    }
    // direct synthesis per output point: u_k = (1/G^n) sum_j sigma(x_k, xi_j)
    // fhat_j e^{2 pi i j.k / G}
    let idx: Vec<Vec<usize>> = (0..total).map(|k| field.axis_indices(k)).collect();
    let two_pi_over_g = 2.0 * std::f64::consts::PI / g as f64;
    let mut out = vec![CVec::zeros(m); total];
    for k in 0..total {
        let mut acc = CVec::zeros(m);
        for j in 0..total {
            let mut dot = 0usize;
            for (ja, ka) in idx[j].iter().zip(&idx[k]) {
                dot = (dot + ja * ka) % g;
            }
            let phase = C64::from_polar(1.0, two_pi_over_g * dot as f64);
            let term = table.eval(symbol, field, k, j) * &fhat[j];
            acc += term * phase;
        }
        out[k] = acc * c(scale);
    }
    out
}

fn apply_adjoint_values(
    symbol: &Symbol,
    field: &SampledField,
    table: &SymbolTable,
) -> Vec<CVec> {
    let g = field.points_per_axis;
    let n = field.dim_x;
    let m = field.m;
    let total = field.total_points();
    let scale = 1.0 / total as f64;
    if symbol.x_independent {
        let ghat = fft_field(&field.values, g, n, m, false);
        let mut shat = vec![CVec::zeros(m); total];
        for j in 0..total {
            shat[j] = table.eval(symbol, field, 0, j).adjoint() * &ghat[j];
        }
        let mut out = fft_field(&shat, g, n, m, true);
        for v in &mut out {
            *v *= c(scale);
        }
        return out;
    }
    // s_j = sum_k e^{-2 pi i j.k / G} sigma(x_k, xi_j)^* g_k, then an inverse
    // transform of s and division by G^n
    let idx: Vec<Vec<usize>> = (0..total).map(|k| field.axis_indices(k)).collect();
    let two_pi_over_g = 2.0 * std::f64::consts::PI / g as f64;
    let mut shat = vec![CVec::zeros(m); total];
    for j in 0..total {
        let mut acc = CVec::zeros(m);
        for k in 0..total {
            let mut dot = 0usize;
            for (ja, ka) in idx[j].iter().zip(&idx[k]) {
                dot = (dot + ja * ka) % g;
            }
            let phase = C64::from_polar(1.0, -two_pi_over_g * dot as f64);
            let term = table.eval(symbol, field, k, j).adjoint() * &field.values[k];
            acc += term * phase;
        }
        shat[j] = acc;
    }
    let mut out = fft_field(&shat, g, n, m, true);
    for v in &mut out {
        *v *= c(scale);
    }
    out
}

/// Result of a transform application.
pub struct TransformOutput {
    pub field: SampledField,
    /// true when the input carried more than a 1e-8 fraction of its peak on
    /// the outermost grid layer, so periodic wrap-around may contaminate
    /// the output
    pub aliasing: bool,
}

/// Apply the operator attached to `symbol` to `f`: forward transform,
/// frequency-wise matrix action (x-dependent symbols re-synthesize per
/// output point), inverse transform.
pub fn apply_t(symbol: &Symbol, f: &SampledField) -> Result<TransformOutput> {
    if symbol.dim_x != f.dim_x || symbol.m != f.m {
        return Err(Error::invalid("symbol and field dimensions must match"));
    }
    let aliasing = f.boundary_ratio() > ALIAS_THRESHOLD;
    let table = if symbol.x_independent {
        SymbolTable::build(symbol, f)
    } else {
        SymbolTable::Direct
    };
    let values = apply_values(symbol, f, &table);
    Ok(TransformOutput {
        field: SampledField::new(f.half_width, f.points_per_axis, f.dim_x, f.m, values)?,
        aliasing,
    })
}

/// Adjoint of `apply_t` with respect to the unweighted Euclidean inner
/// product on grid values (the cell-volume weight cancels in norm ratios).
pub fn apply_t_adjoint(symbol: &Symbol, g: &SampledField) -> Result<SampledField> {
    if symbol.dim_x != g.dim_x || symbol.m != g.m {
        return Err(Error::invalid("symbol and field dimensions must match"));
    }
    let table = if symbol.x_independent {
        SymbolTable::build(symbol, g)
    } else {
        SymbolTable::Direct
    };
    let values = apply_adjoint_values(symbol, g, &table);
    SampledField::new(g.half_width, g.points_per_axis, g.dim_x, g.m, values)
}

/// The standard compactly supported bump on the unit ball (unnormalized;
/// the splitting quadrature normalizes its discrete mass to one exactly).
pub fn standard_bump(dim_x: usize) -> BumpFn {
    let _ = dim_x;
    Arc::new(|y: &[f64]| {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

/// Split sigma = sigma_1 + sigma_2 where sigma_1 mollifies sigma in x at
/// scale <xi>^{-delta} against `mollifier` (tensor 8-point Gauss rule per
/// axis, weights normalized to unit discrete mass) and sigma_2 is the
/// remainder.  x-independent symbols split exactly into (sigma, 0).
pub fn split_symbol(symbol: &Symbol, mollifier: BumpFn) -> Result<(Symbol, Symbol)> {
    let delta = symbol.smoothing_delta;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("mollification exponent must lie in (0, 1)"));
    }
    let m = symbol.m;
    if symbol.x_independent {
        let sigma2 = Symbol {
            dim_x: symbol.dim_x,
            m,
            value_at: Arc::new(move |_x: &[f64], _xi: &[f64]| CMat::zeros(m, m)),
            deriv_bounds: vec![0.0; symbol.deriv_bounds.len()],
            modulus: Modulus::Hoelder { exponent: 1.0, constant: 0.0 },
            smoothing_delta: delta,
            x_independent: true,
        };
        return Ok((symbol.clone(), sigma2));
    }
    let n = symbol.dim_x;
    // tensor Gauss nodes on [-1,1]^n, discrete unit mass
    let mut nodes: Vec<Vec<f64>> = vec![vec![]];
    let mut weights: Vec<f64> = vec![1.0];
    for _ in 0..n {
        let mut nn = Vec::new();
        let mut nw = Vec::new();
        for (node, wt) in nodes.iter().zip(&weights) {
            for (y, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
                let mut ext = node.clone();
                ext.push(*y);
                nn.push(ext);
                nw.push(wt * w);
            }
        }
        nodes = nn;
        weights = nw;
    }
    let mut mass = Vec::with_capacity(nodes.len());
    let mut total = 0.0;
    for (y, w) in nodes.iter().zip(&weights) {
        let v = w * mollifier(y);
        mass.push(v);
        total += v;
    }
    if !(total > 0.0) {
        return Err(Error::invalid("the mollifier must have positive mass on the quadrature nodes"));
    }
    let kept: Vec<(Vec<f64>, f64)> = nodes
        .into_iter()
        .zip(mass)
        .filter(|(_, v)| *v != 0.0)
        .map(|(y, v)| (y, v / total))
        .collect();

    let inner = symbol.value_at.clone();
    let sigma1_eval: SymbolFn = {
        let kept = kept.clone();
        Arc::new(move |x: &[f64], xi: &[f64]| {
            let scale = bracket(xi).powf(-delta);
            let mut acc = CMat::zeros(m, m);
            let mut shifted = vec![0.0; x.len()];
            for (y, w) in &kept {
                for a in 0..x.len() {
                    shifted[a] = x[a] - y[a] * scale;
                }
                acc += inner(&shifted, xi) * c(*w);
            }
            acc
        })
    };
    let sigma1 = Symbol {
        dim_x: n,
        m,
        value_at: sigma1_eval.clone(),
        deriv_bounds: symbol.deriv_bounds.clone(),
        modulus: symbol.modulus.clone(),
        smoothing_delta: delta,
        x_independent: false,
    };
    let base = symbol.value_at.clone();
    let sigma2 = Symbol {
        dim_x: n,
        m,
        value_at: Arc::new(move |x: &[f64], xi: &[f64]| base(x, xi) - sigma1_eval(x, xi)),
        deriv_bounds: symbol.deriv_bounds.iter().map(|b| 2.0 * b).collect(),
        modulus: symbol.modulus.clone(),
        smoothing_delta: delta,
        x_independent: false,
    };
    Ok((sigma1, sigma2))
}

/// Measured scaling constants of a symbol splitting on a sample grid.  All
/// four are suprema of the correctly rescaled quantities, so finiteness
/// (and moderate size) is the verification.
#[derive(Clone, Debug, Serialize)]
pub struct SplitReport {
    /// sup ||d_xi sigma_1|| <xi>
    pub sigma1_xi_decay: f64,
    /// sup ||d_x sigma_1|| <xi>^{-delta}
    pub sigma1_x_growth: f64,
    /// sup ||sigma_2|| / omega(<xi>^{-delta})
    pub sigma2_size: f64,
    /// sup ||d_xi sigma_2|| <xi> / omega(<xi>^{-delta})
    pub sigma2_xi_decay: f64,
}

fn fd_axis_matrix(
    symbol: &Symbol,
    x: &[f64],
    xi: &[f64],
    axis: usize,
    in_x: bool,
    h: f64,
) -> CMat {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    let mut xip = xi.to_vec();
    let mut xim = xi.to_vec();
    if in_x {
        plus[axis] += h;
        minus[axis] -= h;
        (symbol.eval(&plus, xi) - symbol.eval(&minus, xi)) * c(0.5 / h)
    } else {
        xip[axis] += h;
        xim[axis] -= h;
        (symbol.eval(x, &xip) - symbol.eval(x, &xim)) * c(0.5 / h)
    }
}

/// Evaluate the rescaled splitting bounds over sample grids.
pub fn split_quality(
    original: &Symbol,
    sigma1: &Symbol,
    sigma2: &Symbol,
    x_points: &[Vec<f64>],
    xi_points: &[Vec<f64>],
) -> Result<SplitReport> {
    if x_points.is_empty() || xi_points.is_empty() {
        return Err(Error::invalid("need at least one x and one xi sample"));
    }
    let delta = original.smoothing_delta;
    let omega = &original.modulus;
    let mut s1_xi: f64 = 0.0;
    let mut s1_x: f64 = 0.0;
    let mut s2_0: f64 = 0.0;
    let mut s2_xi: f64 = 0.0;
    for x in x_points {
        for xi in xi_points {
            let br = bracket(xi);
            let h_xi = 1e-3 * br;
            let h_x = 1e-3 * br.powf(-delta);
            let om = omega.eval(br.powf(-delta));
            for axis in 0..original.dim_x {
                let d1 = fd_axis_matrix(sigma1, x, xi, axis, false, h_xi);
                s1_xi = s1_xi.max(GalerkinSpace::spectral_norm(&d1) * br);
                let dx1 = fd_axis_matrix(sigma1, x, xi, axis, true, h_x);
                s1_x = s1_x.max(GalerkinSpace::spectral_norm(&dx1) * br.powf(-delta));
                let d2 = fd_axis_matrix(sigma2, x, xi, axis, false, h_xi);
                let n2 = GalerkinSpace::spectral_norm(&d2) * br;
                s2_xi = s2_xi.max(scaled_ratio(n2, om));
            }
            let v2 = GalerkinSpace::spectral_norm(&sigma2.eval(x, xi));
            s2_0 = s2_0.max(scaled_ratio(v2, om));
        }
    }
    Ok(SplitReport {
        sigma1_xi_decay: s1_xi,
        sigma1_x_growth: s1_x,
        sigma2_size: s2_0,
        sigma2_xi_decay: s2_xi,
    })
}

fn scaled_ratio(numerator: f64, omega_value: f64) -> f64 {
    if omega_value > 0.0 {
        numerator / omega_value
    } else if numerator <= 1e-13 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// One measured multi-index entry of a smoothness report.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionEntry {
    /// derivative order per axis
    pub alpha: Vec<usize>,
    /// sup over the grid of ||d^alpha sigma|| <xi>^{|alpha|}
    pub c_alpha_measured: f64,
    /// declared bound for this total order, when the symbol carries one
    pub declared: Option<f64>,
    /// sup of ||d^alpha sigma(x,.) - d^alpha sigma(x',.)|| <xi>^{|alpha|}
    /// / omega(|x - x'|)
    pub x_ratio_max: f64,
}

/// Finite-difference smoothness report of a symbol over sample grids.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub max_order: usize,
    pub entries: Vec<ConditionEntry>,
    /// every measured constant sits within 5% of its declared bound
    pub bounds_met: bool,
    pub x_ratio_max: f64,
    pub x_ratios_bounded: bool,
    /// int_0^1 omega(t)^2 / t dt, the square-Dini hypothesis behind the
    /// L2-boundedness theory; divergent means no boundedness claim is made
    pub dini_2log_value: f64,
    pub dini_2log_convergent: bool,
}

fn multi_indices(n: usize, max_total: usize) -> Vec<Vec<usize>> {
    fn rec(axis: usize, n: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if axis == n {
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur.push(v);
            rec(axis + 1, n, remaining - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, max_total, &mut Vec::new(), &mut out);
    out.sort_by_key(|a| a.iter().sum::<usize>());
    out
}

fn stencil_1d(order: usize) -> Vec<(i32, f64)> {
    match order {
        0 => vec![(0, 1.0)],
        1 => vec![(1, 0.5), (-1, -0.5)],
        2 => vec![(1, 1.0), (0, -2.0), (-1, 1.0)],
        3 => vec![(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)],
        _ => unreachable!("finite differences are implemented up to order 3"),
    }
}

/// central finite-difference d^alpha_xi sigma(x, xi) with per-axis step h
fn fd_multi(symbol: &Symbol, x: &[f64], xi: &[f64], alpha: &[usize], h: f64) -> CMat {
    let mut terms: Vec<(Vec<i32>, f64)> = vec![(vec![], 1.0)];
    for &k in alpha {
        let st = stencil_1d(k);
        let mut next = Vec::with_capacity(terms.len() * st.len());
        for (offs, coef) in &terms {
            for (o, w) in &st {
                let mut ext = offs.clone();
                ext.push(*o);
                next.push((ext, coef * w));
            }
        }
        terms = next;
    }
    let total_order: usize = alpha.iter().sum();
    let scale = h.powi(total_order as i32);
    let m = symbol.m;
    let mut acc = CMat::zeros(m, m);
    let mut shifted = vec![0.0; xi.len()];
    for (offs, coef) in &terms {
        for a in 0..xi.len() {
            shifted[a] = xi[a] + offs[a] as f64 * h;
        }
        acc += symbol.eval(x, &shifted) * c(coef / scale);
    }
    acc
}

/// Measure the frequency-decay constants and x-continuity ratios of a
/// symbol on the given sample grids, up to derivative total order
/// `max_order` (at most floor(n/2) + 2).
pub fn check_symbol_conditions(
    symbol: &Symbol,
    x_points: &[Vec<f64>],
    xi_points: &[Vec<f64>],
    max_order: usize,
) -> Result<ConditionReport> {
    let n = symbol.dim_x;
    if max_order > n / 2 + 2 {
        return Err(Error::invalid(format!(
            "derivative order {max_order} exceeds the supported maximum {}",
            n / 2 + 2
        )));
    }
    if x_points.is_empty() || xi_points.is_empty() {
        return Err(Error::invalid("need at least one x and one xi sample"));
    }
    if x_points.iter().any(|p| p.len() != n) || xi_points.iter().any(|p| p.len() != n) {
        return Err(Error::invalid("sample points must match the symbol dimension"));
    }
    let mut entries = Vec::new();
    let mut bounds_met = true;
    let mut global_ratio: f64 = 0.0;
    for alpha in multi_indices(n, max_order) {
        let order: usize = alpha.iter().sum();
        let mut c_meas: f64 = 0.0;
        let mut ratio_max: f64 = 0.0;
        // per xi, keep the derivative matrices per x point for the pair pass
        for xi in xi_points {
            let br = bracket(xi);
            let h = 1e-3 * br;
            let weight = br.powi(order as i32);
            let mats: Vec<CMat> = x_points
                .iter()
                .map(|x| fd_multi(symbol, x, xi, &alpha, h))
                .collect();
            for mat in &mats {
                c_meas = c_meas.max(GalerkinSpace::spectral_norm(mat) * weight);
            }
            for i in 0..mats.len() {
                for j in i + 1..mats.len() {
                    let gap: f64 = x_points[i]
                        .iter()
                        .zip(&x_points[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if gap == 0.0 {
                        continue;
                    }
                    let diff = GalerkinSpace::spectral_norm(&(&mats[i] - &mats[j])) * weight;
                    ratio_max = ratio_max.max(scaled_ratio(diff, symbol.modulus.eval(gap)));
                }
            }
        }
        let declared = symbol.deriv_bounds.get(order).copied();
        if let Some(d) = declared {
            if c_meas > d * 1.05 + 1e-12 {
                bounds_met = false;
            }
        }
        global_ratio = global_ratio.max(ratio_max);
        entries.push(ConditionEntry { alpha, c_alpha_measured: c_meas, declared, x_ratio_max: ratio_max });
    }
    let dini = modulus_power_integral(&symbol.modulus, 2.0, 1.0, 1.0)?;
    Ok(ConditionReport {
        max_order,
        entries,
        bounds_met,
        x_ratio_max: global_ratio,
        x_ratios_bounded: global_ratio.is_finite(),
        dini_2log_value: dini.value,
        dini_2log_convergent: dini.convergent,
    })
}

/// The one-dimensional symbol sigma(t, xi) = A(t) (i xi + A(t))^{-1} of a
/// form family, with t clamped to [0, horizon] outside the time interval.
/// The family must be shifted enough that i xi + A(t) stays invertible for
/// every real xi (accretivity suffices); a singular system here is a usage
/// error and panics.
pub fn mr_symbol(family: &FormFamily) -> Symbol {
    let fam = family.clone();
    let tau = family.horizon();
    let m = family.space().dim();
    let ratio = 1.0 + family.bound_m() / family.coercivity_alpha();
    let deriv_bounds: Vec<f64> = (0..=2u32)
        .map(|k| {
            let factorial: f64 = (1..=k).map(f64::from).product();
            ratio.powi(k as i32 + 1) * factorial
        })
        .collect();
    let value_at = Arc::new(move |x: &[f64], xi: &[f64]| {
        let t = x[0].clamp(0.0, tau);
        let a = fam.assemble_operator(t).matrix().clone();
        let mut shifted = a.clone();
        for d in 0..m {
            shifted[(d, d)] += C64::new(0.0, xi[0]);
        }
        shifted
            .lu()
            .solve(&a)
            .expect("resolvent system is singular; shift the family first")
    });
    Symbol {
        dim_x: 1,
        m,
        value_at,
        deriv_bounds,
        modulus: family.modulus().clone(),
        smoothing_delta: 0.5,
        x_independent: false,
    }
}

/// Randomized lower bound on the discrete L2 operator norm of the symbol's
/// transform over fields sampled on [-half_width, half_width]^n with
/// 2^k = points_per_axis points per axis.  Power iteration on the normal
/// operator; deterministic in (probes, seed) and non-decreasing in probes.
pub fn opnorm_estimate(
    symbol: &Symbol,
    half_width: f64,
    points_per_axis: usize,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::invalid("need at least one probe"));
    }
    let geometry = SampledField::zeros(half_width, points_per_axis, symbol.dim_x, symbol.m)?;
    let table = SymbolTable::build(symbol, &geometry);
    let total = geometry.total_points();
    let m = symbol.m;
    let norm_of = |vals: &[CVec]| -> f64 {
        vals.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    };
    let mut best: f64 = 0.0;
    for probe in 0..probes {
        let mut rng = seeded_rng(seed, PDO_STREAM + probe as u64);
        let mut work = geometry.clone();
        for k in 0..total {
            work.values[k] = random_cvec(&mut rng, m);
        }
        let nv = norm_of(&work.values);
        if nv == 0.0 {
            continue;
        }
        for v in work.values_mut() {
            *v *= c(1.0 / nv);
        }
        let mut estimate = 0.0;
        for _ in 0..POWER_ITERS {
            let image = apply_values(symbol, &work, &table);
            let ni = norm_of(&image);
            estimate = ni;
            if ni == 0.0 {
                break;
            }
            let mut forward = work.clone();
            forward.values = image;
            let back = apply_adjoint_values(symbol, &forward, &table);
            let nb = norm_of(&back);
            if nb == 0.0 {
                break;
            }
            work.values = back;
            for v in work.values_mut() {
                *v *= c(1.0 / nb);
            }
        }
        best = best.max(estimate);
    }
    Ok(best)
}
