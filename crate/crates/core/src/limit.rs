//! Deterministic infinite-particle limit.
//!
//! For a profile `μ_{y,0}` with marginal `λ`:
//!
//! * boundary curve `y_C(t) = 1 - ∫ e^{-wt} λ(dw)` and its inverse `t_0`;
//! * flow `y_C(y, t) = 1 - ∫_y^1 ∫ e^{-wt} μ_{z,0}(dw) dz` of a never-jumped
//!   particle, and its spatial inverse `ŷ(·, t)`;
//! * density `μ_{y,t}`: the size-biased tilt `w e^{-w t_0(y)} λ(dw)` ahead of
//!   the boundary curve, the tilt `e^{-wt} μ_{ŷ(y,t),0}(dw)` behind it;
//! * velocity `v(y, t) = ∫_y^1 ∫ w μ_{z,t}(dw) dz` of the transport equation
//!   `∂_t μ + ∂_y(v μ) = -w μ`.
//!
//! For piecewise-constant profiles every one of these is a finite sum, so no
//! quadrature in `y` is needed anywhere.

use alloc::vec::Vec;

use crate::measures::{InitialProfile, JumpRateLaw};
use crate::quadrature::DEFAULT_NODES;
use crate::{Error, Result};

const DEFAULT_ROOT_TOL: f64 = 1e-12;
const BISECTION_WIDTH: f64 = 1e-3;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `y < y_C(t)`: particles that have jumped at least once.
    Head,
    /// `y > y_C(t)`: particles that have never jumped.
    Tail,
}

/// Branch requested for a one-sided evaluation on the boundary curve.
pub type Side = Regime;

/// The law `μ_{y,t}(dw)` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDensity {
    pub regime: Regime,
    pub law: JumpRateLaw,
    /// Weights aligned with the components of the marginal law.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LimitField {
    profile: InitialProfile,
    root_tol: f64,
    nodes: usize,
}

impl LimitField {
    pub fn new(profile: InitialProfile) -> Self {
        Self { profile, root_tol: DEFAULT_ROOT_TOL, nodes: DEFAULT_NODES }
    }

    pub fn with_root_tolerance(mut self, tol: f64) -> Self {
        self.root_tol = tol;
        self
    }

    pub fn with_quadrature_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn profile(&self) -> &InitialProfile {
        &self.profile
    }

    pub fn marginal(&self) -> &JumpRateLaw {
        self.profile.marginal()
    }

    /// `y_C(t) = 1 - ∫ e^{-wt} λ(dw)`.
    pub fn y_c(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.marginal().laplace(t)?)
    }

    /// Inverse of the boundary curve: the `t` with `y_C(t) = y`.
    ///
    /// The root is bracketed by doubling, narrowed by bisection and then
    /// polished with Newton steps using `y_C' = ∫ w e^{-wt} λ(dw)`.
    pub fn t_0(&self, y: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let law = self.marginal();
        // Residual as tail mass: L(t) - (1 - y), decreasing in t.
        let target = 1.0 - y;
        let residual = |t: f64| law.laplace_at(t) - target;

        let (mut lo, mut hi) = (0.0, 1.0);
        while residual(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::RootNotConverged("t_0"));
            }
        }
        while hi - lo > BISECTION_WIDTH {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..MAX_ITER {
            let f = residual(t);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let slope = law.weighted_laplace_at(t);
            let mut next = t + f / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - t).abs();
            t = next;
            if step <= 4.0 * f64::EPSILON * t {
                break;
            }
        }
        if residual(t).abs() > self.root_tol {
            return Err(Error::RootNotConverged("t_0"));
        }
        Ok(t)
    }

    /// `y_C(y, t)`: position at time `t` of a never-jumped particle started at `y`.
    pub fn flow(&self, y: f64, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        if t == 0.0 {
            return Ok(y);
        }
        Ok(1.0 - self.profile.tail_integral(y, t)?)
    }

    /// `ŷ(y, t)`: initial position of the never-jumped particle found at `y`.
    pub fn hat_y(&self, y: f64, t: f64) -> Result<f64> {
        if !(y < 1.0) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        let boundary = self.y_c(t)?;
        // Allow a few ulps of disagreement between the stratum sum and the
        // marginal sum that define the two sides of the boundary.
        if y < boundary - 4.0 * f64::EPSILON {
            return Err(Error::HeadRegime { y, boundary });
        }
        if t == 0.0 {
            return Ok(y);
        }
        let target = 1.0 - y;
        let mut acc = 0.0;
        let mut estimate = None;
        for s in self.profile.strata().iter().rev() {
            let decay = s.law.laplace_at(t);
            let mass = s.len() * decay;
            if acc + mass >= target && decay > 0.0 {
                estimate = Some((s.end - (target - acc) / decay).clamp(s.start, s.end));
                break;
            }
            acc += mass;
        }
        let z = estimate.unwrap_or(0.0);
        if (self.flow_unchecked(z, t) - y).abs() <= self.root_tol {
            return Ok(z);
        }
        self.hat_y_bisect(y, t)
    }

    fn flow_unchecked(&self, y: f64, t: f64) -> f64 {
        1.0 - self.profile.tail_sum(y, |law| law.laplace_at(t))
    }

    fn hat_y_bisect(&self, y: f64, t: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if self.flow_unchecked(mid, t) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON {
                break;
            }
        }
        let z = 0.5 * (lo + hi);
        if (self.flow_unchecked(z, t) - y).abs() > self.root_tol {
            return Err(Error::RootNotConverged("hat_y"));
        }
        Ok(z)
    }

    /// Which side of the boundary curve `(y, t)` is on; `None` exactly on it.
    pub fn regime(&self, y: f64, t: f64) -> Result<Option<Regime>> {
        let boundary = self.y_c(t)?;
        Ok(if y < boundary {
            Some(Regime::Head)
        } else if y > boundary {
            Some(Regime::Tail)
        } else {
            None
        })
    }

    fn check_point(&self, y: f64, t: f64) -> Result<Regime> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        self.regime(y, t)?.ok_or(Error::BoundarySingularity { y, t })
    }

    /// `μ_{y,t}` off the boundary curve.
    pub fn density(&self, y: f64, t: f64) -> Result<LimitDensity> {
        let regime = self.check_point(y, t)?;
        self.density_side(y, t, regime)
    }

    /// `μ_{y,t}` on the requested branch; usable on the boundary curve itself.
    pub fn density_side(&self, y: f64, t: f64, side: Side) -> Result<LimitDensity> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        let marginal = self.marginal();
        let (law, weights) = match side {
            Regime::Head => {
                let boundary = self.y_c(t)?;
                if y > boundary {
                    return Err(Error::OutOfDomain { what: "y (head branch)", value: y });
                }
                let s = if y == boundary { t } else { self.t_0(y)? };
                let law = marginal.size_biased_tilted(s)?;
                // Tilting keeps component order, so weights line up with λ.
                let weights = law.parts().iter().map(|p| p.0).collect();
                (law, weights)
            }
            Regime::Tail => {
                let base = self.profile.law_at(self.hat_y(y, t)?);
                let law = base.exp_tilted(t)?;
                let mut weights = alloc::vec![0.0; marginal.parts().len()];
                for ((_, original), (w, _)) in base.parts().iter().zip(law.parts()) {
                    if let Some(k) = marginal.parts().iter().position(|(_, c)| c == original) {
                        weights[k] += w;
                    }
                }
                (law, weights)
            }
        };
        Ok(LimitDensity { regime: side, law, weights })
    }

    /// `∫_0^y ∫ g(w) μ_{z,t}(dw) dz`, assembled from closed-form pieces.
    pub fn limit_statistic<G: Fn(f64) -> f64>(&self, g: G, y: f64, t: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        let boundary = self.y_c(t)?;
        let law = self.marginal();
        let nodes = self.nodes;
        let total = law.test_integral_with(&g, 0.0, nodes)?;
        // Head: ∫ g(w) (1 - e^{-w s}) λ(dw) with s = t_0(min(y, y_C(t))).
        let head = |s: f64| -> Result<f64> { Ok(total - law.test_integral_with(&g, s, nodes)?) };
        if y <= boundary {
            let s = if y == boundary { t } else { self.t_0(y)? };
            return head(s);
        }
        let z = self.hat_y(y, t)?;
        let mut tail_all = 0.0;
        let mut tail_beyond = 0.0;
        for s in self.profile.strata() {
            let value = s.law.test_integral_with(&g, t, nodes)?;
            tail_all += s.len() * value;
            tail_beyond += (s.end - s.start.max(z)).max(0.0) * value;
        }
        Ok(head(t)? + tail_all - tail_beyond)
    }

    /// Transport velocity `v(y, t)`.
    pub fn velocity(&self, y: f64, t: f64) -> Result<f64> {
        let regime = self.check_point(y, t)?;
        self.velocity_side(y, t, regime)
    }

    /// `v(y, t)` on the requested branch; usable on the boundary curve itself.
    pub fn velocity_side(&self, y: f64, t: f64, side: Side) -> Result<f64> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::OutOfDomain { what: "y", value: y });
        }
        let boundary = self.y_c(t)?;
        match side {
            Regime::Head if y <= boundary => {
                let s = if y == boundary { t } else { self.t_0(y)? };
                Ok(self.marginal().weighted_laplace_at(s))
            }
            Regime::Tail if y >= boundary => {
                let z = self.hat_y(y, t)?;
                Ok(self.profile.tail_sum(z, |law| law.weighted_laplace_at(t)))
            }
            _ => Err(Error::OutOfDomain { what: "y (wrong branch)", value: y }),
        }
    }

    /// Largest per-atom residual of `∂_t p + ∂_y(v p) + w p` by central
    /// differences with step `h`.
    ///
    /// Only defined for atomic laws, and only where the whole stencil stays
    /// on one smooth piece of the solution.
    pub fn pde_residual(&self, y: f64, t: f64, h: f64) -> Result<f64> {
        let rates: Vec<f64> = self.marginal().atom_weights().ok_or(Error::NotAtomic)?.iter().map(|a| a.0).collect();
        if !(h > 0.0) {
            return Err(Error::OutOfDomain { what: "h", value: h });
        }
        if t - h < 0.0 || y - h < 0.0 || y + h >= 1.0 {
            return Err(Error::TooCloseToBoundary { y, t, h });
        }
        let too_close = Error::TooCloseToBoundary { y, t, h };
        if (y - self.y_c(t)?).abs() <= 2.0 * h {
            return Err(too_close);
        }
        let centre = self.check_point(y, t)?;
        let stencil = [(y, t), (y, t - h), (y, t + h), (y - h, t), (y + h, t)];
        let piece = |py: f64, pt: f64| -> Result<Option<(Regime, usize)>> {
            let regime = self.regime(py, pt)?;
            Ok(match regime {
                Some(Regime::Tail) => Some((Regime::Tail, self.profile.stratum_index(self.hat_y(py, pt)?))),
                Some(Regime::Head) => Some((Regime::Head, 0)),
                None => None,
            })
        };
        let reference = piece(y, t)?;
        for &(py, pt) in &stencil[1..] {
            if piece(py, pt)? != reference {
                return Err(too_close);
            }
        }
        let weights = |py: f64, pt: f64| -> Result<Vec<f64>> { Ok(self.density_side(py, pt, centre)?.weights) };
        let p = weights(y, t)?;
        let p_minus_t = weights(y, t - h)?;
        let p_plus_t = weights(y, t + h)?;
        let p_minus_y = weights(y - h, t)?;
        let p_plus_y = weights(y + h, t)?;
        let v_minus = self.velocity(y - h, t)?;
        let v_plus = self.velocity(y + h, t)?;
        let residual = (0..rates.len())
            .map(|k| {
                let dt = (p_plus_t[k] - p_minus_t[k]) / (2.0 * h);
                let dy = (v_plus * p_plus_y[k] - v_minus * p_minus_y[k]) / (2.0 * h);
                (dt + dy + rates[k] * p[k]).abs()
            })
            .fold(0.0, f64::max);
        Ok(residual)
    }

    /// Points in `(0, 1)` where `μ_{·,t}` may jump: the boundary curve and
    /// the images of interior stratum edges under the flow.
    pub fn breakpoints(&self, t: f64) -> Result<Vec<f64>> {
        let mut points = alloc::vec![self.y_c(t)?];
        for s in &self.profile.strata()[1..] {
            points.push(self.flow(s.start, t)?);
        }
        points.retain(|&p| p > 0.0 && p < 1.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(points)
    }

    /// `∫_0^1 μ_{y,t} dy` as atom weights, by composite midpoint quadrature
    /// with `panels` panels split at the breakpoints.
    pub fn reconstruct_marginal(&self, t: f64, panels: usize) -> Result<Vec<(f64, f64)>> {
        let atoms = self.marginal().atom_weights().ok_or(Error::NotAtomic)?;
        let mut edges = alloc::vec![0.0];
        edges.extend(self.breakpoints(t)?);
        edges.push(1.0);
        let mut acc = alloc::vec![0.0; atoms.len()];
        for segment in edges.windows(2) {
            let (a, b) = (segment[0], segment[1]);
            let count = libm::ceil((b - a) * panels as f64).max(1.0) as usize;
            let width = (b - a) / count as f64;
            for k in 0..count {
                let mid = a + (k as f64 + 0.5) * width;
                let density = self.density(mid, t)?;
                for (slot, w) in acc.iter_mut().zip(&density.weights) {
                    *slot += width * w;
                }
            }
        }
        Ok(atoms.iter().zip(acc).map(|(&(rate, _), w)| (rate, w)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Stratum;

    const LN2: f64 = core::f64::consts::LN_2;

    fn delta_one() -> LimitField {
        LimitField::new(InitialProfile::factorized(JumpRateLaw::point_mass(1.0).unwrap()))
    }

    fn two_atom() -> LimitField {
        LimitField::new(InitialProfile::factorized(JumpRateLaw::atoms(&[(1.0, 0.5), (2.0, 0.5)]).unwrap()))
    }

    fn mixed() -> LimitField {
        LimitField::new(
            InitialProfile::new(vec![
                Stratum::new(0.0, 0.35, JumpRateLaw::atoms(&[(0.5, 0.2), (3.0, 0.8)]).unwrap()),
                Stratum::new(0.35, 0.7, JumpRateLaw::atoms(&[(1.0, 0.5), (2.0, 0.5)]).unwrap()),
                Stratum::new(0.7, 1.0, JumpRateLaw::point_mass(0.5).unwrap()),
            ])
            .unwrap(),
        )
    }

    fn gamma_field() -> LimitField {
        LimitField::new(InitialProfile::factorized(
            JumpRateLaw::mixture(&[
                (0.6, JumpRateLaw::gamma(2.0, 1.5).unwrap()),
                (0.4, JumpRateLaw::point_mass(0.7).unwrap()),
            ])
            .unwrap(),
        ))
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn boundary_curve_examples() {
        assert_eq!(two_atom().y_c(0.0).unwrap(), 0.0);
        assert!(close(delta_one().y_c(1.0).unwrap(), 0.632_120_558_828_557_7, 1e-15));
        assert!(close(two_atom().y_c(LN2).unwrap(), 0.625, 1e-15));
        assert!(two_atom().y_c(-1.0).is_err());
    }

    #[test]
    fn t_0_examples() {
        let field = delta_one();
        assert_eq!(field.t_0(0.0).unwrap(), 0.0);
        assert!(close(field.t_0(0.5).unwrap(), LN2, 1e-12));
        for t in [0.1, 1.0, 5.0] {
            assert!(close(field.t_0(field.y_c(t).unwrap()).unwrap(), t, 1e-10));
        }
        assert!(field.t_0(1.0).is_err());
        assert!(close(two_atom().t_0(0.625).unwrap(), LN2, 1e-12));
    }

    #[test]
    fn flow_examples() {
        let field = two_atom();
        assert_eq!(field.flow(0.0, 1.3).unwrap(), field.y_c(1.3).unwrap());
        assert_eq!(field.flow(0.42, 0.0).unwrap(), 0.42);
        assert!(close(delta_one().flow(0.5, 1.0).unwrap(), 1.0 - 0.5 * libm::exp(-1.0), 1e-15));
        assert!(field.flow(1.0, 0.5).is_err());
    }

    #[test]
    fn hat_y_examples() {
        let field = delta_one();
        assert_eq!(field.hat_y(0.3, 0.0).unwrap(), 0.3);
        assert!(close(field.hat_y(0.9, 0.5).unwrap(), 1.0 - 0.1 * libm::exp(0.5), 1e-14));
        for z in [0.0, 0.3, 0.9] {
            let y = field.flow(z, 1.0).unwrap();
            assert!(close(field.hat_y(y, 1.0).unwrap(), z, 1e-10));
        }
        assert!(matches!(field.hat_y(0.1, 1.0), Err(Error::HeadRegime { .. })));
    }

    #[test]
    fn density_examples() {
        let d = delta_one().density(0.2, 1.0).unwrap();
        assert_eq!(d.regime, Regime::Head);
        assert_eq!(d.weights, vec![1.0]);

        let field = two_atom();
        let head = field.density(0.625, 1.5).unwrap();
        assert_eq!(head.regime, Regime::Head);
        assert!(close(head.weights[0], 0.5, 1e-12) && close(head.weights[1], 0.5, 1e-12));

        for y in [0.63, 0.8, 0.99] {
            let tail = field.density(y, LN2).unwrap();
            assert_eq!(tail.regime, Regime::Tail);
            assert!(close(tail.weights[0], 2.0 / 3.0, 1e-12) && close(tail.weights[1], 1.0 / 3.0, 1e-12));
        }
        let on_curve = field.y_c(1.0).unwrap();
        assert!(matches!(field.density(on_curve, 1.0), Err(Error::BoundarySingularity { .. })));
        assert!(field.density_side(on_curve, 1.0, Regime::Head).is_ok());
        assert!(field.density_side(on_curve, 1.0, Regime::Tail).is_ok());
    }

    #[test]
    fn gamma_density_tilts_parameters() {
        let field = gamma_field();
        let t = 1.0;
        let yc = field.y_c(t).unwrap();
        let tail = field.density(0.5 * (1.0 + yc), t).unwrap();
        assert!(tail.law.parts().iter().any(|(_, c)| *c == crate::RateComponent::Gamma { shape: 2.0, rate: 2.5 }));
        let head = field.density(0.5 * yc, t).unwrap();
        let s = field.t_0(0.5 * yc).unwrap();
        assert!(head.law.parts().iter().any(|(_, c)| *c == crate::RateComponent::Gamma { shape: 3.0, rate: 1.5 + s }));
        assert!(close(head.weights.iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn limit_statistic_examples() {
        for field in [two_atom(), mixed(), gamma_field()] {
            for t in [0.0, 0.3, 1.0, 3.0] {
                for y in [0.05, 0.3, 0.5, 0.77, 0.95] {
                    assert!(close(field.limit_statistic(|_| 1.0, y, t).unwrap(), y, 1e-12), "y={y} t={t}");
                }
            }
        }
        let field = delta_one();
        for t in [0.5, 1.0, 2.0] {
            let yc = field.y_c(t).unwrap();
            assert!(close(field.limit_statistic(|w| w, yc, t).unwrap(), 1.0 - libm::exp(-t), 1e-12));
        }
        let field = two_atom();
        assert!(close(field.limit_statistic(|w| w, 1.0 - 1e-12, 0.7).unwrap(), 1.5, 1e-9));
        assert!(field.limit_statistic(|w| w, 0.0, 0.7).is_err());
    }

    #[test]
    fn velocity_examples() {
        let field = delta_one();
        let t = 0.8;
        for y in [0.1, 0.4, 0.6, 0.9] {
            assert!(close(field.velocity(y, t).unwrap(), 1.0 - y, 1e-12));
        }
        assert!(field.velocity(1.0 - 1e-9, t).unwrap() < 1e-8);

        let field = two_atom();
        // (1 - ŷ) ∫ w e^{-wt} λ(dw) with ŷ = 1 - 0.2 / 0.375 and the integral
        // ½·1·½ + ½·2·¼ = 0.5; tail weights (2/3, 1/3) give the same 0.2 · 4/3.
        let hat = 1.0 - 0.2 / 0.375;
        let v = field.velocity(0.8, LN2).unwrap();
        assert!(close(v, (1.0 - hat) * 0.5, 1e-12));
        assert!(close(v, 0.2 * 4.0 / 3.0, 1e-12));
    }

    #[test]
    fn velocity_matches_integral_of_mean_rate() {
        // v(y,t) = ∫_y^1 ∫ w μ_{z,t}(dw) dz by midpoint quadrature.
        let field = mixed();
        let t = 0.9;
        let breaks = field.breakpoints(t).unwrap();
        let mean_rate = |z: f64| {
            let d = field.density(z, t).unwrap();
            d.law.mean()
        };
        for y in [0.2, 0.5, 0.85] {
            let mut edges = vec![y];
            edges.extend(breaks.iter().copied().filter(|&b| b > y));
            edges.push(1.0);
            let mut integral = 0.0;
            for seg in edges.windows(2) {
                let panels = 20_000;
                let h = (seg[1] - seg[0]) / panels as f64;
                integral += (0..panels).map(|k| mean_rate(seg[0] + (k as f64 + 0.5) * h) * h).sum::<f64>();
            }
            let v = field.velocity(y, t).unwrap();
            assert!(close(v, integral, 1e-6), "y={y}: {v} vs {integral}");
        }
    }

    #[test]
    fn one_sided_velocity_on_the_curve() {
        let field = mixed();
        let t = 0.7;
        let yc = field.y_c(t).unwrap();
        let head = field.velocity_side(yc, t, Regime::Head).unwrap();
        let tail = field.velocity_side(yc, t, Regime::Tail).unwrap();
        assert!(close(head, tail, 1e-12), "{head} vs {tail}");
        assert!(matches!(field.velocity(yc, t), Err(Error::BoundarySingularity { .. })));
        assert!(field.velocity_side(yc + 0.1, t, Regime::Head).is_err());
        assert!(field.velocity_side(yc - 0.1, t, Regime::Tail).is_err());
    }

    #[test]
    fn pde_residual_examples() {
        let field = delta_one();
        assert!(field.pde_residual(0.3, 1.0, 1e-3).unwrap() <= 1e-9);
        assert!(field.pde_residual(0.9, 1.0, 1e-3).unwrap() <= 1e-9);

        let field = two_atom();
        let r1 = field.pde_residual(0.3, 1.5, 1e-3).unwrap();
        let r2 = field.pde_residual(0.3, 1.5, 5e-4).unwrap();
        assert!(r1 <= 1e-4, "{r1}");
        let ratio = r1 / r2;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");

        let yc = field.y_c(1.0).unwrap();
        assert!(matches!(field.pde_residual(yc + 1e-3, 1.0, 1e-3), Err(Error::TooCloseToBoundary { .. })));
        assert_eq!(gamma_field().pde_residual(0.3, 1.0, 1e-3), Err(Error::NotAtomic));
    }

    #[test]
    fn pde_holds_in_tail_of_stratified_profile() {
        let field = mixed();
        let t = 0.4;
        let breaks = field.breakpoints(t).unwrap();
        for y in [0.55, 0.7, 0.95] {
            if breaks.iter().all(|b| (b - y).abs() > 0.01) {
                let r = field.pde_residual(y, t, 1e-3).unwrap();
                assert!(r <= 1e-4, "y={y}: {r}");
            }
        }
    }

    #[test]
    fn marginal_is_recovered() {
        for field in [two_atom(), mixed()] {
            for t in [0.3, 1.0, 2.5] {
                let got = field.reconstruct_marginal(t, 10_000).unwrap();
                for ((rate, w), (r0, w0)) in got.iter().zip(field.marginal().atom_weights().unwrap()) {
                    assert_eq!(*rate, r0);
                    assert!(close(*w, w0, 1e-4), "t={t} rate={rate}: {w} vs {w0}");
                }
            }
        }
    }

    #[test]
    fn derivative_identities() {
        for field in [two_atom(), mixed(), gamma_field()] {
            for t in [0.2, 1.0, 3.0] {
                let h = 1e-6;
                let fd = (field.y_c(t + h).unwrap() - field.y_c(t - h).unwrap()) / (2.0 * h);
                let exact = field.marginal().weighted_laplace(t).unwrap();
                assert!((fd - exact).abs() <= 1e-6 * exact);

                let yc = field.y_c(t).unwrap();
                for frac in [0.2, 0.6, 0.9] {
                    let y = yc + frac * (1.0 - yc);
                    let dhat = (field.hat_y(y + h, t).unwrap() - field.hat_y(y - h, t).unwrap()) / (2.0 * h);
                    let z = field.hat_y(y, t).unwrap();
                    let exact = 1.0 / field.profile().law_at(z).laplace(t).unwrap();
                    assert!((dhat - exact).abs() <= 1e-6 * exact, "{dhat} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn factorized_flow_is_affine() {
        let field = gamma_field();
        let t = 1.7;
        let l = field.marginal().laplace(t).unwrap();
        for y in [0.0, 0.25, 0.5, 0.99] {
            assert!(close(field.flow(y, t).unwrap(), 1.0 - (1.0 - y) * l, 1e-15));
        }
        let a = field.density(0.9, t).unwrap();
        let b = field.density(0.99, t).unwrap();
        assert_eq!(a.law, b.law);
    }

    #[test]
    fn monotone_on_grids() {
        for field in [two_atom(), mixed(), gamma_field()] {
            let curve: Vec<f64> = (0..100).map(|k| field.y_c(f64::from(k) * 0.05).unwrap()).collect();
            assert!(curve.windows(2).all(|w| w[0] < w[1]));
            let flow: Vec<f64> = (0..100).map(|k| field.flow(f64::from(k) / 100.0, 1.2).unwrap()).collect();
            assert!(flow.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn inverse_identities_on_grids() {
        for field in [two_atom(), mixed(), gamma_field()] {
            for k in 1..100 {
                let t = f64::from(k) * 0.06;
                assert!(close(field.t_0(field.y_c(t).unwrap()).unwrap(), t, 1e-10));
                let z = f64::from(k) / 100.0;
                let y = field.flow(z, 1.1).unwrap();
                assert!(close(field.hat_y(y, 1.1).unwrap(), z, 1e-10));
            }
        }
    }
}
