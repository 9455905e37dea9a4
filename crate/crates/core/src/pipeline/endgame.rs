use crate::error::{Error, Result};
use crate::norm::{certified_column_bound, SpaceSpec};
use crate::operator::OmegaOperator;
use crate::scalar::Scalar;

/// `‖(c⁻¹S)⁻¹‖ ≤ 1/(1 − r/|c|)` when `‖S − cI‖ ≤ r < |c|`.
pub fn neumann_bound(c: f64, residual: f64) -> Option<f64> {
    let ratio = residual / c.abs();
    (c != 0.0 && ratio < 1.0).then(|| 1.0 / (1.0 - ratio))
}

#[derive(Clone, Debug)]
pub struct Endgame<S> {
    pub l: OmegaOperator<S>,
    pub r: OmegaOperator<S>,
    /// Certified `‖S − cI‖`.
    pub residual: f64,
    pub neumann_bound: f64,
    /// `C · neumann / |c|`, a bound for `‖L‖‖R‖` given `‖A‖‖B‖ ≤ C`.
    pub product_bound: f64,
}

/// Inverts `S = A T' B ≈ cI` on the target universe: with `L = (c⁻¹S)⁻¹c⁻¹A`
/// and `R = B` we get `L T' R = I`.
pub fn endgame_invert<S: Scalar>(
    s: &OmegaOperator<S>,
    a: &OmegaOperator<S>,
    b: &OmegaOperator<S>,
    c: &S,
    chain_constant: f64,
    spec: &SpaceSpec,
) -> Result<Endgame<S>> {
    if !s.is_square() || s.domain_n_max() != a.codomain_n_max() || s.domain_n_max() != b.domain_n_max() {
        return Err(Error::Dimension(format!(
            "S on Y_{}, A into Y_{}, B from Y_{}",
            s.domain_n_max(),
            a.codomain_n_max(),
            b.domain_n_max()
        )));
    }
    let n_t = s.domain_n_max();
    let residual = certified_column_bound(&s.sub(&OmegaOperator::scalar(n_t, c.clone()))?, spec);
    let cf = c.to_f64();
    let Some(neumann) = neumann_bound(cf, residual) else {
        return Err(Error::SpectralCondition(if cf == 0.0 { f64::INFINITY } else { residual / cf.abs() }));
    };
    let inv_c = S::one() / c.clone();
    let m = s.scale(&inv_c);
    let scaled_a = a.scale(&inv_c);
    let l_matrix = m.matrix().solve(scaled_a.matrix())?;
    let l = OmegaOperator::new(a.domain_n_max(), n_t, l_matrix)?;
    Ok(Endgame { l, r: b.clone(), residual, neumann_bound: neumann, product_bound: chain_constant * neumann / cf.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::RademacherMode;
    use crate::scalar::Rational;

    #[test]
    fn bound_example() {
        assert!((neumann_bound(0.8, 0.05).unwrap() / 0.8 - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(neumann_bound(0.5, 0.5), None);
        assert_eq!(neumann_bound(0.0, 0.0), None);
    }

    #[test]
    fn inverts_a_multiple_of_the_identity() {
        let spec = SpaceSpec::lp(2.0, RademacherMode::Independent).unwrap();
        let c = Rational::dyadic(3, 2);
        let s = OmegaOperator::scalar(1, c.clone());
        let id = OmegaOperator::identity(1);
        let e = endgame_invert(&s, &id, &id, &c, 1.0, &spec).unwrap();
        assert_eq!(e.residual, 0.0);
        assert!(e.l.compose(&s).unwrap().compose(&e.r).unwrap().is_identity());
    }
}
