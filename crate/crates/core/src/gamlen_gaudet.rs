//! Selection of almost faithful systems on which a large diagonal has a
//! uniform sign.
//!
//! An interval `Q` is `σ`-perfect for depth `n` if every `K ⊆ Q` with
//! `level(Q) ≤ level(K) ≤ level(Q)+n` satisfies `σ d_K ≥ δ`. The maximal
//! perfect intervals form `ℬ_{[0,1)}`; inside each of them the system is an
//! affine copy of the Haar system. This gives `|B_I| = μ|I|` exactly, so the
//! support ratios carry no error at all.

use num_traits::Zero;
use serde_json::{json, Value};

use crate::dyadic::{count_up_to, DyadicInterval};
use crate::error::{Error, Result};
use crate::faithful::{verify_system, Block, FiniteFaithfulSystem, SignStream};
use crate::linalg::DenseMatrix;
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionOptions {
    pub seed: u64,
    /// Seeded sign draws tried after the all-plus signs.
    pub retries: usize,
    /// Force the sign instead of taking the one with the larger support.
    pub sign: Option<i8>,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions { seed: 0, retries: 64, sign: None }
    }
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub system: FiniteFaithfulSystem,
    pub sign: i8,
    pub mu: Rational,
    pub roots: Vec<DyadicInterval>,
    /// Sign draws used, `0` for the all-plus signs.
    pub draw: usize,
}

impl Selection {
    pub fn to_json(&self) -> Value {
        json!({
            "sign": self.sign,
            "mu": crate::scalar::format_rational(&self.mu),
            "roots": self.roots.iter().map(|q| [q.level() as u64, q.position()]).collect::<Vec<_>>(),
            "draw": self.draw,
        })
    }
}

/// Diagonal entries `d_K` of an operator on `Y_N` given in the `iota - 1`
/// order of `𝒟_{≤N}`.
fn diagonal<S: Scalar>(t: &DenseMatrix<S>) -> Vec<S> {
    (0..t.rows()).map(|i| t.get(i, i).clone()).collect()
}

fn depth_of(len: usize) -> Result<u32> {
    (0..=30u32)
        .find(|&d| count_up_to(d) == len)
        .ok_or_else(|| Error::Dimension(format!("{len} is not the size of some 𝒟_(≤N)")))
}

/// `perfect[iota-1]`: how many consecutive generations below `K`, starting
/// with `K` itself, consist of good intervals only.
fn good_depths<S: Scalar>(d: &[S], big_n: u32, sigma: i8, delta: &S) -> Vec<u32> {
    let mut h = vec![0u32; d.len()];
    for level in (0..=big_n).rev() {
        for k in DyadicInterval::generation(level) {
            let p = k.iota() as usize - 1;
            let v = if sigma > 0 { d[p].clone() } else { -d[p].clone() };
            if v < *delta {
                continue;
            }
            h[p] = if level == big_n {
                1
            } else {
                let (l, r) = k.halves().expect("level below the cap");
                1 + h[l.iota() as usize - 1].min(h[r.iota() as usize - 1])
            };
        }
    }
    h
}

/// Maximal `σ`-perfect intervals in `≺` order.
pub fn perfect_roots<S: Scalar>(d: &[S], big_n: u32, n: u32, sigma: i8, delta: &S) -> Vec<DyadicInterval> {
    let h = good_depths(d, big_n, sigma, delta);
    let mut out = Vec::new();
    let mut stack = vec![DyadicInterval::UNIT];
    while let Some(q) = stack.pop() {
        if q.level() + n > big_n {
            continue;
        }
        if h[q.iota() as usize - 1] > n {
            out.push(q);
        } else if let Ok((l, r)) = q.halves() {
            stack.push(r);
            stack.push(l);
        }
    }
    out.sort_by_key(|q| (q.position() << (big_n - q.level()), q.level()));
    out
}

fn measure_of(roots: &[DyadicInterval]) -> Rational {
    roots.iter().fold(Rational::zero(), |acc, q| acc + q.measure::<Rational>())
}

/// The affine copies of the Haar system in every root.
fn assemble(roots: &[DyadicInterval], n: u32, mut theta: impl FnMut(DyadicInterval) -> i8) -> Result<FiniteFaithfulSystem> {
    let mut blocks = vec![Block::default(); count_up_to(n)];
    let signed = |intervals: Vec<DyadicInterval>, theta: &mut dyn FnMut(DyadicInterval) -> i8| {
        let signs = intervals.iter().map(|k| theta(*k)).collect();
        Block::new(intervals, signs)
    };
    blocks[0] = signed(roots.to_vec(), &mut theta)?;
    for j in 0..n {
        for i in DyadicInterval::generation(j) {
            let (mut plus, mut minus) = (Vec::new(), Vec::new());
            for (k, t) in blocks[i.iota() as usize - 1].iter() {
                let (l, r) = k.halves()?;
                let (p, q) = if t > 0 { (l, r) } else { (r, l) };
                plus.push(p);
                minus.push(q);
            }
            let (ip, im) = i.halves()?;
            blocks[ip.iota() as usize - 1] = signed(plus, &mut theta)?;
            blocks[im.iota() as usize - 1] = signed(minus, &mut theta)?;
        }
    }
    FiniteFaithfulSystem::new(n, blocks, None, false)
}

/// `⟨h̃_I, T h̃_I⟩` and `‖h̃_I‖²_{L²}` for a block.
pub fn quadratic_form<S: Scalar>(t: &DenseMatrix<S>, block: &Block) -> (S, S) {
    let mut q = S::zero();
    let mut norm = S::zero();
    for (k, tk) in block.iter() {
        let mk: S = k.measure();
        norm = norm + mk.clone();
        for (kk, tkk) in block.iter() {
            let v = t.get(k.iota() as usize - 1, kk.iota() as usize - 1);
            if v.is_zero() {
                continue;
            }
            let term = v.clone() * mk.clone();
            q = if tk == tkk { q + term } else { q - term };
        }
    }
    (q, norm)
}

/// Largest depth `n' ≤ n` for which some sign reaches `μ ≥ 1/2`.
fn achievable_depth<S: Scalar>(d: &[S], big_n: u32, n: u32, delta: &S, sign: Option<i8>) -> Option<u32> {
    let half = Rational::dyadic(1, 1);
    (0..=n).rev().find(|&k| {
        [1i8, -1]
            .iter()
            .filter(|s| sign.is_none_or(|f| f == **s))
            .any(|s| measure_of(&perfect_roots(d, big_n, k, *s, delta)) >= half)
    })
}

/// Selects an almost faithful system of depth `n` in `Y_N` from the operator
/// `t` on `Y_N` (Haar coefficient matrix, `iota - 1` order).
///
/// Postconditions, all checked before returning: the system verifies as
/// almost faithful, `σ⟨h̃_I,Th̃_I⟩ ≥ δ‖h̃_I‖²` for every `I`, `μ ≥ 1/2` and
/// `0 ≤ |I|/|B_I| − 1/μ ≤ η/(nμ)`.
pub fn gamlen_gaudet_select<S: Scalar>(
    t: &DenseMatrix<S>,
    n: u32,
    eta: f64,
    delta: f64,
    opts: &SelectionOptions,
) -> Result<Selection> {
    let big_n = depth_of(t.rows())?;
    let fail = |reason: String| Error::Stage { stage: "gamlen-gaudet".into(), reason };
    if n > big_n {
        return Err(fail(format!("depth {n} does not fit into Y_{big_n}")));
    }
    let d = diagonal(t);
    let delta_s = S::from_f64(delta)?;
    if let Some(p) = d.iter().position(|v| v.abs() < delta_s) {
        return Err(Error::Hypothesis {
            index: format!("{:?}", DyadicInterval::from_iota(p as u64 + 1)?),
            reason: format!("|d_K| = {} < δ = {delta}", v_f64(&d[p])),
        });
    }
    let mut candidates: Vec<(i8, Vec<DyadicInterval>, Rational)> = [1i8, -1]
        .iter()
        .filter(|s| opts.sign.is_none_or(|f| f == **s))
        .map(|&s| {
            let roots = perfect_roots(&d, big_n, n, s, &delta_s);
            let mu = measure_of(&roots);
            (s, roots, mu)
        })
        .collect();
    // Larger support first; the stable sort keeps `+` ahead on ties.
    candidates.sort_by(|a, b| b.2.cmp(&a.2));
    let (sign, roots, mu) = candidates.into_iter().next().expect("at least one sign");
    if mu < Rational::dyadic(1, 1) {
        let reached = achievable_depth(&d, big_n, n, &delta_s, opts.sign);
        return Err(fail(format!(
            "perfect intervals cover only μ = {} < 1/2 at depth {n} in Y_{big_n}; achieved depth {}",
            mu,
            reached.map_or("none".to_string(), |k| k.to_string())
        )));
    }
    let mut last = String::new();
    for draw in 0..=opts.retries {
        let system = if draw == 0 {
            assemble(&roots, n, |_| 1)?
        } else {
            let mut s = SignStream::new(opts.seed, draw as u64);
            assemble(&roots, n, |k| s.sign(k))?
        };
        match check_postconditions(t, &system, sign, eta, &delta_s, &mu) {
            Ok(()) => return Ok(Selection { system, sign, mu, roots, draw }),
            Err(e) => last = e.to_string(),
        }
    }
    Err(fail(format!("no sign draw met the postconditions ({last})")))
}

fn v_f64<S: Scalar>(v: &S) -> f64 {
    v.to_f64()
}

/// Re-checks every postcondition of a selection from scratch.
pub fn check_postconditions<S: Scalar>(
    t: &DenseMatrix<S>,
    system: &FiniteFaithfulSystem,
    sign: i8,
    eta: f64,
    delta: &S,
    mu: &Rational,
) -> Result<()> {
    let report = verify_system(system);
    if !report.is_almost_faithful() {
        return Err(Error::InvalidSystem(format!("{:?}", report.violations.first())));
    }
    let prof = system.support_profile();
    if prof.mu != *mu || *mu < Rational::dyadic(1, 1) {
        return Err(Error::InvalidSystem(format!("μ = {} differs from {mu}", prof.mu)));
    }
    let n = system.depth();
    let inv_mu = Rational::from_i64(1) / mu.clone();
    let tol = if n == 0 { None } else { Some(Rational::from_f64(eta)? / (Rational::from_i64(n as i64) * mu.clone())) };
    for i in DyadicInterval::up_to(n) {
        let dev = i.measure::<Rational>() / prof.measure(i).clone() - inv_mu.clone();
        if dev < Rational::zero() || tol.as_ref().is_some_and(|t| dev > *t) {
            return Err(Error::Hypothesis { index: format!("{i:?}"), reason: format!("support ratio deviation {dev}") });
        }
        let (q, norm) = quadratic_form(t, system.block(i));
        let q = if sign > 0 { q } else { -q };
        if q < delta.clone() * norm {
            return Err(Error::Hypothesis { index: format!("{i:?}"), reason: "quadratic form below δ‖h̃‖²".into() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_matrix(big_n: u32, f: impl Fn(DyadicInterval) -> f64) -> DenseMatrix<Rational> {
        let d: Vec<Rational> = DyadicInterval::up_to(big_n).map(|k| Rational::from_f64(f(k)).unwrap()).collect();
        DenseMatrix::diagonal(&d)
    }

    #[test]
    fn constant_diagonal_keeps_everything() {
        let t = diag_matrix(3, |_| 0.5);
        let s = gamlen_gaudet_select(&t, 2, 0.1, 0.5, &SelectionOptions::default()).unwrap();
        assert_eq!(s.sign, 1);
        assert_eq!(s.roots, vec![DyadicInterval::UNIT]);
        assert_eq!(s.mu, Rational::from_i64(1));
        for i in DyadicInterval::up_to(2) {
            let (q, norm) = quadratic_form(&t, s.system.block(i));
            assert_eq!(q, Rational::dyadic(1, 1) * norm);
        }
    }

    #[test]
    fn split_signs_prefer_plus() {
        let half = DyadicInterval::new(1, 0).unwrap();
        let t = diag_matrix(4, |k| if k.level() == 0 || half.contains(k) { 0.25 } else { -0.25 });
        let s = gamlen_gaudet_select(&t, 2, 0.1, 0.25, &SelectionOptions::default()).unwrap();
        assert_eq!(s.sign, 1);
        assert_eq!(s.mu, Rational::dyadic(1, 1));
        assert_eq!(s.roots, vec![half]);
        let forced = SelectionOptions { sign: Some(-1), ..Default::default() };
        let m = gamlen_gaudet_select(&t, 2, 0.1, 0.25, &forced).unwrap();
        assert_eq!(m.roots, vec![DyadicInterval::new(1, 1).unwrap()]);
    }

    #[test]
    fn scattered_signs_fail_with_depth() {
        let t = diag_matrix(3, |k| if k.position() % 2 == 0 { 1.0 } else { -1.0 });
        let err = gamlen_gaudet_select(&t, 2, 0.1, 1.0, &SelectionOptions::default()).unwrap_err();
        assert!(err.to_string().contains("achieved depth 0"), "{err}");
    }
}
