//! Central finite-difference verification of the analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lga::{lga_backward, lga_forward, LgaParams};
use super::rcm::{rcm_backward, rcm_forward, RcmParams};
use super::tensor::Tensor;
use super::{NnError, ParamGroups};

/// Finite-difference step (central differences, double precision).
pub const FD_EPSILON: f64 = 1e-6;
/// How many input coordinates are sampled for the input-gradient check.
const INPUT_SAMPLE: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Lga,
    Rcm,
}

impl std::str::FromStr for ModuleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lga" => Ok(ModuleKind::Lga),
            "rcm" => Ok(ModuleKind::Rcm),
            other => Err(format!("unknown module '{other}', expected 'lga' or 'rcm'")),
        }
    }
}

/// Per-group comparison of analytic and finite-difference gradients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Result of one gradient check run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradReport {
    pub module: ModuleKind,
    pub shape: (usize, usize, usize),
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
    pub input: GroupReport,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Relative error of a gradient group: the largest analytic/finite-difference
/// discrepancy normalized by the group's gradient magnitude,
/// `max_i |ga_i - gfd_i| / max(|ga|_inf, |gfd|_inf, 1e-8)`.
///
/// Normalizing per group rather than per scalar keeps the check meaningful at
/// double precision: differencing two losses of magnitude |L| leaves an
/// absolute noise floor near `ulp(|L|)/(2*eps)`, so an individual weight
/// whose true gradient sits below that floor cannot be verified in isolation
/// no matter how correct the analytic pass is. Any real algebra error still
/// shows up orders of magnitude above the tolerance.
fn group_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let max_diff = analytic
        .iter()
        .zip(fd)
        .map(|(&a, &f)| (a - f).abs())
        .fold(0.0f64, f64::max);
    let a_norm = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let f_norm = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    max_diff / a_norm.max(f_norm).max(1e-8)
}

/// Perturbs every parameter (and a sampled subset of input coordinates) and
/// compares central finite differences of `L = Σ d_out ⊙ forward(x)` against
/// the analytic gradients. Never panics: an exceeded tolerance is reported in
/// the `pass` flag.
pub fn grad_check(
    module: ModuleKind,
    shape: (usize, usize, usize),
    seed: u64,
    tolerance: f64,
) -> Result<GradReport, NnError> {
    let (c, h, w) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let x = Tensor::random(c, h, w, &mut rng);
    let d_out = Tensor::random(c, h, w, &mut rng);

    let (groups, input) = match module {
        ModuleKind::Lga => {
            let params = LgaParams::seeded(c, seed)?;
            let (dx, grads) = lga_backward(&x, &params, &d_out)?;
            let analytic: Vec<(&'static str, Vec<f64>)> = grads
                .groups()
                .into_iter()
                .map(|(n, g)| (n, g.to_vec()))
                .collect();
            run_fd(
                &params,
                &x,
                &d_out,
                &dx,
                analytic,
                |x, p| lga_forward(x, p),
                &mut rng,
            )?
        }
        ModuleKind::Rcm => {
            let params = RcmParams::seeded_dense(c, seed)?;
            let (dx, grads) = rcm_backward(&x, &params, &d_out)?;
            let analytic: Vec<(&'static str, Vec<f64>)> = grads
                .groups()
                .into_iter()
                .map(|(n, g)| (n, g.to_vec()))
                .collect();
            run_fd(
                &params,
                &x,
                &d_out,
                &dx,
                analytic,
                |x, p| rcm_forward(x, p),
                &mut rng,
            )?
        }
    };

    let max_rel_err = groups
        .iter()
        .map(|g| g.max_rel_err)
        .chain(std::iter::once(input.max_rel_err))
        .fold(0.0f64, f64::max);

    Ok(GradReport {
        module,
        shape,
        seed,
        epsilon: FD_EPSILON,
        tolerance,
        pass: max_rel_err < tolerance,
        groups,
        input,
        max_rel_err,
    })
}

fn run_fd<P: ParamGroups + Clone>(
    params: &P,
    x: &Tensor,
    d_out: &Tensor,
    dx_analytic: &Tensor,
    analytic_groups: Vec<(&'static str, Vec<f64>)>,
    forward: impl Fn(&Tensor, &P) -> Result<Tensor, NnError>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<GroupReport>, GroupReport), NnError> {
    let loss = |x: &Tensor, p: &P| -> Result<f64, NnError> { Ok(forward(x, p)?.dot(d_out)) };

    let mut reports = Vec::with_capacity(analytic_groups.len());
    for (gi, (name, analytic)) in analytic_groups.iter().enumerate() {
        let mut fd = Vec::with_capacity(analytic.len());
        for idx in 0..analytic.len() {
            let mut plus = params.clone();
            plus.groups_mut()[gi].1[idx] += FD_EPSILON;
            let mut minus = params.clone();
            minus.groups_mut()[gi].1[idx] -= FD_EPSILON;
            fd.push((loss(x, &plus)? - loss(x, &minus)?) / (2.0 * FD_EPSILON));
        }
        reports.push(GroupReport {
            name: (*name).to_string(),
            checked: analytic.len(),
            max_rel_err: group_rel_err(analytic, &fd),
        });
    }

    // sampled input coordinates
    let n = x.values().len();
    let take = INPUT_SAMPLE.min(n);
    let indices = rand::seq::index::sample(rng, n, take);
    let mut analytic_sampled = Vec::with_capacity(take);
    let mut fd_sampled = Vec::with_capacity(take);
    for idx in indices.iter() {
        let mut plus = x.clone();
        plus.values_mut()[idx] += FD_EPSILON;
        let mut minus = x.clone();
        minus.values_mut()[idx] -= FD_EPSILON;
        fd_sampled.push((loss(&plus, params)? - loss(&minus, params)?) / (2.0 * FD_EPSILON));
        analytic_sampled.push(dx_analytic.values()[idx]);
    }
    let input = GroupReport {
        name: "input".to_string(),
        checked: take,
        max_rel_err: group_rel_err(&analytic_sampled, &fd_sampled),
    };

    Ok((reports, input))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lga_gradients_match_finite_differences() {
        for seed in 0..5 {
            let report = grad_check(ModuleKind::Lga, (4, 6, 6), seed, 1e-5).unwrap();
            assert!(
                report.pass,
                "seed {seed}: max rel err {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn rcm_gradients_match_finite_differences() {
        for seed in 0..5 {
            let report = grad_check(ModuleKind::Rcm, (4, 6, 6), seed, 1e-5).unwrap();
            assert!(
                report.pass,
                "seed {seed}: max rel err {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn zero_tolerance_reports_failure_without_panicking() {
        let report = grad_check(ModuleKind::Lga, (2, 3, 3), 0, 0.0).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn report_serializes_to_json() {
        let report = grad_check(ModuleKind::Rcm, (2, 3, 3), 1, 1e-5).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: GradReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.module, ModuleKind::Rcm);
        assert_eq!(back.groups.len(), report.groups.len());
    }
}
