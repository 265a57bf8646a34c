//! Jacobian spectrum at each mode against the observed contraction of a
//! trajectory, for two bandwidths.

use dirms::diagnostics::{empirical_rate, jacobian_f, rate_bound, taylor_residual_exponent};
use dirms::dms::{self, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL};
use dirms::sphere::lonlat_to_unit;
use dirms::vmf::rule_of_thumb_bandwidth;
use dirms::{KdeModel, Kernel, VmfMixture};

fn main() -> dirms::Result<()> {
    let means = vec![lonlat_to_unit(-120.0, -45.0)?, lonlat_to_unit(0.0, 60.0)?, lonlat_to_unit(150.0, 0.0)?];
    let data = VmfMixture::new(vec![0.3, 0.3, 0.4], means.clone(), vec![8.0, 8.0, 5.0])?.sample(1000, 0);
    let h = rule_of_thumb_bandwidth(&data)?;
    for bw in [h, h / 2.0] {
        let model = KdeModel::new(data.clone(), Kernel::VonMises, bw)?;
        println!("h = {bw:.4}");
        for (j, mu) in means.iter().enumerate() {
            let t = dms::run(&model, &dms::step(&model, mu)?, DEFAULT_EPS, DEFAULT_MAX_ITER)?;
            let m = dms::polish(&model, t.endpoint())?;
            let rep = jacobian_f(&model, &m)?;
            let rates = empirical_rate(&t, &m).unwrap_or_default();
            println!(
                "  near component {j}: eigenvalues {:.3?}  rate bound {:.3}  last ratio {:.3?}  Taylor exponent {:.2}",
                rep.eigenvalues,
                rate_bound(&model, &m)?,
                rates.last(),
                taylor_residual_exponent(&model, &m, 0)?
            );
        }
        let n = dms::find_modes(&model, &dms::default_starts(&model), DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL)?.len();
        println!("  {n} modes in total");
    }
    Ok(())
}
