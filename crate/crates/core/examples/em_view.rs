//! Mean shift seen as EM on a lifted mixture: responsibilities, Q-function
//! and the likelihood offset along one trajectory.

use dirms::em;
use dirms::sphere::lonlat_to_unit;
use dirms::{KdeModel, Kernel, VmfMixture};

fn main() -> dirms::Result<()> {
    let data = VmfMixture::new(vec![1.0], vec![lonlat_to_unit(0.0, 45.0)?], vec![5.0])?.sample(200, 3);
    for kernel in [Kernel::VonMises, Kernel::Truncated { p: 2 }] {
        let model = KdeModel::new(data.clone(), kernel, 0.5)?;
        println!("{kernel}: offset log(C_mix / c_h) = {:.6}", em::loglik_offset(&model));
        let mut mu = lonlat_to_unit(30.0, 20.0)?;
        for t in 0..5 {
            let next = em::gem_step(&model, &mu)?;
            let q0 = em::q_function(&model, &mu, &mu)?;
            let q1 = em::q_function(&model, &next, &mu)?;
            let ll = em::observed_loglik(&model, &next)?;
            println!("  t={t}  Q: {q0:.5} -> {q1:.5}   loglik {ll:.5}   loglik - log f = {:.6}", ll - model.log_density(&next)?);
            mu = next;
        }
        let ex = em::exact_m_step(&model, &mu, 1e-12, 200)?;
        println!(
            "  exact M-step: {} inner iterations, stalled {}, zero denominator {}",
            ex.inner_iterations, ex.stalled, ex.zero_denominator
        );
    }
    Ok(())
}
