//! Fits a three-component vMF mixture by EM and compares with the generator.

use dirms::sphere::{lonlat_to_unit, unit_to_lonlat};
use dirms::vmf::em_fit;
use dirms::VmfMixture;

fn main() -> dirms::Result<()> {
    let means = vec![lonlat_to_unit(-120.0, -45.0)?, lonlat_to_unit(0.0, 60.0)?, lonlat_to_unit(150.0, 0.0)?];
    let truth = VmfMixture::new(vec![0.3, 0.3, 0.4], means, vec![8.0, 8.0, 5.0])?;
    let data = truth.sample(5000, 9);
    let rep = em_fit(&data, 3, 9, 1e-10, 1000)?;
    println!("{} iterations, converged {}, final loglik {:.4}", rep.iterations, rep.converged, rep.loglik_trace.last().unwrap());
    let f = &rep.fitted;
    for j in 0..f.components() {
        let (lon, lat) = unit_to_lonlat(&f.means[j])?;
        println!("weight {:.3}  mean ({lon:8.3}, {lat:7.3})  kappa {:.3}", f.weights[j], f.concentrations[j]);
    }
    Ok(())
}
