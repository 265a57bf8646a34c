//! Rule-of-thumb bandwidth as the sample grows.

use dirms::sphere::lonlat_to_unit;
use dirms::vmf::{fit_single_vmf, rule_of_thumb_bandwidth};
use dirms::VmfMixture;

fn main() -> dirms::Result<()> {
    let means = vec![lonlat_to_unit(-120.0, -45.0)?, lonlat_to_unit(0.0, 60.0)?, lonlat_to_unit(150.0, 0.0)?];
    let mix = VmfMixture::new(vec![0.3, 0.3, 0.4], means, vec![8.0, 8.0, 5.0])?;
    for n in [100, 1000, 10_000] {
        let data = mix.sample(n, 5);
        let (_, kappa) = fit_single_vmf(&data)?;
        println!("n = {n:6}  single-vMF kappa = {kappa:.4}  h = {:.4}", rule_of_thumb_bandwidth(&data)?);
    }
    Ok(())
}
