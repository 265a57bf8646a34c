//! Evaluates the directional KDE with two kernels at a few points.

use dirms::sphere::lonlat_to_unit;
use dirms::vmf::rule_of_thumb_bandwidth;
use dirms::{KdeModel, Kernel, VmfMixture};

fn main() -> dirms::Result<()> {
    let mix = VmfMixture::new(vec![1.0], vec![lonlat_to_unit(20.0, 30.0)?], vec![6.0])?;
    let data = mix.sample(500, 1);
    let h = rule_of_thumb_bandwidth(&data)?;
    println!("rule-of-thumb h = {h:.4}");
    for kernel in [Kernel::VonMises, Kernel::Truncated { p: 2 }] {
        let model = KdeModel::new(data.clone(), kernel, h)?;
        for (lon, lat) in [(20.0, 30.0), (40.0, 10.0), (-150.0, -60.0)] {
            let x = lonlat_to_unit(lon, lat)?;
            println!("{kernel} ({lon:6.1}, {lat:5.1})  f = {:.5}  true = {:.5}", model.density(&x)?, mix.density(&x)?);
        }
    }
    Ok(())
}
