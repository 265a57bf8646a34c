//! Runs mean shift from data points and a lattice, then lists the merged modes.

use dirms::dms::{self, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL};
use dirms::sphere::{lonlat_to_unit, unit_to_lonlat};
use dirms::vmf::rule_of_thumb_bandwidth;
use dirms::{KdeModel, Kernel, VmfMixture};

fn main() -> dirms::Result<()> {
    let means = vec![lonlat_to_unit(-120.0, -45.0)?, lonlat_to_unit(0.0, 60.0)?, lonlat_to_unit(150.0, 0.0)?];
    let data = VmfMixture::new(vec![0.3, 0.3, 0.4], means, vec![8.0, 8.0, 5.0])?.sample(1000, 0);
    let h = rule_of_thumb_bandwidth(&data)?;
    let model = KdeModel::new(data, Kernel::VonMises, h)?;

    let starts = dms::default_starts(&model);
    let modes = dms::find_modes(&model, &starts, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL)?;
    println!("h = {h:.4}, {} starts, {} modes, {} saddles", starts.len(), modes.len(), modes.saddles.len());
    for (k, m) in modes.modes.iter().enumerate() {
        let (lon, lat) = unit_to_lonlat(m)?;
        println!("mode {k}: ({lon:8.3}, {lat:7.3})  density {:.4}  basin size {}", modes.densities[k], modes.counts[k]);
    }

    let t = dms::run(&model, &lonlat_to_unit(100.0, 20.0)?, DEFAULT_EPS, DEFAULT_MAX_ITER)?;
    println!("single run: {:?} after {} iterations, density {:.4} -> {:.4}", t.status, t.iterations, t.densities[0], t.final_density());
    Ok(())
}
