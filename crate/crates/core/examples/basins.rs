//! Labels a 5 degree lon/lat grid by the mode each cell flows to.

use dirms::dms::{self, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL};
use dirms::sphere::{lonlat_grid, lonlat_to_unit};
use dirms::vmf::rule_of_thumb_bandwidth;
use dirms::{KdeModel, Kernel, VmfMixture};

fn main() -> dirms::Result<()> {
    let means = vec![lonlat_to_unit(-120.0, -45.0)?, lonlat_to_unit(0.0, 60.0)?, lonlat_to_unit(150.0, 0.0)?];
    let data = VmfMixture::new(vec![0.3, 0.3, 0.4], means, vec![8.0, 8.0, 5.0])?.sample(1000, 0);
    let model = KdeModel::new(data.clone(), Kernel::VonMises, rule_of_thumb_bandwidth(&data)?)?;

    let grid = lonlat_grid(5.0)?;
    let pts: Vec<_> = grid.iter().map(|g| g.2.clone()).collect();
    let bg = dms::basin_grid(&model, &pts, DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_MERGE_TOL)?;

    // Coarse text map, north at the top.
    let n_lon = 72;
    for row in bg.labels.chunks(n_lon).rev().step_by(2) {
        let line: String = row.iter().map(|l| if *l < 0 { '.' } else { (b'A' + *l as u8) as char }).collect();
        println!("{line}");
    }
    for k in 0..bg.modes.len() {
        println!("{}: {} cells", (b'A' + k as u8) as char, bg.labels.iter().filter(|l| **l == k as i64).count());
    }
    Ok(())
}
