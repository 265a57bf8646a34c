//! Draws a sample from a three-component vMF mixture and prints a few rows.

use dirms::sphere::{lonlat_to_unit, unit_to_lonlat};
use dirms::VmfMixture;

fn main() -> dirms::Result<()> {
    let means = vec![lonlat_to_unit(-120.0, -45.0)?, lonlat_to_unit(0.0, 60.0)?, lonlat_to_unit(150.0, 0.0)?];
    let mix = VmfMixture::new(vec![0.3, 0.3, 0.4], means, vec![8.0, 8.0, 5.0])?;
    let pts = mix.sample(1000, 42);
    println!("drew {} points", pts.len());
    for p in &pts[..5] {
        let (lon, lat) = unit_to_lonlat(p)?;
        println!("{lon:9.3} {lat:8.3}   density {:.4}", mix.density(p)?);
    }
    Ok(())
}
