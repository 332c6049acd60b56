use fracsde::mollify::*;
use fracsde::fbm::kernel::*;
use fracsde::fbm::HurstParameter;

fn main() {
    let g = SpatialGrid::new(1, 3.0, 512).unwrap();
    let ts = log_spaced(1e-4, 1.0, 12);
    let idx = BesovIndex::new(-0.6, Integrability::Finite(2.0)).unwrap();
    match empirical_besov_norm(BesovInput::Drift(&DriftSpec::delta(1, 1.0)), idx, &ts, g) {
        Ok(v) => println!("besov ok {v}"),
        Err(e) => println!("besov err: {e}"),
    }
    for hv in [0.25f64, 0.75] {
        let table = KernelTable::new(HurstParameter::new(hv).unwrap());
        for k in [0usize, 50, 99] {
            let gap = 10f64.powf(-4.0 + 4.0 * k as f64 / 99.0);
            let t = 1.0; let s = 1.0 - gap;
            let kv = table.kernel(t, s);
            let ratio = kv / gap.powf(hv - 0.5);
            println!("h={hv} gap={gap:.2e}: K={kv:.6e} ratio={ratio:.6}");
        }
    }
    // closed-form check for h=0.1
    let c = unit_variance_constant(HurstParameter::new(0.1).unwrap());
    println!("C(0.1) = {c}");
}
