use renvol::conformal::{conformal_scale, uniformize, UniformizeOptions};
use renvol::fixtures::polygon_surface;

#[test]
fn dbg_spectrum() {
    for (g, level) in [(2u32, 2u32), (2, 3), (3, 1), (3, 2)] {
        let fx = polygon_surface(g, level).unwrap();
        let (factor, _) = uniformize(&fx.mesh, &fx.metric, UniformizeOptions::default()).unwrap();
        let hyp = conformal_scale(&fx.mesh, &fx.metric, &factor.0).unwrap();
        let svs = renvol::tensor::debug_smallest_singular_values(&fx.mesh, &hyp, 16, 42).unwrap();
        let expected = (6 * g - 6) as usize;
        let ratio = svs[expected] / svs[expected - 1];
        println!("g{g} L{level}: dim-{expected} ratio {ratio:.2}  {:?}", svs.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    }
}
