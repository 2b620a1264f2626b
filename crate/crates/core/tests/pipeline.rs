use nugget_core::refine::RefineParams;
use nugget_core::*;

fn smile_nuggets<T: Scalar>(seed: u64) -> (DataMatrix<T>, NuggetSet<T>) {
    let sim: Simulated<T> = gen_smile(&SmileSpec { n_noise: 3000, n_smile: 300, seed }).unwrap();
    let params = ReductionParams::defaults_for(sim.data.nrows(), 2)
        .with_subset_size(1000)
        .with_deletion_rate(0.1)
        .with_m_init(800)
        .with_m(200)
        .with_seed(seed);
    let set = create_data_nuggets(&sim.data, &params).unwrap();
    (sim.data, set)
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn same_seed_same_nuggets_any_thread_count() {
    let (x, one) = in_pool(1, || smile_nuggets::<f64>(9));
    let (_, three) = in_pool(3, || smile_nuggets::<f64>(9));
    assert_eq!(one.nuggets, three.nuggets);
    assert_eq!(one.assignment, three.assignment);

    let rp = RefineParams::new(0.5).with_seed(9);
    let r1 = in_pool(1, || refine_data_nuggets(&x, &one, &rp).unwrap());
    let r3 = in_pool(3, || refine_data_nuggets(&x, &one, &rp).unwrap());
    assert_eq!(r1.set.nuggets, r3.set.nuggets);

    let kp = WKMeansParams::new(4).with_seed(9);
    let c1 = in_pool(1, || weighted_kmeans(&r1.set, &kp).unwrap());
    let c3 = in_pool(3, || weighted_kmeans(&r1.set, &kp).unwrap());
    assert_eq!(c1.assignment, c3.assignment);
    assert_eq!(c1.wwcss, c3.wwcss);
}

#[test]
fn different_seeds_differ() {
    let (_, a) = smile_nuggets::<f64>(1);
    let (_, b) = smile_nuggets::<f64>(2);
    assert_ne!(a.nuggets, b.nuggets);
}

#[test]
fn single_precision_pipeline() {
    let (x, set) = smile_nuggets::<f32>(4);
    assert_eq!(set.total_weight(), x.nrows() as u64);
    set.check(&x).unwrap();
    let refined: Refinement<f32> = refine_data_nuggets(&x, &set, &RefineParams::new(0.5).with_seed(4)).unwrap();
    assert_eq!(refined.set.total_weight(), x.nrows() as u64);
    let c: Clusters32 = weighted_kmeans(&refined.set, &WKMeansParams::new(3).with_seed(4)).unwrap();
    let w: f32 = c.cluster_weights(&refined.set.weights()).iter().sum();
    assert_eq!(w, x.nrows() as f32);
    let d = decompose_covariance(&x, &set).unwrap();
    assert!(d.relative_residual() < 1e-4);
    let p = wpca(&refined.set, 2).unwrap();
    assert!(p.component_variances[0] >= p.component_variances[1]);
}

#[test]
fn single_and_double_precision_agree_on_structure() {
    let (_, s64) = smile_nuggets::<f64>(6);
    let (_, s32) = smile_nuggets::<f32>(6);
    assert_eq!(s64.len(), s32.len());
    let w64: Vec<u64> = s64.nuggets.iter().map(|n| n.weight).collect();
    let w32: Vec<u64> = s32.nuggets.iter().map(|n| n.weight).collect();
    let differ = w64.iter().zip(&w32).filter(|(a, b)| a != b).count();
    assert!(differ * 10 <= w64.len(), "{differ} of {} weights differ", w64.len());
}

#[test]
fn csv_round_trip_preserves_the_set() {
    let (x, set) = smile_nuggets::<f64>(8);
    let mut nb = Vec::new();
    io::write_nuggets_to(&set.nuggets, &mut nb).unwrap();
    let mut ab = Vec::new();
    io::write_assignment(&set.assignment, &mut ab).unwrap();
    let back = io::nugget_set_from_parts(io::read_nuggets_from::<f64, _>(nb.as_slice()).unwrap(), io::read_assignment(ab.as_slice()).unwrap()).unwrap();
    assert_eq!(back.nuggets, set.nuggets);
    let d = decompose_covariance(&x, &back).unwrap();
    assert!(d.relative_residual() < 1e-10);
}
