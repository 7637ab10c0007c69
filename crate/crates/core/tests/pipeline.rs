use straggler_lab::codec::{group_decode, group_encode, Matrix};
use straggler_lab::runtime::{run_coded_job, SampledDelays};
use straggler_lab::{
    asymptotic_group_time, comp_time_group, comp_time_mds, optimal_allocation,
    sample_completion_times, Allocation, GroupSystem, GroupSystemF32,
};

#[test]
fn allocate_encode_decode_round_trip() {
    let sys = GroupSystem::new(vec![12, 9, 6], vec![1.0, 1.6, 2.4]).unwrap();
    let alloc = optimal_allocation(&sys, 15).unwrap();
    assert_eq!(alloc.k_total(), 15);

    let a = Matrix::<f64>::random(30, 5, 3);
    let x = Matrix::<f64>::random(5, 2, 4);
    let asg = group_encode(&a, &sys, &alloc, 10).unwrap();
    let sample = sample_completion_times(&sys, 15, 77).unwrap();

    // Each group hands in its k_i fastest workers, in arrival order.
    let per_group: Vec<Vec<(usize, Vec<f64>)>> = (0..sys.num_groups())
        .map(|g| {
            let mut order: Vec<usize> = (0..sys.size(g)).collect();
            order.sort_by(|&i, &j| sample.group(g)[i].partial_cmp(&sample.group(g)[j]).unwrap());
            order
                .into_iter()
                .take(alloc.get(g))
                .map(|j| (j, asg.block(g, j).unwrap().matmul(&x).unwrap().into_data()))
                .collect()
        })
        .collect();
    let out = group_decode(&per_group, &asg).unwrap();
    assert!(out.relative_error(&a.matmul(&x).unwrap()) < 1e-9);
}

#[test]
fn simulated_times_respect_the_limit_ordering() {
    let sys = GroupSystem::new(vec![600, 200], vec![1.0, 2.0]).unwrap();
    let alloc = optimal_allocation(&sys, 100).unwrap();
    let limit = asymptotic_group_time(&sys, &alloc).unwrap();
    let (mut group, mut mds) = (0.0, 0.0);
    for seed in 0..400 {
        let s = sample_completion_times(&sys, 100, seed).unwrap();
        group += comp_time_group(&s, &alloc).unwrap();
        mds += comp_time_mds(&s, 100).unwrap();
    }
    assert!(mds <= group);
    // Finite-size group times sit above the common limit value.
    assert!(group / 400.0 > limit);
}

#[test]
fn f32_systems_allocate_like_f64() {
    let sizes = vec![180, 170, 160, 140, 130, 120];
    let rates = [1.25, 1.35, 1.45, 1.55, 1.65, 1.75];
    let a32 = optimal_allocation(
        &GroupSystemF32::new(sizes.clone(), rates.map(|r| r as f32).to_vec()).unwrap(),
        400,
    )
    .unwrap();
    let a64 = optimal_allocation(&GroupSystem::new(sizes, rates.to_vec()).unwrap(), 400).unwrap();
    assert_eq!(a32.k_total(), 400);
    for (p, q) in a32.per_group().iter().zip(a64.per_group()) {
        assert!(p.abs_diff(*q) <= 1);
    }
}

#[test]
fn coded_job_on_worker_threads() {
    let sys = GroupSystem::new(vec![5, 4], vec![1.0, 2.0]).unwrap();
    let alloc = Allocation::for_system(&sys, vec![3, 2]).unwrap();
    let a = Matrix::random(20, 6, 1);
    let x = Matrix::random(6, 3, 2);
    let delays = SampledDelays::draw(&sys, 5, 12, 0.01);
    let trace = run_coded_job(&a, &x, &sys, &alloc, &delays, 5).unwrap();
    assert!(trace.result.relative_error(&a.matmul(&x).unwrap()) < 1e-8);
    assert_eq!(trace.used_workers().len(), 5);
}
