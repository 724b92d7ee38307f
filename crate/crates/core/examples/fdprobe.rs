use rayon::prelude::*;
use sentinel_core::descriptors::synthetic::*;
use sentinel_core::descriptors::*;

fn main() {
    let spec = SeparationTraceSpec { fps: 100.0, ..SeparationTraceSpec::default() };
    let traces: Vec<_> = (0..300u64).map(|s| separation_trace(&spec, s)).collect();
    let configs: Vec<(f64, usize)> = vec![(10.5, 15), (11.0, 15), (11.0, 25), (12.0, 15), (12.0, 25)];
    let results: Vec<String> = configs
        .par_iter()
        .map(|&(eps, k)| {
            let w = 1.25f64;
            let mut hits_first100 = 0;
            let mut hits_all = 0;
            let (mut min_t, mut max_t) = (f64::INFINITY, f64::NEG_INFINITY);
            for (i, trace) in traces.iter().enumerate() {
                match detect_endpoint(trace, w, eps, k).t_star {
                    Some(t) => {
                        let hit = (4.5..=5.5).contains(&t);
                        if hit { hits_all += 1; if i < 100 { hits_first100 += 1; } }
                        min_t = min_t.min(t); max_t = max_t.max(t);
                    }
                    None => {}
                }
            }
            format!("eps {eps} k {k:>2}: seeds0-99 {hits_first100}/100, all {hits_all}/300, range [{min_t:.2},{max_t:.2}]")
        })
        .collect();
    for r in results { println!("{r}"); }
}
