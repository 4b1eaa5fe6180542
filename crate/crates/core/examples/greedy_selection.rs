//! Greedy weighted coverage on a hand-sized instance, checked against the
//! exhaustive oracle.

use calib_cover::coverage::CoverageMatrix;
use calib_cover::selection::DEFAULT_ENUMERATION_CAP;
use calib_cover::{brute_force_optimal, greedy_select, lazy_greedy_select};

fn main() -> calib_cover::Result<()> {
    // five samples over four outlier channels weighted 4, 3, 2, 1
    let cov = CoverageMatrix::from_rows(
        vec![vec![0], vec![1, 2], vec![0, 3], vec![2], vec![]],
        vec![4.0, 3.0, 2.0, 1.0],
        vec![0; 4],
        1,
    )?;

    for k in 1..=5 {
        let g = greedy_select(&cov, k);
        let opt = brute_force_optimal(&cov, k, DEFAULT_ENUMERATION_CAP)?;
        assert_eq!(lazy_greedy_select(&cov, k), g);
        println!(
            "K={k}: greedy {:?} gains {:?} F={} | optimum {:?} F={}",
            g.selected,
            g.step_gains,
            g.objective.unwrap(),
            opt.selected,
            opt.objective.unwrap()
        );
    }
    println!("{}", greedy_select(&cov, 2).to_json()?);
    Ok(())
}
