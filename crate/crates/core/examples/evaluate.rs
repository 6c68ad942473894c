//! Scoring an estimate whose endmembers come back in a different order.

use stvmlu::hsi_data::Mat;
use stvmlu::metrics::evaluate;

fn main() -> stvmlu::Result<()> {
    let a_ref = Mat::from_column_slice(
        4,
        3,
        &[
            1.0, 0.2, 0.1, 0.0, //
            0.1, 1.0, 0.3, 0.2, //
            0.0, 0.1, 0.9, 1.0,
        ],
    );
    let s_ref = Mat::from_column_slice(
        3,
        4,
        &[
            0.7, 0.2, 0.1, //
            0.1, 0.8, 0.1, //
            0.2, 0.2, 0.6, //
            1.0, 0.0, 0.0,
        ],
    );
    // estimate: columns rotated and slightly perturbed
    let order = [2, 0, 1];
    let a_est = Mat::from_fn(4, 3, |i, j| a_ref[(i, order[j])] * (1.0 + 0.05 * i as f64));
    let s_est = Mat::from_fn(3, 4, |j, p| s_ref[(order[j], p)] + 0.01);

    let report = evaluate(&a_est, &s_est, &a_ref, &s_ref)?;
    for (j, &e) in report.permutation.iter().enumerate() {
        println!(
            "reference {j} <- estimate {e}: SAD {:.4} rad, RMSE {:.4}",
            report.sad_per_endmember[j], report.rmse_per_endmember[j]
        );
    }
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
