use exact_coreset::regression::{
    build_coreset, coreset_reg_loss, reg_loss, solve_ridge, solve_ridge_full,
};
use exact_coreset::synthetic::regression_data;
use exact_coreset::RegressionProblem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (x, y) = regression_data(1000, 3, 7);
    let prob = RegressionProblem::new(x, y, 1.0, 2)?;
    let coreset = build_coreset(&prob)?;
    println!(
        "{} samples -> {} weighted samples + {} regularizer entries",
        prob.n(),
        coreset.n_data_rows(),
        coreset.reg_diag.len()
    );

    let w = [0.3, -1.0, 2.0];
    println!("full loss    {:.12}", reg_loss(&prob, &w)?);
    println!("coreset loss {:.12}", coreset_reg_loss(&coreset, &w)?);
    println!("full argmin    {:?}", solve_ridge_full(&prob)?.as_slice());
    println!("coreset argmin {:?}", solve_ridge(&coreset)?.as_slice());
    Ok(())
}
