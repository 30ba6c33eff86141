//! Monte-Carlo checks of the dithering properties at a reduced sample size.

use redit::diagnostics::verify_propositions;

fn main() -> redit::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    for r in verify_propositions(&[1, 2, 3], n, 0)? {
        println!(
            "{} {:<26} {:>10.6} vs {:>10.6}  {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.id,
            r.statistic,
            r.theoretical,
            r.detail
        );
    }
    Ok(())
}
