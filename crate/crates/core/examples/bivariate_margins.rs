//! Builds the 2x2 joint table for two binary responses from their marginal
//! logits and log odds ratio, then reads the inputs back off the table.

use lmrj::model::invert_bivariate_margins;

fn main() {
    for (l1, l2, g) in [(0.0, 0.0, 0.0), (1.2, -0.4, 1.0), (-3.0, 2.5, -2.0), (4.0, 4.0, 6.0)] {
        let t = invert_bivariate_margins(l1, l2, g);
        let (b1, b2) = t.marginal_logits();
        println!(
            "logits ({l1:+.1}, {l2:+.1}) lor {g:+.1}: p00 {:.4} p01 {:.4} p10 {:.4} p11 {:.4} -> ({b1:+.6}, {b2:+.6}) lor {:+.6}",
            t.get(0, 0),
            t.get(0, 1),
            t.get(1, 0),
            t.get(1, 1),
            t.log_odds_ratio()
        );
    }
}
