//! Latency expressions over instruction immediates and transaction
//! attributes.

use aidg_perf::expr::{Layered, NUM_WORDS};
use aidg_perf::prelude::*;

fn main() {
    let burst = LatencyExpr::parse("8 + ceil_div(num_words, 4)").unwrap();
    for words in [1, 4, 5, 16] {
        println!("{burst} with {NUM_WORDS}={words}: {}", burst.eval(&[(NUM_WORDS, words)]).unwrap());
    }

    // A convolution engine: one cycle per output MAC group plus a fixed setup.
    let conv = LatencyExpr::parse("20 + C * K * F * ceil_div(C_w, s) / 8").unwrap();
    println!("free variables of `{conv}`: {:?}", conv.free_variables());
    let imm = [("C", 16), ("K", 24), ("F", 9), ("C_w", 101), ("s", 2)];
    println!("conv latency: {}", conv.eval(&imm).unwrap());

    // Immediates shadow transaction attributes of the same name.
    let both = LatencyExpr::parse("if(num_words > 1, C + num_words, C)").unwrap();
    println!("layered: {}", both.eval(&Layered(&[("C", 3)], &[(NUM_WORDS, 4)])).unwrap());

    for bad in ["1 +", "foo(1)", "ceil_div(1)"] {
        println!("{bad:?}: {}", LatencyExpr::parse(bad).unwrap_err());
    }
    println!("{}", LatencyExpr::parse("1 / x").unwrap().eval(&[("x", 0)]).unwrap_err());
}
