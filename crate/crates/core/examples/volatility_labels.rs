use risklabs::fixtures::{generate_market, MarketSpec};
use risklabs::market::{volatility_labels, Horizon};

fn main() {
    let market = generate_market(&MarketSpec { days: 120, seed: 4, ..Default::default() });
    let returns = market.returns();
    let labels = volatility_labels(&returns);
    print!("{:<12} {:>10}", "date", "return");
    for h in Horizon::ALL {
        print!(" {:>10}", h.label());
    }
    println!();
    for (d, row) in labels.iter().enumerate().skip(28).step_by(10) {
        print!("{:<12} {:>10.5}", returns.dates()[d], returns.values()[d]);
        for v in row {
            match v {
                Some(v) => print!(" {v:>10.4}"),
                None => print!(" {:>10}", "-"),
            }
        }
        println!();
    }
}
