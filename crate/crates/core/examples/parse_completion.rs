//! Parses three kinds of completion text and prints the result of each.
//!
//! cargo run --example parse_completion

use policy_inspect::parse::{parse, ParseResult};

fn main() {
    let samples = [
        "context: \"objects = ['block', 'cube']\"\ncomposer(grasp the block)\ncomposer(move to 20 units above the block)\n",
        "import numpy as np\ncomposer(grasp the block)\n",
        "I cannot complete this manipulation because the block lies outside the executable space.",
    ];
    for text in samples {
        match parse(text) {
            ParseResult::Program(p) => {
                println!("program with {} steps, targets {:?}", p.steps.len(), p.targets());
                print!("{p}");
            }
            ParseResult::NonsenseRejection(ev) => println!("nonsense: {:?} at {:?}: {}", ev.kind, ev.location, ev.message),
            ParseResult::Refusal { text } => println!("refusal: {text}"),
        }
        println!();
    }
}
