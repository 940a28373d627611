use crate::config::Mode;

#[derive(Debug, Clone, Copy)]
pub struct BundledExample {
    pub name: &'static str,
    pub mode: Mode,
    pub description: &'static str,
    pub text: &'static str,
}

const EXAMPLES: &[BundledExample] = &[
    BundledExample {
        name: "fig1-analyze",
        mode: Mode::Analyze,
        description: "four-agent graph: root set, weights, scrambling",
        text: include_str!("../configs/fig1-analyze.toml"),
    },
    BundledExample {
        name: "double-star",
        mode: Mode::Fixed,
        description: "12 agents, two hubs; consensus on the hub average",
        text: include_str!("../configs/double-star.toml"),
    },
    BundledExample {
        name: "two-sources",
        mode: Mode::Fixed,
        description: "six agents without a spanning tree; no consensus",
        text: include_str!("../configs/two-sources.toml"),
    },
    BundledExample {
        name: "two-node-finite-time",
        mode: Mode::Fixed,
        description: "symmetric pair reaching consensus on the jump in finite time",
        text: include_str!("../configs/two-node-finite-time.toml"),
    },
    BundledExample {
        name: "paired-roots-switching",
        mode: Mode::Switching,
        description: "four-agent graph on unit intervals; per-interval decay",
        text: include_str!("../configs/paired-roots-switching.toml"),
    },
    BundledExample {
        name: "blinking-50",
        mode: Mode::Blinking,
        description: "50-agent blinking network, p = 0.1, w = 0.1",
        text: include_str!("../configs/blinking-50.toml"),
    },
    BundledExample {
        name: "blinking-expected-eta",
        mode: Mode::ExpectedEta,
        description: "Monte Carlo expected scrambling of the blinking network",
        text: include_str!("../configs/blinking-expected-eta.toml"),
    },
];

pub fn bundled_examples() -> &'static [BundledExample] {
    EXAMPLES
}

pub fn find_example(name: &str) -> Option<&'static BundledExample> {
    EXAMPLES.iter().find(|e| e.name == name)
}
