//! Instance generators for the bundled domains. Sizes follow the small
//! train / larger test split used throughout the toolkit; every generator is
//! deterministic in its arguments.

use std::fmt::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(name: &str, domain: &str, objects: &str, init: &[String], goal: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {name})\n  (:domain {domain})");
    let _ = writeln!(out, "  (:objects {objects})");
    out.push_str("  (:init");
    for a in init {
        let _ = write!(out, "\n    {a}");
    }
    out.push_str(")\n  (:goal (and");
    for a in goal {
        let _ = write!(out, "\n    {a}");
    }
    out.push_str(")))\n");
    out
}

/// Gripper with two grippers and `balls` balls starting in `from`
/// (`rooma` or `roomb`) that must all reach the other room.
pub fn gripper(balls: usize, from: &str) -> String {
    gripper_with(balls, 2, from)
}

/// Gripper with any number of grippers. Two grippers are named `left` and
/// `right` as in the IPC instances; other counts use `g1`, `g2`, ...
pub fn gripper_with(balls: usize, grippers: usize, from: &str) -> String {
    let to = if from == "rooma" { "roomb" } else { "rooma" };
    let names: Vec<String> = (1..=balls).map(|i| format!("ball{i}")).collect();
    let hands: Vec<String> = if grippers == 2 {
        vec!["left".into(), "right".into()]
    } else {
        (1..=grippers).map(|i| format!("g{i}")).collect()
    };
    let objects = format!("rooma roomb - room {} - ball {} - gripper", names.join(" "), hands.join(" "));
    let mut init = vec![format!("(at-robby {from})")];
    init.extend(hands.iter().map(|h| format!("(free {h})")));
    init.extend(names.iter().map(|b| format!("(at {b} {from})")));
    let goal: Vec<String> = names.iter().map(|b| format!("(at {b} {to})")).collect();
    let name = if grippers == 2 { format!("gripper-{balls}-{from}") } else { format!("gripper-{balls}-{grippers}g-{from}") };
    problem(&name, "gripper", &objects, &init, &goal)
}

fn random_towers(blocks: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut order: Vec<&String> = blocks.iter().collect();
    order.shuffle(rng);
    let mut atoms = Vec::new();
    let mut below: Option<&String> = None;
    for b in order {
        match below {
            Some(under) if rng.random_bool(0.6) => atoms.push(format!("(on {b} {under})")),
            _ => atoms.push(format!("(ontable {b})")),
        }
        below = Some(b);
    }
    atoms
}

fn clear_atoms(blocks: &[String], towers: &[String]) -> Vec<String> {
    blocks
        .iter()
        .filter(|b| !towers.iter().any(|a| a.ends_with(&format!(" {b})")) && a.starts_with("(on ")))
        .map(|b| format!("(clear {b})"))
        .collect()
}

/// Blocks with random initial and goal towers (goal differs from init).
pub fn blocks(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (1..=n).map(|i| format!("b{i}")).collect();
    let init_towers = random_towers(&names, &mut rng);
    let mut goal = random_towers(&names, &mut rng);
    let mut tries = 0;
    while n > 1 && tries < 100 && {
        let mut a = goal.clone();
        let mut b = init_towers.clone();
        a.sort();
        b.sort();
        a == b
    } {
        goal = random_towers(&names, &mut rng);
        tries += 1;
    }
    let mut init = init_towers.clone();
    init.extend(clear_atoms(&names, &init_towers));
    init.push("(handempty)".into());
    // Goals mention only `on` atoms, plus `ontable` for bottom blocks.
    problem(&format!("blocks-{n}-{seed}"), "blocks", &names.join(" "), &init, &goal)
}

/// Delivery on a `width × height` grid with all packages bound for one target.
pub fn delivery(width: usize, height: usize, packages: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = |x: usize, y: usize| format!("c{x}-{y}");
    let cells: Vec<String> = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| cell(x, y)).collect();
    let pkgs: Vec<String> = (1..=packages).map(|i| format!("p{i}")).collect();
    let objects = format!("{} - cell {} - package", cells.join(" "), pkgs.join(" "));
    let mut init = vec!["(empty)".to_string()];
    for y in 0..height {
        for x in 0..width {
            if x + 1 < width {
                init.push(format!("(adjacent {} {})", cell(x, y), cell(x + 1, y)));
                init.push(format!("(adjacent {} {})", cell(x + 1, y), cell(x, y)));
            }
            if y + 1 < height {
                init.push(format!("(adjacent {} {})", cell(x, y), cell(x, y + 1)));
                init.push(format!("(adjacent {} {})", cell(x, y + 1), cell(x, y)));
            }
        }
    }
    let target = cells.choose(&mut rng).unwrap().clone();
    init.push(format!("(agent-at {})", cells.choose(&mut rng).unwrap()));
    let mut goal = Vec::new();
    for p in &pkgs {
        init.push(format!("(at {p} {})", cells.choose(&mut rng).unwrap()));
        goal.push(format!("(at {p} {target})"));
    }
    problem(&format!("delivery-{width}x{height}-{packages}-{seed}"), "delivery", &objects, &init, &goal)
}

/// Spanner corridor `loc1 … locN`: the man starts at `loc1`, spanners are
/// scattered over `loc1 … loc(N-1)`, and all nuts sit at the gate `locN`.
pub fn spanner(locations: usize, spanners: usize, nuts: usize, seed: u64) -> String {
    assert!(locations >= 2 && spanners >= nuts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs: Vec<String> = (1..=locations).map(|i| format!("loc{i}")).collect();
    let sp: Vec<String> = (1..=spanners).map(|i| format!("spanner{i}")).collect();
    let nt: Vec<String> = (1..=nuts).map(|i| format!("nut{i}")).collect();
    let objects = format!(
        "bob - man {} - spanner {} - nut {} - location",
        sp.join(" "),
        nt.join(" "),
        locs.join(" ")
    );
    let mut init = vec!["(at bob loc1)".to_string()];
    for w in locs.windows(2) {
        init.push(format!("(link {} {})", w[0], w[1]));
    }
    for s in &sp {
        let l = &locs[rng.random_range(0..locations - 1)];
        init.push(format!("(at {s} {l})"));
        init.push(format!("(useable {s})"));
    }
    let gate = &locs[locations - 1];
    let mut goal = Vec::new();
    for n in &nt {
        init.push(format!("(at {n} {gate})"));
        init.push(format!("(loose {n})"));
        goal.push(format!("(tightened {n})"));
    }
    problem(&format!("spanner-{locations}-{spanners}-{nuts}-{seed}"), "spanner", &objects, &init, &goal)
}

/// Logistics with one truck per city and `airplanes` planes.
pub fn logistics(cities: usize, locations_per_city: usize, packages: usize, airplanes: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = String::new();
    let mut init = Vec::new();
    let mut places = Vec::new();
    let mut airports = Vec::new();
    for c in 1..=cities {
        let city = format!("city{c}");
        let airport = format!("apt{c}");
        let _ = write!(objects, "{city} - city {airport} - airport ");
        init.push(format!("(in-city {airport} {city})"));
        let mut city_places = vec![airport.clone()];
        for l in 1..=locations_per_city {
            let loc = format!("loc{c}-{l}");
            let _ = write!(objects, "{loc} - location ");
            init.push(format!("(in-city {loc} {city})"));
            city_places.push(loc);
        }
        let truck = format!("truck{c}");
        let _ = write!(objects, "{truck} - truck ");
        init.push(format!("(at {truck} {})", city_places.choose(&mut rng).unwrap()));
        airports.push(airport);
        places.extend(city_places);
    }
    for a in 1..=airplanes {
        let plane = format!("plane{a}");
        let _ = write!(objects, "{plane} - airplane ");
        init.push(format!("(at {plane} {})", airports.choose(&mut rng).unwrap()));
    }
    let mut goal = Vec::new();
    for p in 1..=packages {
        let pkg = format!("pkg{p}");
        let _ = write!(objects, "{pkg} - package ");
        init.push(format!("(at {pkg} {})", places.choose(&mut rng).unwrap()));
        goal.push(format!("(at {pkg} {})", places.choose(&mut rng).unwrap()));
    }
    problem(
        &format!("logistics-{cities}-{locations_per_city}-{packages}-{seed}"),
        "logistics",
        objects.trim_end(),
        &init,
        &goal,
    )
}

/// Generates by domain name from a size list; used by the CLI.
pub fn generate(domain: &str, sizes: &[usize], seed: u64) -> Option<String> {
    let s = |i: usize, default: usize| sizes.get(i).copied().unwrap_or(default);
    Some(match domain {
        "gripper" => gripper_with(s(0, 2), s(1, 2), if seed % 2 == 0 { "rooma" } else { "roomb" }),
        "blocks" => blocks(s(0, 4), seed),
        "delivery" => delivery(s(0, 3), s(1, 3), s(2, 1), seed),
        "spanner" => spanner(s(0, 4), s(1, 1), s(2, 1), seed),
        "logistics" => logistics(s(0, 2), s(1, 1), s(2, 1), s(3, 1), seed),
        _ => return None,
    })
}
