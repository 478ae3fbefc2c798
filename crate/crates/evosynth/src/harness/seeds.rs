//! Deterministic seed derivation: every random decision in an experiment
//! gets its own stream keyed by (master seed, role, generation, slot), so
//! slots are independent of execution order.

const ROLE_ANCESTOR_INIT: u64 = 1;
const ROLE_ANCESTOR_TRAIN: u64 = 2;
const ROLE_SELECT: u64 = 3;
const ROLE_SYNTHESIZE: u64 = 4;
const ROLE_TRAIN: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive(master: u64, parts: &[u64]) -> u64 {
    let mut x = splitmix64(master);
    for &p in parts {
        x = splitmix64(x ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    x
}

pub(super) fn ancestor_init(master: u64) -> u64 {
    derive(master, &[ROLE_ANCESTOR_INIT])
}

pub(super) fn ancestor_train(master: u64) -> u64 {
    derive(master, &[ROLE_ANCESTOR_TRAIN])
}

pub(super) fn select(master: u64, generation: usize, slot: usize) -> u64 {
    derive(master, &[ROLE_SELECT, generation as u64, slot as u64])
}

pub(super) fn synthesize(master: u64, generation: usize, slot: usize) -> u64 {
    derive(master, &[ROLE_SYNTHESIZE, generation as u64, slot as u64])
}

pub(super) fn train(master: u64, generation: usize, slot: usize) -> u64 {
    derive(master, &[ROLE_TRAIN, generation as u64, slot as u64])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_generations_and_slots_separate_streams() {
        let mut seen = std::collections::HashSet::new();
        for master in [0u64, 1, 0xDEAD_BEEF] {
            assert!(seen.insert(ancestor_init(master)));
            assert!(seen.insert(ancestor_train(master)));
            for generation in 0..4 {
                for slot in 0..4 {
                    assert!(seen.insert(select(master, generation, slot)));
                    assert!(seen.insert(synthesize(master, generation, slot)));
                    assert!(seen.insert(train(master, generation, slot)));
                }
            }
        }
    }
}
